//! Mass-spring-damper benchmark: hardening 3-DOF truth system, linear 2-DOF
//! baseline, multisine excitation and dataset generation.

mod baseline;
mod dataset;
mod dynamics;
mod multisine;

pub use baseline::{baseline_model, MsdBaseline};
pub use dataset::{generate_datasets, generate_split, split_seeds, BenchmarkConfig, DatasetBundle, SplitSeeds};
pub use dynamics::{
    msd_derivative, msd_derivative_vjp, msd_step, msd_step_vjp, rk4_step, simulate_msd, MsdParams,
};
pub use multisine::{
    add_noise, generate_multisine, multisine_period, signal_rms, MultisineSpec, BENCHMARK_INPUT_RMS,
};

use crate::error::{check_len, Result};

/// Root mean squared difference of two equally long signals.
pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len("rmse", a.len(), b.len())?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((s / a.len() as f64).sqrt())
}
