use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dynamics::{simulate_msd, MsdParams};
use super::multisine::{add_noise, generate_multisine, signal_rms, MultisineSpec};
use crate::data::DataSequence;
use crate::error::Result;

/// Everything needed to regenerate the benchmark data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub truth: MsdParams,
    pub multisine: MultisineSpec,
    /// Estimation, validation and test lengths.
    pub sizes: [usize; 3],
    pub snr_db: f64,
    /// Samples dropped at the start of every split; defaults to one period.
    pub transient: Option<usize>,
    /// Zero-based body whose position is measured.
    pub output_body: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            truth: MsdParams::truth(),
            multisine: MultisineSpec::benchmark(),
            sizes: [20_000, 10_000, 10_000],
            snr_db: 30.0,
            transient: None,
            output_body: 1,
        }
    }
}

impl BenchmarkConfig {
    pub fn transient_len(&self) -> usize {
        self.transient.unwrap_or(self.multisine.period)
    }
}

/// Seeds of one split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSeeds {
    pub excitation: u64,
    pub noise: u64,
}

/// Estimation, validation and test data with their noise-free outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub estimation: DataSequence,
    pub validation: DataSequence,
    pub test: DataSequence,
    pub clean_outputs: [Vec<f64>; 3],
    pub seeds: [SplitSeeds; 3],
    pub achieved_snr_db: [f64; 3],
}

impl DatasetBundle {
    pub fn splits(&self) -> [&DataSequence; 3] {
        [&self.estimation, &self.validation, &self.test]
    }
}

/// Independent per-split seeds derived from a master seed.
pub fn split_seeds(master: u64) -> [SplitSeeds; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    std::array::from_fn(|_| SplitSeeds {
        excitation: rng.next_u64(),
        noise: rng.next_u64(),
    })
}

/// Simulates the truth system from rest on a fresh excitation, drops the
/// transient and adds measurement noise. Returns the sequence and the clean output.
pub fn generate_split(cfg: &BenchmarkConfig, len: usize, seeds: SplitSeeds) -> Result<(DataSequence, Vec<f64>)> {
    cfg.truth.validate()?;
    let skip = cfg.transient_len();
    let u = generate_multisine(&cfg.multisine, skip + len, seeds.excitation)?;
    let x0 = vec![0.0; cfg.truth.state_width()];
    let y = simulate_msd(&cfg.truth, &x0, &u, cfg.multisine.ts, cfg.output_body);
    let clean = y[skip..].to_vec();
    let noisy = add_noise(&clean, cfg.snr_db, seeds.noise)?;
    let mut seq = DataSequence::new(
        u[skip..].iter().map(|v| vec![*v]).collect(),
        noisy.into_iter().map(|v| vec![v]).collect(),
        cfg.multisine.ts,
    )?;
    seq.seed = seeds.excitation;
    seq.snr_db = cfg.snr_db;
    Ok((seq, clean))
}

/// Generates the three splits (concurrently) from independent excitations.
pub fn generate_datasets(cfg: &BenchmarkConfig, master_seed: u64) -> Result<DatasetBundle> {
    let seeds = split_seeds(master_seed);
    let mut parts = (0..3)
        .into_par_iter()
        .map(|i| generate_split(cfg, cfg.sizes[i], seeds[i]))
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    let (estimation, c0) = parts.next().unwrap();
    let (validation, c1) = parts.next().unwrap();
    let (test, c2) = parts.next().unwrap();
    let snr = |seq: &DataSequence, clean: &[f64]| {
        let e: Vec<f64> = seq.y.iter().zip(clean).map(|(a, b)| a[0] - b).collect();
        20.0 * (signal_rms(clean) / signal_rms(&e)).log10()
    };
    let achieved_snr_db = [snr(&estimation, &c0), snr(&validation, &c1), snr(&test, &c2)];
    Ok(DatasetBundle {
        estimation,
        validation,
        test,
        clean_outputs: [c0, c1, c2],
        seeds,
        achieved_snr_db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> BenchmarkConfig {
        BenchmarkConfig {
            multisine: MultisineSpec {
                components: 100,
                period: 400,
                ts: 0.02,
                band_hz: 25.0,
                rms: 4.0,
            },
            sizes: [800, 400, 400],
            ..BenchmarkConfig::default()
        }
    }

    #[test]
    fn sizes_and_determinism() {
        let cfg = small_config();
        let a = generate_datasets(&cfg, 11).unwrap();
        let b = generate_datasets(&cfg, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.estimation.len(), 800);
        assert_eq!(a.validation.len(), 400);
        assert_eq!(a.test.len(), 400);
        assert_ne!(a.estimation.u[..400], a.validation.u[..]);
    }

    #[test]
    fn zero_amplitude_gives_pure_noise_around_zero() {
        let mut cfg = small_config();
        cfg.multisine.rms = 0.0;
        cfg.snr_db = f64::INFINITY;
        let (seq, clean) = generate_split(&cfg, 100, split_seeds(1)[0]).unwrap();
        assert!(clean.iter().all(|v| *v == 0.0));
        assert!(seq.y.iter().all(|v| v[0] == 0.0));
    }

    #[test]
    fn noise_level_matches_target() {
        let cfg = small_config();
        let bundle = generate_datasets(&cfg, 4).unwrap();
        for snr in bundle.achieved_snr_db {
            assert!((snr - 30.0).abs() < 0.5, "{snr}");
        }
    }
}
