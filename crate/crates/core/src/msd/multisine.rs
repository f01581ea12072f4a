use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Periodic multisine on the DFT grid of one period.
///
/// Components sit on bins `1..=components` of a `period`-sample record, so
/// the DC bin is excluded and every frequency is `bin / (period * ts)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultisineSpec {
    pub components: usize,
    pub period: usize,
    pub ts: f64,
    pub band_hz: f64,
    pub rms: f64,
}

/// Input RMS (N) used by the benchmark. At this level the cubic term of the
/// hardening spring reaches about 10% of its linear force at peak deflection.
pub const BENCHMARK_INPUT_RMS: f64 = 11.0;

impl MultisineSpec {
    /// 1666 components below 25 Hz at `ts = 0.02`.
    pub fn benchmark() -> Self {
        MultisineSpec {
            components: 1666,
            period: 3333,
            ts: 0.02,
            band_hz: 25.0,
            rms: BENCHMARK_INPUT_RMS,
        }
    }

    pub fn resolution_hz(&self) -> f64 {
        1.0 / (self.period as f64 * self.ts)
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (1..=self.components).map(|k| k as f64 * self.resolution_hz()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(Error::InvalidArgument("multisine needs at least one component".into()));
        }
        if 2 * self.components >= self.period {
            return Err(Error::InvalidArgument(format!(
                "{} components do not fit below Nyquist of a {}-sample period",
                self.components, self.period
            )));
        }
        let top = self.components as f64 * self.resolution_hz();
        if top > self.band_hz * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "highest component {top} Hz lies outside the {} Hz band",
                self.band_hz
            )));
        }
        if !(self.ts > 0.0 && self.rms >= 0.0) {
            return Err(Error::InvalidArgument("sample time must be positive and RMS nonnegative".into()));
        }
        Ok(())
    }
}

/// One period of the multisine with the given phases (one per component).
pub fn multisine_period(spec: &MultisineSpec, phases: &[f64]) -> Result<Vec<f64>> {
    spec.validate()?;
    if phases.len() != spec.components {
        return Err(Error::DimensionMismatch {
            context: "multisine phases".into(),
            expected: spec.components,
            actual: phases.len(),
        });
    }
    let p = spec.period;
    let mut spectrum = vec![Complex::new(0.0, 0.0); p];
    for (k, phi) in (1..).zip(phases) {
        let c = Complex::from_polar(1.0, *phi);
        spectrum[k] = c;
        spectrum[p - k] = c.conj();
    }
    FftPlanner::new().plan_fft_inverse(p).process(&mut spectrum);
    // The inverse transform yields 2 cos(.) per component; K unit cosines have RMS sqrt(K / 2).
    let scale = spec.rms / (spec.components as f64 / 2.0).sqrt() / 2.0;
    Ok(spectrum.iter().map(|c| c.re * scale).collect())
}

/// Seeded multisine with phases uniform on `[0, 2 pi)`, tiled to `length`.
pub fn generate_multisine(spec: &MultisineSpec, length: usize, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases: Vec<f64> = (0..spec.components).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let one = multisine_period(spec, &phases)?;
    Ok(one.iter().cycle().take(length).copied().collect())
}

pub fn signal_rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Adds white Gaussian noise with `sigma = RMS(y) * 10^(-snr_db / 20)`.
pub fn add_noise(y: &[f64], snr_db: f64, seed: u64) -> Result<Vec<f64>> {
    if snr_db == f64::INFINITY {
        return Ok(y.to_vec());
    }
    let power = signal_rms(y);
    if !(power > 0.0 && power.is_finite()) {
        return Err(Error::InvalidArgument("noise level undefined for a zero-power signal".into()));
    }
    let sigma = power * 10f64.powf(-snr_db / 20.0);
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(y.iter().map(|v| v + normal.sample(&mut rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dft_magnitudes(x: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(*v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(x.len()).process(&mut buf);
        buf.iter().map(|c| c.norm()).collect()
    }

    #[test]
    fn single_component_is_a_cosine() {
        let spec = MultisineSpec {
            components: 1,
            period: 64,
            ts: 0.1,
            band_hz: 5.0,
            rms: 1.0,
        };
        let x = multisine_period(&spec, &[0.0]).unwrap();
        for (n, v) in x.iter().enumerate() {
            let expected = 2f64.sqrt() * (2.0 * PI * n as f64 / 64.0).cos();
            assert!((v - expected).abs() < 1e-12);
        }
        let mags = dft_magnitudes(&x);
        let nonzero: Vec<usize> = (1..32).filter(|&k| mags[k] > 1e-9).collect();
        assert_eq!(nonzero, vec![1]);
    }

    #[test]
    fn benchmark_signal_has_exact_support_and_no_dc() {
        let spec = MultisineSpec::benchmark();
        let x = generate_multisine(&spec, spec.period, 7).unwrap();
        assert!(x.iter().sum::<f64>().abs() / x.len() as f64 <= 1e-12 * signal_rms(&x));
        assert!((signal_rms(&x) - spec.rms).abs() < 1e-10);
        let mags = dft_magnitudes(&x);
        let peak = mags.iter().cloned().fold(0.0, f64::max);
        let support: Vec<usize> = (0..=spec.period / 2).filter(|&k| mags[k] > 1e-9 * peak).collect();
        assert_eq!(support.len(), 1666);
        assert_eq!(support.first(), Some(&1));
        let top = *support.last().unwrap() as f64 * spec.resolution_hz();
        assert!(top <= 25.0);
    }

    #[test]
    fn repeated_record_has_no_leakage() {
        let spec = MultisineSpec {
            components: 40,
            period: 200,
            ts: 0.02,
            band_hz: 25.0,
            rms: 1.0,
        };
        let x = generate_multisine(&spec, 400, 3).unwrap();
        let mags = dft_magnitudes(&x);
        let peak = mags.iter().cloned().fold(0.0, f64::max);
        for (k, m) in mags.iter().enumerate() {
            if k % 2 == 1 {
                assert!(*m <= 1e-10 * peak, "odd bin {k} has {m}");
            }
        }
    }

    #[test]
    fn infeasible_grid_is_rejected() {
        let mut spec = MultisineSpec::benchmark();
        spec.components = 1667;
        assert!(spec.validate().is_err());
        spec.components = 1666;
        spec.period = 3000;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn infinite_snr_is_identity_and_zero_db_matches_power() {
        let y: Vec<f64> = (0..10_000).map(|k| (k as f64 * 0.1).sin()).collect();
        assert_eq!(add_noise(&y, f64::INFINITY, 1).unwrap(), y);
        let noisy = add_noise(&y, 0.0, 1).unwrap();
        let e: Vec<f64> = noisy.iter().zip(&y).map(|(a, b)| a - b).collect();
        assert!((signal_rms(&e) / signal_rms(&y) - 1.0).abs() < 0.02);
        assert!(add_noise(&[0.0; 10], 30.0, 1).is_err());
    }

    #[test]
    fn noise_is_white() {
        let y = vec![1.0; 20_000];
        let noisy = add_noise(&y, 10.0, 5).unwrap();
        let e: Vec<f64> = noisy.iter().map(|v| v - 1.0).collect();
        let n = e.len() as f64;
        let r0: f64 = e.iter().map(|v| v * v).sum();
        for lag in 1..=20 {
            let r: f64 = e.iter().zip(&e[lag..]).map(|(a, b)| a * b).sum();
            assert!((r / r0).abs() <= 3.0 / n.sqrt(), "lag {lag}");
        }
    }
}
