use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Start indices of the subsections used for one optimizer step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsectionBatch {
    pub starts: Vec<usize>,
    pub horizon: usize,
}

/// Smallest and largest admissible start index (zero-based, inclusive).
///
/// A subsection starting at `k` reads the window `k - lookback .. k` and the
/// future `k .. k + horizon`, so `k` ranges over `lookback + 1 ..= len - horizon`.
pub fn start_range(len: usize, lookback: usize, horizon: usize) -> Result<(usize, usize)> {
    let lo = lookback + 1;
    if horizon == 0 || len < horizon || len - horizon < lo {
        return Err(Error::InvalidArgument(format!(
            "sequence of {len} samples is too short for lookback {lookback} and horizon {horizon}"
        )));
    }
    Ok((lo, len - horizon))
}

/// Uniform draws with replacement.
pub fn sample_batch(
    rng: &mut impl Rng,
    len: usize,
    lookback: usize,
    horizon: usize,
    count: usize,
) -> Result<SubsectionBatch> {
    let (lo, hi) = start_range(len, lookback, horizon)?;
    Ok(SubsectionBatch {
        starts: (0..count).map(|_| rng.random_range(lo..=hi)).collect(),
        horizon,
    })
}

/// Generator for batch `batch` of epoch `epoch`, independent of all others.
pub fn epoch_rng(seed: u64, epoch: usize, batch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 20) | batch as u64);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_respect_bounds_and_are_uniform() {
        let (len, lookback, horizon) = (60, 7, 20);
        let mut rng = epoch_rng(1, 0, 0);
        let b = sample_batch(&mut rng, len, lookback, horizon, 100_000).unwrap();
        let (lo, hi) = (lookback + 1, len - horizon);
        assert_eq!(*b.starts.iter().min().unwrap(), lo);
        assert_eq!(*b.starts.iter().max().unwrap(), hi);
        let bins = hi - lo + 1;
        let mut counts = vec![0usize; bins];
        for k in &b.starts {
            counts[k - lo] += 1;
        }
        let p = 1.0 / bins as f64;
        let mean = 100_000.0 * p;
        let sd = (100_000.0 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sd + 1.0, "{c} vs {mean}");
        }
    }

    #[test]
    fn windows_stay_inside_sequence() {
        let (lo, hi) = start_range(100, 7, 50).unwrap();
        assert!(lo >= 7);
        assert!(hi + 50 <= 100);
        assert!(start_range(50, 7, 50).is_err());
        assert!(start_range(57, 7, 50).is_err());
        assert!(start_range(58, 7, 50).is_ok());
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = sample_batch(&mut epoch_rng(3, 5, 0), 1000, 7, 10, 20).unwrap();
        let b = sample_batch(&mut epoch_rng(3, 5, 0), 1000, 7, 10, 20).unwrap();
        let c = sample_batch(&mut epoch_rng(3, 6, 0), 1000, 7, 10, 20).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
