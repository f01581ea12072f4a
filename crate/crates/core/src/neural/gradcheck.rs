use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Outcome of [`grad_check`].
#[derive(Debug, Clone, PartialEq)]
pub enum GradCheck {
    Pass {
        checked: usize,
        worst_rel_error: f64,
    },
    Fail {
        coordinate: usize,
        analytic: f64,
        numeric: f64,
        rel_error: f64,
    },
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        matches!(self, GradCheck::Pass { .. })
    }
}

/// Maximum number of coordinates probed by central differences.
pub const MAX_CHECKED: usize = 64;

/// Compares `gradient` against central differences of `loss` at `theta`.
///
/// The error measure is `|g_ad - g_fd| / max(1, |g_fd|)`. When `theta` has
/// more than [`MAX_CHECKED`] coordinates a seeded random subset is probed.
/// On failure the worst coordinate is reported.
pub fn grad_check(
    loss: impl Fn(&[f64]) -> f64,
    theta: &[f64],
    gradient: &[f64],
    h: f64,
    tol: f64,
    seed: u64,
) -> GradCheck {
    assert_eq!(theta.len(), gradient.len(), "gradient width");
    let coords: Vec<usize> = if theta.len() > MAX_CHECKED {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = sample(&mut rng, theta.len(), MAX_CHECKED).into_vec();
        c.sort_unstable();
        c
    } else {
        (0..theta.len()).collect()
    };
    let mut probe = theta.to_vec();
    let mut worst = (0usize, 0.0f64, 0.0f64, -1.0f64);
    for &i in &coords {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = loss(&probe);
        probe[i] = orig - h;
        let down = loss(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let rel = (gradient[i] - numeric).abs() / numeric.abs().max(1.0);
        let rel = if rel.is_nan() { f64::INFINITY } else { rel };
        if rel > worst.3 {
            worst = (i, gradient[i], numeric, rel);
        }
    }
    if worst.3 <= tol {
        GradCheck::Pass {
            checked: coords.len(),
            worst_rel_error: worst.3.max(0.0),
        }
    } else {
        GradCheck::Fail {
            coordinate: worst.0,
            analytic: worst.1,
            numeric: worst.2,
            rel_error: worst.3,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use crate::neural::{Activation, InitMode, NetShape, NeuralNet};

    #[test]
    fn quadratic_passes_tightly() {
        let a = [1.0, 3.0, -2.0];
        let loss = |t: &[f64]| t.iter().zip(&a).map(|(x, c)| c * x * x).sum::<f64>();
        let theta = [0.5, -1.5, 2.0];
        let grad: Vec<f64> = theta.iter().zip(&a).map(|(x, c)| 2.0 * c * x).collect();
        assert!(grad_check(loss, &theta, &grad, 1e-4, 1e-8, 0).passed());
    }

    fn mlp_regression(nodes: usize) -> (Vec<f64>, impl Fn(&[f64]) -> f64, Vec<f64>) {
        let shape = NetShape {
            input: 2,
            output: 1,
            hidden_layers: 2,
            nodes,
            activation: Activation::Tanh,
            residual: false,
        };
        let theta = NeuralNet::init_neutral(shape, InitMode::Generic, 21).into_params();
        let data: Vec<([f64; 2], f64)> = (0..10)
            .map(|i| {
                let x = [i as f64 * 0.1 - 0.5, (i as f64 * 0.7).sin()];
                (x, x[0] * x[1] + 0.3)
            })
            .collect();
        let d2 = data.clone();
        let loss = move |p: &[f64]| {
            d2.iter()
                .map(|(x, t)| (shape.forward_with(p, x)[0] - t).powi(2))
                .sum::<f64>()
        };
        let mut tape = Tape::new();
        let pv = tape.leaf(theta.clone());
        let mut terms = Vec::new();
        for (x, t) in &data {
            let xv = tape.leaf(x.to_vec());
            let y = shape.record_into(&mut tape, pv, xv);
            let tv = tape.leaf(vec![*t]);
            let e = tape.sub(y, tv);
            terms.push(tape.sum_squares(e));
        }
        let total = tape.sum(&terms);
        let grad = tape.backward(total, &[1.0]).unwrap().wrt_dense(pv, theta.len());
        (theta, loss, grad)
    }

    #[test]
    fn tanh_regression_passes() {
        let (theta, loss, grad) = mlp_regression(8);
        assert!(theta.len() > MAX_CHECKED);
        let r = grad_check(&loss, &theta, &grad, 1e-6, 1e-5, 3);
        assert!(r.passed(), "{r:?}");
        if let GradCheck::Pass { checked, .. } = r {
            assert_eq!(checked, MAX_CHECKED);
        }
    }

    #[test]
    fn perturbed_coordinate_is_reported() {
        let (theta, loss, mut grad) = mlp_regression(4);
        assert!(theta.len() <= MAX_CHECKED);
        let idx = (0..theta.len())
            .max_by(|a, b| grad[*a].abs().total_cmp(&grad[*b].abs()))
            .unwrap();
        grad[idx] += 0.01 * grad[idx].abs().max(1.0);
        match grad_check(&loss, &theta, &grad, 1e-6, 1e-5, 0) {
            GradCheck::Fail { coordinate, .. } => assert_eq!(coordinate, idx),
            other => panic!("expected failure, got {other:?}"),
        }
    }
}
