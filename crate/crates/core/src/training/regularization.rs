use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Anchor of the physical parameters to their initial values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizerConfig {
    pub theta_star: Vec<f64>,
    /// Diagonal of the importance matrix.
    pub lambda: Vec<f64>,
    pub epsilon: f64,
    /// Baseline mean squared simulation error the weights were derived from.
    pub v_mse: f64,
}

impl RegularizerConfig {
    pub fn new(theta_star: Vec<f64>, v_mse: f64, epsilon: f64) -> Result<Self> {
        let lambda = compute_lambda(v_mse, epsilon, &theta_star)?;
        Ok(RegularizerConfig {
            theta_star,
            lambda,
            epsilon,
            v_mse,
        })
    }

    /// No anchoring.
    pub fn disabled(theta_star: Vec<f64>) -> Self {
        RegularizerConfig {
            lambda: vec![0.0; theta_star.len()],
            theta_star,
            epsilon: f64::INFINITY,
            v_mse: 0.0,
        }
    }
}

/// `lambda_j = sqrt(v_mse / epsilon) / theta_star_j`.
pub fn compute_lambda(v_mse: f64, epsilon: f64, theta_star: &[f64]) -> Result<Vec<f64>> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(v_mse >= 0.0 && v_mse.is_finite()) {
        return Err(Error::InvalidArgument(format!("mean squared error must be finite and nonnegative, got {v_mse}")));
    }
    let gain = (v_mse / epsilon).sqrt();
    theta_star
        .iter()
        .enumerate()
        .map(|(index, t)| {
            if *t == 0.0 {
                Err(Error::ZeroBaselineParameter { index })
            } else {
                Ok(gain / t)
            }
        })
        .collect()
}

/// `|| Lambda (theta_base - theta_star) ||^2`.
pub fn regularization_loss(theta_base: &[f64], cfg: &RegularizerConfig) -> Result<f64> {
    check_len("baseline parameters", cfg.theta_star.len(), theta_base.len())?;
    Ok(theta_base
        .iter()
        .zip(&cfg.theta_star)
        .zip(&cfg.lambda)
        .map(|((t, s), l)| (l * (t - s)).powi(2))
        .sum())
}

/// Gradient of [`regularization_loss`].
pub fn regularization_grad(theta_base: &[f64], cfg: &RegularizerConfig) -> Vec<f64> {
    theta_base
        .iter()
        .zip(&cfg.theta_star)
        .zip(&cfg.lambda)
        .map(|((t, s), l)| 2.0 * l * l * (t - s))
        .collect()
}
