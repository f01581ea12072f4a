use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::problem::TrainingProblem;
use super::sampling::{epoch_rng, sample_batch};
use crate::data::DataSequence;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub n_a: usize,
    pub n_b: usize,
    /// Truncation length `T` of every subsection.
    pub horizon: usize,
    pub epochs: usize,
    /// Subsections per optimizer step.
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    #[serde(flatten)]
    pub adam: AdamConfig,
    pub epsilon_reg: f64,
    pub seed: u64,
    pub encoder_hidden_layers: usize,
    pub encoder_nodes: usize,
    /// Samples skipped before state statistics are collected.
    pub normalization_transient: usize,
    pub train_base: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            n_a: 7,
            n_b: 7,
            horizon: 200,
            epochs: 5000,
            batch_size: 2000,
            batches_per_epoch: 1,
            adam: AdamConfig::default(),
            epsilon_reg: 1.0,
            seed: 0,
            encoder_hidden_layers: 2,
            encoder_nodes: 64,
            normalization_transient: 1000,
            train_base: true,
        }
    }
}

impl TrainingConfig {
    /// Reduced schedule that runs in minutes on one CPU core.
    pub fn desk() -> Self {
        TrainingConfig {
            horizon: 50,
            epochs: 500,
            batch_size: 256,
            ..TrainingConfig::default()
        }
    }
}

/// One line of the loss history. Epoch 0 describes the initial parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub v_trunc: f64,
    pub v_reg: f64,
    pub val_rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation RMSE seen.
    pub best_theta: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_rmse: f64,
    pub final_theta: Vec<f64>,
    pub history: Vec<HistoryRow>,
    /// Set when training stopped on a numerical failure; `best_theta` is then
    /// the last good checkpoint.
    pub aborted: Option<String>,
}

/// ADAM on the joint cost with freshly sampled subsections for every step.
/// Validation RMSE is measured after every epoch and the best parameters are
/// kept.
pub fn train(
    problem: &TrainingProblem,
    validation: &DataSequence,
    cfg: &TrainingConfig,
    mut on_epoch: impl FnMut(&HistoryRow),
) -> Result<TrainOutcome> {
    let n_data = problem.estimation_len();
    let lookback = problem.lookback();
    let mut theta = problem.theta0().to_vec();
    let mut state = AdamState::new(theta.len());

    let batch = sample_batch(&mut epoch_rng(cfg.seed, 0, 0), n_data, lookback, cfg.horizon, cfg.batch_size)?;
    let row = HistoryRow {
        epoch: 0,
        v_trunc: problem.truncated_loss(&theta, &batch)?,
        v_reg: problem.regularization(&theta)?,
        val_rmse: problem.rmse(&theta, validation)?,
    };
    on_epoch(&row);
    let mut history = vec![row];
    let mut best = (theta.clone(), 0, row.val_rmse);
    let mut aborted = None;

    'epochs: for epoch in 1..=cfg.epochs {
        let mut v_trunc = 0.0;
        let mut v_reg = 0.0;
        for b in 0..cfg.batches_per_epoch {
            let mut rng = epoch_rng(cfg.seed, epoch, b);
            let batch = sample_batch(&mut rng, n_data, lookback, cfg.horizon, cfg.batch_size)?;
            let step = problem
                .loss_and_grad(&theta, &batch)
                .and_then(|eval| adam_step(&mut theta, &eval.grad, &mut state, &cfg.adam).map(|_| eval));
            match step {
                Ok(eval) => {
                    v_trunc += eval.v_trunc;
                    v_reg += eval.v_reg;
                }
                Err(e) => {
                    aborted = Some(format!("epoch {epoch}: {e}"));
                    break 'epochs;
                }
            }
        }
        let k = cfg.batches_per_epoch.max(1) as f64;
        let val_rmse = match problem.rmse(&theta, validation) {
            Ok(r) if r.is_finite() => r,
            Ok(_) => {
                aborted = Some(format!("epoch {epoch}: validation RMSE is not finite"));
                break;
            }
            Err(e) => {
                aborted = Some(format!("epoch {epoch}: {e}"));
                break;
            }
        };
        let row = HistoryRow {
            epoch,
            v_trunc: v_trunc / k,
            v_reg: v_reg / k,
            val_rmse,
        };
        on_epoch(&row);
        history.push(row);
        if val_rmse < best.2 {
            best = (theta.clone(), epoch, val_rmse);
        }
    }
    Ok(TrainOutcome {
        best_theta: best.0,
        best_epoch: best.1,
        best_val_rmse: best.2,
        final_theta: theta,
        history,
        aborted,
    })
}
