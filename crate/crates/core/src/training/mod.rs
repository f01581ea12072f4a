//! Estimation of the joint parameters: normalization, truncated simulation
//! loss with an encoder for the initial states, anchoring of the physical
//! parameters, and ADAM.

mod adam;
mod normalization;
mod problem;
mod regularization;
mod sampling;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use normalization::{compute_normalization, normalize_baseline, NormalizationTransform, NormalizedPort};
pub use problem::{linearize_port, rmse_rows, window_state_estimator, LossEval, TrainingProblem};
pub use regularization::{compute_lambda, regularization_grad, regularization_loss, RegularizerConfig};
pub use sampling::{epoch_rng, sample_batch, start_range, SubsectionBatch};
pub use trainer::{train, HistoryRow, TrainOutcome, TrainingConfig};
