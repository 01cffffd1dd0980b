//! Training loop, early stopping and forecast metrics.

mod early;
mod eval;
mod metrics;
mod train;

pub use early::EarlyStopping;
pub use eval::{evaluate, evaluate_predictions, mean_baseline, predict_scores, EvalReport, Metrics, Prediction};
pub use metrics::{mse, rmse, smape};
pub use train::{batch_bounds, eval_loss, train, EpochRecord, History, TargetScaler, TrainConfig, Trained};
