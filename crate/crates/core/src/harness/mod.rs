//! Training, corruption sweeps, metrics and filter inspection.

pub mod config;
pub mod inspect;
pub mod metrics;
pub mod sweep;
pub mod taylor;
pub mod train;

pub use config::{CountAxis, DataSource, Denoise, ExperimentConfig};
pub use inspect::{inspect_filters, Condition, FilterReport, PhiSummary};
pub use metrics::{accuracy, argmax, balanced_accuracy, recording_class, BalancedAccuracy};
pub use sweep::{rows_to_csv, run_sweep, run_sweep_on, ResultRow, CSV_HEADER};
pub use taylor::{taylor_bench, taylor_csv, TaylorPoint};
pub use train::{train_model, DataShape, TrainLog, Trained};
