//! Training, evaluation, transfer experiments and feature export.

pub mod evaluate;
pub mod features;
pub mod trainer;
pub mod transfer;

pub use evaluate::{adapt, evaluate, predict, ConfusionMatrix, EvalMode};
pub use features::{extract_features, feature_layers, FeatureMatrix};
pub use trainer::{early_stop_epoch, train, train_model, EarlyStopper, EpochStats, Precision, StopReason, TrainConfig, TrainReport};
pub use transfer::{results_csv, run_transfer, summarize, summary_csv, CellSummary, Domain, TransferRecord, TransferTask};
