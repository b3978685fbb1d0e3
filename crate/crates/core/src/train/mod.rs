//! Optimizers, metrics, checkpoints and the epoch loop.

pub mod checkpoint;
pub mod fit;
pub mod metrics;
pub mod optim;

pub use checkpoint::Checkpoint;
pub use fit::{evaluate, fit, train_epoch, EpochReport, FitOptions};
pub use metrics::{metrics_csv, topk_hits, EpochMetrics, Split, Tally, CSV_HEADER};
pub use optim::{OptimKind, Optimizer};
