//! Training with progressive pseudo-label updates, inference with NMS,
//! and tIoU/mAP evaluation.

mod config;
mod eval;
mod infer;
mod train;

pub use config::{corpus_config_from_kv, save_train_config, TrainConfig};
pub use eval::{
    average_precision, evaluate, nms, pseudo_quality_map50, EvalError, EvalReport, ANET_GRID,
    THUMOS_GRID,
};
pub use infer::{infer, InferOptions};
pub use train::{load_corpus, train, write_metrics_csv, MetricsRow, PipelineError, TrainOutcome};
