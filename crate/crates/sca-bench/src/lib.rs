//! Benchmark harness around `sca-core`: CSV ingestion with the fixed
//! preprocessing protocol (median imputation, range normalization, random
//! split), synthetic desk-scale tasks, an experiment runner that pits the
//! surrogate optimizer against first-order baselines on shared mini-batch
//! streams, metric computation (test MSE, ROC/AUC), and CSV/JSON outputs.

pub mod data;
pub mod experiment;
pub mod metrics;
pub mod records;
pub mod speedup;

pub use data::{
    impute_median, load_csv, normalize_columns, split, synth_binary, synth_regression,
    ColumnAffine, CsvSchema, DataError, NormalizeKind, RawTable, SplitSpec,
};
pub use experiment::{run_experiment, DatasetSpec, ExperimentConfig, OptimizerSpec};
pub use metrics::{compute_mse, compute_roc_auc};
pub use records::{summarize, RunRecord, Summary};
