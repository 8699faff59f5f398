//! Paradigm execution, offline and online scoring, aggregation, ablations.

mod ablation;
mod offline;
mod online;
mod pipeline;
mod report;
mod runner;

pub use ablation::{ablation_table, factorial_rows, run_ablation, standard_rows, AblationEntry, AblationRow};
pub use offline::{accuracy, evaluate_offline, Prediction};
pub use online::{evaluate_online, fit_online, OnlineModel, TrialStream};
pub use pipeline::{PipelineConfig, Prep, StatsScope};
pub use report::{aggregate, ConfigSnapshot, EvalReport, RunRecord, SubjectResult, SubjectSummary, Summary};
pub use runner::{derive_seed, run_paradigm, RunSpec};
