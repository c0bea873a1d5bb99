//! Config-driven orchestration of a full run and its reports.

pub mod config;
pub mod persist;
pub mod report;
pub mod run;

pub use config::RunConfig;
pub use persist::{write_evaluations, Manifest, ModelBundle};
pub use report::{emit_report, EvaluationReport, ModelKind, Partition, RunReport};
pub use run::{default_threads, prepare, run_pipeline, run_pipeline_full, with_threads, PipelineOutput, MAJORITY, STACKING, WEIGHTED};
