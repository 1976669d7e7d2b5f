//! End-to-end driver: simulate a scene, run the full method or a baseline
//! over every observation, score against ground truth and write results.

mod config;
mod report;
mod run;

pub use config::{CameraConfig, RunConfig, RUN_SCHEMA};
pub use report::{aggregate, export_report, find_metrics, format_table, read_metrics, SummaryRow};
pub use run::{
    run_baseline, run_baselines, run_pipeline, Method, MetricRow, RunReport, Session, StepSummary, MANIFEST_SCHEMA,
};
