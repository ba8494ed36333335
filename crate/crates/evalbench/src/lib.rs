//! The experiment harness: target registry, clean/adversarial Top-1
//! evaluation, the attack x target matrix with multi-seed aggregation,
//! sample-count and layer sweeps, ablations, and report emission.

pub mod ablations;
pub mod error;
pub mod matrix;
pub mod registry;
pub mod report;
pub mod sweeps;

pub use ablations::{run_ablations, AblationContext, AblationReport, AblationRow};
pub use error::{BenchError, Result};
pub use matrix::{
    evaluate_archive, run_matrix, top1_accuracy, EvaluationReport, LabeledAttack, MatrixJob, ReportCell,
    ReportMeta, TargetSummary, CLEAN_SANITY_FLOOR, REPORT_SCHEMA_VERSION,
};
pub use registry::{TargetEntry, TargetRegistry};
pub use report::{emit, sweep_svg, to_csv, to_json, to_markdown, ReportFormat};
pub use sweeps::{sweep_layers, sweep_samples, LayerSweepOutcome, SweepPoint};
