//! Experiment commands, run manifests and result files.

pub mod commands;
pub mod manifest;
pub mod report;

pub use commands::{
    audit_policy, baseline_policy, cmd_audit, cmd_compare, cmd_eval, cmd_synth_data, cmd_train, evaluate_policy,
    load_policy, read_metrics, rerun, run, run_lambda_sweep, AuditRow, AuditSummary, CompareOutcome, Dataset,
    DpPolicy, EvalOutcome, LearnedRun, MethodSummary, SeedRow, SynthOutcome, TrainOutcome, CHECKPOINT_FILE,
    METRICS_FILE,
};
pub use manifest::{Invocation, Method, PolicySpec, RunManifest, Seeds, MANIFEST_FILE};
pub use report::{mean_std, read_report, LambdaRow, ReportRow, REPORT_HEADER};
