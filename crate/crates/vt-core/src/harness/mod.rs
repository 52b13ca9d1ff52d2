//! Benchmark orchestration: configuration, the scenario x method x replicate
//! sweep with deterministic parallel seeding, result tables, and tree export.

pub mod config;
pub mod export;
pub mod report;
pub mod runner;

pub use config::{default_method_grid, load_config, BenchmarkConfig};
pub use export::{tree_from_json, tree_to_dot, tree_to_json};
pub use report::{fmt6, parse_results_csv, results_csv, results_md, write_reports};
pub use runner::{run_benchmark, BenchmarkCell, CellFailure, ResultsTable};

/// Table/file name of a step-1 spec.
pub fn step1_name(spec: &crate::learners::RegressorSpec) -> &'static str {
    match spec {
        crate::learners::RegressorSpec::Lasso { .. } => "lasso",
        crate::learners::RegressorSpec::Forest { .. } => "forest",
        crate::learners::RegressorSpec::Mars { .. } => "mars",
        crate::learners::RegressorSpec::SuperLearner { .. } => "super_learner",
    }
}

/// Table/file name of a step-2 kind.
pub fn step2_name(kind: crate::subgroup::StepTwoKind) -> &'static str {
    match kind {
        crate::subgroup::StepTwoKind::None => "none",
        crate::subgroup::StepTwoKind::Linear => "linear",
        crate::subgroup::StepTwoKind::RegressionTree => "regression_tree",
        crate::subgroup::StepTwoKind::ConditionalTree => "conditional_tree",
    }
}
