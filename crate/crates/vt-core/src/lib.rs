//! Virtual Twins subgroup identification.
//!
//! The two-step workflow: fit a response-surface model per treatment arm,
//! difference the per-subject predictions into individual treatment effect
//! estimates, then fit an interpretable subgroup model to those estimates.
//! The crate also provides permutation-based penalty calibration, the
//! simulation generators used for benchmarking, evaluation metrics, and a
//! deterministic parallel benchmark harness.

#![forbid(unsafe_code)]

pub mod datamodel;
pub mod error;
pub mod harness;
pub mod learners;
pub mod linalg;
pub mod metrics;
pub mod seeds;
pub mod simgen;
pub mod subgroup;
pub mod vt;

pub use datamodel::{ColumnKind, ColumnMeta, Dataset, StandardizationParams};
pub use error::{Result, VtError};
pub use learners::{FittedRegressor, LambdaRule, RegressorSpec};
pub use metrics::{AggregateMetrics, GroundTruthMode, ReplicateMetrics};
pub use simgen::{Linearity, ScenarioConfig, SimulatedData, Structure};
pub use subgroup::{
    SparseLinearModel, StepTwoKind, StepTwoSpec, SubgroupModel, TreeModel, TreeNode, Tuning,
};
pub use vt::{CalibrationResult, CounterfactualPredictions, VtFit, VtSpec};
