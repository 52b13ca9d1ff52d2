//! Benchmark configuration, loadable from JSON with the same field names.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, VtError};
use crate::learners::RegressorSpec;
use crate::metrics::GroundTruthMode;
use crate::simgen::ScenarioConfig;
use crate::subgroup::{StepTwoKind, StepTwoSpec};
use crate::vt::VtSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub scenarios: Vec<ScenarioConfig>,
    /// Step-1 x step-2 combinations to run; defaults to the full 4x4 grid.
    #[serde(default = "default_method_grid")]
    pub method_grid: Vec<VtSpec>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub ground_truth_mode: GroundTruthMode,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Master seed; every replicate derives its own streams from it.
    #[serde(default)]
    pub seed: u64,
}

fn default_replicates() -> usize {
    100
}

fn default_workers() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("vt-results")
}

/// Every combination of the four step-1 learners with the four step-2
/// models, in step-1-major order.
pub fn default_method_grid() -> Vec<VtSpec> {
    let step1 = [
        RegressorSpec::default_lasso(),
        RegressorSpec::default_forest(),
        RegressorSpec::default_mars(),
        RegressorSpec::default_superlearner(),
    ];
    let step2 = [
        StepTwoKind::None,
        StepTwoKind::Linear,
        StepTwoKind::RegressionTree,
        StepTwoKind::ConditionalTree,
    ];
    let mut grid = Vec::with_capacity(16);
    for s1 in &step1 {
        for &s2 in &step2 {
            grid.push(VtSpec { step1: s1.clone(), step2: StepTwoSpec::with_kind(s2), seed: 0 });
        }
    }
    grid
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            return Err(VtError::InvalidConfig("no scenarios configured".into()));
        }
        if self.method_grid.is_empty() {
            return Err(VtError::InvalidConfig("empty method grid".into()));
        }
        if self.replicates < 1 {
            return Err(VtError::InvalidConfig("replicates must be at least 1".into()));
        }
        if self.workers < 1 {
            return Err(VtError::InvalidConfig("workers must be at least 1".into()));
        }
        for s in &self.scenarios {
            s.validate()?;
        }
        for m in &self.method_grid {
            m.step1.validate()?;
            m.step2.validate()?;
        }
        Ok(())
    }
}

/// Load and validate a JSON benchmark configuration.
pub fn load_config(path: &Path) -> Result<BenchmarkConfig> {
    let text = std::fs::read_to_string(path)?;
    let config: BenchmarkConfig = serde_json::from_str(&text)
        .map_err(|e| VtError::InvalidConfig(format!("bad benchmark config: {e}")))?;
    config.validate()?;
    Ok(config)
}
