//! Step-2 subgroup models: they map covariates and estimated per-subject
//! effects to an interpretable structure (a shallow tree or a sparse linear
//! model) whose selected variables and predicted effects define subgroups.

mod ctree;
mod linear;
mod rtree;

pub use ctree::{fit_conditional_tree, root_max_statistic};
pub use linear::{fit_sparse_linear, SparseLinearModel};
pub use rtree::{best_root_gain, fit_regression_tree};

use std::collections::BTreeSet;

use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VtError};

pub const DEFAULT_MIN_LEAF: usize = 20;
pub const DEFAULT_ALPHA_SPLIT: f64 = 0.05;
pub const DEFAULT_MAX_DEPTH: usize = 5;
/// Linear-model selection size when no companion tree provides one.
pub const DEFAULT_LINEAR_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepTwoKind {
    None,
    Linear,
    RegressionTree,
    ConditionalTree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Tuning {
    RepeatedCv {
        #[serde(default = "default_folds")]
        folds: usize,
        #[serde(default = "default_repeats")]
        repeats: usize,
        #[serde(default = "default_depth_grid")]
        depth_grid: Vec<usize>,
    },
    FixedPenalty {
        value: f64,
    },
}

fn default_folds() -> usize {
    10
}
fn default_repeats() -> usize {
    3
}
fn default_depth_grid() -> Vec<usize> {
    vec![1, 2, 3, 4, 5]
}
fn default_min_leaf() -> usize {
    DEFAULT_MIN_LEAF
}
fn default_alpha_split() -> f64 {
    DEFAULT_ALPHA_SPLIT
}

impl Default for Tuning {
    fn default() -> Self {
        Tuning::RepeatedCv {
            folds: default_folds(),
            repeats: default_repeats(),
            depth_grid: default_depth_grid(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTwoSpec {
    pub kind: StepTwoKind,
    #[serde(default)]
    pub tuning: Tuning,
    #[serde(default = "default_min_leaf")]
    pub min_leaf: usize,
    #[serde(default = "default_alpha_split")]
    pub alpha_split: f64,
}

impl StepTwoSpec {
    pub fn with_kind(kind: StepTwoKind) -> Self {
        StepTwoSpec {
            kind,
            tuning: Tuning::default(),
            min_leaf: default_min_leaf(),
            alpha_split: default_alpha_split(),
        }
    }

    pub fn none() -> Self {
        Self::with_kind(StepTwoKind::None)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.tuning {
            Tuning::RepeatedCv { folds, repeats, depth_grid } => {
                if depth_grid.is_empty() {
                    return Err(VtError::InvalidConfig("depth_grid must be nonempty".into()));
                }
                if depth_grid.iter().any(|&d| d == 0) {
                    return Err(VtError::InvalidConfig("depths must be at least 1".into()));
                }
                if *folds < 2 || *repeats < 1 {
                    return Err(VtError::InvalidConfig(
                        "repeated CV needs folds >= 2 and repeats >= 1".into(),
                    ));
                }
            }
            Tuning::FixedPenalty { value } => {
                if !value.is_finite() || *value < 0.0 {
                    return Err(VtError::InvalidConfig(
                        "fixed penalty must be finite and nonnegative".into(),
                    ));
                }
            }
        }
        if !(self.alpha_split > 0.0 && self.alpha_split < 1.0) {
            return Err(VtError::InvalidConfig("alpha_split must lie in (0, 1)".into()));
        }
        if self.min_leaf == 0 {
            return Err(VtError::InvalidConfig("min_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

/// Flat binary tree over covariate thresholds. Rows with value <= threshold
/// route left. Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Split { var: usize, threshold: f64, left: usize, right: usize },
    Leaf { mean: f64, count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub nodes: Vec<TreeNode>,
    /// Realized depth (0 for a root-only tree).
    pub depth: usize,
    /// The accepted split threshold under FixedPenalty tuning; 0 when the
    /// depth was chosen by cross-validation or significance testing.
    pub penalty_used: f64,
}

impl TreeModel {
    pub fn predict_row(&self, row: ndarray::ArrayView1<f64>) -> Result<f64> {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { mean, .. } => return Ok(*mean),
                TreeNode::Split { var, threshold, left, right } => {
                    if *var >= row.len() {
                        return Err(VtError::InvalidInput(format!(
                            "tree splits on column {var} but input has {} columns",
                            row.len()
                        )));
                    }
                    i = if row[*var] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        let mut out = Array1::zeros(x.nrows());
        for (i, row) in x.rows().into_iter().enumerate() {
            out[i] = self.predict_row(row)?;
        }
        Ok(out)
    }

    pub fn split_variables(&self) -> BTreeSet<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Split { var, .. } => Some(*var),
                TreeNode::Leaf { .. } => None,
            })
            .collect()
    }

    /// Total training rows across leaves.
    pub fn leaf_count_sum(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| match n {
                TreeNode::Leaf { count, .. } => *count,
                TreeNode::Split { .. } => 0,
            })
            .sum()
    }
}

/// Any fitted step-2 model.
#[derive(Debug, Clone, PartialEq)]
pub enum SubgroupModel {
    Tree(TreeModel),
    Linear(SparseLinearModel),
}

impl SubgroupModel {
    /// Deduplicated covariate indices the model actually uses.
    pub fn selected_variables(&self) -> BTreeSet<usize> {
        match self {
            SubgroupModel::Tree(t) => t.split_variables(),
            SubgroupModel::Linear(l) => l.selected.iter().copied().collect(),
        }
    }

    pub fn predict_effect(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        match self {
            SubgroupModel::Tree(t) => t.predict(x),
            SubgroupModel::Linear(l) => l.predict(x),
        }
    }
}
