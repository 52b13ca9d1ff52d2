//! Conditional inference tree on estimated effects: at each node a
//! standardized linear-association statistic is computed per covariate, its
//! two-sided asymptotic-normal p-value is Bonferroni-adjusted over the tested
//! covariates, and the node splits on the most significant covariate only if
//! the adjusted p-value clears alpha_split. Maximum depth is tuned by
//! repeated K-fold cross-validation; a gated tree grown to depth D contains
//! every shallower gated tree as its truncation, so one full-depth fit per
//! fold scores the whole grid. Under FixedPenalty tuning the statistic itself
//! is compared against the threshold instead (the form the permutation
//! calibration produces).

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;

use crate::error::{Result, VtError};
use crate::linalg::normal_sf;
use crate::seeds;
use crate::subgroup::{StepTwoSpec, TreeModel, TreeNode, Tuning, DEFAULT_MAX_DEPTH};

const CV_SHUFFLE_TAG: u64 = 0xC7EE;

/// Standardized association between one covariate and the centered response:
/// |sum a_i b_i| / sqrt(sum a^2 * sum b^2 / (n-1)), its permutation-null
/// standard deviation. Zero for a constant covariate.
fn association_stat(xcol: ArrayView1<f64>, b: &Array1<f64>, ssb: f64) -> f64 {
    let n = xcol.len() as f64;
    let xbar = xcol.sum() / n;
    let mut t = 0.0;
    let mut ssa = 0.0;
    for (xv, bv) in xcol.iter().zip(b.iter()) {
        let a = xv - xbar;
        t += a * bv;
        ssa += a * a;
    }
    if ssa <= 0.0 || ssb <= 0.0 {
        return 0.0;
    }
    t.abs() / (ssa * ssb / (n - 1.0)).sqrt()
}

/// Maximum root association statistic over covariates; the quantity the
/// permutation calibration thresholds for conditional trees.
pub fn root_max_statistic(x: ArrayView2<f64>, z: ArrayView1<f64>) -> f64 {
    let n = z.len();
    if n < 2 {
        return 0.0;
    }
    let zbar = z.sum() / n as f64;
    let b = z.mapv(|v| v - zbar);
    let ssb = b.dot(&b);
    (0..x.ncols()).map(|j| association_stat(x.column(j), &b, ssb)).fold(0.0, f64::max)
}

#[derive(Clone, Copy)]
enum Gate {
    Significance { alpha: f64 },
    TestStat { threshold: f64 },
}

struct NodeChoice {
    var: usize,
    stat: f64,
    p_adjusted: f64,
}

/// Most associated covariate at a node; ties keep the lowest index.
fn choose_variable(
    x: ArrayView2<f64>,
    rows: &[usize],
    b: &Array1<f64>,
    ssb: f64,
) -> Option<NodeChoice> {
    let n = rows.len();
    let mut tested = 0usize;
    let mut best: Option<(usize, f64)> = None;
    for j in 0..x.ncols() {
        let col = Array1::from_iter(rows.iter().map(|&r| x[[r, j]]));
        let xbar = col.sum() / n as f64;
        let ssa: f64 = col.iter().map(|v| (v - xbar) * (v - xbar)).sum();
        if ssa <= 0.0 {
            continue;
        }
        tested += 1;
        let mut t = 0.0;
        for (i, &r) in rows.iter().enumerate() {
            t += (col[i] - xbar) * b[r];
        }
        let stat = t.abs() / (ssa * ssb / (n as f64 - 1.0)).sqrt();
        if best.as_ref().is_none_or(|bb| stat > bb.1) {
            best = Some((j, stat));
        }
    }
    let (var, stat) = best?;
    let p = 2.0 * normal_sf(stat);
    let p_adjusted = (p * tested as f64).min(1.0);
    Some(NodeChoice { var, stat, p_adjusted })
}

/// Split point on `var` maximizing the standardized two-sample statistic
/// |sum_{x<=s} b_i| / sqrt(nL*nR/(n*(n-1)) * sum b^2), both children at least
/// min_leaf. Ties keep the smallest threshold.
fn choose_split_point(
    x: ArrayView2<f64>,
    rows: &[usize],
    var: usize,
    b: &Array1<f64>,
    ssb: f64,
    min_leaf: usize,
) -> Option<(f64, usize, Vec<usize>)> {
    let k = rows.len();
    let mut sorted = rows.to_vec();
    sorted.sort_unstable_by(|&p, &q| x[[p, var]].total_cmp(&x[[q, var]]));
    let mut left_sum = 0.0;
    let mut best: Option<(f64, f64, usize)> = None; // (stat, threshold, split_at)
    for i in 1..k {
        left_sum += b[sorted[i - 1]];
        if i < min_leaf || k - i < min_leaf {
            continue;
        }
        let lo = x[[sorted[i - 1], var]];
        let hi = x[[sorted[i], var]];
        if lo == hi {
            continue;
        }
        let nl = i as f64;
        let nr = (k - i) as f64;
        let var_t = nl * nr / (k as f64 * (k as f64 - 1.0)) * ssb;
        if var_t <= 0.0 {
            continue;
        }
        let stat = left_sum.abs() / var_t.sqrt();
        if best.as_ref().is_none_or(|bb| stat > bb.0) {
            best = Some((stat, lo + 0.5 * (hi - lo), i));
        }
    }
    best.map(|(_, threshold, split_at)| (threshold, split_at, sorted))
}

/// Element of the gated growth tree: every node keeps its mean so truncated
/// predictions are available at any depth.
struct GateNode {
    mean: f64,
    count: usize,
    split: Option<(usize, f64, usize, usize)>, // (var, threshold, left, right)
}

struct GateTree {
    nodes: Vec<GateNode>,
    depth: usize,
}

impl GateTree {
    fn predict_at_depth(&self, row: ArrayView1<f64>, max_depth: usize) -> f64 {
        let mut i = 0;
        let mut d = 0;
        loop {
            let node = &self.nodes[i];
            match node.split {
                Some((var, thr, l, r)) if d < max_depth => {
                    i = if row[var] <= thr { l } else { r };
                    d += 1;
                }
                _ => return node.mean,
            }
        }
    }
}

/// Grows a gated tree on `rows`. The gate decision at a node depends only on
/// the node's own rows, so a deeper cap never changes shallower nodes.
fn grow(
    x: ArrayView2<f64>,
    z: ArrayView1<f64>,
    rows: Vec<usize>,
    gate: Gate,
    max_depth: usize,
    min_leaf: usize,
) -> GateTree {
    let mut nodes: Vec<GateNode> = vec![GateNode { mean: 0.0, count: 0, split: None }];
    let mut depth_reached = 0;
    let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(0, rows, 0)];
    while let Some((slot, rows, depth)) = stack.pop() {
        let k = rows.len();
        let mean = rows.iter().map(|&r| z[r]).sum::<f64>() / k as f64;
        nodes[slot].mean = mean;
        nodes[slot].count = k;
        depth_reached = depth_reached.max(depth);
        if depth >= max_depth || k < 2 * min_leaf {
            continue;
        }
        let b = Array1::from_shape_fn(z.len(), |i| z[i] - mean); // centered on the node mean; only node rows are read
        let ssb: f64 = rows.iter().map(|&r| b[r] * b[r]).sum();
        if ssb <= 0.0 {
            continue;
        }
        let Some(choice) = choose_variable(x, &rows, &b, ssb) else { continue };
        let accept = match gate {
            Gate::Significance { alpha } => choice.p_adjusted <= alpha,
            Gate::TestStat { threshold } => choice.stat >= threshold,
        };
        if !accept {
            continue;
        }
        let Some((threshold, split_at, sorted)) =
            choose_split_point(x, &rows, choice.var, &b, ssb, min_leaf)
        else {
            continue;
        };
        let left = nodes.len();
        nodes.push(GateNode { mean: 0.0, count: 0, split: None });
        let right = nodes.len();
        nodes.push(GateNode { mean: 0.0, count: 0, split: None });
        nodes[slot].split = Some((choice.var, threshold, left, right));
        stack.push((right, sorted[split_at..].to_vec(), depth + 1));
        stack.push((left, sorted[..split_at].to_vec(), depth + 1));
    }
    GateTree { nodes, depth: depth_reached }
}

fn to_model(tree: &GateTree, penalty_used: f64) -> TreeModel {
    let nodes = tree
        .nodes
        .iter()
        .map(|n| match n.split {
            Some((var, threshold, left, right)) => TreeNode::Split { var, threshold, left, right },
            None => TreeNode::Leaf { mean: n.mean, count: n.count },
        })
        .collect();
    TreeModel { nodes, depth: tree.depth, penalty_used }
}

/// Repeated-CV depth choice over gated trees; one full-depth tree per
/// (repeat, fold), every candidate depth scored by truncation. Ties prefer
/// the smallest depth.
fn cv_depth(
    x: ArrayView2<f64>,
    z: ArrayView1<f64>,
    grid: &[usize],
    folds: usize,
    repeats: usize,
    min_leaf: usize,
    alpha: f64,
    seed: u64,
) -> Result<usize> {
    let n = x.nrows();
    if n < folds {
        return Err(VtError::InvalidInput(format!("n = {n} is below folds = {folds}")));
    }
    let max_depth = *grid.last().expect("nonempty grid");
    let gate = Gate::Significance { alpha };
    let mut sse = vec![0.0f64; grid.len()];
    for rep in 0..repeats {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seeds::rng(seed, CV_SHUFFLE_TAG + rep as u64));
        let mut start = 0;
        for f in 0..folds {
            let size = n / folds + usize::from(f < n % folds);
            let test_rows = &order[start..start + size];
            start += size;
            let train_rows: Vec<usize> =
                order[..start - size].iter().chain(&order[start..]).copied().collect();
            if train_rows.len() < 2 * min_leaf {
                return Err(VtError::InvalidInput("CV fold too small for min_leaf".into()));
            }
            let tree = grow(x, z, train_rows, gate, max_depth, min_leaf);
            for (gi, &d) in grid.iter().enumerate() {
                for &r in test_rows {
                    let e = tree.predict_at_depth(x.row(r), d) - z[r];
                    sse[gi] += e * e;
                }
            }
        }
    }
    let mut best = 0;
    for gi in 1..grid.len() {
        if sse[gi] < sse[best] {
            best = gi;
        }
    }
    Ok(grid[best])
}

pub fn fit_conditional_tree(
    x: ArrayView2<f64>,
    z: ArrayView1<f64>,
    spec: &StepTwoSpec,
    seed: u64,
) -> Result<TreeModel> {
    spec.validate()?;
    let n = x.nrows();
    if n < 2 * spec.min_leaf {
        return Err(VtError::InvalidInput(format!(
            "conditional tree needs at least {} rows, got {n}",
            2 * spec.min_leaf
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(VtError::InvalidInput("non-finite effect estimate".into()));
    }
    let all_rows: Vec<usize> = (0..n).collect();
    match &spec.tuning {
        Tuning::FixedPenalty { value } => {
            let gate = Gate::TestStat { threshold: *value };
            let tree = grow(x, z, all_rows, gate, DEFAULT_MAX_DEPTH, spec.min_leaf);
            Ok(to_model(&tree, *value))
        }
        Tuning::RepeatedCv { folds, repeats, depth_grid } => {
            let mut grid: Vec<usize> = depth_grid.clone();
            grid.sort_unstable();
            grid.dedup();
            let chosen = if grid.len() == 1 {
                grid[0]
            } else {
                cv_depth(x, z, &grid, *folds, *repeats, spec.min_leaf, spec.alpha_split, seed)?
            };
            let gate = Gate::Significance { alpha: spec.alpha_split };
            let tree = grow(x, z, all_rows, gate, chosen, spec.min_leaf);
            Ok(to_model(&tree, 0.0))
        }
    }
}
