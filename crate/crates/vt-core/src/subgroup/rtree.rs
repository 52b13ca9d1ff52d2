//! Greedy variance-reduction regression tree on estimated effects. Maximum
//! depth is tuned by repeated K-fold cross-validation using the fact that a
//! greedy tree grown to depth D contains every shallower greedy tree as its
//! truncation, or growth is gated by a fixed relative-improvement penalty.
//! Under CV depth tuning every split must still clear the conventional
//! default complexity floor; a calibrated FixedPenalty replaces that floor.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;

use crate::error::{Result, VtError};
use crate::seeds;
use crate::subgroup::{StepTwoSpec, TreeModel, TreeNode, Tuning, DEFAULT_MAX_DEPTH};

const CV_SHUFFLE_TAG: u64 = 0x27EE;

/// Minimum relative error improvement (gain / root SSE of the tree being
/// grown) a split must exceed while depth is tuned by cross-validation.
/// This is the stock complexity-parameter default of recursive-partitioning
/// tools; calibration replaces it through FixedPenalty.
pub const DEFAULT_GROWTH_PENALTY: f64 = 0.01;

/// Element of the growth tree: every node keeps its mean so truncated
/// predictions are available at any depth.
#[derive(Debug, Clone)]
struct GrowNode {
    mean: f64,
    count: usize,
    split: Option<(usize, f64, usize, usize)>, // (var, threshold, left, right)
}

struct GrowTree {
    nodes: Vec<GrowNode>,
    depth: usize,
}

impl GrowTree {
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

struct BestSplit {
    gain: f64,
    var: usize,
    threshold: f64,
    split_at: usize,
    sorted: Vec<usize>,
}

/// Best variance-reduction split of `rows`, honoring min_leaf on both sides.
/// Ties go to the lowest variable index, then the smallest threshold. The
/// gain is SSE_parent - SSE_left - SSE_right computed on `zc`.
fn best_split(
    x: ArrayView2<f64>,
    zc: &Array1<f64>,
    rows: &[usize],
    min_leaf: usize,
) -> Option<BestSplit> {
    let k = rows.len();
    if k < 2 * min_leaf {
        return None;
    }
    let sum: f64 = rows.iter().map(|&r| zc[r]).sum();
    let base = sum * sum / k as f64;
    let mut best: Option<BestSplit> = None;
    let mut sorted = rows.to_vec();
    for v in 0..x.ncols() {
        sorted.sort_unstable_by(|&a, &b| x[[a, v]].total_cmp(&x[[b, v]]));
        let mut left_sum = 0.0;
        for i in 1..k {
            left_sum += zc[sorted[i - 1]];
            if i < min_leaf || k - i < min_leaf {
                continue;
            }
            let lo = x[[sorted[i - 1], v]];
            let hi = x[[sorted[i], v]];
            if lo == hi {
                continue;
            }
            let right_sum = sum - left_sum;
            let crit = left_sum * left_sum / i as f64 + right_sum * right_sum / (k - i) as f64;
            let gain = crit - base;
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(BestSplit {
                    gain,
                    var: v,
                    threshold: lo + 0.5 * (hi - lo),
                    split_at: i,
                    sorted: sorted.clone(),
                });
            }
        }
    }
    best
}

/// Grows greedily on centered effects. `penalty` is the relative-improvement
/// gate: gain divided by the root SSE of the rows being grown must strictly
/// exceed it.
fn grow(
    x: ArrayView2<f64>,
    zc: &Array1<f64>,
    rows: Vec<usize>,
    max_depth: usize,
    min_leaf: usize,
    penalty: f64,
) -> GrowTree {
    let root_mean = rows.iter().map(|&r| zc[r]).sum::<f64>() / rows.len() as f64;
    let sse_root: f64 = rows.iter().map(|&r| (zc[r] - root_mean) * (zc[r] - root_mean)).sum();
    let mut nodes: Vec<GrowNode> = Vec::new();
    let mut depth_reached = 0;
    let mut stack: Vec<(usize, Vec<usize>, usize)> = Vec::new();
    nodes.push(GrowNode { mean: 0.0, count: 0, split: None });
    stack.push((0, rows, 0));
    while let Some((slot, rows, depth)) = stack.pop() {
        let k = rows.len();
        let mean = rows.iter().map(|&r| zc[r]).sum::<f64>() / k as f64;
        nodes[slot].mean = mean;
        nodes[slot].count = k;
        depth_reached = depth_reached.max(depth);
        if depth >= max_depth {
            continue;
        }
        let Some(b) = best_split(x, zc, &rows, min_leaf) else { continue };
        if b.gain <= 0.0 {
            continue;
        }
        if sse_root <= 0.0 || b.gain / sse_root <= penalty {
            continue;
        }
        let left = nodes.len();
        nodes.push(GrowNode { mean: 0.0, count: 0, split: None });
        let right = nodes.len();
        nodes.push(GrowNode { mean: 0.0, count: 0, split: None });
        nodes[slot].split = Some((b.var, b.threshold, left, right));
        let left_rows = b.sorted[..b.split_at].to_vec();
        let right_rows = b.sorted[b.split_at..].to_vec();
        stack.push((right, right_rows, depth + 1));
        stack.push((left, left_rows, depth + 1));
    }
    GrowTree { nodes, depth: depth_reached }
}

fn to_model(tree: &GrowTree, z_offset: f64, penalty_used: f64) -> TreeModel {
    let nodes = tree
        .nodes
        .iter()
        .map(|n| match n.split {
            Some((var, threshold, left, right)) => TreeNode::Split { var, threshold, left, right },
            None => TreeNode::Leaf { mean: n.mean + z_offset, count: n.count },
        })
        .collect();
    TreeModel { nodes, depth: tree.depth, penalty_used }
}

/// Relative gain of the best root split: gain / SSE_root. Zero when no valid
/// split exists or the response is constant. This is the statistic the
/// permutation calibration thresholds for regression trees.
pub fn best_root_gain(x: ArrayView2<f64>, z: ArrayView1<f64>, min_leaf: usize) -> f64 {
    let n = z.len();
    if n == 0 {
        return 0.0;
    }
    let mean = z.sum() / n as f64;
    let zc = z.mapv(|v| v - mean);
    let sse_root: f64 = zc.dot(&zc);
    if sse_root <= 0.0 {
        return 0.0;
    }
    let rows: Vec<usize> = (0..n).collect();
    match best_split(x, &zc, &rows, min_leaf) {
        Some(b) if b.gain > 0.0 => b.gain / sse_root,
        _ => 0.0,
    }
}

pub fn fit_regression_tree(
    x: ArrayView2<f64>,
    z: ArrayView1<f64>,
    spec: &StepTwoSpec,
    seed: u64,
) -> Result<TreeModel> {
    spec.validate()?;
    let n = x.nrows();
    if n < 2 * spec.min_leaf {
        return Err(VtError::InvalidInput(format!(
            "regression tree needs at least {} rows, got {n}",
            2 * spec.min_leaf
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(VtError::InvalidInput("non-finite effect estimate".into()));
    }
    // Centering keeps split-score arithmetic well conditioned when effects
    // sit on a large offset.
    let z_mean = z.sum() / n as f64;
    let zc = z.mapv(|v| v - z_mean);
    let all_rows: Vec<usize> = (0..n).collect();

    match &spec.tuning {
        Tuning::FixedPenalty { value } => {
            let tree = grow(x, &zc, all_rows, DEFAULT_MAX_DEPTH, spec.min_leaf, *value);
            Ok(to_model(&tree, z_mean, *value))
        }
        Tuning::RepeatedCv { folds, repeats, depth_grid } => {
            let mut grid: Vec<usize> = depth_grid.clone();
            grid.sort_unstable();
            grid.dedup();
            let chosen = if grid.len() == 1 {
                grid[0]
            } else {
                cv_depth(x, &zc, &grid, *folds, *repeats, spec.min_leaf, seed)?
            };
            let tree = grow(x, &zc, all_rows, chosen, spec.min_leaf, DEFAULT_GROWTH_PENALTY);
            Ok(to_model(&tree, z_mean, 0.0))
        }
    }
}

/// Repeated-CV depth choice. One full-depth tree per (repeat, fold); every
/// candidate depth is scored by truncating that tree. Ties prefer the
/// smallest depth.
fn cv_depth(
    x: ArrayView2<f64>,
    zc: &Array1<f64>,
    grid: &[usize],
    folds: usize,
    repeats: usize,
    min_leaf: usize,
    seed: u64,
) -> Result<usize> {
    let n = x.nrows();
    if n < folds {
        return Err(VtError::InvalidInput(format!("n = {n} is below folds = {folds}")));
    }
    let max_depth = *grid.last().expect("nonempty grid");
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
            let tree = grow(x, zc, train_rows, max_depth, min_leaf, DEFAULT_GROWTH_PENALTY);
            for (gi, &d) in grid.iter().enumerate() {
                for &r in test_rows {
                    let e = tree.predict_at_depth(x.row(r), d) - zc[r];
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
