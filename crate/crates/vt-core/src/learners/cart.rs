//! Bootstrap CART regression trees for the random forest: variance-reduction
//! splits over a random feature subset per node, grown until the node-size
//! floor. Split thresholds are midpoints between adjacent distinct values, so
//! tree shape depends only on the ordering of each covariate.

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum CartNode {
    Split { var: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

/// One tree plus the bootstrap row indices (with repeats) it was grown on.
#[derive(Debug, Clone, PartialEq)]
pub struct CartTree {
    pub nodes: Vec<CartNode>,
    pub in_bag: Vec<usize>,
}

impl CartTree {
    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                CartNode::Leaf { value } => return value,
                CartNode::Split { var, threshold, left, right } => {
                    i = if row[var] <= threshold { left } else { right };
                }
            }
        }
    }
}

/// Draws a bootstrap sample and grows one tree. A node is terminal when it
/// holds at most `nodesize` observations or no candidate feature admits a
/// split; children may be as small as one observation.
pub fn grow_tree(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    mtry: usize,
    nodesize: usize,
    rng: &mut ChaCha8Rng,
) -> CartTree {
    let n = x.nrows();
    let p = x.ncols();
    let in_bag: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let mut nodes: Vec<CartNode> = vec![CartNode::Leaf { value: 0.0 }];
    let mut feats: Vec<usize> = (0..p).collect();
    // (slot, rows) work stack; LIFO gives a deterministic depth-first order.
    let mut stack: Vec<(usize, Vec<usize>)> = vec![(0, in_bag.clone())];
    while let Some((slot, rows)) = stack.pop() {
        let k = rows.len();
        let sum: f64 = rows.iter().map(|&r| y[r]).sum();
        let mean = sum / k as f64;
        if k <= nodesize.max(1) {
            nodes[slot] = CartNode::Leaf { value: mean };
            continue;
        }
        let (chosen, _) = feats.partial_shuffle(rng, mtry.min(p));
        let mut chosen: Vec<usize> = chosen.to_vec();
        chosen.sort_unstable();

        let mut best: Option<(f64, usize, f64, usize)> = None; // (crit, var, threshold, left count in sorted order)
        let mut best_sorted: Vec<usize> = Vec::new();
        let mut sorted = rows.clone();
        for &v in &chosen {
            sorted.sort_unstable_by(|&a, &b| x[[a, v]].total_cmp(&x[[b, v]]));
            let mut left_sum = 0.0;
            for i in 1..k {
                left_sum += y[sorted[i - 1]];
                let lo = x[[sorted[i - 1], v]];
                let hi = x[[sorted[i], v]];
                if lo == hi {
                    continue;
                }
                let right_sum = sum - left_sum;
                let crit = left_sum * left_sum / i as f64 + right_sum * right_sum / (k - i) as f64;
                if best.as_ref().is_none_or(|b| crit > b.0) {
                    best = Some((crit, v, lo + 0.5 * (hi - lo), i));
                    best_sorted.clone_from(&sorted);
                }
            }
        }
        match best {
            None => nodes[slot] = CartNode::Leaf { value: mean },
            Some((_, var, threshold, split_at)) => {
                let left_rows = best_sorted[..split_at].to_vec();
                let right_rows = best_sorted[split_at..].to_vec();
                let left = nodes.len();
                nodes.push(CartNode::Leaf { value: 0.0 });
                let right = nodes.len();
                nodes.push(CartNode::Leaf { value: 0.0 });
                nodes[slot] = CartNode::Split { var, threshold, left, right };
                stack.push((right, right_rows));
                stack.push((left, left_rows));
            }
        }
    }
    CartTree { nodes, in_bag }
}
