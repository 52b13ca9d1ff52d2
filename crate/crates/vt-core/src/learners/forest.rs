//! Random-forest regression with out-of-bag tuning of `mtry` and `nodesize`
//! over small grids. The winning grid point's forest is returned as fitted;
//! there is no refit, so the reported OOB error describes the exact model.

use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::error::{Result, VtError};
use crate::learners::cart::{grow_tree, CartTree};
use crate::learners::RegressorSpec;
use crate::seeds;

#[derive(Debug, Clone, PartialEq)]
pub struct ForestFit {
    pub trees: Vec<CartTree>,
    pub mtry: usize,
    pub nodesize: usize,
    pub oob_mse: f64,
    pub p: usize,
}

impl ForestFit {
    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(x.nrows());
        for (i, row) in x.rows().into_iter().enumerate() {
            let s: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
            out[i] = s / self.trees.len() as f64;
        }
        out
    }
}

/// Default `mtry` grid for p covariates: p/3 (the regression default), sqrt p,
/// and 2p/3, clamped to [1, p] and deduplicated in that order.
pub fn default_mtry_grid(p: usize) -> Vec<usize> {
    let mut grid = Vec::new();
    for m in [p / 3, (p as f64).sqrt() as usize, 2 * p / 3] {
        let m = m.clamp(1, p);
        if !grid.contains(&m) {
            grid.push(m);
        }
    }
    grid
}

pub const DEFAULT_NODESIZE_GRID: [usize; 3] = [5, 15, 30];

pub fn fit_forest(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    spec: &RegressorSpec,
    seed: u64,
) -> Result<ForestFit> {
    let RegressorSpec::Forest { n_trees, mtry_grid, nodesize_grid } = spec else {
        return Err(VtError::InvalidConfig("fit_forest requires a Forest spec".into()));
    };
    let n = x.nrows();
    let p = x.ncols();
    if n < 2 {
        return Err(VtError::InvalidInput(format!("forest needs at least 2 rows, got {n}")));
    }
    if *n_trees == 0 {
        return Err(VtError::InvalidConfig("n_trees must be at least 1".into()));
    }
    let mtry_grid = if mtry_grid.is_empty() { default_mtry_grid(p) } else { mtry_grid.clone() };
    let nodesize_grid = if nodesize_grid.is_empty() {
        DEFAULT_NODESIZE_GRID.to_vec()
    } else {
        nodesize_grid.clone()
    };
    if mtry_grid.iter().any(|&m| m == 0 || m > p) {
        return Err(VtError::InvalidConfig(format!("mtry values must lie in [1, {p}]")));
    }
    if nodesize_grid.contains(&0) {
        return Err(VtError::InvalidConfig("nodesize values must be at least 1".into()));
    }

    let mut best: Option<ForestFit> = None;
    let mut grid_index: u64 = 0;
    for &mtry in &mtry_grid {
        for &nodesize in &nodesize_grid {
            let mut rng = seeds::rng(seed, grid_index);
            grid_index += 1;
            let trees: Vec<CartTree> =
                (0..*n_trees).map(|_| grow_tree(x, y, mtry, nodesize, &mut rng)).collect();
            let oob_mse = oob_mse(&trees, x, y);
            if best.as_ref().is_none_or(|b| oob_mse < b.oob_mse) {
                best = Some(ForestFit { trees, mtry, nodesize, oob_mse, p });
            }
        }
    }
    Ok(best.expect("nonempty grid"))
}

fn oob_mse(trees: &[CartTree], x: ArrayView2<f64>, y: ArrayView1<f64>) -> f64 {
    let n = x.nrows();
    let mut sum = vec![0.0; n];
    let mut cnt = vec![0usize; n];
    let mut bagged = vec![false; n];
    for tree in trees {
        bagged.iter_mut().for_each(|b| *b = false);
        for &r in &tree.in_bag {
            bagged[r] = true;
        }
        for r in 0..n {
            if !bagged[r] {
                sum[r] += tree.predict_row(x.row(r));
                cnt[r] += 1;
            }
        }
    }
    let mut err = 0.0;
    let mut covered = 0usize;
    for r in 0..n {
        if cnt[r] > 0 {
            let d = sum[r] / cnt[r] as f64 - y[r];
            err += d * d;
            covered += 1;
        }
    }
    if covered == 0 {
        f64::INFINITY
    } else {
        err / covered as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array1, Array2};

    fn forest_spec(n_trees: usize, mtry: usize, nodesize: usize) -> RegressorSpec {
        RegressorSpec::Forest { n_trees, mtry_grid: vec![mtry], nodesize_grid: vec![nodesize] }
    }

    #[test]
    fn degenerate_nodesize_means_constant_prediction() {
        let n = 40;
        let mut rng = crate::seeds::rng(5, 0);
        use rand::Rng;
        let x = Array2::<f64>::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0));
        // Constant outcome: every bootstrap mean equals the sample mean, so
        // the root-leaf forest predicts it exactly.
        let y = Array1::from_elem(n, 2.5);
        let fit = fit_forest(x.view(), y.view(), &forest_spec(25, 2, n), 9).unwrap();
        for t in &fit.trees {
            assert_eq!(t.nodes.len(), 1);
        }
        let pred = fit.predict(x.view());
        for v in pred.iter() {
            assert!((v - 2.5).abs() < 1e-12);
        }

        // Varying outcome: still a single shared value per tree, so all rows
        // get one constant close to the sample mean.
        let y2 = Array1::from_shape_fn(n, |i| x[[i, 0]] + 3.0);
        let fit2 = fit_forest(x.view(), y2.view(), &forest_spec(200, 2, n), 9).unwrap();
        let pred2 = fit2.predict(x.view());
        let first = pred2[0];
        for v in pred2.iter() {
            assert_eq!(*v, first);
        }
        let ybar = y2.sum() / n as f64;
        assert!((first - ybar).abs() < 0.3, "bootstrap mean {first} far from {ybar}");
    }

    #[test]
    fn oob_mse_small_on_noiseless_step() {
        let n = 200;
        let mut rng = crate::seeds::rng(13, 0);
        use rand::Rng;
        let x = Array2::from_shape_fn((n, 5), |_| rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(n, |i| if x[[i, 0]] > 0.0 { 1.0 } else { 0.0 });
        let fit = fit_forest(x.view(), y.view(), &forest_spec(200, 5, 5), 21).unwrap();
        assert!(fit.oob_mse < 0.05, "oob mse {}", fit.oob_mse);
    }

    #[test]
    fn grid_tuning_prefers_lower_oob() {
        let n = 120;
        let mut rng = crate::seeds::rng(17, 0);
        use rand::Rng;
        let x = Array2::from_shape_fn((n, 4), |_| rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(n, |i| x[[i, 0]] * 2.0);
        let spec =
            RegressorSpec::Forest { n_trees: 60, mtry_grid: vec![4], nodesize_grid: vec![n, 5] };
        let fit = fit_forest(x.view(), y.view(), &spec, 23).unwrap();
        assert_eq!(fit.nodesize, 5, "root-leaf forests cannot win the grid");
    }

    #[test]
    fn deterministic_given_seed() {
        let n = 60;
        let mut rng = crate::seeds::rng(29, 0);
        use rand::Rng;
        let x = Array2::<f64>::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(n, |i| x[[i, 1]].sin());
        let a = fit_forest(x.view(), y.view(), &forest_spec(30, 2, 5), 31).unwrap();
        let b = fit_forest(x.view(), y.view(), &forest_spec(30, 2, 5), 31).unwrap();
        assert_eq!(a.predict(x.view()), b.predict(x.view()));
        assert_eq!(a.oob_mse, b.oob_mse);
    }

    #[test]
    fn rejects_bad_grids() {
        let x = ndarray::array![[1.0], [2.0]];
        let y = ndarray::array![1.0, 2.0];
        let spec = RegressorSpec::Forest { n_trees: 5, mtry_grid: vec![2], nodesize_grid: vec![5] };
        assert!(fit_forest(x.view(), y.view(), &spec, 1).is_err());
        let spec = RegressorSpec::Forest { n_trees: 0, mtry_grid: vec![], nodesize_grid: vec![] };
        assert!(fit_forest(x.view(), y.view(), &spec, 1).is_err());
    }

    #[test]
    fn default_grid_shape() {
        assert_eq!(default_mtry_grid(100), vec![33, 10, 66]);
        assert_eq!(default_mtry_grid(1), vec![1]);
    }
}
