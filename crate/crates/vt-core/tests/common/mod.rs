//! Oracle checks shared by the equivalence tests and the acceptance gate.
//! Each check recomputes the quantity of interest from first principles and
//! returns a gap (or pass count) for the caller to assert on.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use vt_core::datamodel::{ColumnKind, ColumnMeta};
use vt_core::learners::{fit_lasso, fit_superlearner, LambdaRule, RegressorSpec};
use vt_core::seeds;
use vt_core::subgroup::{
    fit_conditional_tree, fit_regression_tree, StepTwoKind, StepTwoSpec, Tuning,
};
use vt_core::vt::null_penalty;

pub fn continuous_columns(p: usize) -> Vec<ColumnMeta> {
    (0..p)
        .map(|j| ColumnMeta { name: format!("x{}", j + 1), kind: ColumnKind::Continuous, index: j })
        .collect()
}

fn soft(rho: f64, lambda: f64) -> f64 {
    rho.signum() * (rho.abs() - lambda).max(0.0)
}

/// Max |coefficient - closed form| over the whole lasso path on an
/// orthonormal design, where the solution is exact soft thresholding.
pub fn lasso_soft_threshold_gap() -> f64 {
    // Sylvester Hadamard order 16: entry (i, j) = (-1)^popcount(i & j).
    // Columns 1..=8 are balanced (mean 0), have unit variance, and are
    // mutually orthogonal, so standardization leaves them untouched and the
    // coordinate-descent solution decouples per column.
    let n = 16usize;
    let p = 8usize;
    let x =
        Array2::from_shape_fn(
            (n, p),
            |(i, j)| {
                if (i & (j + 1)).count_ones() % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            },
        );
    let mut rng = seeds::rng(0x0AC1E, 0);
    let y = Array1::from_shape_fn(n, |i| {
        2.0 * x[[i, 0]] - 1.25 * x[[i, 2]] + 0.4 * x[[i, 5]] + rng.random_range(-0.5..0.5)
    });
    let spec = RegressorSpec::Lasso { folds: 4, rule: LambdaRule::Lambda1SE };
    let fit = fit_lasso(x.view(), y.view(), &continuous_columns(p), &spec, 7).unwrap();

    let ybar = y.sum() / n as f64;
    let rho: Vec<f64> = (0..p)
        .map(|j| {
            x.column(j).iter().zip(y.iter()).map(|(a, b)| a * (b - ybar)).sum::<f64>() / n as f64
        })
        .collect();
    let mut gap = 0.0f64;
    for (li, beta) in fit.path_coefficients.iter().enumerate() {
        let lambda = fit.lambda_path[li];
        for j in 0..p {
            gap = gap.max((beta[j] - soft(rho[j], lambda)).abs());
        }
        gap = gap.max((fit.path_intercepts[li] - ybar).abs());
    }
    gap
}

fn sse(vals: &[f64]) -> f64 {
    let n = vals.len();
    if n == 0 {
        return 0.0;
    }
    let mean = vals.iter().sum::<f64>() / n as f64;
    vals.iter().map(|v| (v - mean) * (v - mean)).sum()
}

/// Brute-force best relative root gain: every variable, every cut between
/// consecutive sorted values with `min_leaf` rows on both sides.
fn exhaustive_root_gain(x: ArrayView2<f64>, z: ArrayView1<f64>, min_leaf: usize) -> f64 {
    let n = x.nrows();
    let zs: Vec<f64> = z.to_vec();
    let sse_root = sse(&zs);
    if sse_root <= 0.0 {
        return 0.0;
    }
    let mut best = 0.0f64;
    for j in 0..x.ncols() {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| x[[a, j]].total_cmp(&x[[b, j]]));
        for cut in min_leaf..=(n - min_leaf) {
            // Skip cuts that do not separate distinct values.
            if x[[order[cut - 1], j]] == x[[order[cut], j]] {
                continue;
            }
            let left: Vec<f64> = order[..cut].iter().map(|&i| zs[i]).collect();
            let right: Vec<f64> = order[cut..].iter().map(|&i| zs[i]).collect();
            let gain = sse_root - sse(&left) - sse(&right);
            best = best.max(gain / sse_root);
        }
    }
    best
}

/// Max |library - brute force| relative root gain over random instances.
pub fn cart_exhaustive_max_gap(instances: usize) -> f64 {
    let mut worst = 0.0f64;
    for inst in 0..instances {
        let mut rng = seeds::rng(0xCA21, inst as u64);
        let n = rng.random_range(40..90);
        let p = rng.random_range(3..7);
        let min_leaf = if inst % 2 == 0 { 5 } else { 10 };
        let x = Array2::from_shape_fn((n, p), |_| rng.random_range(-2.0..2.0f64));
        let signal = rng.random_range(0.0..2.0);
        let z = Array1::from_shape_fn(n, |i| {
            signal * f64::from(x[[i, 0]] > 0.3) + rng.random_range(-1.0..1.0)
        });
        let lib = vt_core::subgroup::best_root_gain(x.view(), z.view(), min_leaf);
        let brute = exhaustive_root_gain(x.view(), z.view(), min_leaf);
        worst = worst.max((lib - brute).abs());
    }
    worst
}

/// CV risk of the fitted superlearner weights minus the best risk found by a
/// dense grid search over the simplex. Negative or tiny positive values mean
/// the exact solver is at least as good as the grid.
pub fn superlearner_grid_gap() -> f64 {
    let n = 60usize;
    let p = 5usize;
    let mut rng = seeds::rng(0x51, 0);
    let x = Array2::from_shape_fn((n, p), |_| rng.random_range(-2.0..2.0f64));
    let y = Array1::from_shape_fn(n, |i| {
        1.5 * x[[i, 0]] + (x[[i, 1]] * 2.0).sin() - 0.5 * x[[i, 3]] + rng.random_range(-0.3..0.3)
    });
    let spec = RegressorSpec::SuperLearner {
        candidates: vec![
            RegressorSpec::Lasso { folds: 3, rule: LambdaRule::Lambda1SE },
            RegressorSpec::Mars { max_terms: 7, degree: 1 },
            RegressorSpec::Forest { n_trees: 25, mtry_grid: vec![2], nodesize_grid: vec![5] },
        ],
        folds: 5,
    };
    let fit = fit_superlearner(x.view(), y.view(), &continuous_columns(p), &spec, 11).unwrap();

    let risk = |w: &[f64]| -> f64 {
        let mut total = 0.0;
        for i in 0..n {
            let pred: f64 = (0..3).map(|c| w[c] * fit.level_one[[i, c]]).sum();
            total += (pred - y[i]) * (pred - y[i]);
        }
        total / n as f64
    };
    let fitted_risk = risk(fit.weights.as_slice().unwrap());
    let mut grid_best = f64::INFINITY;
    let steps = 20usize;
    for a in 0..=steps {
        for b in 0..=(steps - a) {
            let w = [
                a as f64 / steps as f64,
                b as f64 / steps as f64,
                (steps - a - b) as f64 / steps as f64,
            ];
            grid_best = grid_best.min(risk(&w));
        }
    }
    fitted_risk - grid_best
}

/// For random instances with a planted split, check that a fixed penalty just
/// above the null penalty suppresses all splits while one just below admits
/// at least one. Returns the number of instances where both sides hold.
pub fn null_penalty_boundary_pass_count(instances: usize) -> usize {
    let mut passed = 0usize;
    for inst in 0..instances {
        let mut rng = seeds::rng(0xB0, inst as u64);
        let n = 120usize;
        let p = 4usize;
        let x = Array2::from_shape_fn((n, p), |_| rng.random_range(-2.0..2.0f64));
        let z = Array1::from_shape_fn(n, |i| {
            2.0 * f64::from(x[[i, 1]] > 0.0) + rng.random_range(-0.8..0.8)
        });
        let kind =
            if inst % 2 == 0 { StepTwoKind::RegressionTree } else { StepTwoKind::ConditionalTree };
        let g = null_penalty(x.view(), &continuous_columns(p), z.view(), kind, 20).unwrap();
        if g <= 0.0 {
            continue;
        }
        let fit_at = |value: f64| {
            let spec = StepTwoSpec {
                kind,
                tuning: Tuning::FixedPenalty { value },
                min_leaf: 20,
                alpha_split: 0.05,
            };
            let tree = match kind {
                StepTwoKind::RegressionTree => {
                    fit_regression_tree(x.view(), z.view(), &spec, 3).unwrap()
                }
                _ => fit_conditional_tree(x.view(), z.view(), &spec, 3).unwrap(),
            };
            tree.split_variables().len()
        };
        let eps = 1e-6;
        let above = fit_at(g * (1.0 + eps));
        let below = fit_at(g * (1.0 - eps));
        if above == 0 && below >= 1 {
            passed += 1;
        }
    }
    passed
}
