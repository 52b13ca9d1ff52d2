//! Cross-validated stacking: candidate models are scored on held-out folds,
//! combined with simplex-constrained least squares, then refit on all rows.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::datamodel::ColumnMeta;
use crate::error::{Result, VtError};
use crate::learners::{fit_regressor, FittedRegressor, RegressorSpec};
use crate::linalg::simplex_lstsq;
use crate::seeds;

const REFIT_TAG: u64 = 0;
const FOLD_TAG_BASE: u64 = 1;
const SHUFFLE_TAG: u64 = 0x57AC;

#[derive(Debug, Clone)]
pub struct StackFit {
    pub candidate_fits: Vec<FittedRegressor>,
    pub weights: Array1<f64>,
    pub cv_risk: Vec<f64>,
    /// Held-out fold predictions, one column per candidate; the weights
    /// minimize squared error of `level_one * weights` against y.
    pub level_one: Array2<f64>,
    pub p: usize,
}

impl StackFit {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        let mut out = Array1::zeros(x.nrows());
        for (fit, &w) in self.candidate_fits.iter().zip(self.weights.iter()) {
            if w == 0.0 {
                continue;
            }
            out += &(fit.predict(x)? * w);
        }
        Ok(out)
    }
}

pub fn fit_superlearner(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    columns: &[ColumnMeta],
    spec: &RegressorSpec,
    seed: u64,
) -> Result<StackFit> {
    let RegressorSpec::SuperLearner { candidates, folds } = spec else {
        return Err(VtError::InvalidConfig("fit_superlearner requires a SuperLearner spec".into()));
    };
    if candidates.is_empty() {
        return Err(VtError::InvalidConfig("superlearner needs at least one candidate".into()));
    }
    if candidates.iter().any(|c| matches!(c, RegressorSpec::SuperLearner { .. })) {
        return Err(VtError::InvalidConfig("superlearner candidates cannot be nested".into()));
    }
    if *folds < 2 {
        return Err(VtError::InvalidConfig("superlearner folds must be at least 2".into()));
    }
    let n = x.nrows();
    let k = candidates.len();
    if n < *folds {
        return Err(VtError::InvalidInput(format!("n = {n} is below folds = {folds}")));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeds::rng(seed, SHUFFLE_TAG));
    let mut z = Array2::zeros((n, k));
    let mut start = 0;
    for f in 0..*folds {
        let size = n / *folds + usize::from(f < n % *folds);
        let test_rows = &order[start..start + size];
        start += size;
        let train_rows: Vec<usize> =
            order[..start - size].iter().chain(&order[start..]).copied().collect();
        let xtr = x.select(Axis(0), &train_rows);
        let ytr = Array1::from_iter(train_rows.iter().map(|&i| y[i]));
        let xte = x.select(Axis(0), test_rows);
        // One derived seed per fold, shared by candidates: identical
        // candidate specs then produce identical fold predictions.
        let fold_seed = seeds::derive(seed, FOLD_TAG_BASE + f as u64);
        for (c, cand) in candidates.iter().enumerate() {
            let fit = fit_regressor(xtr.view(), ytr.view(), columns, cand, fold_seed)?;
            let pred = fit.predict(xte.view())?;
            for (row_pos, &r) in test_rows.iter().enumerate() {
                z[[r, c]] = pred[row_pos];
            }
        }
    }

    let cv_risk: Vec<f64> = (0..k)
        .map(|c| {
            let d = &z.column(c).to_owned() - &y.to_owned();
            d.dot(&d) / n as f64
        })
        .collect();
    let weights = simplex_lstsq(z.view(), y);

    let refit_seed = seeds::derive(seed, REFIT_TAG);
    let candidate_fits: Vec<FittedRegressor> = candidates
        .iter()
        .map(|c| fit_regressor(x, y, columns, c, refit_seed))
        .collect::<Result<_>>()?;
    Ok(StackFit { candidate_fits, weights, cv_risk, level_one: z, p: x.ncols() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::ColumnKind;
    use crate::learners::LambdaRule;
    use ndarray::Array2;
    use rand::Rng;

    fn cont_cols(p: usize) -> Vec<ColumnMeta> {
        (0..p)
            .map(|j| ColumnMeta {
                name: format!("x{}", j + 1),
                kind: ColumnKind::Continuous,
                index: j,
            })
            .collect()
    }

    fn lasso() -> RegressorSpec {
        RegressorSpec::Lasso { folds: 5, rule: LambdaRule::Lambda1SE }
    }

    fn small_forest() -> RegressorSpec {
        RegressorSpec::Forest { n_trees: 50, mtry_grid: vec![3], nodesize_grid: vec![5] }
    }

    fn sl(candidates: Vec<RegressorSpec>) -> RegressorSpec {
        RegressorSpec::SuperLearner { candidates, folds: 5 }
    }

    fn linear_problem(n: usize, p: usize) -> (Array2<f64>, Array1<f64>) {
        let mut rng = crate::seeds::rng(201, 0);
        let x = Array2::from_shape_fn((n, p), |_| rng.random_range(-1.0..1.0));
        let y = Array1::from_shape_fn(n, |i| 2.0 * x[[i, 0]] - x[[i, 1]] + 0.5 * x[[i, 2]]);
        (x, y)
    }

    #[test]
    fn single_candidate_gets_full_weight() {
        let (x, y) = linear_problem(60, 4);
        let fit =
            fit_superlearner(x.view(), y.view(), &cont_cols(4), &sl(vec![lasso()]), 5).unwrap();
        assert_eq!(fit.weights.len(), 1);
        assert_eq!(fit.weights[0], 1.0);
    }

    #[test]
    fn identical_candidates_have_equal_risk_and_same_predictions() {
        let (x, y) = linear_problem(60, 4);
        let fit =
            fit_superlearner(x.view(), y.view(), &cont_cols(4), &sl(vec![lasso(), lasso()]), 6)
                .unwrap();
        assert_eq!(fit.cv_risk[0], fit.cv_risk[1]);
        let w_sum: f64 = fit.weights.iter().sum();
        assert!((w_sum - 1.0).abs() < 1e-10);
        assert!(fit.weights.iter().all(|&w| w >= 0.0));
        let p1 = fit.candidate_fits[0].predict(x.view()).unwrap();
        let p2 = fit.candidate_fits[1].predict(x.view()).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn lasso_dominates_forest_on_noiseless_linear_signal() {
        let (x, y) = linear_problem(400, 10);
        let fit = fit_superlearner(
            x.view(),
            y.view(),
            &cont_cols(10),
            &sl(vec![lasso(), small_forest()]),
            7,
        )
        .unwrap();
        assert!(fit.weights[0] >= 0.9, "lasso weight {}", fit.weights[0]);
        assert!(fit.cv_risk[0] < fit.cv_risk[1]);
    }

    #[test]
    fn prediction_is_weighted_candidate_sum() {
        let (x, y) = linear_problem(120, 5);
        let fit = fit_superlearner(
            x.view(),
            y.view(),
            &cont_cols(5),
            &sl(vec![lasso(), small_forest()]),
            9,
        )
        .unwrap();
        let direct = fit.predict(x.view()).unwrap();
        let mut manual = Array1::zeros(x.nrows());
        for (f, &w) in fit.candidate_fits.iter().zip(fit.weights.iter()) {
            manual += &(f.predict(x.view()).unwrap() * w);
        }
        for (a, b) in direct.iter().zip(manual.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        let (x, y) = linear_problem(30, 3);
        let cols = cont_cols(3);
        assert!(fit_superlearner(x.view(), y.view(), &cols, &sl(vec![]), 1).is_err());
        let nested = sl(vec![sl(vec![lasso()])]);
        assert!(fit_superlearner(x.view(), y.view(), &cols, &nested, 1).is_err());
        assert!(fit_superlearner(
            x.view(),
            y.view(),
            &cols,
            &RegressorSpec::SuperLearner { candidates: vec![lasso()], folds: 1 },
            1
        )
        .is_err());
    }
}
