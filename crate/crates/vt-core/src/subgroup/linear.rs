//! Sparse linear step-2 model: a lasso path ranks candidate effect modifiers,
//! the top k are kept, and an unpenalized least-squares refit on the kept
//! columns produces the reported coefficients.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::datamodel::ColumnMeta;
use crate::error::{Result, VtError};
use crate::learners::{fit_lasso, LambdaRule, RegressorSpec};
use crate::linalg::lstsq;

/// Linear subgroup model on the estimated effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseLinearModel {
    /// Column indices kept by the ranking, in rank order.
    pub selected: Vec<usize>,
    pub intercept: f64,
    /// Refit coefficients aligned with `selected`.
    pub coefficients: Vec<f64>,
    /// True when the lasso path admitted fewer than k variables.
    pub shortfall: bool,
}

impl SparseLinearModel {
    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let mut v = self.intercept;
        for (&j, &c) in self.selected.iter().zip(self.coefficients.iter()) {
            v += c * row[j];
        }
        v
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if let Some(&max) = self.selected.iter().max() {
            if max >= x.ncols() {
                return Err(VtError::InvalidInput(format!(
                    "model uses column {max} but the matrix has {}",
                    x.ncols()
                )));
            }
        }
        Ok(Array1::from_iter(x.rows().into_iter().map(|r| self.predict_row(r))))
    }
}

/// Rank covariates by lasso entry order (earlier entry first, ties broken by
/// larger |coefficient| at the chosen lambda, then lower index), keep the top
/// k, and refit by ordinary least squares.
pub fn fit_sparse_linear(
    x: ArrayView2<f64>,
    z: ArrayView1<f64>,
    columns: &[ColumnMeta],
    k: usize,
    folds: usize,
    seed: u64,
) -> Result<SparseLinearModel> {
    let n = x.nrows();
    let p = x.ncols();
    if k > p {
        return Err(VtError::InvalidInput(format!("cannot keep {k} of {p} covariates")));
    }
    if n <= k + 1 {
        return Err(VtError::InvalidInput(format!(
            "need more than {} rows to refit {k} covariates, got {n}",
            k + 1
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(VtError::InvalidInput("non-finite effect estimate".into()));
    }
    let zbar = z.sum() / n as f64;
    if k == 0 {
        return Ok(SparseLinearModel {
            selected: vec![],
            intercept: zbar,
            coefficients: vec![],
            shortfall: false,
        });
    }

    let spec = RegressorSpec::Lasso { folds, rule: LambdaRule::Lambda1SE };
    let fit = fit_lasso(x, z, columns, &spec, seed)?;
    let mut ranked: Vec<(usize, usize, f64)> = (0..p)
        .filter_map(|j| fit.entry_index(j).map(|e| (j, e, fit.coefficients[j].abs())))
        .collect();
    ranked.sort_by(|a, b| {
        a.1.cmp(&b.1).then_with(|| b.2.total_cmp(&a.2)).then_with(|| a.0.cmp(&b.0))
    });
    let shortfall = ranked.len() < k;
    let selected: Vec<usize> = ranked.iter().take(k).map(|r| r.0).collect();

    if selected.is_empty() {
        return Ok(SparseLinearModel {
            selected,
            intercept: zbar,
            coefficients: vec![],
            shortfall,
        });
    }
    let mut design = Array2::ones((n, selected.len() + 1));
    for (c, &j) in selected.iter().enumerate() {
        design.column_mut(c + 1).assign(&x.column(j));
    }
    let beta = lstsq(design.view(), z);
    Ok(SparseLinearModel {
        selected,
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        shortfall,
    })
}
