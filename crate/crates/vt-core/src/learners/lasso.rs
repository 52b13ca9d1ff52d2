//! L1-penalized least squares by covariance-updating coordinate descent over a
//! log-spaced lambda path, with K-fold cross-validation to pick the penalty.
//!
//! Continuous covariates are standardized to unit population SD; binary 0/1
//! covariates are penalized on their original scale. Internally every working
//! column is mean-centered so the intercept drops out of the solver; reported
//! coefficients and the intercept are mapped back to the original scale.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;

use crate::datamodel::{standardize_apply, standardize_fit, ColumnMeta, StandardizationParams};
use crate::error::{Result, VtError};
use crate::learners::{LambdaRule, RegressorSpec};
use crate::seeds;

pub const PATH_LEN: usize = 100;
const KKT_SLACK: f64 = 1e-10;
const TOL: f64 = 1e-9;
const CV_SHUFFLE_TAG: u64 = 0x1a550;

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub intercept: f64,
    /// Original-scale coefficients at the chosen lambda.
    pub coefficients: Array1<f64>,
    pub lambda_path: Array1<f64>,
    pub lambda_chosen: f64,
    pub chosen_index: usize,
    pub cv_mean: Array1<f64>,
    pub cv_se: Array1<f64>,
    /// Original-scale coefficients at every path lambda.
    pub path_coefficients: Vec<Array1<f64>>,
    pub path_intercepts: Array1<f64>,
    pub params: StandardizationParams,
}

impl LassoFit {
    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        x.dot(&self.coefficients) + self.intercept
    }

    /// First path index at which column j becomes active, if ever.
    pub fn entry_index(&self, j: usize) -> Option<usize> {
        self.path_coefficients.iter().position(|b| b[j] != 0.0)
    }
}

pub fn fit_lasso(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    columns: &[ColumnMeta],
    spec: &RegressorSpec,
    seed: u64,
) -> Result<LassoFit> {
    let RegressorSpec::Lasso { folds, rule } = spec else {
        return Err(VtError::InvalidConfig("fit_lasso requires a Lasso spec".into()));
    };
    let n = x.nrows();
    let p = x.ncols();
    if p == 0 {
        return Err(VtError::InvalidInput("lasso needs at least one covariate".into()));
    }
    if *folds < 2 {
        return Err(VtError::InvalidConfig("lasso folds must be at least 2".into()));
    }
    if n < *folds {
        return Err(VtError::InvalidInput(format!("n = {n} is below folds = {folds}")));
    }
    if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(VtError::InvalidInput("non-finite value in lasso inputs".into()));
    }

    let lambdas = lambda_path(x, y, columns, n, p);

    // K-fold CV on the master path. Fold membership is a deterministic
    // function of (seed, n) so fits are pure functions of their inputs.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeds::rng(seed, CV_SHUFFLE_TAG));
    let mut fold_mse = vec![vec![0.0; lambdas.len()]; *folds];
    let mut start = 0;
    for (f, fold_row) in fold_mse.iter_mut().enumerate() {
        let size = n / *folds + usize::from(f < n % *folds);
        let test_rows = &order[start..start + size];
        start += size;
        let train_rows: Vec<usize> =
            order[..start - size].iter().chain(&order[start..]).copied().collect();
        if train_rows.is_empty() || test_rows.is_empty() {
            return Err(VtError::InvalidInput("empty CV fold".into()));
        }
        let xtr = x.select(ndarray::Axis(0), &train_rows);
        let ytr = Array1::from_iter(train_rows.iter().map(|&i| y[i]));
        let sol = path_original_scale(xtr.view(), ytr.view(), columns, &lambdas);
        for (li, (beta, b0)) in sol.betas.iter().zip(sol.intercepts.iter()).enumerate() {
            let mut err = 0.0;
            for &r in test_rows {
                let pred = b0 + x.row(r).dot(beta);
                let d = pred - y[r];
                err += d * d;
            }
            fold_row[li] = err / size as f64;
        }
    }
    let mut cv_mean = Array1::zeros(lambdas.len());
    let mut cv_se = Array1::zeros(lambdas.len());
    for li in 0..lambdas.len() {
        let vals: Vec<f64> = fold_mse.iter().map(|f| f[li]).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vals.len() - 1) as f64;
        cv_mean[li] = m;
        cv_se[li] = (var / vals.len() as f64).sqrt();
    }

    let min_index = argmin_from_top(&cv_mean);
    let chosen_index = match rule {
        LambdaRule::LambdaMin => min_index,
        LambdaRule::Lambda1SE => {
            let cutoff = cv_mean[min_index] + cv_se[min_index];
            (0..=min_index).find(|&i| cv_mean[i] <= cutoff).unwrap_or(min_index)
        }
    };

    let sol = path_original_scale(x, y, columns, &lambdas);
    Ok(LassoFit {
        intercept: sol.intercepts[chosen_index],
        coefficients: sol.betas[chosen_index].clone(),
        lambda_path: Array1::from_vec(lambdas.clone()),
        lambda_chosen: lambdas[chosen_index],
        chosen_index,
        cv_mean,
        cv_se,
        path_coefficients: sol.betas,
        path_intercepts: sol.intercepts,
        params: sol.params,
    })
}

/// First strict minimum scanning from the lambda_max end; ties keep the
/// larger lambda.
fn argmin_from_top(cv: &Array1<f64>) -> usize {
    let mut best = 0;
    for i in 1..cv.len() {
        if cv[i] < cv[best] {
            best = i;
        }
    }
    best
}

fn lambda_path(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    columns: &[ColumnMeta],
    n: usize,
    p: usize,
) -> Vec<f64> {
    let params = standardize_fit(x, columns);
    let xs = standardize_apply(&params, x);
    let ybar = y.sum() / n as f64;
    let mut lambda_max = 0.0f64;
    for j in 0..p {
        let mut dot = 0.0;
        for i in 0..n {
            dot += xs[[i, j]] * (y[i] - ybar);
        }
        lambda_max = lambda_max.max((dot / n as f64).abs());
    }
    if lambda_max == 0.0 {
        lambda_max = 1.0; // constant outcome; any positive path gives all-zero fits
    }
    let eps: f64 = if n > p { 1e-3 } else { 1e-2 };
    (0..PATH_LEN).map(|i| lambda_max * eps.powf(i as f64 / (PATH_LEN - 1) as f64)).collect()
}

struct PathSolution {
    betas: Vec<Array1<f64>>,
    intercepts: Array1<f64>,
    params: StandardizationParams,
}

/// Standardizes, solves the whole path, and maps every solution back to the
/// original scale.
fn path_original_scale(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    columns: &[ColumnMeta],
    lambdas: &[f64],
) -> PathSolution {
    let n = x.nrows();
    let p = x.ncols();
    let params = standardize_fit(x, columns);
    let mut xs = standardize_apply(&params, x);
    // Center every working column (binary ones have nonzero means) so the
    // solver needs no intercept; raw means recover it afterwards.
    for j in 0..p {
        let m = xs.column(j).sum() / n as f64;
        xs.column_mut(j).mapv_inplace(|v| v - m);
    }
    let ybar = y.sum() / n as f64;
    let yc = y.mapv(|v| v - ybar);
    let raw_means: Vec<f64> = (0..p).map(|j| x.column(j).sum() / n as f64).collect();

    let betas_std = solve_path(&xs, &yc, lambdas);
    let mut betas = Vec::with_capacity(lambdas.len());
    let mut intercepts = Array1::zeros(lambdas.len());
    for (li, bs) in betas_std.iter().enumerate() {
        let mut b = Array1::zeros(p);
        let mut b0 = ybar;
        for j in 0..p {
            let orig = bs[j] / params.scales[j];
            b[j] = orig;
            b0 -= orig * raw_means[j];
        }
        betas.push(b);
        intercepts[li] = b0;
    }
    PathSolution { betas, intercepts, params }
}

/// Coordinate descent with covariance updating: gradients g_j = <x_j, r>/n are
/// maintained for every coordinate, using lazily computed Gram columns, so the
/// KKT scan over inactive coordinates is free.
fn solve_path(xs: &Array2<f64>, yc: &Array1<f64>, lambdas: &[f64]) -> Vec<Array1<f64>> {
    let n = xs.nrows();
    let p = xs.ncols();
    let nf = n as f64;
    let xsq: Vec<f64> = (0..p).map(|j| xs.column(j).dot(&xs.column(j)) / nf).collect();
    let mut g: Vec<f64> = (0..p).map(|j| xs.column(j).dot(yc) / nf).collect();
    let mut gram: Vec<Option<Vec<f64>>> = vec![None; p];
    let mut beta = vec![0.0f64; p];
    let mut active: Vec<usize> = Vec::new();
    let mut in_active = vec![false; p];
    let mut out = Vec::with_capacity(lambdas.len());

    for &lambda in lambdas {
        loop {
            loop {
                let mut max_delta = 0.0f64;
                for &j in &active {
                    if xsq[j] <= 0.0 {
                        continue;
                    }
                    let z = g[j] + beta[j] * xsq[j];
                    let new_b = soft_threshold(z, lambda) / xsq[j];
                    let delta = new_b - beta[j];
                    if delta != 0.0 {
                        beta[j] = new_b;
                        let col = gram_column(&mut gram, xs, j, nf);
                        for (gk, ck) in g.iter_mut().zip(col.iter()) {
                            *gk -= delta * ck;
                        }
                        max_delta = max_delta.max(delta.abs());
                    }
                }
                if max_delta < TOL {
                    break;
                }
            }
            let mut added = false;
            for j in 0..p {
                if !in_active[j] && xsq[j] > 0.0 && g[j].abs() > lambda + KKT_SLACK {
                    in_active[j] = true;
                    let pos = active.partition_point(|&a| a < j);
                    active.insert(pos, j);
                    added = true;
                }
            }
            if !added {
                break;
            }
        }
        out.push(Array1::from_vec(beta.clone()));
    }
    out
}

fn gram_column<'a>(
    gram: &'a mut [Option<Vec<f64>>],
    xs: &Array2<f64>,
    j: usize,
    nf: f64,
) -> &'a [f64] {
    if gram[j].is_none() {
        let xj = xs.column(j);
        let col: Vec<f64> = (0..xs.ncols()).map(|k| xs.column(k).dot(&xj) / nf).collect();
        gram[j] = Some(col);
    }
    gram[j].as_deref().unwrap()
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}
