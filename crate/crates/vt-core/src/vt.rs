//! The Virtual Twins engine: per-arm step-1 outcome models, counterfactual
//! effect estimates, the interpretable step-2 model on those estimates, and
//! the permutation calibration that picks a step-2 penalty controlling the
//! no-effect selection rate.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datamodel::{split_by_arm, standardize_apply, standardize_fit, ColumnMeta, Dataset};
use crate::error::{Result, VtError};
use crate::learners::{fit_regressor, FittedRegressor, RegressorSpec};
use crate::seeds;
use crate::subgroup::{
    best_root_gain, fit_conditional_tree, fit_regression_tree, fit_sparse_linear,
    root_max_statistic, StepTwoKind, StepTwoSpec, SubgroupModel,
};

const TAG_ARM0: u64 = 1;
const TAG_ARM1: u64 = 2;
const TAG_STEP2: u64 = 3;
const TAG_CALIBRATE: u64 = 4;

/// Folds used when the sparse linear step-2 model ranks covariates.
pub const LINEAR_FOLDS: usize = 10;

/// Counterfactual predictions for every subject regardless of observed arm.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualPredictions {
    pub y0_hat: Array1<f64>,
    pub y1_hat: Array1<f64>,
    /// Estimated individual effect, y1_hat - y0_hat elementwise.
    pub z_hat: Array1<f64>,
}

/// A full two-step configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VtSpec {
    pub step1: RegressorSpec,
    pub step2: StepTwoSpec,
    #[serde(default)]
    pub seed: u64,
}

/// Fitted Virtual Twins pipeline.
#[derive(Debug, Clone)]
pub struct VtFit {
    pub f0: FittedRegressor,
    pub f1: FittedRegressor,
    pub cf: CounterfactualPredictions,
    /// Present exactly when the spec's step-2 kind is not None.
    pub step2_model: Option<SubgroupModel>,
}

/// Output of the permutation calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    /// Empirical (1 - alpha) quantile of the null penalties (higher order
    /// statistic).
    pub threshold: f64,
    /// Null penalties in repetition order.
    pub samples: Vec<f64>,
    pub m: usize,
    pub alpha: f64,
}

/// Fit the step-1 outcome model separately on each arm. The two fits use
/// independent seeds derived from `seed`.
pub fn fit_step1(
    d: &Dataset,
    spec: &RegressorSpec,
    seed: u64,
) -> Result<(FittedRegressor, FittedRegressor)> {
    let (control, treated) = split_by_arm(d)?;
    let f0 = fit_regressor(
        control.x.view(),
        control.y.view(),
        &control.columns,
        spec,
        seeds::derive(seed, TAG_ARM0),
    )?;
    let f1 = fit_regressor(
        treated.x.view(),
        treated.y.view(),
        &treated.columns,
        spec,
        seeds::derive(seed, TAG_ARM1),
    )?;
    Ok((f0, f1))
}

/// Predict both counterfactual outcomes for every row of `x`.
pub fn compute_twins(
    f0: &FittedRegressor,
    f1: &FittedRegressor,
    x: ArrayView2<f64>,
) -> Result<CounterfactualPredictions> {
    let y0_hat = f0.predict(x)?;
    let y1_hat = f1.predict(x)?;
    let z_hat = &y1_hat - &y0_hat;
    Ok(CounterfactualPredictions { y0_hat, y1_hat, z_hat })
}

/// Run the full two-step pipeline on `d`.
pub fn run_vt(d: &Dataset, spec: &VtSpec) -> Result<VtFit> {
    spec.step1.validate()?;
    spec.step2.validate()?;
    let (f0, f1) = fit_step1(d, &spec.step1, spec.seed)?;
    run_vt_with_step1(d, spec, f0, f1)
}

/// Run the pipeline with pre-fitted step-1 models (the oracle-injection
/// path); only step 2 and the counterfactuals are computed here.
pub fn run_vt_with_step1(
    d: &Dataset,
    spec: &VtSpec,
    f0: FittedRegressor,
    f1: FittedRegressor,
) -> Result<VtFit> {
    spec.step2.validate()?;
    let cf = compute_twins(&f0, &f1, d.x.view())?;
    let step2_seed = seeds::derive(spec.seed, TAG_STEP2);
    let step2_model = match spec.step2.kind {
        StepTwoKind::None => None,
        StepTwoKind::RegressionTree => Some(SubgroupModel::Tree(fit_regression_tree(
            d.x.view(),
            cf.z_hat.view(),
            &spec.step2,
            step2_seed,
        )?)),
        StepTwoKind::ConditionalTree => Some(SubgroupModel::Tree(fit_conditional_tree(
            d.x.view(),
            cf.z_hat.view(),
            &spec.step2,
            step2_seed,
        )?)),
        StepTwoKind::Linear => {
            // The companion regression tree decides how many covariates the
            // linear model keeps.
            let mut companion = spec.step2.clone();
            companion.kind = StepTwoKind::RegressionTree;
            let tree = fit_regression_tree(d.x.view(), cf.z_hat.view(), &companion, step2_seed)?;
            let k = tree.split_variables().len();
            Some(SubgroupModel::Linear(fit_sparse_linear(
                d.x.view(),
                cf.z_hat.view(),
                &d.columns,
                k,
                LINEAR_FOLDS,
                seeds::derive(step2_seed, 1),
            )?))
        }
    };
    Ok(VtFit { f0, f1, cf, step2_model })
}

/// Estimated effect for every row of `x`: the step-2 model's prediction when
/// one was fit, otherwise the raw counterfactual difference.
pub fn predict_effect(fit: &VtFit, x: ArrayView2<f64>) -> Result<Array1<f64>> {
    match &fit.step2_model {
        Some(model) => model.predict_effect(x),
        None => Ok(compute_twins(&fit.f0, &fit.f1, x)?.z_hat),
    }
}

/// Recommended arm per row: 1 when the estimated effect is positive, 0
/// otherwise (ties go to control).
pub fn predict_optimal_arm(fit: &VtFit, x: ArrayView2<f64>) -> Result<Array1<u8>> {
    Ok(predict_effect(fit, x)?.mapv(|e| u8::from(e > 0.0)))
}

/// Smallest penalty at which the given step-2 kind selects no covariates on
/// (x, z): the lasso's entry lambda, the best relative root gain, or the
/// maximum root association statistic.
pub fn null_penalty(
    x: ArrayView2<f64>,
    columns: &[ColumnMeta],
    z: ArrayView1<f64>,
    kind: StepTwoKind,
    min_leaf: usize,
) -> Result<f64> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(VtError::InvalidInput("non-finite effect estimate".into()));
    }
    match kind {
        StepTwoKind::None => {
            Err(VtError::InvalidConfig("step-2 kind none has no penalty to calibrate".into()))
        }
        StepTwoKind::Linear => {
            let n = x.nrows();
            let params = standardize_fit(x, columns);
            let xs = standardize_apply(&params, x);
            let zbar = z.sum() / n as f64;
            let zc = z.mapv(|v| v - zbar);
            let mut lam = 0.0f64;
            for j in 0..xs.ncols() {
                lam = lam.max(xs.column(j).dot(&zc).abs() / n as f64);
            }
            Ok(lam)
        }
        StepTwoKind::RegressionTree => Ok(best_root_gain(x, z, min_leaf)),
        StepTwoKind::ConditionalTree => Ok(root_max_statistic(x, z)),
    }
}

/// Permutation calibration: M times, permute the treatment labels, refit
/// step 1, and record the null penalty of the resulting effect estimates;
/// the threshold is the (1 - alpha) empirical quantile of those penalties.
pub fn calibrate_step2_penalty(
    d: &Dataset,
    step1: &RegressorSpec,
    step2: &StepTwoSpec,
    m: usize,
    alpha: f64,
    seed: u64,
) -> Result<CalibrationResult> {
    if m < 1 {
        return Err(VtError::InvalidConfig("calibration needs M >= 1".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(VtError::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    step1.validate()?;
    step2.validate()?;
    if step2.kind == StepTwoKind::None {
        return Err(VtError::InvalidConfig("step-2 kind none has no penalty to calibrate".into()));
    }
    let cal_seed = seeds::derive(seed, TAG_CALIBRATE);
    let mut samples = Vec::with_capacity(m);
    for rep in 0..m {
        let rep_seed = seeds::derive(cal_seed, rep as u64);
        let mut rng = seeds::rng(rep_seed, 0);
        let mut t: Vec<u8> = d.t.to_vec();
        t.shuffle(&mut rng);
        let mut permuted = d.clone();
        permuted.t = Array1::from(t);
        let sample = fit_step1(&permuted, step1, seeds::derive(rep_seed, 1))
            .and_then(|(f0, f1)| compute_twins(&f0, &f1, permuted.x.view()))
            .and_then(|cf| {
                null_penalty(
                    permuted.x.view(),
                    &permuted.columns,
                    cf.z_hat.view(),
                    step2.kind,
                    step2.min_leaf,
                )
            })
            .map_err(|e| VtError::FitFailed(format!("calibration repetition {rep} failed: {e}")))?;
        samples.push(sample);
    }
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    // Higher/ceiling order statistic; the tiny slack keeps exact products
    // like 0.8 * 100 from rounding up across an integer boundary.
    let idx = (((1.0 - alpha) * m as f64) - 1e-9).ceil() as usize;
    let idx = idx.clamp(1, m);
    Ok(CalibrationResult { threshold: sorted[idx - 1], samples, m, alpha })
}
