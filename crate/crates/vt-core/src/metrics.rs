//! Evaluation metrics: optimal-arm classification accuracy, individual
//! treatment effect MSE, and pooled variable-selection precision. All
//! replicate metrics are computed on the held-out test set.

use std::collections::BTreeSet;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VtError};
use crate::simgen::SimulatedData;
use crate::vt::{predict_effect, predict_optimal_arm, VtFit};

/// What counts as the true optimal arm: the realized potential outcomes
/// (noise included) or the conditional means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruthMode {
    #[default]
    Realized,
    Noiseless,
}

/// Per-replicate evaluation results.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateMetrics {
    pub accuracy: f64,
    pub ite_mse: f64,
    /// Covariates the step-2 model selected; empty for step-2 None.
    pub selected: BTreeSet<usize>,
    pub n_eval: usize,
}

/// Replicate metrics averaged over a benchmark cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateMetrics {
    pub mean_accuracy: f64,
    pub mc_se_accuracy: f64,
    pub mean_mse: f64,
    pub mc_se_mse: f64,
    /// Pooled across replicates; None when no variables were ever selected
    /// or the cell does not report selection.
    pub pooled_precision: Option<f64>,
    pub replicates: usize,
}

/// Fraction of positions where the two arm assignments agree.
pub fn classification_accuracy(pred: ArrayView1<u8>, truth: ArrayView1<u8>) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(VtError::InvalidInput(format!(
            "arm vectors of lengths {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(VtError::InvalidInput("empty arm vectors".into()));
    }
    let agree = pred.iter().zip(truth.iter()).filter(|(a, b)| a == b).count();
    Ok(agree as f64 / pred.len() as f64)
}

/// Mean squared error of the estimated individual effects.
pub fn ite_mse(z_hat: ArrayView1<f64>, z_true: ArrayView1<f64>) -> Result<f64> {
    if z_hat.len() != z_true.len() {
        return Err(VtError::InvalidInput(format!(
            "effect vectors of lengths {} and {}",
            z_hat.len(),
            z_true.len()
        )));
    }
    if z_hat.is_empty() {
        return Err(VtError::InvalidInput("empty effect vectors".into()));
    }
    let n = z_hat.len() as f64;
    Ok(z_hat.iter().zip(z_true.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

/// Pooled precision: total true selections over total selections, counted
/// across replicates. None when nothing was ever selected.
pub fn pooled_selection_precision(
    per_replicate: &[BTreeSet<usize>],
    truth: &BTreeSet<usize>,
) -> Option<f64> {
    let total: usize = per_replicate.iter().map(BTreeSet::len).sum();
    if total == 0 {
        return None;
    }
    let hits: usize = per_replicate.iter().map(|s| s.intersection(truth).count()).sum();
    Some(hits as f64 / total as f64)
}

/// The true optimal arm per test row under the given mode. Ties go to
/// control, matching the prediction rule.
pub fn truth_arms(sim: &SimulatedData, mode: GroundTruthMode) -> Array1<u8> {
    match mode {
        GroundTruthMode::Realized => sim.optimal_arm_realized.clone(),
        GroundTruthMode::Noiseless => sim.optimal_arm_noiseless.clone(),
    }
}

/// Evaluate one fitted pipeline on the replicate's test set.
pub fn evaluate_replicate(
    fit: &VtFit,
    sim: &SimulatedData,
    mode: GroundTruthMode,
) -> Result<ReplicateMetrics> {
    let pred_arm = predict_optimal_arm(fit, sim.test.x.view())?;
    let truth = truth_arms(sim, mode);
    let accuracy = classification_accuracy(pred_arm.view(), truth.view())?;
    let z_hat = predict_effect(fit, sim.test.x.view())?;
    let mse = ite_mse(z_hat.view(), sim.z_true.view())?;
    let selected = fit.step2_model.as_ref().map(|m| m.selected_variables()).unwrap_or_default();
    Ok(ReplicateMetrics { accuracy, ite_mse: mse, selected, n_eval: sim.test.n() })
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let r = values.len();
    if r == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / r as f64;
    if r == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1) as f64;
    (mean, (var / r as f64).sqrt())
}

/// Aggregate a cell's replicates. `truth` enables precision pooling; pass
/// None for cells that do not report selection (no TEH, or step-2 None).
pub fn aggregate(reps: &[ReplicateMetrics], truth: Option<&BTreeSet<usize>>) -> AggregateMetrics {
    let acc: Vec<f64> = reps.iter().map(|r| r.accuracy).collect();
    let mse: Vec<f64> = reps.iter().map(|r| r.ite_mse).collect();
    let (mean_accuracy, mc_se_accuracy) = mean_and_se(&acc);
    let (mean_mse, mc_se_mse) = mean_and_se(&mse);
    let pooled_precision = truth.and_then(|t| {
        let sets: Vec<BTreeSet<usize>> = reps.iter().map(|r| r.selected.clone()).collect();
        pooled_selection_precision(&sets, t)
    });
    AggregateMetrics {
        mean_accuracy,
        mc_se_accuracy,
        mean_mse,
        mc_se_mse,
        pooled_precision,
        replicates: reps.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn accuracy_extremes() {
        let v = array![1u8, 0, 1, 1, 0];
        let flipped = v.mapv(|a| 1 - a);
        assert_eq!(classification_accuracy(v.view(), v.view()).unwrap(), 1.0);
        assert_eq!(classification_accuracy(v.view(), flipped.view()).unwrap(), 0.0);
        let w = array![1u8, 1, 1, 1, 0];
        assert!((classification_accuracy(v.view(), w.view()).unwrap() - 0.8).abs() < 1e-12);
        assert!(classification_accuracy(v.view(), array![1u8, 0].view()).is_err());
    }

    #[test]
    fn mse_hand_cases() {
        let z = array![1.0, 2.0];
        let zero = array![0.0, 0.0];
        assert_eq!(ite_mse(z.view(), z.view()).unwrap(), 0.0);
        assert!((ite_mse(z.view(), zero.view()).unwrap() - 2.5).abs() < 1e-12);
        // Constant offset c gives exactly c^2.
        let base = array![0.3, -1.2, 4.0, 2.2];
        let shifted = base.mapv(|v| v + 1.5);
        assert!((ite_mse(shifted.view(), base.view()).unwrap() - 2.25).abs() < 1e-12);
    }

    #[test]
    fn pooled_precision_hand_count() {
        let truth = set(&[0, 16, 17, 18, 19, 102, 103, 104]);
        let sels = vec![set(&[0, 16]), set(&[0, 98])];
        assert!((pooled_selection_precision(&sels, &truth).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(pooled_selection_precision(&[set(&[]), set(&[])], &truth), None);
        let subsets = vec![set(&[0]), set(&[16, 17])];
        assert_eq!(pooled_selection_precision(&subsets, &truth), Some(1.0));
        // Replicate order cannot matter: the pool is a multiset.
        let swapped = vec![set(&[0, 98]), set(&[0, 16])];
        assert_eq!(
            pooled_selection_precision(&sels, &truth),
            pooled_selection_precision(&swapped, &truth)
        );
    }

    #[test]
    fn aggregate_mean_and_se() {
        let reps: Vec<ReplicateMetrics> = [0.5, 0.7, 0.9]
            .iter()
            .map(|&a| ReplicateMetrics {
                accuracy: a,
                ite_mse: 2.0 * a,
                selected: set(&[1]),
                n_eval: 10,
            })
            .collect();
        let agg = aggregate(&reps, Some(&set(&[1, 2])));
        assert!((agg.mean_accuracy - 0.7).abs() < 1e-12);
        // Sample SD of {0.5, 0.7, 0.9} is 0.2; MC SE = 0.2 / sqrt(3).
        assert!((agg.mc_se_accuracy - 0.2 / 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(agg.pooled_precision, Some(1.0));
        assert_eq!(agg.replicates, 3);
        let single = aggregate(&reps[..1], None);
        assert_eq!(single.mc_se_accuracy, 0.0);
        assert_eq!(single.pooled_precision, None);
    }

    #[test]
    fn oracle_fit_is_perfect_in_noiseless_mode() {
        let config = crate::simgen::ScenarioConfig {
            linearity: crate::simgen::Linearity::Nonlinear,
            structure: crate::simgen::Structure::Regular,
            teh: true,
            n_train: 100,
            n_test: 80,
            seed: 31,
        };
        let sim = crate::simgen::generate(&config).unwrap();
        let oracle = |arm: u8| {
            crate::learners::FittedRegressor::Oracle(crate::simgen::OracleMean {
                linearity: config.linearity,
                teh: config.teh,
                arm,
                mu: sim.mu.clone(),
            })
        };
        let spec = crate::vt::VtSpec {
            step1: crate::learners::RegressorSpec::default_lasso(),
            step2: crate::subgroup::StepTwoSpec::none(),
            seed: 5,
        };
        let fit = crate::vt::run_vt_with_step1(&sim.train, &spec, oracle(0), oracle(1)).unwrap();
        let m = evaluate_replicate(&fit, &sim, GroundTruthMode::Noiseless).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert!(m.ite_mse < 1e-20);
        assert!(m.selected.is_empty());
        assert_eq!(m.n_eval, 80);
        // Realized mode disagrees wherever noise flips the argmax, so the
        // oracle cannot be perfect there.
        let r = evaluate_replicate(&fit, &sim, GroundTruthMode::Realized).unwrap();
        assert!(r.accuracy < 1.0);
    }
}
