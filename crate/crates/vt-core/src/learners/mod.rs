//! Step-1 response-surface regressors behind a single fit/predict contract:
//! LASSO, random forest, MARS, and a cross-validated stacking combination.

mod cart;
mod forest;
mod lasso;
mod mars;
mod stack;

pub use cart::{CartNode, CartTree};
pub use forest::{default_mtry_grid, fit_forest, ForestFit, DEFAULT_NODESIZE_GRID};
pub use lasso::{fit_lasso, LassoFit, PATH_LEN};
pub use mars::{fit_mars, gcv_value, Hinge, MarsFit};
pub use stack::{fit_superlearner, StackFit};

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::datamodel::ColumnMeta;
use crate::error::{Result, VtError};
use crate::simgen::OracleMean;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LambdaRule {
    #[serde(rename = "lambda_min")]
    LambdaMin,
    #[serde(rename = "lambda_1se")]
    Lambda1SE,
}

/// Configuration of a step-1 regressor. Empty forest grids select the
/// p-dependent defaults at fit time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorSpec {
    Lasso {
        #[serde(default = "default_folds")]
        folds: usize,
        #[serde(default = "default_rule")]
        rule: LambdaRule,
    },
    Forest {
        #[serde(default = "default_n_trees")]
        n_trees: usize,
        #[serde(default)]
        mtry_grid: Vec<usize>,
        #[serde(default)]
        nodesize_grid: Vec<usize>,
    },
    Mars {
        #[serde(default = "default_max_terms")]
        max_terms: usize,
        #[serde(default = "default_degree")]
        degree: usize,
    },
    SuperLearner {
        candidates: Vec<RegressorSpec>,
        #[serde(default = "default_folds")]
        folds: usize,
    },
}

fn default_folds() -> usize {
    10
}
fn default_rule() -> LambdaRule {
    LambdaRule::Lambda1SE
}
fn default_n_trees() -> usize {
    500
}
fn default_max_terms() -> usize {
    21
}
fn default_degree() -> usize {
    1
}

impl RegressorSpec {
    pub fn default_lasso() -> Self {
        RegressorSpec::Lasso { folds: default_folds(), rule: default_rule() }
    }

    pub fn default_forest() -> Self {
        RegressorSpec::Forest {
            n_trees: default_n_trees(),
            mtry_grid: vec![],
            nodesize_grid: vec![],
        }
    }

    pub fn default_mars() -> Self {
        RegressorSpec::Mars { max_terms: default_max_terms(), degree: default_degree() }
    }

    pub fn default_superlearner() -> Self {
        RegressorSpec::SuperLearner {
            candidates: vec![Self::default_lasso(), Self::default_forest(), Self::default_mars()],
            folds: default_folds(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RegressorSpec::Lasso { folds, .. } => {
                if *folds < 2 {
                    return Err(VtError::InvalidConfig("lasso folds must be at least 2".into()));
                }
            }
            RegressorSpec::Forest { n_trees, .. } => {
                if *n_trees < 1 {
                    return Err(VtError::InvalidConfig("n_trees must be at least 1".into()));
                }
            }
            RegressorSpec::Mars { max_terms, degree } => {
                if *max_terms < 1 || *degree < 1 {
                    return Err(VtError::InvalidConfig(
                        "max_terms and degree must be at least 1".into(),
                    ));
                }
            }
            RegressorSpec::SuperLearner { candidates, folds } => {
                if candidates.is_empty() {
                    return Err(VtError::InvalidConfig(
                        "superlearner candidate list is empty".into(),
                    ));
                }
                if *folds < 2 {
                    return Err(VtError::InvalidConfig(
                        "superlearner folds must be at least 2".into(),
                    ));
                }
                for c in candidates {
                    if matches!(c, RegressorSpec::SuperLearner { .. }) {
                        return Err(VtError::InvalidConfig(
                            "superlearner candidates cannot be nested".into(),
                        ));
                    }
                    c.validate()?;
                }
            }
        }
        Ok(())
    }
}

/// Any trained step-1 model. Prediction is deterministic given the fitted
/// object. The Oracle variant evaluates a known scenario mean function and
/// exists for harness validation. Variant sizes differ by design; two of
/// these exist per pipeline run, so boxing would only add indirection.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum FittedRegressor {
    Lasso(LassoFit),
    Forest(ForestFit),
    Mars(MarsFit),
    Stack(StackFit),
    Oracle(OracleMean),
}

impl FittedRegressor {
    /// Training column count; prediction inputs must match it.
    pub fn p(&self) -> usize {
        match self {
            FittedRegressor::Lasso(f) => f.coefficients.len(),
            FittedRegressor::Forest(f) => f.p,
            FittedRegressor::Mars(f) => f.p,
            FittedRegressor::Stack(f) => f.p,
            FittedRegressor::Oracle(f) => f.p(),
        }
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.p() {
            return Err(VtError::InvalidInput(format!(
                "predict got {} columns, model was trained on {}",
                x.ncols(),
                self.p()
            )));
        }
        let out = match self {
            FittedRegressor::Lasso(f) => f.predict(x),
            FittedRegressor::Forest(f) => f.predict(x),
            FittedRegressor::Mars(f) => f.predict(x),
            FittedRegressor::Stack(f) => f.predict(x)?,
            FittedRegressor::Oracle(f) => f.predict(x),
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(VtError::FitFailed("non-finite prediction".into()));
        }
        Ok(out)
    }
}

/// Fits any regressor spec. The seed drives every stochastic element
/// (bootstrap draws, CV fold shuffles); MARS ignores it.
pub fn fit_regressor(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    columns: &[ColumnMeta],
    spec: &RegressorSpec,
    seed: u64,
) -> Result<FittedRegressor> {
    spec.validate()?;
    match spec {
        RegressorSpec::Lasso { .. } => {
            Ok(FittedRegressor::Lasso(fit_lasso(x, y, columns, spec, seed)?))
        }
        RegressorSpec::Forest { .. } => Ok(FittedRegressor::Forest(fit_forest(x, y, spec, seed)?)),
        RegressorSpec::Mars { .. } => Ok(FittedRegressor::Mars(fit_mars(x, y, spec)?)),
        RegressorSpec::SuperLearner { .. } => {
            Ok(FittedRegressor::Stack(fit_superlearner(x, y, columns, spec, seed)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::ColumnKind;
    use ndarray::{array, Array2};

    fn cols(p: usize) -> Vec<ColumnMeta> {
        (0..p)
            .map(|j| ColumnMeta {
                name: format!("x{}", j + 1),
                kind: ColumnKind::Continuous,
                index: j,
            })
            .collect()
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = RegressorSpec::SuperLearner {
            candidates: vec![
                RegressorSpec::Lasso { folds: 10, rule: LambdaRule::Lambda1SE },
                RegressorSpec::Forest { n_trees: 500, mtry_grid: vec![], nodesize_grid: vec![] },
            ],
            folds: 10,
        };
        let json = serde_json::to_string(&spec).unwrap();
        let back: RegressorSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
        assert!(json.contains("\"kind\":\"super_learner\""));
        assert!(json.contains("\"rule\":\"lambda_1se\""));
    }

    #[test]
    fn spec_defaults_fill_in() {
        let spec: RegressorSpec = serde_json::from_str(r#"{"kind":"lasso"}"#).unwrap();
        assert_eq!(spec, RegressorSpec::default_lasso());
        let spec: RegressorSpec = serde_json::from_str(r#"{"kind":"forest"}"#).unwrap();
        assert_eq!(spec, RegressorSpec::default_forest());
    }

    #[test]
    fn predict_rejects_column_mismatch() {
        let x = Array2::from_shape_fn((30, 3), |(i, j)| (i * 3 + j) as f64 * 0.1);
        let y = x.column(0).to_owned();
        let fit = fit_regressor(
            x.view(),
            y.view(),
            &cols(3),
            &RegressorSpec::Lasso { folds: 5, rule: LambdaRule::LambdaMin },
            1,
        )
        .unwrap();
        let bad = array![[1.0, 2.0]];
        assert!(fit.predict(bad.view()).is_err());
    }

    #[test]
    fn validate_catches_bad_specs() {
        assert!(RegressorSpec::Lasso { folds: 1, rule: LambdaRule::LambdaMin }.validate().is_err());
        assert!(RegressorSpec::Mars { max_terms: 0, degree: 1 }.validate().is_err());
        assert!(RegressorSpec::SuperLearner { candidates: vec![], folds: 10 }.validate().is_err());
    }
}
