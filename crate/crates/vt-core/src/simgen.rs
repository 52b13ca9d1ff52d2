//! Trial-data generators: 100 continuous plus 10 binary covariates, Bernoulli
//! treatment, linear and nonlinear potential-outcome surfaces with and
//! without treatment-effect heterogeneity, and a biased training sampler.
//!
//! Notation note: second Gaussian parameters are standard deviations. The
//! linear surfaces use noise SD 3, giving R-squared 0.63 (control) and 0.70
//! (treated); the nonlinear surfaces use noise SD 1, giving 0.76 in both
//! arms. A variance reading would give 0.84/0.87, contradicting those
//! targets.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datamodel::{ColumnKind, ColumnMeta, Dataset};
use crate::error::{Result, VtError};
use crate::linalg::cholesky;
use crate::seeds;

pub const P_CONTINUOUS: usize = 100;
pub const P_BINARY: usize = 10;
pub const P_TOTAL: usize = P_CONTINUOUS + P_BINARY;
pub const MU_SD: f64 = 3.0;
pub const LINEAR_NOISE_SD: f64 = 3.0;
pub const NONLINEAR_NOISE_SD: f64 = 1.0;
pub const BINARY_P: f64 = 0.7;
pub const EQUICORRELATION: f64 = 0.7;
pub const CORRELATED_BLOCK: usize = 4;
const MIN_N_TRAIN: usize = 40;

const TAG_MU: u64 = 1;
const TAG_X: u64 = 2;
const TAG_BINARY: u64 = 3;
const TAG_TREATMENT: u64 = 4;
const TAG_NOISE0: u64 = 5;
const TAG_NOISE1: u64 = 6;
const TAG_PARTITION: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linearity {
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    Regular,
    Correlated,
    SelectionBias,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub linearity: Linearity,
    pub structure: Structure,
    pub teh: bool,
    pub n_train: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_n_test() -> usize {
    2000
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train < MIN_N_TRAIN {
            return Err(VtError::InvalidConfig(format!(
                "n_train must be at least {MIN_N_TRAIN}, got {}",
                self.n_train
            )));
        }
        if self.n_test < 1 {
            return Err(VtError::InvalidConfig("n_test must be at least 1".into()));
        }
        Ok(())
    }

    /// Short label used in result tables, e.g. "linear/regular/teh".
    pub fn label(&self) -> String {
        let lin = match self.linearity {
            Linearity::Linear => "linear",
            Linearity::Nonlinear => "nonlinear",
        };
        let st = match self.structure {
            Structure::Regular => "regular",
            Structure::Correlated => "correlated",
            Structure::SelectionBias => "selection_bias",
        };
        format!("{lin}/{st}/{}", if self.teh { "teh" } else { "no_teh" })
    }
}

/// One generated replicate. The truth vectors (conditional means, realized
/// potential outcomes, true effect, optimal arms) are aligned with the test
/// rows, where all evaluation happens; the train dataset embeds the observed
/// outcome Y = y0*(1-T) + y1*T.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub train: Dataset,
    pub test: Dataset,
    pub y0_mean: Array1<f64>,
    pub y1_mean: Array1<f64>,
    pub y0: Array1<f64>,
    pub y1: Array1<f64>,
    pub z_true: Array1<f64>,
    pub optimal_arm_noiseless: Array1<u8>,
    pub optimal_arm_realized: Array1<u8>,
    pub predictive_set: Vec<usize>,
    pub mu: Array1<f64>,
}

/// The true conditional-mean function of one arm. Plugging it in as a fitted
/// step-1 model reproduces the generator's own float arithmetic, which makes
/// harness-validation comparisons exact.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMean {
    pub linearity: Linearity,
    pub teh: bool,
    pub arm: u8,
    pub mu: Array1<f64>,
}

impl OracleMean {
    pub fn p(&self) -> usize {
        P_TOTAL
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let (y0m, y1m) = match self.linearity {
            Linearity::Linear => linear_means(x, self.teh),
            Linearity::Nonlinear => nonlinear_means(x, &self.mu, self.teh),
        };
        if self.arm == 0 {
            y0m
        } else {
            y1m
        }
    }
}

pub fn scenario_columns() -> Vec<ColumnMeta> {
    let mut cols = Vec::with_capacity(P_TOTAL);
    for j in 0..P_CONTINUOUS {
        cols.push(ColumnMeta {
            name: format!("x{}", j + 1),
            kind: ColumnKind::Continuous,
            index: j,
        });
    }
    for j in 0..P_BINARY {
        cols.push(ColumnMeta {
            name: format!("c{}", P_CONTINUOUS + j + 1),
            kind: ColumnKind::Binary,
            index: P_CONTINUOUS + j,
        });
    }
    cols
}

/// Draws the covariate matrix: continuous columns are N(mu_j, 1) with mu_j ~
/// N(0, SD 3) redrawn per call, the first 4 equicorrelated at 0.7 under the
/// Correlated structure; binary columns are Bern(0.7).
pub fn draw_covariates(
    config: &ScenarioConfig,
    n: usize,
    seed: u64,
) -> (Array2<f64>, Vec<ColumnMeta>, Array1<f64>) {
    let mut rng_mu = seeds::rng(seed, TAG_MU);
    let mu =
        Array1::from_shape_fn(P_CONTINUOUS, |_| MU_SD * rng_mu.sample::<f64, _>(StandardNormal));

    let chol = if config.structure == Structure::Correlated {
        let k = CORRELATED_BLOCK;
        let mut sigma = Array2::from_elem((k, k), EQUICORRELATION);
        for i in 0..k {
            sigma[[i, i]] = 1.0;
        }
        Some(cholesky(&sigma).expect("equicorrelation matrix is positive definite"))
    } else {
        None
    };

    let mut x = Array2::zeros((n, P_TOTAL));
    let mut rng_x = seeds::rng(seed, TAG_X);
    let mut z = vec![0.0f64; P_CONTINUOUS];
    for i in 0..n {
        for zj in z.iter_mut() {
            *zj = rng_x.sample::<f64, _>(StandardNormal);
        }
        match &chol {
            None => {
                for j in 0..P_CONTINUOUS {
                    x[[i, j]] = mu[j] + z[j];
                }
            }
            Some(l) => {
                for j in 0..CORRELATED_BLOCK {
                    let mut v = 0.0;
                    for (k, zk) in z.iter().enumerate().take(j + 1) {
                        v += l[[j, k]] * zk;
                    }
                    x[[i, j]] = mu[j] + v;
                }
                for j in CORRELATED_BLOCK..P_CONTINUOUS {
                    x[[i, j]] = mu[j] + z[j];
                }
            }
        }
    }
    let mut rng_c = seeds::rng(seed, TAG_BINARY);
    for i in 0..n {
        for j in 0..P_BINARY {
            x[[i, P_CONTINUOUS + j]] = f64::from(rng_c.random::<f64>() < BINARY_P);
        }
    }
    (x, scenario_columns(), mu)
}

pub fn assign_treatment(n: usize, seed: u64) -> Array1<u8> {
    let mut rng = seeds::rng(seed, TAG_TREATMENT);
    Array1::from_shape_fn(n, |_| u8::from(rng.random_bool(0.5)))
}

/// Linear conditional means. Control: sum of x2..x16 plus c101, c102.
/// Treated under TEH: sum of x1..x20 plus c101..c105; without TEH the control
/// surface shifted by +2.
pub fn linear_means(x: ArrayView2<f64>, teh: bool) -> (Array1<f64>, Array1<f64>) {
    let n = x.nrows();
    let mut y0m = Array1::zeros(n);
    let mut y1m = Array1::zeros(n);
    for i in 0..n {
        let mut m0 = 0.0;
        for j in 1..16 {
            m0 += x[[i, j]];
        }
        m0 += x[[i, 100]] + x[[i, 101]];
        y0m[i] = m0;
        if teh {
            let mut m1 = 0.0;
            for j in 0..20 {
                m1 += x[[i, j]];
            }
            for j in 100..105 {
                m1 += x[[i, j]];
            }
            y1m[i] = m1;
        } else {
            y1m[i] = m0 + 2.0;
        }
    }
    (y0m, y1m)
}

/// Nonlinear conditional means: 4-cell step surfaces thresholded at the
/// generating means. TEH case splits on x1 then x2 (upper) or x5 (lower);
/// the no-TEH surface splits on x1 then x5/x6 and is shared up to a +2 shift.
pub fn nonlinear_means(
    x: ArrayView2<f64>,
    mu: &Array1<f64>,
    teh: bool,
) -> (Array1<f64>, Array1<f64>) {
    let n = x.nrows();
    let mut y0m = Array1::zeros(n);
    let mut y1m = Array1::zeros(n);
    for i in 0..n {
        if teh {
            let (k0, k1) = if x[[i, 0]] > mu[0] {
                if x[[i, 1]] > mu[1] {
                    (20.0, 22.0)
                } else {
                    (23.0, 20.0)
                }
            } else if x[[i, 4]] > mu[4] {
                (25.0, 25.0)
            } else {
                (22.0, 23.0)
            };
            y0m[i] = k0;
            y1m[i] = k1;
        } else {
            let k = if x[[i, 0]] > mu[0] {
                if x[[i, 4]] > mu[4] {
                    22.0
                } else {
                    20.0
                }
            } else if x[[i, 5]] > mu[5] {
                25.0
            } else {
                23.0
            };
            y0m[i] = k;
            y1m[i] = k + 2.0;
        }
    }
    (y0m, y1m)
}

/// Realized potential outcomes around given means.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomes {
    pub y0_mean: Array1<f64>,
    pub y1_mean: Array1<f64>,
    pub y0: Array1<f64>,
    pub y1: Array1<f64>,
    pub z_true: Array1<f64>,
}

pub fn attach_outcomes_linear(x: ArrayView2<f64>, teh: bool, seed: u64) -> PotentialOutcomes {
    let (y0_mean, y1_mean) = linear_means(x, teh);
    attach_noise(y0_mean, y1_mean, teh, LINEAR_NOISE_SD, seed)
}

pub fn attach_outcomes_nonlinear(
    x: ArrayView2<f64>,
    mu: &Array1<f64>,
    teh: bool,
    seed: u64,
) -> PotentialOutcomes {
    let (y0_mean, y1_mean) = nonlinear_means(x, mu, teh);
    attach_noise(y0_mean, y1_mean, teh, NONLINEAR_NOISE_SD, seed)
}

fn attach_noise(
    y0_mean: Array1<f64>,
    y1_mean: Array1<f64>,
    teh: bool,
    sd: f64,
    seed: u64,
) -> PotentialOutcomes {
    let n = y0_mean.len();
    let mut rng0 = seeds::rng(seed, TAG_NOISE0);
    let mut rng1 = seeds::rng(seed, TAG_NOISE1);
    let y0 = Array1::from_shape_fn(n, |i| y0_mean[i] + sd * rng0.sample::<f64, _>(StandardNormal));
    let y1 = Array1::from_shape_fn(n, |i| y1_mean[i] + sd * rng1.sample::<f64, _>(StandardNormal));
    // Without TEH the effect is the literal constant 2, not a float
    // difference that could round away from it.
    let z_true = if teh { &y1_mean - &y0_mean } else { Array1::from_elem(n, 2.0) };
    PotentialOutcomes { y0_mean, y1_mean, y0, y1, z_true }
}

/// Indices (0-based columns) of covariates that truly modify the effect.
pub fn true_predictive_set(linearity: Linearity, teh: bool) -> Vec<usize> {
    if !teh {
        return Vec::new();
    }
    match linearity {
        Linearity::Linear => vec![0, 16, 17, 18, 19, 102, 103, 104],
        Linearity::Nonlinear => vec![0, 1, 4],
    }
}

/// Biased training sampler: a score S splits the population at its lower
/// median into halves H_B (S <= median) and H_T; 25% of the training set is
/// drawn from H_B and 75% from H_T.
pub fn selection_bias_sample(
    x: &Array2<f64>,
    config: &ScenarioConfig,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Vec<usize>> {
    let n_pop = x.nrows();
    let s: Vec<f64> = (0..n_pop)
        .map(|i| match config.linearity {
            Linearity::Linear => x[[i, 14]] + x[[i, 15]] + x[[i, 16]] + x[[i, 17]],
            Linearity::Nonlinear => x[[i, 0]] + x[[i, 4]],
        })
        .collect();
    let mut sorted = s.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    if sorted[0] == sorted[n_pop - 1] {
        return Err(VtError::InvalidInput(
            "selection score is constant; the median split is undefined".into(),
        ));
    }
    let median = sorted[n_pop / 2 - 1]; // lower median: the floor(n/2)-th order statistic
    let mut h_b: Vec<usize> = Vec::new();
    let mut h_t: Vec<usize> = Vec::new();
    for (i, &v) in s.iter().enumerate() {
        if v <= median {
            h_b.push(i);
        } else {
            h_t.push(i);
        }
    }
    let quota_b = config.n_train / 4;
    let quota_t = config.n_train - quota_b;
    if quota_b > h_b.len() || quota_t > h_t.len() {
        return Err(VtError::InvalidInput(format!(
            "selection-bias quotas ({quota_b}, {quota_t}) exceed half sizes ({}, {})",
            h_b.len(),
            h_t.len()
        )));
    }
    h_b.shuffle(rng);
    h_t.shuffle(rng);
    let mut train: Vec<usize> = h_b[..quota_b].to_vec();
    train.extend_from_slice(&h_t[..quota_t]);
    Ok(train)
}

fn population_size(config: &ScenarioConfig) -> usize {
    match config.structure {
        // The biased sampler needs 75% of n_train from one half alone.
        Structure::SelectionBias => 2 * config.n_train + config.n_test,
        _ => config.n_train + config.n_test,
    }
}

fn partition_rows(
    config: &ScenarioConfig,
    x: &Array2<f64>,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_pop = x.nrows();
    let mut rng = seeds::rng(seed, TAG_PARTITION);
    match config.structure {
        Structure::Regular | Structure::Correlated => {
            let mut order: Vec<usize> = (0..n_pop).collect();
            order.shuffle(&mut rng);
            let train = order[..config.n_train].to_vec();
            let test = order[config.n_train..config.n_train + config.n_test].to_vec();
            Ok((train, test))
        }
        Structure::SelectionBias => {
            let train = selection_bias_sample(x, config, &mut rng)?;
            let mut taken = vec![false; n_pop];
            for &i in &train {
                taken[i] = true;
            }
            let mut rest: Vec<usize> = (0..n_pop).filter(|&i| !taken[i]).collect();
            rest.shuffle(&mut rng);
            let test = rest[..config.n_test].to_vec();
            Ok((train, test))
        }
    }
}

pub fn generate(config: &ScenarioConfig) -> Result<SimulatedData> {
    config.validate()?;
    let n_pop = population_size(config);
    let (x, columns, mu) = draw_covariates(config, n_pop, config.seed);
    let t = assign_treatment(n_pop, config.seed);
    let po = match config.linearity {
        Linearity::Linear => attach_outcomes_linear(x.view(), config.teh, config.seed),
        Linearity::Nonlinear => attach_outcomes_nonlinear(x.view(), &mu, config.teh, config.seed),
    };
    let y_obs = Array1::from_shape_fn(n_pop, |i| if t[i] == 0 { po.y0[i] } else { po.y1[i] });

    let (train_rows, test_rows) = partition_rows(config, &x, config.seed)?;
    let make = |rows: &[usize]| -> Result<Dataset> {
        Dataset::new(
            columns.clone(),
            x.select(Axis(0), rows),
            Array1::from_iter(rows.iter().map(|&i| t[i])),
            Array1::from_iter(rows.iter().map(|&i| y_obs[i])),
        )
    };
    let train = make(&train_rows)?;
    let test = make(&test_rows)?;

    let pick = |v: &Array1<f64>| Array1::from_iter(test_rows.iter().map(|&i| v[i]));
    let z_true = pick(&po.z_true);
    let optimal_arm_noiseless = z_true.mapv(|z| u8::from(z > 0.0));
    let optimal_arm_realized =
        Array1::from_iter(test_rows.iter().map(|&i| u8::from(po.y1[i] > po.y0[i])));
    Ok(SimulatedData {
        train,
        test,
        y0_mean: pick(&po.y0_mean),
        y1_mean: pick(&po.y1_mean),
        y0: pick(&po.y0),
        y1: pick(&po.y1),
        z_true,
        optimal_arm_noiseless,
        optimal_arm_realized,
        predictive_set: true_predictive_set(config.linearity, config.teh),
        mu,
    })
}
