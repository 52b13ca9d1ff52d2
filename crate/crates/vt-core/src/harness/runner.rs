//! The benchmark sweep. Every (scenario, method, replicate) job derives its
//! own seeds from the master seed, so results do not depend on worker count
//! or scheduling. Data seeds depend only on (scenario, replicate): all
//! methods see identical datasets, which pairs the comparisons.

use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Result, VtError};
use crate::harness::config::BenchmarkConfig;
use crate::harness::{step1_name, step2_name};
use crate::metrics::{aggregate, evaluate_replicate, AggregateMetrics, ReplicateMetrics};
use crate::seeds;
use crate::simgen::{generate, scenario_columns, true_predictive_set, ScenarioConfig};
use crate::subgroup::{StepTwoKind, SubgroupModel};
use crate::vt::run_vt;

const PURPOSE_DATA: u64 = 0x4441_5441;
const PURPOSE_FIT: u64 = 0x0046_4954;

/// One failed replicate, kept with the seed that reproduces it.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub replicate: usize,
    pub data_seed: u64,
    pub message: String,
}

/// Aggregated results for one (scenario, method) pair.
#[derive(Debug, Clone)]
pub struct BenchmarkCell {
    pub scenario: ScenarioConfig,
    pub scenario_label: String,
    pub step1: String,
    pub step2: String,
    pub aggregate: AggregateMetrics,
    pub failures: Vec<CellFailure>,
    /// Whether this cell reports pooled selection precision.
    pub report_precision: bool,
    /// Step-2 model of the first replicate, kept for tree export.
    pub example_model: Option<SubgroupModel>,
}

impl BenchmarkCell {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }
}

/// Full benchmark output plus run metadata.
#[derive(Debug, Clone)]
pub struct ResultsTable {
    pub seed: u64,
    pub version: String,
    pub ground_truth_mode: crate::metrics::GroundTruthMode,
    pub replicates: usize,
    pub cells: Vec<BenchmarkCell>,
    pub column_names: Vec<String>,
    /// Wall-clock duration; metadata only, never written to result files.
    pub timing_secs: f64,
}

impl ResultsTable {
    pub fn is_partial(&self) -> bool {
        self.cells.iter().any(BenchmarkCell::is_partial)
    }
}

struct Job {
    s: usize,
    m: usize,
    r: usize,
    data_seed: u64,
    fit_seed: u64,
}

fn run_job(
    config: &BenchmarkConfig,
    job: &Job,
) -> std::result::Result<(ReplicateMetrics, Option<SubgroupModel>), String> {
    let mut scenario = config.scenarios[job.s].clone();
    scenario.seed = job.data_seed;
    let mut spec = config.method_grid[job.m].clone();
    spec.seed = job.fit_seed;
    let run = || -> Result<(ReplicateMetrics, Option<SubgroupModel>)> {
        let sim = generate(&scenario)?;
        let fit = run_vt(&sim.train, &spec)?;
        let metrics = evaluate_replicate(&fit, &sim, config.ground_truth_mode)?;
        let model = if job.r == 0 { fit.step2_model } else { None };
        Ok((metrics, model))
    };
    run().map_err(|e| e.to_string())
}

/// Run the full sweep. Failed replicates degrade their cell to partial
/// instead of aborting the run.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<ResultsTable> {
    config.validate()?;
    let start = Instant::now();
    let n_methods = config.method_grid.len();
    let reps = config.replicates;
    let data_root = seeds::derive(config.seed, PURPOSE_DATA);
    let fit_root = seeds::derive(config.seed, PURPOSE_FIT);

    let mut jobs = Vec::with_capacity(config.scenarios.len() * n_methods * reps);
    for s in 0..config.scenarios.len() {
        for m in 0..n_methods {
            for r in 0..reps {
                jobs.push(Job {
                    s,
                    m,
                    r,
                    data_seed: seeds::derive(data_root, (s * reps + r) as u64),
                    fit_seed: seeds::derive(fit_root, ((s * n_methods + m) * reps + r) as u64),
                });
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| VtError::InvalidConfig(format!("worker pool: {e}")))?;
    let outcomes: Vec<std::result::Result<(ReplicateMetrics, Option<SubgroupModel>), String>> =
        pool.install(|| jobs.par_iter().map(|job| run_job(config, job)).collect());

    let mut cells = Vec::with_capacity(config.scenarios.len() * n_methods);
    for s in 0..config.scenarios.len() {
        let scenario = &config.scenarios[s];
        let truth: BTreeSet<usize> =
            true_predictive_set(scenario.linearity, scenario.teh).into_iter().collect();
        for m in 0..n_methods {
            let spec = &config.method_grid[m];
            let base = (s * n_methods + m) * reps;
            let mut metrics = Vec::with_capacity(reps);
            let mut failures = Vec::new();
            let mut example_model = None;
            for r in 0..reps {
                let job = &jobs[base + r];
                match &outcomes[base + r] {
                    Ok((rep, model)) => {
                        metrics.push(rep.clone());
                        if r == 0 {
                            example_model = model.clone();
                        }
                    }
                    Err(message) => failures.push(CellFailure {
                        replicate: r,
                        data_seed: job.data_seed,
                        message: message.clone(),
                    }),
                }
            }
            let report_precision = scenario.teh && spec.step2.kind != StepTwoKind::None;
            let agg = aggregate(&metrics, report_precision.then_some(&truth));
            cells.push(BenchmarkCell {
                scenario: scenario.clone(),
                scenario_label: scenario.label(),
                step1: step1_name(&spec.step1).to_string(),
                step2: step2_name(spec.step2.kind).to_string(),
                aggregate: agg,
                failures,
                report_precision,
                example_model,
            });
        }
    }

    Ok(ResultsTable {
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        ground_truth_mode: config.ground_truth_mode,
        replicates: reps,
        cells,
        column_names: scenario_columns().into_iter().map(|c| c.name).collect(),
        timing_secs: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{LambdaRule, RegressorSpec};
    use crate::metrics::GroundTruthMode;
    use crate::simgen::{Linearity, Structure};
    use crate::subgroup::StepTwoSpec;
    use crate::vt::VtSpec;

    fn tiny_config(workers: usize) -> BenchmarkConfig {
        BenchmarkConfig {
            scenarios: vec![ScenarioConfig {
                linearity: Linearity::Linear,
                structure: Structure::Regular,
                teh: true,
                n_train: 80,
                n_test: 40,
                seed: 0,
            }],
            method_grid: vec![
                VtSpec {
                    step1: RegressorSpec::Lasso { folds: 4, rule: LambdaRule::Lambda1SE },
                    step2: StepTwoSpec::none(),
                    seed: 0,
                },
                VtSpec {
                    step1: RegressorSpec::Lasso { folds: 4, rule: LambdaRule::Lambda1SE },
                    step2: StepTwoSpec::with_kind(StepTwoKind::RegressionTree),
                    seed: 0,
                },
            ],
            replicates: 2,
            workers,
            ground_truth_mode: GroundTruthMode::Realized,
            output_dir: std::path::PathBuf::from("unused"),
            seed: 99,
        }
    }

    #[test]
    fn two_replicates_aggregate_into_each_cell() {
        let table = run_benchmark(&tiny_config(1)).unwrap();
        assert_eq!(table.cells.len(), 2);
        for cell in &table.cells {
            assert_eq!(cell.aggregate.replicates, 2);
            assert!(cell.failures.is_empty());
            assert!(cell.aggregate.mean_accuracy >= 0.0 && cell.aggregate.mean_accuracy <= 1.0);
        }
        assert!(table.cells[0].example_model.is_none(), "step-2 none keeps no model");
        assert!(table.cells[1].example_model.is_some());
        assert!(!table.cells[0].report_precision);
        assert!(table.cells[1].report_precision);
        assert_eq!(table.column_names.len(), 110);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let one = run_benchmark(&tiny_config(1)).unwrap();
        let four = run_benchmark(&tiny_config(4)).unwrap();
        assert_eq!(one.cells.len(), four.cells.len());
        for (a, b) in one.cells.iter().zip(four.cells.iter()) {
            assert_eq!(a.aggregate, b.aggregate);
            assert_eq!(a.failures, b.failures);
        }
    }

    #[test]
    fn data_seeds_are_shared_across_methods_and_distinct_across_replicates() {
        let config = tiny_config(1);
        let reps = config.replicates;
        let n_methods = config.method_grid.len();
        let data_root = seeds::derive(config.seed, PURPOSE_DATA);
        let fit_root = seeds::derive(config.seed, PURPOSE_FIT);
        let data = |s: usize, r: usize| seeds::derive(data_root, (s * reps + r) as u64);
        assert_eq!(data(0, 0), data(0, 0));
        assert_ne!(data(0, 0), data(0, 1));
        let fit = |s: usize, m: usize, r: usize| {
            seeds::derive(fit_root, ((s * n_methods + m) * reps + r) as u64)
        };
        let mut all = std::collections::BTreeSet::new();
        for m in 0..n_methods {
            for r in 0..reps {
                all.insert(fit(0, m, r));
            }
        }
        assert_eq!(all.len(), n_methods * reps, "fit seeds must be distinct");
    }
}
