//! `vt`: simulate benchmark scenarios, run method sweeps, analyze a CSV
//! dataset, and convert exported trees. Exit codes: 0 success, 1 runtime or
//! partial failure, 2 invalid configuration or arguments.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vt_core::harness::{
    load_config, run_benchmark, step1_name, step2_name, tree_from_json, tree_to_dot, tree_to_json,
    write_reports,
};
use vt_core::learners::RegressorSpec;
use vt_core::simgen::{generate, Linearity, ScenarioConfig, Structure};
use vt_core::subgroup::{StepTwoKind, StepTwoSpec, SubgroupModel, TreeModel, TreeNode, Tuning};
use vt_core::vt::{calibrate_step2_penalty, run_vt, VtSpec};
use vt_core::VtError;

#[derive(Parser)]
#[command(name = "vt", version, about = "Virtual Twins subgroup identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one simulated scenario and dump train/test/truth CSVs
    Simulate(SimulateArgs),
    /// Run a scenario x method benchmark sweep from a JSON config
    Benchmark(BenchmarkArgs),
    /// Run the two-step pipeline on a CSV dataset
    Analyze(AnalyzeArgs),
    /// Convert an exported tree JSON file
    ExportTree(ExportTreeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum LinearityArg {
    Linear,
    Nonlinear,
}

#[derive(Clone, Copy, ValueEnum)]
enum StructureArg {
    Regular,
    Correlated,
    SelectionBias,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    linearity: LinearityArg,
    #[arg(long, value_enum, default_value = "regular")]
    structure: StructureArg,
    /// Generate treatment effect heterogeneity
    #[arg(long)]
    teh: bool,
    #[arg(long, default_value_t = 600)]
    n_train: usize,
    #[arg(long, default_value_t = 2000)]
    n_test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    data: PathBuf,
    /// Step-1 learner: lasso, forest, mars, super_learner
    #[arg(long)]
    step1: String,
    /// Step-2 model: none, linear, regression_tree, conditional_tree
    #[arg(long)]
    step2: String,
    /// Permutation calibration as "M,alpha"; tree step-2 kinds only
    #[arg(long)]
    calibrate: Option<String>,
    #[arg(long, default_value = "t")]
    t_col: String,
    #[arg(long, default_value = "y")]
    y_col: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write tree.json/tree.dot for tree step-2 models
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TreeFormat {
    Json,
    Dot,
}

#[derive(Args)]
struct ExportTreeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: TreeFormat,
    /// Output file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Benchmark(args) => benchmark(args),
        Command::Analyze(args) => analyze(args),
        Command::ExportTree(args) => export_tree(args),
    };
    std::process::exit(code);
}

/// Invalid inputs exit 2; runtime failures exit 1.
fn exit_code(e: &VtError) -> i32 {
    match e {
        VtError::InvalidConfig(_) | VtError::InvalidInput(_) => 2,
        _ => 1,
    }
}

fn report_err(e: &VtError) -> i32 {
    eprintln!("error: {e}");
    exit_code(e)
}

fn simulate(args: SimulateArgs) -> i32 {
    let config = ScenarioConfig {
        linearity: match args.linearity {
            LinearityArg::Linear => Linearity::Linear,
            LinearityArg::Nonlinear => Linearity::Nonlinear,
        },
        structure: match args.structure {
            StructureArg::Regular => Structure::Regular,
            StructureArg::Correlated => Structure::Correlated,
            StructureArg::SelectionBias => Structure::SelectionBias,
        },
        teh: args.teh,
        n_train: args.n_train,
        n_test: args.n_test,
        seed: args.seed,
    };
    if let Err(e) = config.validate() {
        return report_err(&e);
    }
    let sim = match generate(&config) {
        Ok(s) => s,
        Err(e) => return report_err(&e),
    };
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        eprintln!("error: cannot create {}: {e}", args.out.display());
        return 1;
    }
    let write = || -> vt_core::Result<()> {
        vt_core::datamodel::write_csv(&sim.train, &args.out.join("train.csv"), "t", "y")?;
        vt_core::datamodel::write_csv(&sim.test, &args.out.join("test.csv"), "t", "y")?;
        let mut truth = String::from(
            "z_true,y0_mean,y1_mean,y0,y1,optimal_arm_noiseless,optimal_arm_realized\n",
        );
        for i in 0..sim.test.n() {
            truth.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                sim.z_true[i],
                sim.y0_mean[i],
                sim.y1_mean[i],
                sim.y0[i],
                sim.y1[i],
                sim.optimal_arm_noiseless[i],
                sim.optimal_arm_realized[i]
            ));
        }
        std::fs::write(args.out.join("truth.csv"), truth)?;
        Ok(())
    };
    if let Err(e) = write() {
        return report_err(&e);
    }
    println!(
        "wrote train.csv ({} rows), test.csv ({} rows), truth.csv to {}",
        sim.train.n(),
        sim.test.n(),
        args.out.display()
    );
    0
}

fn benchmark(args: BenchmarkArgs) -> i32 {
    let mut config = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => return report_err(&e),
    };
    if let Some(r) = args.replicates {
        config.replicates = r;
    }
    if let Some(w) = args.workers {
        config.workers = w;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    if let Err(e) = config.validate() {
        return report_err(&e);
    }
    let table = match run_benchmark(&config) {
        Ok(t) => t,
        Err(e) => return report_err(&e),
    };
    let trees = match write_reports(&table, &config.output_dir) {
        Ok(n) => n,
        Err(e) => return report_err(&e),
    };
    println!(
        "wrote results.csv, results.md, {trees} tree(s) to {} ({} cells, {:.1}s)",
        config.output_dir.display(),
        table.cells.len(),
        table.timing_secs
    );
    if table.is_partial() {
        let failed: usize = table.cells.iter().map(|c| c.failures.len()).sum();
        eprintln!("warning: {failed} replicate(s) failed; see results.md");
        return 1;
    }
    0
}

fn parse_step1(name: &str) -> Result<RegressorSpec, VtError> {
    match name {
        "lasso" => Ok(RegressorSpec::default_lasso()),
        "forest" => Ok(RegressorSpec::default_forest()),
        "mars" => Ok(RegressorSpec::default_mars()),
        "super_learner" => Ok(RegressorSpec::default_superlearner()),
        _ => Err(VtError::InvalidConfig(format!(
            "unknown step-1 learner {name}; expected lasso, forest, mars, or super_learner"
        ))),
    }
}

fn parse_step2(name: &str) -> Result<StepTwoSpec, VtError> {
    let kind = match name {
        "none" => StepTwoKind::None,
        "linear" => StepTwoKind::Linear,
        "regression_tree" => StepTwoKind::RegressionTree,
        "conditional_tree" => StepTwoKind::ConditionalTree,
        _ => {
            return Err(VtError::InvalidConfig(format!(
                "unknown step-2 model {name}; expected none, linear, regression_tree, or conditional_tree"
            )))
        }
    };
    Ok(StepTwoSpec::with_kind(kind))
}

fn parse_calibrate(text: &str) -> Result<(usize, f64), VtError> {
    let bad = || VtError::InvalidConfig(format!("--calibrate expects M,alpha; got {text}"));
    let (m, alpha) = text.split_once(',').ok_or_else(bad)?;
    let m: usize = m.trim().parse().map_err(|_| bad())?;
    let alpha: f64 = alpha.trim().parse().map_err(|_| bad())?;
    Ok((m, alpha))
}

/// Conjunction of split conditions leading to each leaf, with the leaf node.
fn leaf_rules(tree: &TreeModel, columns: &[String]) -> Vec<(String, f64, usize)> {
    let mut out = Vec::new();
    let mut stack = vec![(0usize, String::new())];
    while let Some((i, path)) = stack.pop() {
        match &tree.nodes[i] {
            TreeNode::Leaf { mean, count } => {
                let rule = if path.is_empty() { "(all)".to_string() } else { path };
                out.push((rule, *mean, *count));
            }
            TreeNode::Split { var, threshold, left, right } => {
                let name = columns.get(*var).cloned().unwrap_or_else(|| format!("x[{var}]"));
                let join = if path.is_empty() { "" } else { " & " };
                stack.push((*right, format!("{path}{join}{name} > {threshold:.4}")));
                stack.push((*left, format!("{path}{join}{name} <= {threshold:.4}")));
            }
        }
    }
    out
}

fn analyze(args: AnalyzeArgs) -> i32 {
    let step1 = match parse_step1(&args.step1) {
        Ok(s) => s,
        Err(e) => return report_err(&e),
    };
    let mut step2 = match parse_step2(&args.step2) {
        Ok(s) => s,
        Err(e) => return report_err(&e),
    };
    let calibrate = match args.calibrate.as_deref().map(parse_calibrate).transpose() {
        Ok(c) => c,
        Err(e) => return report_err(&e),
    };
    if calibrate.is_some()
        && !matches!(step2.kind, StepTwoKind::RegressionTree | StepTwoKind::ConditionalTree)
    {
        return report_err(&VtError::InvalidConfig(
            "--calibrate applies only to tree step-2 models".into(),
        ));
    }
    let data = match vt_core::datamodel::load_csv(&args.data, &args.t_col, &args.y_col) {
        Ok(d) => d,
        Err(e) => return report_err(&e),
    };
    println!("loaded {} rows, {} covariates from {}", data.n(), data.p(), args.data.display());

    if let Some((m, alpha)) = calibrate {
        let result = match calibrate_step2_penalty(&data, &step1, &step2, m, alpha, args.seed) {
            Ok(r) => r,
            Err(e) => return report_err(&e),
        };
        println!(
            "calibration: M={} alpha={} threshold={:.6}",
            result.m, result.alpha, result.threshold
        );
        step2.tuning = Tuning::FixedPenalty { value: result.threshold };
    }

    let spec = VtSpec { step1, step2, seed: args.seed };
    let fit = match run_vt(&data, &spec) {
        Ok(f) => f,
        Err(e) => return report_err(&e),
    };
    println!("step 1: {} | step 2: {}", step1_name(&spec.step1), step2_name(spec.step2.kind));

    let columns: Vec<String> = data.columns.iter().map(|c| c.name.clone()).collect();
    match &fit.step2_model {
        None => {
            let mean = fit.cf.z_hat.sum() / fit.cf.z_hat.len() as f64;
            println!("single subgroup: n={} mean effect {mean:.4}", data.n());
        }
        Some(SubgroupModel::Linear(lin)) => {
            if lin.selected.is_empty() {
                println!("no covariates selected; intercept {:.4}", lin.intercept);
            } else {
                println!("selected variables:");
                for (&j, &c) in lin.selected.iter().zip(lin.coefficients.iter()) {
                    println!("  {} {c:+.4}", columns[j]);
                }
                println!("intercept {:.4}", lin.intercept);
            }
        }
        Some(SubgroupModel::Tree(tree)) => {
            let vars: Vec<String> =
                tree.split_variables().into_iter().map(|v| columns[v].clone()).collect();
            if vars.is_empty() {
                println!("selected variables: (none)");
            } else {
                println!("selected variables: {}", vars.join(", "));
            }
            println!("subgroups:");
            for (rule, mean, count) in leaf_rules(tree, &columns) {
                println!("  n={count} mean effect {mean:+.4}  {rule}");
            }
            if let Some(out) = &args.out {
                let write = || -> vt_core::Result<()> {
                    std::fs::create_dir_all(out)?;
                    std::fs::write(out.join("tree.json"), tree_to_json(tree, &columns)?)?;
                    std::fs::write(out.join("tree.dot"), tree_to_dot(tree, &columns)?)?;
                    Ok(())
                };
                if let Err(e) = write() {
                    return report_err(&e);
                }
                println!("wrote tree.json, tree.dot to {}", out.display());
            }
        }
    }
    0
}

fn export_tree(args: ExportTreeArgs) -> i32 {
    let text = match std::fs::read_to_string(&args.input) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.input.display());
            return 2;
        }
    };
    let (model, columns) = match tree_from_json(&text) {
        Ok(t) => t,
        Err(e) => return report_err(&e),
    };
    let rendered = match args.format {
        TreeFormat::Json => tree_to_json(&model, &columns),
        TreeFormat::Dot => tree_to_dot(&model, &columns),
    };
    let rendered = match rendered {
        Ok(r) => r,
        Err(e) => return report_err(&e),
    };
    match args.out {
        None => {
            print!("{rendered}");
            0
        }
        Some(path) => match std::fs::write(&path, rendered) {
            Ok(()) => {
                println!("wrote {}", path.display());
                0
            }
            Err(e) => {
                eprintln!("error: cannot write {}: {e}", path.display());
                1
            }
        },
    }
}
