//! Result rendering: the long-format CSV, the markdown matrix tables, and
//! the per-cell tree exports. Output bytes depend only on the table
//! contents, never on timing or worker count.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Result, VtError};
use crate::harness::export::{tree_to_dot, tree_to_json};
use crate::harness::runner::{BenchmarkCell, ResultsTable};
use crate::subgroup::SubgroupModel;

/// Format with six significant digits, plain decimal for ordinary
/// magnitudes. NaN (an all-failed cell) renders empty.
pub fn fmt6(v: f64) -> String {
    if !v.is_finite() {
        return String::new();
    }
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-4..1e6).contains(&a) {
        return format!("{v:.5e}");
    }
    let decimals = (5 - a.log10().floor() as i32).clamp(0, 10) as usize;
    format!("{v:.decimals$}")
}

fn csv_rows(cell: &BenchmarkCell) -> Vec<[String; 8]> {
    let scenario = cell.scenario_label.clone();
    let n = cell.scenario.n_train.to_string();
    let reps = cell.aggregate.replicates.to_string();
    let row = |metric: &str, mean: String, se: String| {
        [
            scenario.clone(),
            n.clone(),
            cell.step1.clone(),
            cell.step2.clone(),
            metric.to_string(),
            mean,
            se,
            reps.clone(),
        ]
    };
    let mut rows = vec![
        row("accuracy", fmt6(cell.aggregate.mean_accuracy), fmt6(cell.aggregate.mc_se_accuracy)),
        row("ite_mse", fmt6(cell.aggregate.mean_mse), fmt6(cell.aggregate.mc_se_mse)),
    ];
    if cell.report_precision {
        let mean = cell.aggregate.pooled_precision.map(fmt6).unwrap_or_default();
        rows.push(row("precision", mean, String::new()));
    }
    rows
}

/// Render the long-format CSV as a string.
pub fn results_csv(table: &ResultsTable) -> String {
    let mut out = String::from("scenario,n,step1,step2,metric,mean,mc_se,replicates\n");
    for cell in &table.cells {
        for row in csv_rows(cell) {
            out.push_str(&row.join(","));
            out.push('\n');
        }
    }
    out
}

fn cell_text(mean: f64, se: f64, partial: bool) -> String {
    if !mean.is_finite() {
        return "failed".into();
    }
    let mark = if partial { "*" } else { "" };
    format!("{} ({}){mark}", fmt6(mean), fmt6(se))
}

/// Render the markdown report: one matrix per scenario group and metric,
/// methods as rows, scenarios as columns.
pub fn results_md(table: &ResultsTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Virtual Twins benchmark\n");
    let _ = writeln!(out, "- seed: {}", table.seed);
    let _ = writeln!(out, "- version: {}", table.version);
    let _ = writeln!(out, "- ground truth: {:?}", table.ground_truth_mode);
    let _ = writeln!(out, "- replicates: {}", table.replicates);

    // Column order = first appearance; row order = first appearance of the
    // method pair. Both follow the configuration.
    let mut scenarios: Vec<String> = Vec::new();
    let mut methods: Vec<(String, String)> = Vec::new();
    for cell in &table.cells {
        let col = format!("{} n={}", cell.scenario_label, cell.scenario.n_train);
        if !scenarios.contains(&col) {
            scenarios.push(col);
        }
        let pair = (cell.step1.clone(), cell.step2.clone());
        if !methods.contains(&pair) {
            methods.push(pair);
        }
    }
    let lookup = |col: &str, pair: &(String, String)| {
        table.cells.iter().find(|c| {
            format!("{} n={}", c.scenario_label, c.scenario.n_train) == col
                && c.step1 == pair.0
                && c.step2 == pair.1
        })
    };

    for (metric, title) in [
        ("accuracy", "Classification accuracy"),
        ("ite_mse", "Effect MSE"),
        ("precision", "Pooled selection precision"),
    ] {
        let _ = writeln!(out, "\n## {title}\n");
        let mut header = String::from("| step 1 | step 2 |");
        let mut rule = String::from("|---|---|");
        for col in &scenarios {
            let _ = write!(header, " {col} |");
            rule.push_str("---|");
        }
        let _ = writeln!(out, "{header}");
        let _ = writeln!(out, "{rule}");
        for pair in &methods {
            let mut line = format!("| {} | {} |", pair.0, pair.1);
            for col in &scenarios {
                let text = match lookup(col, pair) {
                    None => "-".to_string(),
                    Some(cell) => match metric {
                        "accuracy" => cell_text(
                            cell.aggregate.mean_accuracy,
                            cell.aggregate.mc_se_accuracy,
                            cell.is_partial(),
                        ),
                        "ite_mse" => cell_text(
                            cell.aggregate.mean_mse,
                            cell.aggregate.mc_se_mse,
                            cell.is_partial(),
                        ),
                        _ => match (cell.report_precision, cell.aggregate.pooled_precision) {
                            (false, _) => "-".to_string(),
                            (true, None) => "none selected".to_string(),
                            (true, Some(p)) => fmt6(p),
                        },
                    },
                };
                let _ = write!(line, " {text} |");
            }
            let _ = writeln!(out, "{line}");
        }
    }

    let failures: Vec<String> = table
        .cells
        .iter()
        .flat_map(|c| {
            c.failures.iter().map(move |f| {
                format!(
                    "- {} {}+{} replicate {} (data seed {}): {}",
                    c.scenario_label, c.step1, c.step2, f.replicate, f.data_seed, f.message
                )
            })
        })
        .collect();
    if !failures.is_empty() {
        let _ = writeln!(out, "\n## Failures\n");
        for f in failures {
            let _ = writeln!(out, "{f}");
        }
    }
    out
}

fn tree_file_stem(cell: &BenchmarkCell) -> String {
    format!("{}_{}_{}", cell.scenario_label.replace('/', "-"), cell.step1, cell.step2)
}

/// Write results.csv, results.md, and trees/*.{json,dot} under `dir`.
/// Returns the number of trees written.
pub fn write_reports(table: &ResultsTable, dir: &Path) -> Result<usize> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("results.csv"), results_csv(table))?;
    std::fs::write(dir.join("results.md"), results_md(table))?;
    let mut written = 0;
    let trees = dir.join("trees");
    for cell in &table.cells {
        if let Some(SubgroupModel::Tree(model)) = &cell.example_model {
            if written == 0 {
                std::fs::create_dir_all(&trees)?;
            }
            let stem = tree_file_stem(cell);
            let json = tree_to_json(model, &table.column_names)?;
            std::fs::write(trees.join(format!("{stem}.json")), json)?;
            let dot = tree_to_dot(model, &table.column_names)?;
            std::fs::write(trees.join(format!("{stem}.dot")), dot)?;
            written += 1;
        }
    }
    Ok(written)
}

/// Parse a results.csv produced by `results_csv` back into (row key, mean)
/// pairs; used by tests to close the loop.
pub fn parse_results_csv(text: &str) -> Result<Vec<(String, Option<f64>)>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        if record.len() != 8 {
            return Err(VtError::InvalidInput(format!("results row with {} fields", record.len())));
        }
        let key =
            format!("{}|{}|{}|{}|{}", &record[0], &record[1], &record[2], &record[3], &record[4]);
        let mean = if record[5].is_empty() {
            None
        } else {
            Some(
                record[5]
                    .parse::<f64>()
                    .map_err(|e| VtError::InvalidInput(format!("bad mean field: {e}")))?,
            )
        };
        rows.push((key, mean));
    }
    Ok(rows)
}
