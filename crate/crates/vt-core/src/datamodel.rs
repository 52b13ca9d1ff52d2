//! Core data containers: typed covariate columns, treatment and outcome
//! vectors, CSV ingestion, arm splitting, and column standardization.

use std::collections::HashSet;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VtError};

/// Covariate type. Binary columns are coded 0/1 and pass through
/// standardization unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Binary,
}

/// Name, kind, and position of one covariate column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
    pub index: usize,
}

/// A complete analysis dataset: covariates, binary treatment, continuous
/// outcome. Immutable after construction and safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub columns: Vec<ColumnMeta>,
    pub x: Array2<f64>,
    pub t: Array1<u8>,
    pub y: Array1<f64>,
}

impl Dataset {
    /// Validates shape and value invariants: dense unique column indices,
    /// matching row counts, binary columns in {0,1}, treatment in {0,1},
    /// finite values throughout.
    pub fn new(
        columns: Vec<ColumnMeta>,
        x: Array2<f64>,
        t: Array1<u8>,
        y: Array1<f64>,
    ) -> Result<Self> {
        let n = x.nrows();
        let p = x.ncols();
        if columns.len() != p {
            return Err(VtError::InvalidInput(format!(
                "{} column metas for {} columns",
                columns.len(),
                p
            )));
        }
        let mut names = HashSet::new();
        for (j, c) in columns.iter().enumerate() {
            if c.index != j {
                return Err(VtError::InvalidInput(format!(
                    "column {} has index {}, expected dense ordering",
                    c.name, c.index
                )));
            }
            if !names.insert(c.name.as_str()) {
                return Err(VtError::InvalidInput(format!("duplicate column name {}", c.name)));
            }
        }
        if t.len() != n || y.len() != n {
            return Err(VtError::InvalidInput(format!(
                "row mismatch: x has {n} rows, t has {}, y has {}",
                t.len(),
                y.len()
            )));
        }
        if t.iter().any(|&v| v > 1) {
            return Err(VtError::InvalidInput("treatment not binary".into()));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(VtError::InvalidInput("non-finite value in data".into()));
        }
        for c in &columns {
            if c.kind == ColumnKind::Binary {
                let col = x.column(c.index);
                if col.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(VtError::InvalidInput(format!(
                        "binary column {} has a value outside {{0,1}}",
                        c.name
                    )));
                }
            }
        }
        Ok(Dataset { columns, x, t, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// (control, treated) row counts.
    pub fn arm_counts(&self) -> (usize, usize) {
        let treated = self.t.iter().filter(|&&v| v == 1).count();
        (self.n() - treated, treated)
    }

    /// Row subset in the given order. Indices must be in bounds.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let x = self.x.select(Axis(0), rows);
        let t = Array1::from_iter(rows.iter().map(|&i| self.t[i]));
        let y = Array1::from_iter(rows.iter().map(|&i| self.y[i]));
        Dataset { columns: self.columns.clone(), x, t, y }
    }
}

/// Partitions a dataset into (control, treated) preserving row order.
pub fn split_by_arm(d: &Dataset) -> Result<(Dataset, Dataset)> {
    let control: Vec<usize> = (0..d.n()).filter(|&i| d.t[i] == 0).collect();
    let treated: Vec<usize> = (0..d.n()).filter(|&i| d.t[i] == 1).collect();
    if control.is_empty() || treated.is_empty() {
        return Err(VtError::InvalidInput("one treatment arm is empty".into()));
    }
    Ok((d.subset(&control), d.subset(&treated)))
}

/// Per-column centering and scaling parameters.
///
/// Scales are population standard deviations (1/n variance). Binary columns
/// keep mean 0 and scale 1 so they pass through unchanged; constant
/// continuous columns are flagged and also pass through.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationParams {
    pub means: Array1<f64>,
    pub scales: Array1<f64>,
    pub constant: Vec<bool>,
    pub binary: Vec<bool>,
}

/// Estimates standardization parameters on the fitting data.
pub fn standardize_fit(x: ArrayView2<f64>, columns: &[ColumnMeta]) -> StandardizationParams {
    let n = x.nrows();
    let p = x.ncols();
    let mut means = Array1::zeros(p);
    let mut scales = Array1::ones(p);
    let mut constant = vec![false; p];
    let mut binary = vec![false; p];
    for j in 0..p {
        if columns[j].kind == ColumnKind::Binary {
            binary[j] = true;
            continue;
        }
        let col = x.column(j);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        if sd == 0.0 {
            constant[j] = true;
        } else {
            means[j] = mean;
            scales[j] = sd;
        }
    }
    StandardizationParams { means, scales, constant, binary }
}

/// Applies stored parameters; never re-estimates.
pub fn standardize_apply(params: &StandardizationParams, x: ArrayView2<f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    for j in 0..out.ncols() {
        if params.binary[j] || params.constant[j] {
            continue;
        }
        let mean = params.means[j];
        let scale = params.scales[j];
        out.column_mut(j).mapv_inplace(|v| (v - mean) / scale);
    }
    out
}

/// Loads a CSV with a header row. The treatment and outcome columns are
/// identified by name; every other column is a covariate, classified Binary
/// when all its values are 0/1 and Continuous otherwise.
pub fn load_csv(path: &Path, treatment_col: &str, outcome_col: &str) -> Result<Dataset> {
    let (names, rows) = read_raw(path)?;
    let t_pos = names
        .iter()
        .position(|n| n == treatment_col)
        .ok_or_else(|| VtError::InvalidInput(format!("missing column {treatment_col}")))?;
    let y_pos = names
        .iter()
        .position(|n| n == outcome_col)
        .ok_or_else(|| VtError::InvalidInput(format!("missing column {outcome_col}")))?;
    let cov_pos: Vec<usize> = (0..names.len()).filter(|&j| j != t_pos && j != y_pos).collect();

    let n = rows.len();
    let p = cov_pos.len();
    let mut x = Array2::zeros((n, p));
    let mut t = Array1::zeros(n);
    let mut y = Array1::zeros(n);
    for (i, row) in rows.iter().enumerate() {
        for (jj, &j) in cov_pos.iter().enumerate() {
            x[[i, jj]] = row[j];
        }
        let tv = row[t_pos];
        if tv != 0.0 && tv != 1.0 {
            return Err(VtError::InvalidInput("treatment not binary".into()));
        }
        t[i] = tv as u8;
        y[i] = row[y_pos];
    }
    let columns: Vec<ColumnMeta> = cov_pos
        .iter()
        .enumerate()
        .map(|(jj, &j)| {
            let all_binary = (0..n).all(|i| x[[i, jj]] == 0.0 || x[[i, jj]] == 1.0);
            ColumnMeta {
                name: names[j].clone(),
                kind: if all_binary { ColumnKind::Binary } else { ColumnKind::Continuous },
                index: jj,
            }
        })
        .collect();
    Dataset::new(columns, x, t, y)
}

/// Loads a CSV against an explicit schema; header must contain every schema
/// name and declared Binary columns must hold only 0/1.
pub fn load_csv_with_schema(
    path: &Path,
    schema: &[ColumnMeta],
    treatment_col: &str,
    outcome_col: &str,
) -> Result<Dataset> {
    let d = load_csv(path, treatment_col, outcome_col)?;
    if d.p() != schema.len() {
        return Err(VtError::InvalidInput(format!(
            "schema has {} columns, file has {}",
            schema.len(),
            d.p()
        )));
    }
    let mut x = Array2::zeros((d.n(), schema.len()));
    for (j, meta) in schema.iter().enumerate() {
        let pos = d
            .columns
            .iter()
            .position(|c| c.name == meta.name)
            .ok_or_else(|| VtError::InvalidInput(format!("missing column {}", meta.name)))?;
        x.column_mut(j).assign(&d.x.column(pos));
    }
    let columns: Vec<ColumnMeta> = schema
        .iter()
        .enumerate()
        .map(|(j, m)| ColumnMeta { name: m.name.clone(), kind: m.kind, index: j })
        .collect();
    Dataset::new(columns, x, d.t, d.y)
}

fn read_raw(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let names: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != names.len() {
            return Err(VtError::InvalidInput(format!(
                "row {} has {} fields, header has {}",
                rows.len() + 2,
                rec.len(),
                names.len()
            )));
        }
        let mut row = Vec::with_capacity(names.len());
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                VtError::InvalidInput(format!(
                    "non-numeric cell in column {} row {}",
                    names[j],
                    rows.len() + 2
                ))
            })?;
            if !v.is_finite() {
                return Err(VtError::InvalidInput(format!(
                    "non-finite cell in column {} row {}",
                    names[j],
                    rows.len() + 2
                )));
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok((names, rows))
}

/// Writes covariates plus `t` and `y` columns. Finite values round-trip
/// bit-exactly through the shortest-representation float format.
pub fn write_csv(d: &Dataset, path: &Path, treatment_col: &str, outcome_col: &str) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = d.columns.iter().map(|c| c.name.clone()).collect();
    header.push(treatment_col.to_string());
    header.push(outcome_col.to_string());
    wtr.write_record(&header)?;
    for i in 0..d.n() {
        let mut rec: Vec<String> = (0..d.p()).map(|j| format!("{}", d.x[[i, j]])).collect();
        rec.push(format!("{}", d.t[i]));
        rec.push(format!("{}", d.y[i]));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn cont(name: &str, index: usize) -> ColumnMeta {
        ColumnMeta { name: name.into(), kind: ColumnKind::Continuous, index }
    }

    #[test]
    fn standardize_population_sd() {
        let x = array![[1.0], [2.0], [3.0]];
        let cols = vec![cont("a", 0)];
        let params = standardize_fit(x.view(), &cols);
        let xs = standardize_apply(&params, x.view());
        // Population SD of (1,2,3) is sqrt(2/3).
        assert_abs_diff_eq!(xs[[0, 0]], -1.224_744_871, epsilon = 1e-6);
        assert_abs_diff_eq!(xs[[1, 0]], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(xs[[2, 0]], 1.224_744_871, epsilon = 1e-6);
        let mean = xs.column(0).sum() / 3.0;
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_column_flagged_and_passed_through() {
        let x = array![[5.0], [5.0]];
        let cols = vec![cont("a", 0)];
        let params = standardize_fit(x.view(), &cols);
        assert!(params.constant[0]);
        let xs = standardize_apply(&params, x.view());
        assert_eq!(xs, x);
    }

    #[test]
    fn binary_column_passes_through() {
        let x = array![[0.0, 1.5], [1.0, 2.5]];
        let cols =
            vec![ColumnMeta { name: "b".into(), kind: ColumnKind::Binary, index: 0 }, cont("a", 1)];
        let params = standardize_fit(x.view(), &cols);
        let xs = standardize_apply(&params, x.view());
        assert_eq!(xs[[0, 0]], 0.0);
        assert_eq!(xs[[1, 0]], 1.0);
        assert_abs_diff_eq!(xs[[0, 1]], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn apply_uses_stored_params_on_held_out_rows() {
        let train = array![[1.0], [2.0], [3.0]];
        let cols = vec![cont("a", 0)];
        let params = standardize_fit(train.view(), &cols);
        let held = array![[4.0]];
        let out = standardize_apply(&params, held.view());
        assert_abs_diff_eq!(out[[0, 0]], (4.0 - 2.0) / (2.0f64 / 3.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn split_by_arm_partitions() {
        let d = Dataset::new(
            vec![cont("a", 0)],
            array![[1.0], [2.0], [3.0]],
            array![0, 1, 0],
            array![10.0, 20.0, 30.0],
        )
        .unwrap();
        let (c, t) = split_by_arm(&d).unwrap();
        assert_eq!(c.n(), 2);
        assert_eq!(t.n(), 1);
        assert_eq!(c.y, array![10.0, 30.0]);
        assert_eq!(t.y, array![20.0]);
        assert_eq!(c.n() + t.n(), d.n());
    }

    #[test]
    fn split_requires_both_arms() {
        let d =
            Dataset::new(vec![cont("a", 0)], array![[1.0], [2.0]], array![1, 1], array![0.0, 0.0])
                .unwrap();
        assert!(split_by_arm(&d).is_err());
    }

    #[test]
    fn treatment_must_be_binary() {
        let err =
            Dataset::new(vec![cont("a", 0)], array![[1.0]], array![2], array![0.0]).unwrap_err();
        assert!(err.to_string().contains("treatment not binary"));
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let d = Dataset::new(
            vec![
                cont("x1", 0),
                ColumnMeta { name: "c1".into(), kind: ColumnKind::Binary, index: 1 },
            ],
            array![[0.5, 1.0], [1.5, 0.0], [std::f64::consts::PI, 1.0]],
            array![1, 0, 1],
            array![2.0, 1.0, -0.125],
        )
        .unwrap();
        write_csv(&d, &path, "trt", "y").unwrap();
        let back = load_csv(&path, "trt", "y").unwrap();
        assert_eq!(back.x, d.x);
        assert_eq!(back.t, d.t);
        assert_eq!(back.y, d.y);
        assert_eq!(back.columns[1].kind, ColumnKind::Binary);
    }

    #[test]
    fn csv_two_row_echo() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "x1,trt,y\n0.5,1,2.0\n1.5,0,1.0\n").unwrap();
        let d = load_csv(&path, "trt", "y").unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.p(), 1);
        assert_eq!(d.x, array![[0.5], [1.5]]);
        assert_eq!(d.t, array![1, 0]);
        assert_eq!(d.y, array![2.0, 1.0]);
    }

    #[test]
    fn csv_rejects_nonbinary_treatment() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "x1,trt,y\n0.5,2,2.0\n").unwrap();
        let err = load_csv(&path, "trt", "y").unwrap_err();
        assert!(err.to_string().contains("treatment not binary"));
    }

    #[test]
    fn csv_rejects_missing_and_non_numeric() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "x1,trt,y\n0.5,1,2.0\n").unwrap();
        assert!(load_csv(&path, "missing", "y").is_err());
        std::fs::write(&path, "x1,trt,y\nabc,1,2.0\n").unwrap();
        assert!(load_csv(&path, "trt", "y").is_err());
        std::fs::write(&path, "x1,trt,y\nNaN,1,2.0\n").unwrap();
        assert!(load_csv(&path, "trt", "y").is_err());
    }

    #[test]
    fn schema_load_validates_binary_declaration() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "x1,trt,y\n0.5,1,2.0\n").unwrap();
        let schema = vec![ColumnMeta { name: "x1".into(), kind: ColumnKind::Binary, index: 0 }];
        assert!(load_csv_with_schema(&path, &schema, "trt", "y").is_err());
    }
}
