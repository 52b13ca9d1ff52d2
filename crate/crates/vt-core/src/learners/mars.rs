//! Multivariate adaptive regression splines: a forward pass that adds the
//! best hinge pair per iteration and a backward pass that prunes terms by
//! generalized cross-validation.
//!
//! The forward search scores each (parent term, variable) jointly over all
//! knots in one descending sweep. Because the parent is already in the basis,
//! span{basis, h+, h-} = span{basis, parent*x, h+}, so the pair's gain splits
//! into a knot-independent linear part plus a hinge part computed from running
//! sums; the whole sweep is O(n * basis size) per candidate.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Result, VtError};
use crate::learners::RegressorSpec;
use crate::linalg::lstsq;

const MIN_GAIN_FRACTION: f64 = 1e-3;
const DEGENERACY_TOL: f64 = 1e-12;

/// One hinge factor: max(x_var - knot, 0) when sign is +1, max(knot - x_var, 0)
/// when sign is -1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hinge {
    pub var: usize,
    pub knot: f64,
    pub sign: i8,
}

impl Hinge {
    fn eval(&self, v: f64) -> f64 {
        if self.sign > 0 {
            (v - self.knot).max(0.0)
        } else {
            (self.knot - v).max(0.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarsFit {
    /// Non-intercept terms; each is a product of up to `degree` hinges.
    pub terms: Vec<Vec<Hinge>>,
    pub coefficients: Array1<f64>,
    pub intercept: f64,
    pub gcv: f64,
    /// Training RSS after each forward-pass addition (index 0: intercept only).
    pub forward_rss: Vec<f64>,
    pub p: usize,
}

impl MarsFit {
    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let mut out = Array1::from_elem(x.nrows(), self.intercept);
        for (term, &coef) in self.terms.iter().zip(self.coefficients.iter()) {
            for (i, row) in x.rows().into_iter().enumerate() {
                let mut v = coef;
                for h in term {
                    v *= h.eval(row[h.var]);
                }
                out[i] += v;
            }
        }
        out
    }
}

/// GCV = RSS / (n * (1 - C(M)/n)^2) with effective parameters
/// C(M) = M + d*(M-1)/2; +inf when C(M) >= n. M counts the intercept.
pub fn gcv_value(n: usize, rss: f64, m_terms: usize, degree: usize) -> f64 {
    let d = if degree == 1 { 2.0 } else { 3.0 };
    let c = m_terms as f64 + d * (m_terms as f64 - 1.0) / 2.0;
    let nf = n as f64;
    if c >= nf {
        f64::INFINITY
    } else {
        let denom = 1.0 - c / nf;
        rss / (nf * denom * denom)
    }
}

pub fn fit_mars(x: ArrayView2<f64>, y: ArrayView1<f64>, spec: &RegressorSpec) -> Result<MarsFit> {
    let RegressorSpec::Mars { max_terms, degree } = spec else {
        return Err(VtError::InvalidConfig("fit_mars requires a Mars spec".into()));
    };
    let n = x.nrows();
    let p = x.ncols();
    if n < 4 {
        return Err(VtError::InvalidInput(format!("mars needs at least 4 rows, got {n}")));
    }
    if *max_terms < 1 || *degree < 1 {
        return Err(VtError::InvalidConfig("max_terms and degree must be at least 1".into()));
    }
    if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(VtError::InvalidInput("non-finite value in mars inputs".into()));
    }

    let forward = forward_pass(x, y, *max_terms, *degree);
    backward_pass(x, y, forward, *degree, p)
}

struct ForwardModel {
    /// Term definitions including the intercept at index 0 (empty product).
    defs: Vec<Vec<Hinge>>,
    /// Raw basis columns parallel to `defs`.
    cols: Vec<Array1<f64>>,
    rss_trace: Vec<f64>,
}

struct Basis {
    q: Vec<Array1<f64>>,
    qty: Vec<f64>,
}

impl Basis {
    /// Component of v orthogonal to the basis, projected twice for stability.
    fn orthogonalize(&self, v: &Array1<f64>) -> Array1<f64> {
        let mut u = v.clone();
        for _ in 0..2 {
            for q in &self.q {
                let d = u.dot(q);
                u.zip_mut_with(q, |a, b| *a -= d * b);
            }
        }
        u
    }

    /// Adds v if it is not numerically in the span; returns success.
    fn push(&mut self, v: &Array1<f64>, y: &Array1<f64>) -> bool {
        let norm2_self = v.dot(v);
        if norm2_self <= 0.0 {
            return false;
        }
        let u = self.orthogonalize(v);
        let norm2 = u.dot(&u);
        if norm2 <= DEGENERACY_TOL * norm2_self {
            return false;
        }
        let q = u.mapv(|a| a / norm2.sqrt());
        self.qty.push(q.dot(y));
        self.q.push(q);
        true
    }
}

fn forward_pass(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    max_terms: usize,
    degree: usize,
) -> ForwardModel {
    let n = x.nrows();
    let p = x.ncols();
    let yv = y.to_owned();
    let mut defs: Vec<Vec<Hinge>> = vec![Vec::new()];
    let mut cols: Vec<Array1<f64>> = vec![Array1::ones(n)];
    let mut basis = Basis { q: Vec::new(), qty: Vec::new() };
    basis.push(&cols[0], &yv);
    let mut rss = yv.dot(&yv) - basis.qty.iter().map(|t| t * t).sum::<f64>();
    let mut rss_trace = vec![rss.max(0.0)];

    // Rows sorted descending per variable, shared across iterations.
    let order: Vec<Vec<usize>> = (0..p)
        .map(|v| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_unstable_by(|&a, &b| x[[b, v]].total_cmp(&x[[a, v]]));
            idx
        })
        .collect();

    while defs.len() + 2 <= max_terms {
        let mut best: Option<(f64, usize, usize, f64)> = None; // (gain, parent, var, knot)
        for parent in 0..defs.len() {
            if defs[parent].len() >= degree {
                continue;
            }
            let b = &cols[parent];
            for v in 0..p {
                if defs[parent].iter().any(|h| h.var == v) {
                    continue;
                }
                let ord = &order[v];
                if x[[ord[0], v]] == x[[ord[n - 1], v]] {
                    continue; // constant column
                }
                // Knot-independent direction parent*x_v.
                let u: Array1<f64> = Array1::from_shape_fn(n, |i| b[i] * x[[i, v]]);
                let u_norm2 = u.dot(&u);
                let up = basis.orthogonalize(&u);
                let up_norm2 = up.dot(&up);
                let (q_lin, q_lin_ty, gain_lin) =
                    if u_norm2 > 0.0 && up_norm2 > DEGENERACY_TOL * u_norm2 {
                        let q = up.mapv(|a| a / up_norm2.sqrt());
                        let t = q.dot(&yv);
                        (Some(q), t, t * t)
                    } else {
                        (None, 0.0, 0.0)
                    };

                // Descending knot sweep. Targets: each basis q, q_lin, and y.
                let k_targets = basis.q.len();
                let mut a_q = vec![0.0f64; k_targets];
                let mut c_q = vec![0.0f64; k_targets];
                let mut a_lin = 0.0f64;
                let mut c_lin = 0.0f64;
                let mut a_y = 0.0f64;
                let mut c_y = 0.0f64;
                let mut a2 = 0.0f64;
                let mut b2 = 0.0f64;
                let mut c2 = 0.0f64;
                let mut i = 0;
                while i < n {
                    let val = x[[ord[i], v]];
                    // Absorb the whole group of rows equal to val.
                    while i < n && x[[ord[i], v]] == val {
                        let r = ord[i];
                        let bi = b[r];
                        let bx = bi * x[[r, v]];
                        for (k, q) in basis.q.iter().enumerate() {
                            a_q[k] += bx * q[r];
                            c_q[k] += bi * q[r];
                        }
                        if let Some(q) = &q_lin {
                            a_lin += bx * q[r];
                            c_lin += bi * q[r];
                        }
                        a_y += bx * yv[r];
                        c_y += bi * yv[r];
                        a2 += bx * bx;
                        b2 += bx * bi;
                        c2 += bi * bi;
                        i += 1;
                    }
                    if i >= n {
                        break; // the minimum value is not a knot candidate start; handled below
                    }
                    let t = x[[ord[i], v]]; // next distinct value: a knot candidate
                    let hh = a2 - 2.0 * t * b2 + t * t * c2;
                    if hh <= 0.0 {
                        continue;
                    }
                    let mut perp2 = hh;
                    let mut py = a_y - t * c_y;
                    for k in 0..k_targets {
                        let hq = a_q[k] - t * c_q[k];
                        perp2 -= hq * hq;
                        py -= hq * basis.qty[k];
                    }
                    if q_lin.is_some() {
                        let hq = a_lin - t * c_lin;
                        perp2 -= hq * hq;
                        py -= hq * q_lin_ty;
                    }
                    let gain_hinge =
                        if perp2 > DEGENERACY_TOL * hh { py * py / perp2 } else { 0.0 };
                    let gain = gain_lin + gain_hinge;
                    if best.as_ref().is_none_or(|bst| gain > bst.0) {
                        best = Some((gain, parent, v, t));
                    }
                }
            }
        }
        let Some((gain, parent, v, knot)) = best else { break };
        if gain <= 0.0 || gain < MIN_GAIN_FRACTION * rss {
            break;
        }
        let parent_col = cols[parent].clone();
        let parent_def = defs[parent].clone();
        let mut added = false;
        for sign in [1i8, -1i8] {
            let h = Hinge { var: v, knot, sign };
            let col = Array1::from_shape_fn(n, |i| parent_col[i] * h.eval(x[[i, v]]));
            if basis.push(&col, &yv) {
                let mut def = parent_def.clone();
                def.push(h);
                defs.push(def);
                cols.push(col);
                added = true;
            }
        }
        if !added {
            break;
        }
        rss = (yv.dot(&yv) - basis.qty.iter().map(|t| t * t).sum::<f64>()).max(0.0);
        rss_trace.push(rss);
    }
    ForwardModel { defs, cols, rss_trace }
}

fn backward_pass(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    forward: ForwardModel,
    degree: usize,
    p: usize,
) -> Result<MarsFit> {
    let n = x.nrows();
    let rss_of = |keep: &[usize]| -> f64 {
        let mut a = Array2::zeros((n, keep.len()));
        for (jj, &j) in keep.iter().enumerate() {
            a.column_mut(jj).assign(&forward.cols[j]);
        }
        let beta = lstsq(a.view(), y);
        let resid = &y.to_owned() - &a.dot(&beta);
        resid.dot(&resid)
    };

    // An over-parameterized forward model has infinite GCV; pruning below
    // always reaches a finite one because C(1) = 1 < n.
    let mut current: Vec<usize> = (0..forward.defs.len()).collect();
    let mut best_keep = current.clone();
    let mut best_gcv = gcv_value(n, rss_of(&current), current.len(), degree);
    while current.len() > 1 {
        let mut step: Option<(f64, usize)> = None; // (rss, position in current)
        for pos in 1..current.len() {
            let mut keep = current.clone();
            keep.remove(pos);
            let rss = rss_of(&keep);
            if step.as_ref().is_none_or(|s| rss < s.0) {
                step = Some((rss, pos));
            }
        }
        let (rss, pos) = step.expect("at least one removable term");
        current.remove(pos);
        let gcv = gcv_value(n, rss, current.len(), degree);
        if gcv < best_gcv {
            best_gcv = gcv;
            best_keep = current.clone();
        }
    }

    let beta = {
        let mut a = Array2::zeros((n, best_keep.len()));
        for (jj, &j) in best_keep.iter().enumerate() {
            a.column_mut(jj).assign(&forward.cols[j]);
        }
        lstsq(a.view(), y)
    };
    let mut terms = Vec::new();
    let mut coefs = Vec::new();
    let mut intercept = 0.0;
    for (jj, &j) in best_keep.iter().enumerate() {
        if forward.defs[j].is_empty() {
            intercept = beta[jj];
        } else {
            terms.push(forward.defs[j].clone());
            coefs.push(beta[jj]);
        }
    }
    Ok(MarsFit {
        terms,
        coefficients: Array1::from_vec(coefs),
        intercept,
        gcv: best_gcv,
        forward_rss: forward.rss_trace,
        p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::Rng;

    fn spec(max_terms: usize, degree: usize) -> RegressorSpec {
        RegressorSpec::Mars { max_terms, degree }
    }

    #[test]
    fn gcv_formula_direct_case() {
        assert_abs_diff_eq!(gcv_value(10, 5.0, 3, 3), 3.125, epsilon = 1e-12);
        assert_abs_diff_eq!(gcv_value(10, 5.0, 3, 2), 3.125, epsilon = 1e-12);
        // degree 1 uses d = 2: C(3) = 5, GCV = 5/(10*(1-0.5)^2) = 2.
        assert_abs_diff_eq!(gcv_value(10, 5.0, 3, 1), 2.0, epsilon = 1e-12);
        assert!(gcv_value(4, 1.0, 3, 3).is_infinite());
    }

    #[test]
    fn linear_signal_recovered_by_hinge_pair() {
        let n = 100;
        let mut rng = crate::seeds::rng(61, 0);
        let x = Array2::from_shape_fn((n, 3), |_| rng.random_range(-2.0..2.0));
        let y = ndarray::Array1::from_shape_fn(n, |i| 2.0 * x[[i, 0]]);
        let fit = fit_mars(x.view(), y.view(), &spec(21, 1)).unwrap();
        let pred = fit.predict(x.view());
        let resid = &y - &pred;
        let rss = resid.dot(&resid);
        let tss = {
            let m = y.sum() / n as f64;
            y.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
        };
        assert!(1.0 - rss / tss > 0.99, "R2 = {}", 1.0 - rss / tss);
    }

    #[test]
    fn absolute_value_knot_found() {
        // Grid includes the kink at 1; the exact hinge pair gives RSS ~ 0.
        let n = 41;
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64 * 0.1 - 1.0); // -1.0 .. 3.0
        let y = ndarray::Array1::from_shape_fn(n, |i| (x[[i, 0]] - 1.0).abs());
        let fit = fit_mars(x.view(), y.view(), &spec(21, 1)).unwrap();
        let pred = fit.predict(x.view());
        let resid = &y - &pred;
        assert!(resid.dot(&resid) < 1e-6, "rss {}", resid.dot(&resid));
        let knots: Vec<f64> = fit.terms.iter().flatten().map(|h| h.knot).collect();
        assert!(knots.iter().any(|k| (k - 1.0).abs() <= 0.1 + 1e-9), "no knot near 1 in {knots:?}");
    }

    #[test]
    fn forward_rss_non_increasing() {
        let n = 120;
        let mut rng = crate::seeds::rng(71, 0);
        let x = Array2::<f64>::from_shape_fn((n, 4), |_| rng.random_range(-2.0..2.0));
        let y = ndarray::Array1::from_shape_fn(n, |i| {
            (x[[i, 0]] * 1.5).sin() + x[[i, 1]].max(0.0) + rng.random_range(-0.2..0.2)
        });
        let fit = fit_mars(x.view(), y.view(), &spec(21, 2)).unwrap();
        for w in fit.forward_rss.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "forward RSS increased: {:?}", w);
        }
        assert!(fit.forward_rss.len() > 1, "no terms were added");
    }

    #[test]
    fn degree_limits_interaction_order() {
        let n = 150;
        let mut rng = crate::seeds::rng(81, 0);
        let x = Array2::<f64>::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0));
        let y = ndarray::Array1::from_shape_fn(n, |i| {
            x[[i, 0]].max(0.0) * x[[i, 1]].max(0.0) + rng.random_range(-0.05..0.05)
        });
        let fit = fit_mars(x.view(), y.view(), &spec(15, 2)).unwrap();
        for term in &fit.terms {
            assert!(term.len() <= 2);
            let vars: Vec<usize> = term.iter().map(|h| h.var).collect();
            let mut dedup = vars.clone();
            dedup.dedup();
            assert_eq!(vars, dedup, "variable repeated within a term");
        }
    }

    #[test]
    fn rejects_tiny_inputs() {
        let x = ndarray::array![[1.0], [2.0], [3.0]];
        let y = ndarray::array![1.0, 2.0, 3.0];
        assert!(fit_mars(x.view(), y.view(), &spec(21, 1)).is_err());
    }
}
