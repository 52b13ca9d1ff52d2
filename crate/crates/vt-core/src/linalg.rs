//! Small dense linear algebra and scalar special functions used across the
//! crate: Householder least squares, Gaussian elimination, Cholesky factors,
//! the exact probability-simplex least-squares solver, and the normal tail.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Least squares `argmin_b ||A b - y||^2` via Householder QR.
///
/// Columns whose pivot collapses below `n_cols * eps * max_pivot` get a zero
/// coefficient instead of amplifying noise; callers supply well-posed designs.
pub fn lstsq(a: ArrayView2<f64>, y: ArrayView1<f64>) -> Array1<f64> {
    let n = a.nrows();
    let p = a.ncols();
    assert_eq!(n, y.len(), "lstsq: row mismatch");
    assert!(n >= 1 && p >= 1, "lstsq: empty system");
    let mut r = a.to_owned();
    let mut q_t_y = y.to_owned();
    let steps = p.min(n);
    for k in 0..steps {
        // Householder vector for column k below the diagonal.
        let mut norm2 = 0.0;
        for i in k..n {
            norm2 += r[[i, k]] * r[[i, k]];
        }
        let norm = norm2.sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if r[[k, k]] >= 0.0 { -norm } else { norm };
        let mut v = vec![0.0; n - k];
        v[0] = r[[k, k]] - alpha;
        for i in (k + 1)..n {
            v[i - k] = r[[i, k]];
        }
        let v_norm2: f64 = v.iter().map(|x| x * x).sum();
        if v_norm2 == 0.0 {
            continue;
        }
        r[[k, k]] = alpha;
        for i in (k + 1)..n {
            r[[i, k]] = 0.0;
        }
        for j in (k + 1)..p {
            let mut dot = 0.0;
            for i in k..n {
                dot += v[i - k] * r[[i, j]];
            }
            let scale = 2.0 * dot / v_norm2;
            for i in k..n {
                r[[i, j]] -= scale * v[i - k];
            }
        }
        let mut dot = 0.0;
        for i in k..n {
            dot += v[i - k] * q_t_y[i];
        }
        let scale = 2.0 * dot / v_norm2;
        for i in k..n {
            q_t_y[i] -= scale * v[i - k];
        }
    }
    // Back substitution with a rank guard on tiny pivots.
    let mut max_pivot = 0.0f64;
    for k in 0..steps {
        max_pivot = max_pivot.max(r[[k, k]].abs());
    }
    let tol = max_pivot * (p as f64) * f64::EPSILON;
    let mut beta = Array1::zeros(p);
    for k in (0..steps).rev() {
        let mut acc = q_t_y[k];
        for j in (k + 1)..p {
            acc -= r[[k, j]] * beta[j];
        }
        beta[k] = if r[[k, k]].abs() <= tol { 0.0 } else { acc / r[[k, k]] };
    }
    beta
}

/// Solves a square system by Gaussian elimination with partial pivoting.
/// Returns `None` when the matrix is numerically singular.
pub fn solve(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    assert_eq!(n, b.len());
    let mut m = a.clone();
    let mut x = b.clone();
    for k in 0..n {
        let mut piv = k;
        for i in (k + 1)..n {
            if m[[i, k]].abs() > m[[piv, k]].abs() {
                piv = i;
            }
        }
        if m[[piv, k]].abs() < 1e-12 {
            return None;
        }
        if piv != k {
            for j in 0..n {
                m.swap([k, j], [piv, j]);
            }
            x.swap(k, piv);
        }
        for i in (k + 1)..n {
            let f = m[[i, k]] / m[[k, k]];
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                m[[i, j]] -= f * m[[k, j]];
            }
            x[i] -= f * x[k];
        }
    }
    for k in (0..n).rev() {
        let mut acc = x[k];
        for j in (k + 1)..n {
            acc -= m[[k, j]] * x[j];
        }
        x[k] = acc / m[[k, k]];
    }
    Some(x)
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let mut l: Array2<f64> = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut acc = a[[i, j]];
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if acc <= 0.0 {
                    return None;
                }
                l[[i, j]] = acc.sqrt();
            } else {
                l[[i, j]] = acc / l[[j, j]];
            }
        }
    }
    Some(l)
}

/// Exact `argmin_w ||Z w - y||^2` over the probability simplex
/// `{w : w >= 0, sum w = 1}`.
///
/// The minimizer lies in the relative interior of one face, where it solves
/// the equality-constrained problem restricted to its support. All `2^K - 1`
/// supports are enumerated (K is small, the candidate-learner count), each
/// solved through its KKT system, and the best feasible candidate wins. Ties
/// go to the sparser, lexicographically earlier support.
pub fn simplex_lstsq(z: ArrayView2<f64>, y: ArrayView1<f64>) -> Array1<f64> {
    let n = z.nrows();
    let k = z.ncols();
    assert_eq!(n, y.len());
    assert!(k >= 1, "simplex_lstsq: no columns");
    assert!(k <= 20, "simplex_lstsq: support enumeration needs K <= 20");
    // Gram matrix and right-hand side, computed once.
    let mut gram = Array2::zeros((k, k));
    let mut zty = Array1::zeros(k);
    for a in 0..k {
        for b in a..k {
            let mut dot = 0.0;
            for i in 0..n {
                dot += z[[i, a]] * z[[i, b]];
            }
            gram[[a, b]] = dot;
            gram[[b, a]] = dot;
        }
        let mut dot = 0.0;
        for i in 0..n {
            dot += z[[i, a]] * y[i];
        }
        zty[a] = dot;
    }
    let objective = |w: &Array1<f64>| -> f64 {
        let mut total = 0.0;
        for i in 0..n {
            let mut pred = 0.0;
            for j in 0..k {
                pred += z[[i, j]] * w[j];
            }
            let d = pred - y[i];
            total += d * d;
        }
        total
    };

    let mut best: Option<(f64, Array1<f64>)> = None;
    let mut masks: Vec<u32> = (1u32..(1u32 << k)).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    for mask in masks {
        let support: Vec<usize> = (0..k).filter(|j| mask >> j & 1 == 1).collect();
        let s = support.len();
        // KKT system for min ||Z_S w - y||^2 subject to 1' w = 1.
        let mut kkt = Array2::zeros((s + 1, s + 1));
        let mut rhs = Array1::zeros(s + 1);
        for (ai, &a) in support.iter().enumerate() {
            for (bi, &b) in support.iter().enumerate() {
                kkt[[ai, bi]] = gram[[a, b]];
            }
            kkt[[ai, s]] = 1.0;
            kkt[[s, ai]] = 1.0;
            rhs[ai] = zty[a];
        }
        rhs[s] = 1.0;
        let Some(sol) = solve(&kkt, &rhs) else { continue };
        if support.iter().enumerate().any(|(ai, _)| sol[ai] < -1e-10) {
            continue;
        }
        let mut w = Array1::zeros(k);
        let mut total = 0.0;
        for (ai, &a) in support.iter().enumerate() {
            w[a] = sol[ai].max(0.0);
            total += w[a];
        }
        if total <= 0.0 {
            continue;
        }
        w.mapv_inplace(|v| v / total);
        let obj = objective(&w);
        match &best {
            Some((b, _)) if obj >= b - 1e-12 => {}
            _ => best = Some((obj, w)),
        }
    }
    best.expect("simplex_lstsq: singleton supports are always feasible").1
}

/// Complementary error function.
///
/// Rational approximation with relative error below 1.2e-7 everywhere, which
/// is ample for the p-value thresholds used by the conditional tree.
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.265_512_23
            + t * (1.000_023_68
                + t * (0.374_091_96
                    + t * (0.096_784_18
                        + t * (-0.186_288_06
                            + t * (0.278_868_07
                                + t * (-1.135_203_98
                                    + t * (1.488_515_87
                                        + t * (-0.822_152_23 + t * 0.170_872_77)))))))))
            .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Standard normal upper tail `P(Z > x)`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn lstsq_matches_normal_equations() {
        let a = array![[1.0, 0.5], [1.0, 1.5], [1.0, 2.0], [1.0, 4.0]];
        let y = array![1.0, 2.0, 2.5, 5.0];
        let beta = lstsq(a.view(), y.view());
        // Normal equations solved by hand: (A'A) b = A'y.
        let ata = array![[4.0, 8.0], [8.0, 22.5]];
        let aty = array![10.5, 28.5];
        let expect = solve(&ata, &aty).unwrap();
        assert_abs_diff_eq!(beta[0], expect[0], epsilon = 1e-10);
        assert_abs_diff_eq!(beta[1], expect[1], epsilon = 1e-10);
    }

    #[test]
    fn lstsq_zeroes_dependent_column() {
        let a = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let y = array![1.0, 2.0, 3.0];
        let beta = lstsq(a.view(), y.view());
        let fitted0 = a[[0, 0]] * beta[0] + a[[0, 1]] * beta[1];
        assert_abs_diff_eq!(fitted0, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn solve_rejects_singular() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        let b = array![1.0, 2.0];
        assert!(solve(&a, &b).is_none());
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = array![[1.0, 0.7], [0.7, 1.0]];
        let l = cholesky(&a).unwrap();
        let rec = l.dot(&l.t());
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(rec[[i, j]], a[[i, j]], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn simplex_solver_beats_fine_grid() {
        let z = array![
            [1.0, 0.2, 0.1],
            [0.9, 0.4, 0.0],
            [1.1, 0.1, 0.3],
            [1.0, 0.3, 0.2],
            [0.8, 0.2, 0.4]
        ];
        let y = array![0.9, 0.85, 1.0, 0.95, 0.75];
        let w = simplex_lstsq(z.view(), y.view());
        assert!(w.iter().all(|&v| v >= 0.0));
        assert_abs_diff_eq!(w.sum(), 1.0, epsilon = 1e-10);
        let risk = |w: &[f64]| -> f64 {
            (0..z.nrows())
                .map(|i| {
                    let p: f64 = (0..3).map(|j| z[[i, j]] * w[j]).sum();
                    (p - y[i]) * (p - y[i])
                })
                .sum()
        };
        let achieved = risk(w.as_slice().unwrap());
        let steps = 100;
        for a in 0..=steps {
            for b in 0..=(steps - a) {
                let grid = [
                    a as f64 / steps as f64,
                    b as f64 / steps as f64,
                    (steps - a - b) as f64 / steps as f64,
                ];
                assert!(achieved <= risk(&grid) + 1e-9);
            }
        }
    }

    #[test]
    fn normal_tail_reference_values() {
        assert_abs_diff_eq!(erfc(0.0), 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(erfc(1.0), 0.157_299_207, epsilon = 1e-6);
        assert_abs_diff_eq!(normal_sf(0.0), 0.5, epsilon = 1e-7);
        assert_abs_diff_eq!(normal_sf(1.96), 0.024_997_9, epsilon = 1e-6);
        assert_abs_diff_eq!(normal_sf(-1.0), 0.841_344_7, epsilon = 1e-6);
    }
}
