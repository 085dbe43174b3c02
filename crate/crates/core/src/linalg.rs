//! Small dense solvers used by the mesh fits and the generator.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Cholesky factor `L` of a symmetric positive-definite matrix (`A = L Lᵀ`).
///
/// Returns `None` when a pivot is not positive relative to the matrix scale,
/// i.e. the matrix is singular or indefinite to working precision.
pub fn cholesky(a: ArrayView2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(0.0_f64, f64::max).max(f64::MIN_POSITIVE);
    let tol = scale * n as f64 * 1e-13;
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > tol) {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Some(l)
}

/// Solves `L Lᵀ x = b` given the Cholesky factor.
pub fn cholesky_solve(l: ArrayView2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// LU solve with partial pivoting for a square system with several right-hand
/// sides (columns of `b`). Returns `None` for a singular matrix.
pub fn lu_solve(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut m = a.to_owned();
    let mut x = b.to_owned();
    let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs()))
            .expect("non-empty pivot range");
        if m[[pivot, col]].abs() <= scale * 1e-14 {
            return None;
        }
        if pivot != col {
            for c in 0..n {
                m.swap([pivot, c], [col, c]);
            }
            for c in 0..x.ncols() {
                x.swap([pivot, c], [col, c]);
            }
        }
        for row in col + 1..n {
            let f = m[[row, col]] / m[[col, col]];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                m[[row, c]] -= f * m[[col, c]];
            }
            for c in 0..x.ncols() {
                x[[row, c]] -= f * x[[col, c]];
            }
        }
    }
    for c in 0..x.ncols() {
        for row in (0..n).rev() {
            let mut s = x[[row, c]];
            for k in row + 1..n {
                s -= m[[row, k]] * x[[k, c]];
            }
            x[[row, c]] = s / m[[row, row]];
        }
    }
    Some(x)
}

/// Upper bound on the spectral radius via `‖Aᵏ‖_F^{1/k}` for `k = 1, 2, 4, …`.
///
/// Every term bounds the spectral radius from above, so the minimum over the
/// squarings is still a valid bound and converges to the radius.
pub fn spectral_radius_bound(a: ArrayView2<f64>, squarings: usize) -> f64 {
    // invariant: A^k = exp(log_scale) * unit, with ‖unit‖_F = 1
    let norm = frobenius(a);
    if norm == 0.0 {
        return 0.0;
    }
    let mut unit = &a / norm;
    let mut log_scale = norm.ln();
    let mut k = 1.0_f64;
    let mut best = norm;
    for _ in 0..squarings {
        unit = unit.dot(&unit);
        log_scale *= 2.0;
        k *= 2.0;
        let n = frobenius(unit.view());
        if n == 0.0 {
            return 0.0;
        }
        unit /= n;
        log_scale += n.ln();
        best = best.min((log_scale / k).exp());
    }
    best
}

fn frobenius(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}
