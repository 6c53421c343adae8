//! Small numerical kernels shared by the potential construction and the rod
//! simulator: bracketing scans, bisection, and a dense linear solve.

use crate::error::{Error, Result};

/// Bisection for a root of `f` on `[lo, hi]`. Requires a sign change (a zero
/// at either endpoint counts). Stops when the bracket is narrower than `tol`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64, what: &str) -> Result<f64> {
    let (mut lo, mut hi) = (lo, hi);
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if !(flo.signum() != fhi.signum()) || flo.is_nan() || fhi.is_nan() {
        return Err(Error::NoBracket { what: what.to_string(), lo, hi });
    }
    while (hi - lo).abs() > tol {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Locate the switch point of a predicate: `pred(inside)` must be true and
/// `pred(outside)` false. Returns a point within `tol` of the boundary.
pub fn bisect_predicate<P: Fn(f64) -> bool>(pred: P, inside: f64, outside: f64, tol: f64) -> f64 {
    let (mut a, mut b) = (inside, outside);
    while (b - a).abs() > tol {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        if pred(mid) {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Walk from `start` toward `end` in increments of `step` and return the first
/// sub-interval (ordered as walked) over which `f` changes sign or hits zero.
pub fn scan_for_sign_change<F: Fn(f64) -> f64>(
    f: F,
    start: f64,
    end: f64,
    step: f64,
) -> Option<(f64, f64)> {
    let dir = if end >= start { 1.0 } else { -1.0 };
    let n = ((end - start).abs() / step).ceil() as usize;
    let mut prev_x = start;
    let mut prev_f = f(start);
    for k in 1..=n {
        let x = if k == n { end } else { start + dir * step * k as f64 };
        let fx = f(x);
        if fx == 0.0 || fx.signum() != prev_f.signum() {
            return Some((prev_x, x));
        }
        prev_x = x;
        prev_f = fx;
    }
    None
}

/// Solve `m · x = rhs` by Gaussian elimination with partial pivoting.
pub fn solve_dense(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Result<Vec<f64>> {
    let n = rhs.len();
    if m.len() != n || m.iter().any(|row| row.len() != n) {
        return Err(Error::InvalidParameter("solve_dense: shape mismatch".into()));
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[pivot][col].abs() < 1e-300 {
            return Err(Error::InvalidParameter("solve_dense: singular matrix".into()));
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..n {
            let factor = m[row][col] / m[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                m[row][k] -= factor * m[col][k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (rhs[row] - tail) / m[row][row];
    }
    Ok(x)
}

/// Evaluate `Σ c_k t^k` and its first three derivatives by Horner's rule.
pub fn poly_eval(coeffs: &[f64], t: f64, order: usize) -> f64 {
    let n = coeffs.len();
    if order >= n {
        return 0.0;
    }
    let mut acc = 0.0;
    for k in (order..n).rev() {
        // falling factorial k (k-1) ... (k-order+1)
        let mut fac = 1.0;
        for j in 0..order {
            fac *= (k - j) as f64;
        }
        acc = acc * t + fac * coeffs[k];
    }
    acc
}
