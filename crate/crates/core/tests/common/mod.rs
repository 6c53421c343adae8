//! Closed-form oracles shared by the integration tests. Nothing here calls
//! into the library's numerics.

#![allow(dead_code)]

/// The degree-7 bridge `q(t) = 20t⁴ − 45t⁵ + 36t⁶ − 10t⁷`.
pub fn q(t: f64) -> f64 {
    t.powi(4) * (20.0 - 45.0 * t + 36.0 * t * t - 10.0 * t.powi(3))
}

pub fn dq(t: f64) -> f64 {
    t.powi(3) * (80.0 - 225.0 * t + 216.0 * t * t - 70.0 * t.powi(3))
}

pub fn d2q(t: f64) -> f64 {
    t * t * (240.0 - 900.0 * t + 1080.0 * t * t - 420.0 * t.powi(3))
}

/// `U(x) = ψ((|x| − a)² − 4)` with `ψ(s) = s` below −1, `−q(−s)` on
/// `(−1, 0)`, and 0 above.
pub fn u(x: f64, a: f64) -> f64 {
    let r = x.abs() - a;
    let s = r * r - 4.0;
    if s <= -1.0 {
        s
    } else if s >= 0.0 {
        0.0
    } else {
        -q(-s)
    }
}

pub fn u2(x: f64, a: f64) -> f64 {
    let r = x.abs() - a;
    let s = r * r - 4.0;
    if s <= -1.0 {
        2.0
    } else if s >= 0.0 {
        0.0
    } else {
        -4.0 * r * r * d2q(-s) + 2.0 * dq(-s)
    }
}

/// Plain bisection for a sign change of `f` on `[lo, hi]`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    assert!(flo * f(hi) <= 0.0, "no sign change on [{lo}, {hi}]");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Sorted positions from a starting point and a list of gaps.
pub fn from_gaps(start: f64, gaps: &[f64]) -> Vec<f64> {
    let mut x = vec![start];
    for g in gaps {
        x.push(x.last().unwrap() + g);
    }
    x
}

/// Central finite-difference gradient.
pub fn fd_gradient(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let up = f(&y);
            y[i] = x[i] - h;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn sample_variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}
