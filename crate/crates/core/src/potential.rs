//! The pair potential `U(x) = ψ((|x| − a)² − 4)`, its structural constants,
//! the coagulation thresholds derived from them, and a numerical checker for
//! the shape assumptions the rest of the crate relies on.
//!
//! `ψ` is the identity below −1, zero above 0, and on `(−1, 0)` it is
//! `ψ(s) = −q(−s)` with `q` the degree-7 two-point Hermite polynomial that
//! vanishes to third order at 0 and matches `(1, 1, 0, 0)` at 1. With this
//! bridge `ψ` is nondecreasing and three times continuously differentiable.

use std::fmt;

use crate::error::{invalid, Error, Result};
use crate::numerics::{bisect, bisect_predicate, poly_eval, scan_for_sign_change, solve_dense};

/// Absolute tolerance for every root located while deriving constants.
pub const ROOT_TOL: f64 = 1e-10;
/// Step of the bracketing scans that precede bisection.
pub const SCAN_STEP: f64 = 1e-3;
/// Grid step for the grid minimisations (`c₋`, `c_*`).
pub const MIN_GRID_STEP: f64 = 1e-4;

/// Which derivative of `U` to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Value,
    First,
    Second,
}

impl TryFrom<u8> for Order {
    type Error = Error;

    fn try_from(k: u8) -> Result<Self> {
        match k {
            0 => Ok(Order::Value),
            1 => Ok(Order::First),
            2 => Ok(Order::Second),
            _ => Err(invalid(format!("derivative order must be 0, 1 or 2 (got {k})"))),
        }
    }
}

/// Well distance `a` plus the eight coefficients (ascending powers) of the
/// bridge polynomial `q` on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSpec {
    a: f64,
    bridge: [f64; 8],
}

impl PotentialSpec {
    /// The example family: `a ≥ 4` and the degree-7 Hermite bridge.
    pub fn example(a: f64) -> Result<Self> {
        if !(a.is_finite() && a >= 4.0) {
            return Err(invalid(format!("well distance a must be >= 4 (got {a})")));
        }
        Self::with_bridge(a, hermite_bridge()?)
    }

    /// Any bridge polynomial; it must give a nondecreasing C³ `ψ`.
    pub fn with_bridge(a: f64, bridge: [f64; 8]) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(invalid(format!("well distance a must be positive (got {a})")));
        }
        check_bridge(&bridge)?;
        Ok(Self { a, bridge })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn bridge_coefficients(&self) -> &[f64; 8] {
        &self.bridge
    }

    /// Beyond this distance the argument of `ψ` is nonnegative, so `U` and all
    /// its derivatives vanish identically.
    pub fn cutoff(&self) -> f64 {
        self.a + 2.0
    }

    /// `ψ^{(k)}(s)` for `k ≤ 3`.
    pub fn psi(&self, s: f64, k: usize) -> f64 {
        if s <= -1.0 {
            match k {
                0 => s,
                1 => 1.0,
                _ => 0.0,
            }
        } else if s >= 0.0 {
            0.0
        } else {
            let v = poly_eval(&self.bridge, -s, k);
            if k % 2 == 0 {
                -v
            } else {
                v
            }
        }
    }

    pub fn eval(&self, x: f64, order: Order) -> f64 {
        match order {
            Order::Value => self.value(x),
            Order::First => self.derivative(x),
            Order::Second => self.second_derivative(x),
        }
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        let r = x.abs() - self.a;
        self.psi(r * r - 4.0, 0)
    }

    /// `U′(x)`; odd in `x`.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        let r = x.abs() - self.a;
        let s = r * r - 4.0;
        let du = if s <= -1.0 {
            2.0 * r
        } else if s >= 0.0 {
            return 0.0;
        } else {
            2.0 * r * poly_eval(&self.bridge, -s, 1)
        };
        if x < 0.0 {
            -du
        } else {
            du
        }
    }

    #[inline]
    pub fn second_derivative(&self, x: f64) -> f64 {
        let r = x.abs() - self.a;
        let s = r * r - 4.0;
        if s <= -1.0 {
            2.0
        } else if s >= 0.0 {
            0.0
        } else {
            4.0 * r * r * self.psi(s, 2) + 2.0 * self.psi(s, 1)
        }
    }
}

/// Coefficients of the unique degree-7 `q` with `q(0) = q′(0) = q″(0) = q‴(0) = 0`,
/// `q(1) = 1`, `q′(1) = 1`, `q″(1) = q‴(1) = 0`.
pub fn hermite_bridge() -> Result<[f64; 8]> {
    let mut rows = Vec::with_capacity(8);
    let mut rhs = Vec::with_capacity(8);
    for (t0, targets) in [(0.0, [0.0, 0.0, 0.0, 0.0]), (1.0, [1.0, 1.0, 0.0, 0.0])] {
        for (j, target) in targets.into_iter().enumerate() {
            let row = (0..8)
                .map(|k| {
                    if k < j {
                        0.0
                    } else {
                        let fac: f64 = (0..j).map(|i| (k - i) as f64).product();
                        fac * f64::powi(t0, (k - j) as i32)
                    }
                })
                .collect();
            rows.push(row);
            rhs.push(target);
        }
    }
    let c = solve_dense(rows, rhs)?;
    let mut out = [0.0; 8];
    out.copy_from_slice(&c);
    Ok(out)
}

fn check_bridge(q: &[f64; 8]) -> Result<()> {
    const KNOT_TOL: f64 = 1e-9;
    let at0 = (0..4).map(|k| poly_eval(q, 0.0, k).abs()).fold(0.0, f64::max);
    let at1 = [
        poly_eval(q, 1.0, 0) - 1.0,
        poly_eval(q, 1.0, 1) - 1.0,
        poly_eval(q, 1.0, 2),
        poly_eval(q, 1.0, 3),
    ]
    .iter()
    .map(|v| v.abs())
    .fold(0.0, f64::max);
    if at0 > KNOT_TOL || at1 > KNOT_TOL {
        return Err(invalid(format!(
            "bridge is not C3 at the knots (mismatch {:.3e} at 0, {:.3e} at 1)",
            at0, at1
        )));
    }
    let n = 10_000;
    for i in 0..=n {
        let t = i as f64 / n as f64;
        if poly_eval(q, t, 1) < -1e-12 {
            return Err(invalid(format!("bridge is decreasing at t = {t}")));
        }
    }
    Ok(())
}

/// Structural constants of `U`. Fields are public so degenerate inputs can be
/// fed to [`verify_assumptions`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialConstants {
    pub a: f64,
    pub u_a: f64,
    /// Interaction range.
    pub b: f64,
    /// `D = (b1, b2)` is the component of `{U″ > 0}` containing `a`.
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
    /// `č = U″(a)`.
    pub c_check: f64,
    /// Quadratic lower bound on `D`: `c₋ (g − a)² ≤ U(g) − U(a)`.
    pub c_minus: f64,
}

pub fn derive_constants(spec: &PotentialSpec, tol: f64) -> Result<PotentialConstants> {
    if !(tol > 0.0 && tol <= 1e-6) {
        return Err(invalid(format!("root tolerance must lie in (0, 1e-6] (got {tol})")));
    }
    let a = spec.a();
    let u = |x: f64| spec.value(x);
    let u2 = |x: f64| spec.second_derivative(x);

    // Interaction range: outward scan for the first zero, then bisection on U ≠ 0.
    let scan_cap = 10.0 * a + 10.0;
    let mut x = a;
    while u(x) != 0.0 {
        x += SCAN_STEP;
        if x > scan_cap {
            return Err(Error::NoBracket { what: "interaction range b".into(), lo: a, hi: scan_cap });
        }
    }
    let b = bisect_predicate(|y| u(y) != 0.0, x - SCAN_STEP, x, tol);

    let (lo, hi) = scan_for_sign_change(u2, a, b, SCAN_STEP)
        .ok_or_else(|| Error::NoBracket { what: "b2 (U'' sign change)".into(), lo: a, hi: b })?;
    let b2 = bisect(u2, lo, hi, tol, "b2")?;
    let (hi1, lo1) = scan_for_sign_change(u2, a, 0.0, SCAN_STEP)
        .ok_or_else(|| Error::NoBracket { what: "b1 (U'' sign change)".into(), lo: 0.0, hi: a })?;
    let b1 = bisect(u2, lo1, hi1, tol, "b1")?;

    let u_a = u(a);
    let b3 = solve_b3(spec, b1, b2, tol)?;
    let b4 = bisect(|y| u(y) - u(b3), a, b2, tol, "b4")?;

    let c_minus = grid_points(b1, b2, MIN_GRID_STEP)
        .filter(|g| (g - a).abs() > 0.5 * MIN_GRID_STEP)
        .map(|g| (u(g) - u_a) / ((g - a) * (g - a)))
        .fold(f64::INFINITY, f64::min);

    Ok(PotentialConstants { a, u_a, b, b1, b2, b3, b4, c_check: u2(a), c_minus })
}

/// `b3 ∈ (b1, a)` with `U(b2) + U(b3) = U(a)`.
fn solve_b3(spec: &PotentialSpec, b1: f64, b2: f64, tol: f64) -> Result<f64> {
    let (a, ub2, ua) = (spec.a(), spec.value(b2), spec.value(spec.a()));
    bisect(|y| ub2 + spec.value(y) - ua, b1, a, tol, "b3")
}

/// Interior points of `(lo, hi)` at spacing `step`.
fn grid_points(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> {
    let n = ((hi - lo) / step).ceil() as usize;
    (1..n).map(move |k| lo + step * k as f64)
}

/// Coagulation-analysis thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdSet {
    pub b2p: f64,
    pub b3p: f64,
    pub b4p: f64,
    /// `δ̄ = U(b′₂) + U(b′₃) − U(a)`.
    pub delta_bar: f64,
    pub delta1: f64,
    /// `inf U″` over `D″ = (b′₃, b′₂]`.
    pub c_star: f64,
    pub kappa: f64,
    pub theta: f64,
}

impl ThresholdSet {
    /// Gap in `D′ = (b′₃, b′₄)`.
    pub fn in_d_prime(&self, g: f64) -> bool {
        g > self.b3p && g < self.b4p
    }

    /// Gap in `D″ = (b′₃, b′₂]`.
    pub fn in_d_double_prime(&self, g: f64) -> bool {
        g > self.b3p && g <= self.b2p
    }
}

/// `b′₃ = b₃ − margin·(b₃ − b₁)`; `b′₂` is then placed so that the energy it
/// gives up is half of what `b′₃` gains, which makes `δ̄ > 0` by construction.
/// `b′₄` matches the depth of `b′₃` on the right of the well.
pub fn derive_thresholds(
    spec: &PotentialSpec,
    constants: &PotentialConstants,
    margin: f64,
    kappa: f64,
    theta: f64,
) -> Result<ThresholdSet> {
    if !(margin > 0.0 && margin < 1.0) {
        return Err(invalid(format!("margin must lie in (0, 1) (got {margin})")));
    }
    if !(kappa > 0.5 && kappa < 1.0) {
        return Err(invalid(format!("kappa must lie in (1/2, 1) (got {kappa})")));
    }
    if !(theta > 0.0) {
        return Err(invalid(format!("theta must be positive (got {theta})")));
    }
    let c = constants;
    let u = |x: f64| spec.value(x);

    let b3p = c.b3 - margin * (c.b3 - c.b1);
    if b3p <= c.b1 {
        return Err(Error::Threshold(format!("b3' = {b3p} is not above b1 = {}", c.b1)));
    }
    if 2.0 * b3p <= c.b {
        return Err(Error::Threshold(format!(
            "margin {margin} too large: 2 b3' = {} <= b = {}",
            2.0 * b3p,
            c.b
        )));
    }
    let gain = u(b3p) - u(c.b3);
    let target = u(c.b2) - 0.5 * gain;
    let b2p = bisect(|y| u(y) - target, c.b4, c.b2, ROOT_TOL, "b2'")
        .map_err(|e| Error::Threshold(format!("cannot place b2': {e}")))?;
    let b4p = bisect(|y| u(y) - u(b3p), c.a, b2p, ROOT_TOL, "b4'")
        .map_err(|_| Error::Threshold(format!("margin {margin} too large: U(b3') >= U(b2')")))?;
    let delta_bar = u(b2p) + u(b3p) - c.u_a;
    if !(delta_bar > 0.0) {
        return Err(Error::Threshold(format!("delta_bar = {delta_bar} is not positive")));
    }
    if !(b4p > c.b4 && b4p < b2p && b2p < c.b2 && b3p < c.b3) {
        return Err(Error::Threshold(format!(
            "threshold order violated: b3'={b3p} b4'={b4p} b2'={b2p}"
        )));
    }
    let c_star = grid_points(b3p, b2p, MIN_GRID_STEP)
        .chain(std::iter::once(b2p))
        .map(|x| spec.second_derivative(x))
        .fold(f64::INFINITY, f64::min);
    if !(c_star > 0.0) {
        return Err(Error::Threshold(format!("U'' is not positive on D'' (c_* = {c_star})")));
    }
    Ok(ThresholdSet {
        b2p,
        b3p,
        b4p,
        delta_bar,
        delta1: 0.5 * delta_bar,
        c_star,
        kappa,
        theta,
    })
}

/// One assumption clause and its outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ClauseResult {
    pub clause: &'static str,
    pub passed: bool,
    pub witness: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssumptionReport {
    pub clauses: Vec<ClauseResult>,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.clauses.iter().all(|c| c.passed)
    }

    pub fn get(&self, clause: &str) -> Option<&ClauseResult> {
        self.clauses.iter().find(|c| c.clause == clause)
    }

    fn push(&mut self, clause: &'static str, passed: bool, witness: String) {
        self.clauses.push(ClauseResult { clause, passed, witness });
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.clauses {
            writeln!(
                f,
                "{} = {} ({})",
                c.clause,
                if c.passed { "pass" } else { "fail" },
                c.witness
            )?;
        }
        Ok(())
    }
}

/// Grid-check every clause of the two shape assumptions over `[0, b + 1]`.
pub fn verify_assumptions(
    spec: &PotentialSpec,
    constants: &PotentialConstants,
    grid_step: f64,
) -> Result<AssumptionReport> {
    if !(grid_step > 0.0 && grid_step <= 1e-3) {
        return Err(invalid(format!("grid step must lie in (0, 1e-3] (got {grid_step})")));
    }
    let c = constants;
    let u = |x: f64| spec.value(x);
    let top = c.b + 1.0;
    let n = (top / grid_step).ceil() as usize;
    let grid: Vec<f64> = (0..=n).map(|k| (k as f64 * grid_step).min(top)).collect();
    let mut report = AssumptionReport::default();

    // I(i)
    let asym = grid
        .iter()
        .map(|&x| {
            (u(x) - u(-x))
                .abs()
                .max((spec.derivative(x) + spec.derivative(-x)).abs())
                .max((spec.second_derivative(x) - spec.second_derivative(-x)).abs())
        })
        .fold(0.0, f64::max);
    report.push("I(i)", asym == 0.0, format!("max |U(x) - U(-x)| = {asym:e}"));

    // I(ii): C3 joins at the knots of ψ, finite range, ψ nondecreasing.
    let h = 1e-12;
    let knot_jump = [-1.0, 0.0]
        .iter()
        .flat_map(|&s| (0..4).map(move |k| (s, k)))
        .map(|(s, k)| (spec.psi(s - h, k) - spec.psi(s + h, k)).abs())
        .fold(0.0, f64::max);
    let tail = grid
        .iter()
        .filter(|&&x| x >= c.b)
        .map(|&x| u(x).abs().max(spec.derivative(x).abs()).max(spec.second_derivative(x).abs()))
        .fold(0.0, f64::max);
    let min_slope = (0..=10_000)
        .map(|i| spec.psi(-(i as f64) / 10_000.0, 1))
        .fold(f64::INFINITY, f64::min);
    report.push(
        "I(ii)",
        knot_jump <= 1e-9 && tail == 0.0 && min_slope >= -1e-12,
        format!("knot jump = {knot_jump:e}, max |U^(k)| beyond b = {tail:e}, min psi' = {min_slope:e}"),
    );

    // I(iii)
    let (argmin, umin) = grid
        .iter()
        .map(|&x| (x, u(x)))
        .fold((f64::NAN, f64::INFINITY), |acc, p| if p.1 < acc.1 { p } else { acc });
    let others_above = grid
        .iter()
        .filter(|&&x| (x - c.a).abs() > 0.5 * grid_step)
        .all(|&x| u(x) > c.u_a);
    let c_check = spec.second_derivative(c.a);
    report.push(
        "I(iii)",
        (argmin - c.a).abs() <= grid_step && umin >= c.u_a && others_above && c_check > 0.0,
        format!("grid argmin = {argmin}, U(a) = {}, c_check = {c_check}", c.u_a),
    );

    // I(iv)
    report.push("I(iv)", c.b < 2.0 * c.a, format!("b = {}, 2a = {}", c.b, 2.0 * c.a));

    // II(i)
    let (ub1, ub2) = (u(c.b1), u(c.b2));
    report.push(
        "II(i)",
        2.0 * ub2 > c.u_a && ub1 + ub2 > c.u_a,
        format!("2U(b2) = {}, U(b1) + U(b2) = {}, U(a) = {}", 2.0 * ub2, ub1 + ub2, c.u_a),
    );

    // II(ii)
    let min_du = grid
        .iter()
        .filter(|&&x| x >= c.b2)
        .map(|&x| spec.derivative(x))
        .fold(f64::INFINITY, f64::min);
    report.push("II(ii)", min_du >= 0.0, format!("min U'(x) on [b2, b+1] = {min_du:e}"));

    // II(iii): b3 is recomputed from (b1, b2) so tampered constants are caught.
    match solve_b3(spec, c.b1, c.b2, ROOT_TOL) {
        Ok(b3) if b3 > c.b1 && b3 < c.a => {
            report.push("II(iii)", 2.0 * b3 > c.b, format!("b3 = {b3}, 2 b3 = {}, b = {}", 2.0 * b3, c.b))
        }
        _ => report.push("II(iii)", false, "b3 undefined: no root of U(b2) + U(x) = U(a) in (b1, a)".into()),
    }
    Ok(report)
}

/// The potential, its constants and thresholds, bundled for the simulators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model {
    pub spec: PotentialSpec,
    pub constants: PotentialConstants,
    pub thresholds: ThresholdSet,
}

impl Model {
    pub fn example(a: f64, margin: f64, kappa: f64, theta: f64) -> Result<Self> {
        let spec = PotentialSpec::example(a)?;
        let constants = derive_constants(&spec, ROOT_TOL)?;
        let thresholds = derive_thresholds(&spec, &constants, margin, kappa, theta)?;
        Ok(Self { spec, constants, thresholds })
    }
}
