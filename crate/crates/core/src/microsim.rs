//! Euler–Maruyama integration of the particle SDE
//! `dx_i = −½ ε^{−α} ∂H/∂x_i dt + dw_i` and of its noiseless gradient flow.
//!
//! Positions are kept sorted; pair sums run over a forward window of the
//! sorted array and stop at the cutoff `a + 2`, beyond which `U` vanishes.
//! Macroscopic time is `ε³` times the microscopic clock and enters only as
//! bookkeeping.

use std::io::Write;
use std::ops::ControlFlow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, Uniform};

use crate::diagnostics;
use crate::error::{invalid, Error, Result};
use crate::potential::{PotentialConstants, PotentialSpec};

/// Flags for the exponent constraints under which the limit theorems hold.
/// They are recorded, never enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintFlags {
    pub alpha_gt_4: bool,
    pub mu_gt_half: bool,
    pub nu_gt_2: bool,
    pub alpha_gt_2nu_plus_3: bool,
    pub alpha_gt_2nu_tilde_plus_3: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingParams {
    pub epsilon: f64,
    pub alpha: f64,
    pub rho: Vec<f64>,
    pub n_particles: Vec<usize>,
    pub mu: f64,
    pub nu: f64,
    pub nu_tilde: f64,
    pub dt_safety: f64,
}

impl ScalingParams {
    pub fn new(
        epsilon: f64,
        alpha: f64,
        rho: Vec<f64>,
        mu: f64,
        nu: f64,
        nu_tilde: f64,
        dt_safety: f64,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(invalid(format!("epsilon must lie in (0, 1) (got {epsilon})")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid(format!("alpha must be positive (got {alpha})")));
        }
        if !(dt_safety > 0.0 && dt_safety <= 1.0) {
            return Err(invalid(format!("dt_safety must lie in (0, 1] (got {dt_safety})")));
        }
        if rho.is_empty() {
            return Err(Error::Empty("rho"));
        }
        for (name, v) in [("mu", mu), ("nu", nu), ("nu_tilde", nu_tilde)] {
            if !v.is_finite() {
                return Err(invalid(format!("{name} must be finite")));
            }
        }
        let mut n_particles = Vec::with_capacity(rho.len());
        for &r in &rho {
            if !(r > 0.0 && r.is_finite()) {
                return Err(invalid(format!("masses must be positive (got {r})")));
            }
            let n = (r / epsilon).round();
            if n < 2.0 {
                return Err(invalid(format!(
                    "mass {r} at epsilon {epsilon} gives {n} particles; each chain needs at least 2"
                )));
            }
            n_particles.push(n as usize);
        }
        Ok(Self { epsilon, alpha, rho, n_particles, mu, nu, nu_tilde, dt_safety })
    }

    pub fn total_particles(&self) -> usize {
        self.n_particles.iter().sum()
    }

    /// `½ ε^{−α}`.
    pub fn drift_scale(&self) -> f64 {
        0.5 * self.epsilon.powf(-self.alpha)
    }

    /// Microscopic time per unit macroscopic time, `ε^{−3}`.
    pub fn time_change(&self) -> f64 {
        self.epsilon.powi(-3)
    }

    pub fn constraint_flags(&self) -> ConstraintFlags {
        ConstraintFlags {
            alpha_gt_4: self.alpha > 4.0,
            mu_gt_half: self.mu > 0.5,
            nu_gt_2: self.nu > 2.0,
            alpha_gt_2nu_plus_3: self.alpha > 2.0 * self.nu + 3.0,
            alpha_gt_2nu_tilde_plus_3: self.alpha > 2.0 * self.nu_tilde + 3.0,
        }
    }
}

/// `s_f · ε^α / (2 č N)` with `N` the total particle count.
pub fn stable_dt(params: &ScalingParams, constants: &PotentialConstants) -> f64 {
    params.dt_safety * params.epsilon.powf(params.alpha)
        / (2.0 * constants.c_check * params.total_particles() as f64)
}

#[derive(Debug, Clone)]
pub struct ParticleState {
    pub positions: Vec<f64>,
    pub t_micro: f64,
    pub rng: ChaCha8Rng,
}

impl ParticleState {
    pub fn new(positions: Vec<f64>, seed: u64) -> Self {
        Self::from_parts(positions, ChaCha8Rng::seed_from_u64(seed))
    }

    /// Positions are sorted on entry.
    pub fn from_parts(mut positions: Vec<f64>, rng: ChaCha8Rng) -> Self {
        sort_positions(&mut positions);
        Self { positions, t_micro: 0.0, rng }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

#[inline]
fn sort_positions(x: &mut [f64]) {
    if !x.windows(2).all(|w| w[0] <= w[1]) {
        x.sort_unstable_by(f64::total_cmp);
    }
}

/// `H(x) = Σ_{i<j} U(x_i − x_j)` over a sorted configuration.
pub fn hamiltonian(x: &[f64], spec: &PotentialSpec) -> f64 {
    let cut = spec.cutoff();
    let mut h = 0.0;
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let d = x[i] - x[j];
            if -d >= cut {
                break;
            }
            h += spec.value(d);
        }
    }
    h
}

/// `∂H/∂x_i = Σ_{j≠i} U′(x_i − x_j)` over a sorted configuration.
pub fn grad_hamiltonian(x: &[f64], spec: &PotentialSpec) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    grad_into(x, spec, &mut out);
    out
}

pub fn grad_into(x: &[f64], spec: &PotentialSpec, out: &mut [f64]) {
    debug_assert_eq!(x.len(), out.len());
    let cut = spec.cutoff();
    out.iter_mut().for_each(|f| *f = 0.0);
    for (i, &xi) in x.iter().enumerate() {
        let (head, tail) = out.split_at_mut(i + 1);
        let fi = &mut head[i];
        for (&xj, fj) in x[i + 1..].iter().zip(tail) {
            let d = xi - xj;
            if -d >= cut {
                break;
            }
            let du = spec.derivative(d);
            *fi += du;
            *fj -= du;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    On,
    Off,
}

/// Explicit stepper for one run. Owns the force buffer so the hot loop does
/// not allocate.
#[derive(Debug, Clone)]
pub struct Integrator {
    spec: PotentialSpec,
    a: f64,
    b: f64,
    epsilon: f64,
    drift: f64,
    max_dt: f64,
    dt: f64,
    noise: Noise,
    force: Vec<f64>,
}

impl Integrator {
    /// The working step is `stable_dt(params)` unless `dt_override` is given.
    /// Any step larger than the bound at unit safety factor is rejected.
    pub fn new(
        spec: PotentialSpec,
        constants: &PotentialConstants,
        params: &ScalingParams,
        dt_override: Option<f64>,
        noise: Noise,
    ) -> Result<Self> {
        let max_dt = stable_dt(&ScalingParams { dt_safety: 1.0, ..params.clone() }, constants);
        let dt = match dt_override {
            Some(dt) if !(dt > 0.0) => return Err(invalid(format!("dt_override must be positive (got {dt})"))),
            Some(dt) if dt > max_dt => return Err(Error::StepTooLarge { dt, max_dt }),
            Some(dt) => dt,
            None => stable_dt(params, constants),
        };
        Ok(Self {
            spec,
            a: constants.a,
            b: constants.b,
            epsilon: params.epsilon,
            drift: params.drift_scale(),
            max_dt,
            dt,
            noise,
            force: vec![0.0; params.total_particles()],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn max_dt(&self) -> f64 {
        self.max_dt
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn noise(&self) -> Noise {
        self.noise
    }

    pub fn spec(&self) -> &PotentialSpec {
        &self.spec
    }

    fn check_dt(&self, dt: f64) -> Result<()> {
        if !(dt >= 0.0) {
            return Err(invalid(format!("time step must be nonnegative (got {dt})")));
        }
        if dt > self.max_dt {
            return Err(Error::StepTooLarge { dt, max_dt: self.max_dt });
        }
        Ok(())
    }

    /// One Euler–Maruyama step of size `dt`, drawing the noise from the
    /// state's generator.
    pub fn em_step(&mut self, state: &mut ParticleState, dt: f64) -> Result<()> {
        self.check_dt(dt)?;
        if dt > 0.0 {
            self.step_unchecked(state, dt);
        }
        Ok(())
    }

    /// One step with caller-supplied Brownian increments `dw` (each of
    /// variance `dt`). Used for coupled-path convergence checks.
    pub fn em_step_with_increments(&mut self, x: &mut [f64], dt: f64, dw: &[f64]) -> Result<()> {
        self.check_dt(dt)?;
        if dw.len() != x.len() {
            return Err(invalid("increment vector length differs from particle count"));
        }
        self.ensure_buffer(x.len());
        grad_into(x, &self.spec, &mut self.force);
        let k = self.drift * dt;
        for ((xi, f), w) in x.iter_mut().zip(&self.force).zip(dw) {
            *xi += -k * f + w;
        }
        sort_positions(x);
        Ok(())
    }

    fn ensure_buffer(&mut self, n: usize) {
        if self.force.len() != n {
            self.force.resize(n, 0.0);
        }
    }

    #[inline]
    fn step_unchecked(&mut self, state: &mut ParticleState, dt: f64) {
        self.ensure_buffer(state.positions.len());
        grad_into(&state.positions, &self.spec, &mut self.force);
        let k = self.drift * dt;
        match self.noise {
            Noise::On => {
                let sd = dt.sqrt();
                let rng = &mut state.rng;
                for (xi, f) in state.positions.iter_mut().zip(&self.force) {
                    let z: f64 = rng.sample(StandardNormal);
                    *xi += -k * f + sd * z;
                }
            }
            Noise::Off => {
                for (xi, f) in state.positions.iter_mut().zip(&self.force) {
                    *xi -= k * f;
                }
            }
        }
        sort_positions(&mut state.positions);
        state.t_micro += dt;
    }

    /// Advance by `span` microscopic time in equal substeps no larger than the
    /// working step.
    pub fn advance(&mut self, state: &mut ParticleState, span: f64) -> Result<()> {
        if !(span >= 0.0) {
            return Err(invalid(format!("span must be nonnegative (got {span})")));
        }
        if span == 0.0 {
            return Ok(());
        }
        let n = (span / self.dt).ceil().max(1.0) as u64;
        let h = span / n as f64;
        let t0 = state.t_micro;
        for _ in 0..n {
            self.step_unchecked(state, h);
        }
        state.t_micro = t0 + span;
        Ok(())
    }

    /// One explicit Euler step of the gap ODE with boundary gaps fixed at `a`.
    pub fn gap_flow_step(&self, gaps: &[f64], dt: f64) -> Result<Vec<f64>> {
        self.check_dt(dt)?;
        if gaps.iter().any(|&g| !(g > 0.0)) {
            return Err(invalid("gaps must be positive"));
        }
        let du: Vec<f64> = gaps.iter().map(|&g| self.spec.derivative(g)).collect();
        let ua = self.spec.derivative(self.a);
        let k = self.drift * dt;
        let n = gaps.len();
        Ok((0..n)
            .map(|i| {
                let left = if i == 0 { ua } else { du[i - 1] };
                let right = if i + 1 == n { ua } else { du[i + 1] };
                gaps[i] + k * (right + left - 2.0 * du[i])
            })
            .collect())
    }

    fn observables(&self, t_macro: f64, x: &[f64]) -> TrajectorySample {
        TrajectorySample {
            t_macro,
            com: self.epsilon * diagnostics::center_of_mass(x).unwrap_or(f64::NAN),
            energy: hamiltonian(x, &self.spec),
            grad_norm_inf: diagnostics::max_gap_deviation(x, self.a),
            n_segments: diagnostics::segment_view(x, self.b).segments.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t_macro: f64,
    /// Macroscopic center of mass `ε·η(x)`.
    pub com: f64,
    pub energy: f64,
    /// `max_i |x_{i+1} − x_i − a|`.
    pub grad_norm_inf: f64,
    pub n_segments: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordMode {
    Observables,
    Snapshots,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
    /// Present only in [`RecordMode::Snapshots`]; aligned with `samples`.
    pub snapshots: Option<Vec<Vec<f64>>>,
}

/// What the observer sees at each sample.
pub struct SampleView<'a> {
    pub index: usize,
    pub t_macro: f64,
    pub positions: &'a [f64],
}

/// Integrate for `t_macro_end` macroscopic time, sampling every
/// `sample_every`. The observer runs at every sample (the initial state
/// included) and may stop the run early.
pub fn simulate_micro<F>(
    state: &mut ParticleState,
    integrator: &mut Integrator,
    t_macro_end: f64,
    sample_every: f64,
    mode: RecordMode,
    mut observer: F,
) -> Result<Trajectory>
where
    F: FnMut(&SampleView<'_>) -> ControlFlow<()>,
{
    if !(t_macro_end >= 0.0) {
        return Err(invalid(format!("t_macro_end must be nonnegative (got {t_macro_end})")));
    }
    if !(sample_every > 0.0) {
        return Err(invalid(format!("sample_every must be positive (got {sample_every})")));
    }
    let eps3 = integrator.epsilon.powi(3);
    let t_start = eps3 * state.t_micro;
    let mut traj = Trajectory {
        samples: Vec::new(),
        snapshots: (mode == RecordMode::Snapshots).then(Vec::new),
    };
    let n_samples = (t_macro_end / sample_every - 1e-9).ceil().max(0.0) as usize;
    let mut t_prev = 0.0;
    for k in 0..=n_samples {
        let rel = if k == n_samples { t_macro_end } else { k as f64 * sample_every };
        if k > 0 {
            integrator.advance(state, (rel - t_prev) / eps3)?;
        }
        t_prev = rel;
        let t_macro = t_start + rel;
        traj.samples.push(integrator.observables(t_macro, &state.positions));
        if let Some(s) = traj.snapshots.as_mut() {
            s.push(state.positions.clone());
        }
        let view = SampleView { index: k, t_macro, positions: &state.positions };
        if observer(&view).is_break() {
            break;
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradientFlowTrajectory {
    pub t_micro: Vec<f64>,
    pub gaps: Vec<Vec<f64>>,
    pub energy: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
}

/// Noiseless flow from `initial` to microscopic time `t_end_micro`, sampled
/// every `sample_every_micro`. Uses the integrator's working step.
pub fn integrate_gradient_flow(
    initial: &[f64],
    t_end_micro: f64,
    sample_every_micro: f64,
    integrator: &mut Integrator,
) -> Result<GradientFlowTrajectory> {
    if !(t_end_micro >= 0.0 && sample_every_micro > 0.0) {
        return Err(invalid("gradient flow needs t_end >= 0 and a positive sample interval"));
    }
    let mut quiet = integrator.clone();
    quiet.noise = Noise::Off;
    let mut state = ParticleState::new(initial.to_vec(), 0);
    let mut out = GradientFlowTrajectory::default();
    let n_samples = (t_end_micro / sample_every_micro - 1e-9).ceil().max(0.0) as usize;
    let mut t_prev = 0.0;
    for k in 0..=n_samples {
        let t = if k == n_samples { t_end_micro } else { k as f64 * sample_every_micro };
        if k > 0 {
            quiet.advance(&mut state, t - t_prev)?;
        }
        t_prev = t;
        out.t_micro.push(t);
        out.gaps.push(diagnostics::gaps(&state.positions));
        out.energy.push(hamiltonian(&state.positions, &quiet.spec));
        out.positions.push(state.positions.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialKind {
    /// One chain of `n_particles[0]` particles.
    Single,
    /// Two chains at inter-gap exactly `b`.
    TwoChain,
    /// One chain per mass, separated by the given macroscopic distances
    /// (inter-chain gaps, converted to microscopic units by `ε⁻¹`).
    NChain { separations: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapMode {
    Exact,
    /// Intra-chain gaps uniform in `[a − ε^μ, a + ε^μ]`.
    Uniform,
}

/// Initial positions with the leftmost particle at 0.
pub fn build_initial<R: Rng + ?Sized>(
    kind: &InitialKind,
    params: &ScalingParams,
    constants: &PotentialConstants,
    gap_mode: GapMode,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (a, b) = (constants.a, constants.b);
    let fluct = params.epsilon.powf(params.mu);
    if fluct > b - a {
        return Err(invalid(format!(
            "initial fluctuation eps^mu = {fluct} exceeds b - a = {}",
            b - a
        )));
    }
    let inter: Vec<f64> = match kind {
        InitialKind::Single => {
            if params.n_particles.len() != 1 {
                return Err(invalid("a single chain needs exactly one mass"));
            }
            vec![]
        }
        InitialKind::TwoChain => {
            if params.n_particles.len() != 2 {
                return Err(invalid("a two-chain start needs exactly two masses"));
            }
            vec![b]
        }
        InitialKind::NChain { separations } => {
            if separations.len() + 1 != params.n_particles.len() {
                return Err(invalid(format!(
                    "{} chains need {} separations (got {})",
                    params.n_particles.len(),
                    params.n_particles.len() - 1,
                    separations.len()
                )));
            }
            let micro: Vec<f64> = separations.iter().map(|s| s / params.epsilon).collect();
            if let Some(s) = micro.iter().find(|&&s| !(s >= b)) {
                return Err(invalid(format!("inter-chain gap {s} is below the range b = {b}")));
            }
            micro
        }
    };
    let dist = Uniform::new_inclusive(a - fluct, a + fluct).map_err(|e| invalid(e.to_string()))?;
    let mut x = Vec::with_capacity(params.total_particles());
    let mut pos = 0.0;
    for (chain, &n) in params.n_particles.iter().enumerate() {
        if chain > 0 {
            pos += inter[chain - 1];
        }
        for i in 0..n {
            if i > 0 {
                pos += match gap_mode {
                    GapMode::Exact => a,
                    GapMode::Uniform => rng.sample(dist),
                };
            }
            x.push(pos);
        }
    }
    Ok(x)
}

/// Header plus one row per sample, floats with 17 significant digits.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut w: W) -> Result<()> {
    writeln!(w, "t_macro,com,energy,grad_norm_inf,n_segments")?;
    for s in &traj.samples {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{}",
            s.t_macro, s.com, s.energy, s.grad_norm_inf, s.n_segments
        )?;
    }
    Ok(())
}

/// One line per sample: `t_macro` then the positions, space-separated.
pub fn write_snapshots<W: Write>(traj: &Trajectory, mut w: W) -> Result<()> {
    let Some(snaps) = &traj.snapshots else {
        return Ok(());
    };
    for (s, x) in traj.samples.iter().zip(snaps) {
        write!(w, "{:.16e}", s.t_macro)?;
        for v in x {
            write!(w, " {v:.16e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{derive_constants, ROOT_TOL};

    fn setup(eps: f64, alpha: f64, rho: Vec<f64>) -> (PotentialSpec, PotentialConstants, ScalingParams) {
        let spec = PotentialSpec::example(4.0).unwrap();
        let c = derive_constants(&spec, ROOT_TOL).unwrap();
        let p = ScalingParams::new(eps, alpha, rho, 1.2, 1.0, 0.8, 1.0).unwrap();
        (spec, c, p)
    }

    #[test]
    fn small_hamiltonians() {
        let spec = PotentialSpec::example(4.0).unwrap();
        assert_eq!(hamiltonian(&[0.0, 4.0], &spec), -4.0);
        assert_eq!(hamiltonian(&[0.0, 4.0, 8.0], &spec), -8.0);
        assert_eq!(grad_hamiltonian(&[0.0, 4.0], &spec), vec![0.0, 0.0]);
    }

    #[test]
    fn particle_counts_round() {
        let p = ScalingParams::new(0.1, 4.5, vec![0.5, 1.0], 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(p.n_particles, vec![5, 10]);
        assert!(ScalingParams::new(0.1, 4.5, vec![0.1], 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(ScalingParams::new(0.1, 4.5, vec![1.0], 1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn constraint_flags_follow_exponents() {
        let p = ScalingParams::new(0.1, 4.5, vec![1.0], 0.6, 1.0, 1.0, 1.0).unwrap();
        let f = p.constraint_flags();
        assert!(f.alpha_gt_4 && f.mu_gt_half && !f.nu_gt_2);
        assert!(!f.alpha_gt_2nu_tilde_plus_3 && !f.alpha_gt_2nu_plus_3);
    }

    #[test]
    fn stable_dt_arithmetic() {
        let (_, c, mut p) = setup(0.1, 4.5, vec![1.0]);
        p.dt_safety = 0.1;
        let expect = 0.1 * 0.1f64.powf(4.5) / 40.0;
        assert!((stable_dt(&p, &c) - expect).abs() < 1e-20);
        p.dt_safety = 1.0;
        assert!((stable_dt(&p, &c) / expect - 10.0).abs() < 1e-12);
    }

    #[test]
    fn equal_spacing_is_a_fixed_point() {
        let (spec, c, p) = setup(0.25, 4.0, vec![1.0]);
        let mut integ = Integrator::new(spec, &c, &p, None, Noise::Off).unwrap();
        let x0: Vec<f64> = (0..4).map(|i| 4.0 * i as f64).collect();
        let mut s = ParticleState::new(x0.clone(), 1);
        integ.em_step(&mut s, integ.dt()).unwrap();
        assert_eq!(s.positions, x0);
        let mut s = ParticleState::new(x0.clone(), 1);
        let mut noisy = Integrator::new(spec, &c, &p, None, Noise::On).unwrap();
        noisy.em_step(&mut s, 0.0).unwrap();
        assert_eq!(s.positions, x0);
    }

    #[test]
    fn oversized_steps_are_rejected() {
        let (spec, c, p) = setup(0.25, 4.0, vec![1.0]);
        let mut integ = Integrator::new(spec, &c, &p, None, Noise::On).unwrap();
        let mut s = ParticleState::new(vec![0.0, 4.0, 8.0, 12.0], 1);
        let too_big = 2.0 * integ.max_dt();
        assert!(matches!(integ.em_step(&mut s, too_big), Err(Error::StepTooLarge { .. })));
        assert!(integ.gap_flow_step(&[4.0, 4.0, 4.0], too_big).is_err());
        assert!(Integrator::new(spec, &c, &p, Some(too_big), Noise::On).is_err());
    }

    #[test]
    fn gap_flow_matches_position_step() {
        let (spec, c, p) = setup(0.25, 4.0, vec![1.0]);
        let mut integ = Integrator::new(spec, &c, &p, None, Noise::Off).unwrap();
        let x = vec![0.0, 4.3, 8.1, 11.7];
        let g: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let next = integ.gap_flow_step(&g, integ.dt()).unwrap();
        let mut s = ParticleState::new(x, 0);
        integ.em_step(&mut s, integ.dt()).unwrap();
        for (i, w) in s.positions.windows(2).enumerate() {
            assert!((w[1] - w[0] - next[i]).abs() < 1e-12);
        }
        assert_eq!(integ.gap_flow_step(&[4.0; 3], integ.dt()).unwrap(), vec![4.0; 3]);
    }

    #[test]
    fn single_chain_exact_start() {
        let (_, c, p) = setup(0.2, 4.5, vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = build_initial(&InitialKind::Single, &p, &c, GapMode::Exact, &mut rng).unwrap();
        assert_eq!(x, vec![0.0, 4.0, 8.0, 12.0, 16.0]);
    }

    #[test]
    fn two_chain_exact_start() {
        let (_, c, p) = setup(0.5 / 3.0, 4.5, vec![0.5, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = build_initial(&InitialKind::TwoChain, &p, &c, GapMode::Exact, &mut rng).unwrap();
        let want = [0.0, 4.0, 8.0, 14.0, 18.0, 22.0];
        for (g, w) in x.iter().zip(want) {
            assert!((g - w).abs() < 1e-8);
        }
    }

    #[test]
    fn large_fluctuation_is_rejected() {
        let spec = PotentialSpec::example(4.0).unwrap();
        let c = derive_constants(&spec, ROOT_TOL).unwrap();
        let p = ScalingParams::new(0.5, 4.5, vec![2.0], -1.5, 1.0, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(build_initial(&InitialKind::Single, &p, &c, GapMode::Uniform, &mut rng).is_err());
    }

    #[test]
    fn zero_horizon_gives_initial_sample_only() {
        let (spec, c, p) = setup(0.2, 4.5, vec![1.0]);
        let mut integ = Integrator::new(spec, &c, &p, None, Noise::On).unwrap();
        let mut s = ParticleState::new(vec![0.0, 4.0, 8.0, 12.0, 16.0], 3);
        let t = simulate_micro(&mut s, &mut integ, 0.0, 0.1, RecordMode::Observables, |_| {
            ControlFlow::Continue(())
        })
        .unwrap();
        assert_eq!(t.samples.len(), 1);
        assert_eq!(t.samples[0].t_macro, 0.0);
        assert_eq!(t.samples[0].n_segments, 1);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let traj = Trajectory {
            samples: vec![TrajectorySample { t_macro: 0.0, com: 1.0, energy: -4.0, grad_norm_inf: 0.0, n_segments: 1 }],
            snapshots: Some(vec![vec![0.0, 4.0]]),
        };
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t_macro,com,energy,grad_norm_inf,n_segments\n"));
        assert_eq!(text.lines().count(), 2);
        let mut buf = Vec::new();
        write_snapshots(&traj, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().split_whitespace().count(), 3);
    }
}
