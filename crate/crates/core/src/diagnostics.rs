//! Geometry of sorted configurations: the chain decomposition
//! `x = z⁰ + h + η`, tube membership, two-chain energies and centers, segment
//! views, and online detection of the stopping times used by the coagulation
//! analysis.

use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::microsim::hamiltonian;
use crate::potential::{PotentialSpec, ThresholdSet};

pub fn center_of_mass(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Empty("configuration"));
    }
    Ok(x.iter().sum::<f64>() / x.len() as f64)
}

pub fn gaps(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

/// `max_i |x_{i+1} − x_i − a|`, which equals `‖∇h‖_∞`; zero for fewer than
/// two particles.
pub fn max_gap_deviation(x: &[f64], a: f64) -> f64 {
    x.windows(2).map(|w| (w[1] - w[0] - a).abs()).fold(0.0, f64::max)
}

/// The centered equal-spacing configuration: `z⁰_i = a(i − (N+1)/2)`,
/// so `z⁰_N = −z⁰_1 = a(N−1)/2`.
pub fn centered_minimum(n: usize, a: f64) -> Vec<f64> {
    let mid = 0.5 * (n as f64 - 1.0);
    (0..n).map(|i| a * (i as f64 - mid)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainDecomposition {
    pub eta: f64,
    pub h: Vec<f64>,
    pub grad_norm_2: f64,
    pub grad_norm_inf: f64,
    pub laplace_norm_2: f64,
}

impl ChainDecomposition {
    /// `z⁰ + h + η`.
    pub fn reconstruct(&self, a: f64) -> Vec<f64> {
        centered_minimum(self.h.len(), a)
            .iter()
            .zip(&self.h)
            .map(|(z, h)| z + h + self.eta)
            .collect()
    }
}

/// The three norms of a fluctuation vector, `(‖∇h‖₂, ‖∇h‖_∞, ‖Δh‖₂)`.
pub fn fluctuation_norms(h: &[f64]) -> (f64, f64, f64) {
    let d: Vec<f64> = h.windows(2).map(|w| w[1] - w[0]).collect();
    norms_from_differences(&d)
}

fn norms_from_differences(d: &[f64]) -> (f64, f64, f64) {
    let grad2 = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    let grad_inf = d.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let lap2 = match (d.first(), d.last()) {
        (Some(first), Some(last)) => {
            let inner: f64 = d.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
            (inner + first * first + last * last).sqrt()
        }
        _ => 0.0,
    };
    (grad2, grad_inf, lap2)
}

pub fn decompose(x: &[f64], a: f64) -> Result<ChainDecomposition> {
    if x.len() < 2 {
        return Err(invalid(format!("decomposition needs at least 2 particles (got {})", x.len())));
    }
    let eta = center_of_mass(x)?;
    let h: Vec<f64> = x
        .iter()
        .zip(centered_minimum(x.len(), a))
        .map(|(xi, z)| xi - z - eta)
        .collect();
    // h_{i+1} − h_i = gap_i − a; the gap form avoids cancellation in h.
    let d: Vec<f64> = x.windows(2).map(|w| w[1] - w[0] - a).collect();
    let (grad_norm_2, grad_norm_inf, laplace_norm_2) = norms_from_differences(&d);
    Ok(ChainDecomposition { eta, h, grad_norm_2, grad_norm_inf, laplace_norm_2 })
}

/// Membership in the tube `M^∇(c)`; `c` must lie in `[0, b − a]`.
pub fn is_chain(x: &[f64], c: f64, a: f64, b: f64) -> Result<bool> {
    if !(c >= 0.0 && c <= b - a) {
        return Err(invalid(format!("tube radius {c} outside [0, {}]", b - a)));
    }
    Ok(x.windows(2).all(|w| (w[1] - w[0] - a).abs() <= c))
}

/// Two equal-spacing chains of `n1` and `n2` particles at inter-gap `b`.
pub fn saddle_configuration(n1: usize, n2: usize, a: f64, b: f64) -> Vec<f64> {
    let mut x = Vec::with_capacity(n1 + n2);
    let mut pos = 0.0;
    for i in 0..n1 + n2 {
        if i > 0 {
            pos += if i == n1 { b } else { a };
        }
        x.push(pos);
    }
    x
}

pub fn saddle_energy(n1: usize, n2: usize, spec: &PotentialSpec, b: f64) -> f64 {
    hamiltonian(&saddle_configuration(n1, n2, spec.a(), b), spec)
}

/// `H(x) − H(z^{(1,2)})` given the saddle energy.
pub fn relative_energy(x: &[f64], spec: &PotentialSpec, saddle_ref: f64) -> f64 {
    hamiltonian(x, spec) - saddle_ref
}

/// Nearest-neighbour form of the relative energy:
/// `Σ_{i≠N₁} {U(g_i) − U(a)} + U(g_{N₁})`.
pub fn neighbor_form_energy(x: &[f64], n1: usize, spec: &PotentialSpec) -> f64 {
    let ua = spec.value(spec.a());
    gaps(x)
        .iter()
        .enumerate()
        .map(|(i, &g)| if i + 1 == n1 { spec.value(g) } else { spec.value(g) - ua })
        .sum()
}

/// `η(x⁽²⁾) − η(x⁽¹⁾)` computed three ways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentersDifference {
    pub direct: f64,
    /// Through the per-chain decompositions.
    pub decomposition: f64,
    /// `F(g) + aN/2 − a + (x_{N₁+1} − x_{N₁})`.
    pub gap_sum: f64,
}

pub fn centers_difference(x: &[f64], n1: usize, a: f64) -> Result<CentersDifference> {
    let n = x.len();
    if n1 == 0 || n1 >= n {
        return Err(invalid(format!("split index must satisfy 1 <= N1 < N (got {n1} of {n})")));
    }
    let n2 = n - n1;
    let (left, right) = x.split_at(n1);
    let direct = center_of_mass(right)? - center_of_mass(left)?;

    let chain_side = |part: &[f64], anchor: usize| -> Result<f64> {
        if part.len() == 1 {
            return Ok(0.0);
        }
        let h = decompose(part, a)?.h;
        Ok(h.iter().map(|hi| hi - h[anchor]).sum::<f64>() / part.len() as f64)
    };
    let eta1 = 0.5 * a * (1.0 - n1 as f64) + chain_side(left, n1 - 1)? + x[n1 - 1];
    let eta2 = 0.5 * a * (n2 as f64 - 1.0) + chain_side(right, 0)? + x[n1];
    let decomposition = eta2 - eta1;

    let g = gaps(x);
    let f1: f64 = (1..n1).map(|i| i as f64 * (g[i - 1] - a)).sum::<f64>() / n1 as f64;
    let f2: f64 = (n1 + 1..n).map(|i| (n - i) as f64 * (g[i - 1] - a)).sum::<f64>() / n2 as f64;
    let gap_sum = f1 + f2 + 0.5 * a * n as f64 - a + g[n1 - 1];
    Ok(CentersDifference { direct, decomposition, gap_sum })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub first: usize,
    pub count: usize,
    pub com: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SegmentView {
    pub segments: Vec<Segment>,
}

impl SegmentView {
    /// Gap indices (0-based, gap `i` sits between particles `i` and `i + 1`)
    /// that separate consecutive segments.
    pub fn boundaries(&self) -> Vec<usize> {
        self.segments.iter().skip(1).map(|s| s.first - 1).collect()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.segments.iter().map(|s| s.count).collect()
    }
}

/// Split a sorted configuration wherever a gap reaches `threshold`.
pub fn segment_view(x: &[f64], threshold: f64) -> SegmentView {
    let mut segments = Vec::new();
    let mut start = 0;
    for i in 0..x.len() {
        if i + 1 == x.len() || x[i + 1] - x[i] >= threshold {
            let part = &x[start..=i];
            segments.push(Segment {
                first: start,
                count: part.len(),
                com: part.iter().sum::<f64>() / part.len() as f64,
            });
            start = i + 1;
        }
    }
    SegmentView { segments }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StopKind {
    Tau1,
    Tau2,
    Tau3,
    Tau4,
    Tau5,
    Sigma,
    Tau,
}

impl StopKind {
    pub const ALL: [StopKind; 7] = [
        StopKind::Tau1,
        StopKind::Tau2,
        StopKind::Tau3,
        StopKind::Tau4,
        StopKind::Tau5,
        StopKind::Sigma,
        StopKind::Tau,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StopKind::Tau1 => "tau1",
            StopKind::Tau2 => "tau2",
            StopKind::Tau3 => "tau3",
            StopKind::Tau4 => "tau4",
            StopKind::Tau5 => "tau5",
            StopKind::Sigma => "sigma",
            StopKind::Tau => "tau",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

/// First trigger of a stopping time: sample time, the offending index (gap or
/// particle) when there is one, and the value that crossed the threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t_macro: f64,
    pub index: Option<usize>,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StoppingRecord {
    hits: [Option<Hit>; 7],
}

impl StoppingRecord {
    pub fn get(&self, kind: StopKind) -> Option<Hit> {
        self.hits[kind.slot()]
    }

    pub fn time(&self, kind: StopKind) -> Option<f64> {
        self.get(kind).map(|h| h.t_macro)
    }

    fn set_once(&mut self, kind: StopKind, hit: Hit) {
        self.hits[kind.slot()].get_or_insert(hit);
    }
}

/// Everything the detector needs for one run. Tests that are not configured
/// (`None`) never trigger.
#[derive(Debug, Clone)]
pub struct ObserveContext {
    pub spec: PotentialSpec,
    pub b: f64,
    pub thresholds: ThresholdSet,
    /// Gap indices where chains meet (two chains: `[N₁ − 1]`).
    pub boundaries: Vec<usize>,
    /// `H(z^{(1,2)})`, enabling the energy time.
    pub saddle_ref: Option<f64>,
    /// `ε^ν`, enabling the tube-exit time.
    pub sigma_level: Option<f64>,
    /// `ε^ν̃`, enabling the tube-entry time (only strictly after `t_origin`).
    pub tube_level: Option<f64>,
    /// `ε^θ`, enabling the divergence-from-noiseless time.
    pub divergence_level: Option<f64>,
    pub t_origin: f64,
}

impl ObserveContext {
    pub fn new(spec: PotentialSpec, b: f64, thresholds: ThresholdSet) -> Self {
        Self {
            spec,
            b,
            thresholds,
            boundaries: Vec::new(),
            saddle_ref: None,
            sigma_level: None,
            tube_level: None,
            divergence_level: None,
            t_origin: 0.0,
        }
    }
}

/// Test every untriggered stopping time on the sample `x` at `t_macro`.
/// `reference` is the paired noiseless configuration for the divergence time.
pub fn observe(
    ctx: &ObserveContext,
    t_macro: f64,
    x: &[f64],
    reference: Option<&[f64]>,
    record: &mut StoppingRecord,
) {
    let spec = &ctx.spec;
    let a = spec.a();
    let th = &ctx.thresholds;
    let g = gaps(x);
    let is_boundary = |i: usize| ctx.boundaries.contains(&i);

    if record.get(StopKind::Tau1).is_none() {
        if let Some(&i) = ctx.boundaries.iter().find(|&&i| i < g.len() && g[i] <= th.b2p) {
            record.set_once(StopKind::Tau1, Hit { t_macro, index: Some(i), value: g[i] });
        }
    }
    if record.get(StopKind::Tau2).is_none() && !ctx.boundaries.is_empty() {
        if let Some(i) = (0..g.len()).find(|&i| !is_boundary(i) && !th.in_d_prime(g[i])) {
            record.set_once(StopKind::Tau2, Hit { t_macro, index: Some(i), value: g[i] });
        }
    }
    if let (None, Some(saddle)) = (record.get(StopKind::Tau3), ctx.saddle_ref) {
        let e = relative_energy(x, spec, saddle);
        if e >= th.delta1 {
            record.set_once(StopKind::Tau3, Hit { t_macro, index: None, value: e });
        }
    }
    if let (None, [i]) = (record.get(StopKind::Tau4), ctx.boundaries.as_slice()) {
        if let Ok(d) = centers_difference(x, i + 1, a) {
            let n = x.len() as f64;
            if d.direct <= 0.5 * a * n - n.powf(th.kappa) {
                record.set_once(StopKind::Tau4, Hit { t_macro, index: None, value: d.direct });
            }
        }
    }
    if let (None, Some(level), Some(xr)) = (record.get(StopKind::Tau5), ctx.divergence_level, reference) {
        let (idx, dev) = x
            .iter()
            .zip(xr)
            .map(|(p, q)| (p - q).abs())
            .enumerate()
            .fold((0, 0.0), |acc, (i, d)| if d > acc.1 { (i, d) } else { acc });
        if dev >= level {
            record.set_once(StopKind::Tau5, Hit { t_macro, index: Some(idx), value: dev });
        }
    }
    let worst = || {
        g.iter()
            .map(|gi| (gi - a).abs())
            .enumerate()
            .fold((None, 0.0), |acc, (i, d)| if d > acc.1 { (Some(i), d) } else { acc })
    };
    if let (None, Some(level)) = (record.get(StopKind::Sigma), ctx.sigma_level) {
        let (idx, dev) = worst();
        if dev > level {
            record.set_once(StopKind::Sigma, Hit { t_macro, index: idx, value: dev });
        }
    }
    if let (None, Some(level)) = (record.get(StopKind::Tau), ctx.tube_level) {
        let (idx, dev) = worst();
        if t_macro > ctx.t_origin && dev <= level {
            record.set_once(StopKind::Tau, Hit { t_macro, index: idx, value: dev });
        }
    }
}

/// Header of the stopping-record CSV.
pub fn stopping_csv_header() -> String {
    let names: Vec<&str> = StopKind::ALL.iter().map(|k| k.name()).collect();
    format!("run_id,seed,{}", names.join(","))
}

/// One row: run id, seed, then each first-hit time or `-1` for never.
pub fn write_stopping_row<W: Write>(mut w: W, run_id: usize, seed: u64, rec: &StoppingRecord) -> Result<()> {
    write!(w, "{run_id},{seed}")?;
    for k in StopKind::ALL {
        match rec.time(k) {
            Some(t) => write!(w, ",{t:.16e}")?,
            None => write!(w, ",-1")?,
        }
    }
    writeln!(w)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Model;

    #[test]
    fn center_of_mass_basics() {
        assert_eq!(center_of_mass(&[0.0, 4.0, 8.0]).unwrap(), 4.0);
        assert!(center_of_mass(&[]).is_err());
    }

    #[test]
    fn equal_spacing_has_zero_fluctuation() {
        let x = [10.0, 14.0, 18.0, 22.0];
        let d = decompose(&x, 4.0).unwrap();
        assert_eq!(d.eta, 16.0);
        assert!(d.h.iter().all(|&h| h == 0.0));
        assert_eq!((d.grad_norm_2, d.grad_norm_inf, d.laplace_norm_2), (0.0, 0.0, 0.0));
        assert!(decompose(&[1.0], 4.0).is_err());
    }

    #[test]
    fn three_particle_hand_check() {
        let d = decompose(&[0.0, 4.1, 8.0], 4.0).unwrap();
        assert!((d.eta - 12.1 / 3.0).abs() < 1e-15);
        assert!((d.grad_norm_inf - 0.1).abs() < 1e-12);
        assert!((d.h[1] - d.h[0] - 0.1).abs() < 1e-12);
        assert!((d.h[2] - d.h[1] + 0.1).abs() < 1e-12);
    }

    #[test]
    fn tube_boundaries() {
        let (a, b, c) = (4.0, 6.0, 0.25);
        assert!(is_chain(&[0.0, 4.0, 8.0], 0.0, a, b).unwrap());
        assert!(is_chain(&[0.0, a + c, 2.0 * a], c, a, b).unwrap());
        assert!(!is_chain(&[0.0, a + c + 1e-12, 2.0 * a + c + 1e-12], c, a, b).unwrap());
        assert!(!is_chain(&saddle_configuration(3, 3, a, b), 1.0, a, b).unwrap());
        assert!(is_chain(&[0.0, 4.0], 2.5, a, b).is_err());
    }

    #[test]
    fn saddle_values() {
        let m = Model::example(4.0, 0.1, 0.75, 1.0).unwrap();
        let b = m.constants.b;
        let z = saddle_configuration(3, 4, 4.0, b);
        let sref = saddle_energy(3, 4, &m.spec, b);
        assert_eq!(relative_energy(&z, &m.spec, sref), 0.0);
        let d = centers_difference(&z, 3, 4.0).unwrap();
        let want = 2.0 * 7.0 + (b - 4.0);
        assert!((d.direct - want).abs() < 1e-10);
        assert!((d.gap_sum - want).abs() < 1e-10);
        assert!((d.decomposition - want).abs() < 1e-10);
    }

    #[test]
    fn segments_split_at_threshold() {
        let v = segment_view(&saddle_configuration(3, 2, 4.0, 6.0), 6.0);
        assert_eq!(v.counts(), vec![3, 2]);
        assert_eq!(v.boundaries(), vec![2]);
        assert_eq!(segment_view(&[0.0, 4.0, 8.0], 6.0).counts(), vec![3]);
        assert!(segment_view(&[], 6.0).segments.is_empty());
    }

    #[test]
    fn saddle_triggers_nothing() {
        let m = Model::example(4.0, 0.1, 0.75, 1.0).unwrap();
        let b = m.constants.b;
        let z = saddle_configuration(4, 4, 4.0, b);
        let mut ctx = ObserveContext::new(m.spec, b, m.thresholds);
        ctx.boundaries = vec![3];
        ctx.saddle_ref = Some(saddle_energy(4, 4, &m.spec, b));
        ctx.sigma_level = Some(5.0);
        ctx.tube_level = Some(0.1);
        let mut rec = StoppingRecord::default();
        observe(&ctx, 0.0, &z, None, &mut rec);
        assert_eq!(rec, StoppingRecord::default());
    }

    #[test]
    fn boundary_gap_at_b2p_triggers_tau1() {
        let m = Model::example(4.0, 0.1, 0.75, 1.0).unwrap();
        let z = saddle_configuration(3, 3, 4.0, m.thresholds.b2p);
        let mut ctx = ObserveContext::new(m.spec, m.constants.b, m.thresholds);
        ctx.boundaries = vec![2];
        let mut rec = StoppingRecord::default();
        observe(&ctx, 0.5, &z, None, &mut rec);
        let hit = rec.get(StopKind::Tau1).unwrap();
        assert_eq!((hit.t_macro, hit.index), (0.5, Some(2)));
        assert!(rec.get(StopKind::Tau2).is_none());
    }

    #[test]
    fn tube_entry_needs_positive_time() {
        let m = Model::example(4.0, 0.1, 0.75, 1.0).unwrap();
        let mut ctx = ObserveContext::new(m.spec, m.constants.b, m.thresholds);
        ctx.tube_level = Some(0.05);
        let x = [0.0, 4.01, 8.0];
        let mut rec = StoppingRecord::default();
        observe(&ctx, 0.0, &x, None, &mut rec);
        assert!(rec.get(StopKind::Tau).is_none());
        observe(&ctx, 0.2, &x, None, &mut rec);
        observe(&ctx, 0.3, &x, None, &mut rec);
        assert_eq!(rec.time(StopKind::Tau), Some(0.2));
    }

    #[test]
    fn divergence_time() {
        let m = Model::example(4.0, 0.1, 0.75, 1.0).unwrap();
        let mut ctx = ObserveContext::new(m.spec, m.constants.b, m.thresholds);
        ctx.divergence_level = Some(0.1);
        let mut rec = StoppingRecord::default();
        observe(&ctx, 0.1, &[0.0, 4.0], Some(&[0.05, 4.0]), &mut rec);
        assert!(rec.get(StopKind::Tau5).is_none());
        observe(&ctx, 0.2, &[0.0, 4.0], Some(&[0.0, 4.2]), &mut rec);
        assert_eq!(rec.get(StopKind::Tau5).unwrap().index, Some(1));
    }

    #[test]
    fn stopping_csv_row() {
        let mut rec = StoppingRecord::default();
        rec.set_once(StopKind::Tau, Hit { t_macro: 0.5, index: None, value: 0.0 });
        let mut buf = Vec::new();
        write_stopping_row(&mut buf, 3, 45, &rec).unwrap();
        let row = String::from_utf8(buf).unwrap();
        assert_eq!(row.trim_end().split(',').count(), 9);
        assert!(row.starts_with("3,45,-1,-1,-1,-1,-1,-1,5.0"));
        assert_eq!(stopping_csv_header(), "run_id,seed,tau1,tau2,tau3,tau4,tau5,sigma,tau");
    }
}
