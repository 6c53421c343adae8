//! Coalescing Brownian rods. Each rod of mass `ρ` has length `aρ`; its
//! shifted center `η̃ = η − a(Σ_{ℓ′<ℓ} ρ_{ℓ′} + ρ_ℓ/2)` performs Brownian
//! motion with variance rate `1/ρ`, and two adjacent rods touch exactly when
//! their shifted centers meet. Touching rods merge for good: masses add and
//! the merged rod moves with the combined mass.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RodGroup {
    /// Original rod indices, contiguous and increasing.
    pub members: Vec<usize>,
    pub mass: f64,
    pub shifted_center: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoagulationEvent {
    pub t_macro: f64,
    pub left_members: Vec<usize>,
    pub right_members: Vec<usize>,
    pub new_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RodSystem {
    pub groups: Vec<RodGroup>,
    pub t_macro: f64,
    pub a: f64,
    masses: Vec<f64>,
}

/// Rods from masses and physical centers; shifted centers must be strictly
/// increasing (touching or overlapping rods are rejected).
pub fn init_rods(rho: &[f64], centers: &[f64], a: f64) -> Result<RodSystem> {
    if rho.is_empty() {
        return Err(Error::Empty("rod masses"));
    }
    if rho.len() != centers.len() {
        return Err(invalid(format!("{} masses but {} centers", rho.len(), centers.len())));
    }
    if !(a > 0.0) {
        return Err(invalid(format!("spacing a must be positive (got {a})")));
    }
    if let Some(r) = rho.iter().find(|&&r| !(r > 0.0 && r.is_finite())) {
        return Err(invalid(format!("rod masses must be positive (got {r})")));
    }
    let mut groups: Vec<RodGroup> = Vec::with_capacity(rho.len());
    let mut below = 0.0;
    for (l, (&r, &c)) in rho.iter().zip(centers).enumerate() {
        let shifted = c - a * (below + 0.5 * r);
        below += r;
        if let Some(prev) = groups.last() {
            if !(shifted > prev.shifted_center) {
                return Err(Error::OverlappingRods { index: l });
            }
        }
        groups.push(RodGroup { members: vec![l], mass: r, shifted_center: shifted });
    }
    Ok(RodSystem { groups, t_macro: 0.0, a, masses: rho.to_vec() })
}

impl RodSystem {
    pub fn total_mass(&self) -> f64 {
        self.groups.iter().map(|g| g.mass).sum()
    }

    pub fn n_rods(&self) -> usize {
        self.masses.len()
    }

    /// Shifted center of every original rod (members of a group share it).
    pub fn member_centers(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.masses.len()];
        for g in &self.groups {
            for &m in &g.members {
                out[m] = g.shifted_center;
            }
        }
        out
    }

    /// Physical center of each group: `η̃ + a(Σ_{below} ρ + M/2)`.
    pub fn physical_centers(&self) -> Vec<f64> {
        self.groups
            .iter()
            .map(|g| {
                let below: f64 = self.masses[..g.members[0]].iter().sum();
                g.shifted_center + self.a * (below + 0.5 * g.mass)
            })
            .collect()
    }

    /// Advance by `dt`. Each group moves along the straight line between its
    /// start value and a Gaussian endpoint. The earliest adjacent crossing of
    /// these lines is merged first (ties go to the leftmost pair); the merged
    /// group restarts from the crossing value with a fresh endpoint for the
    /// rest of the step. Repeats until no pair crosses.
    pub fn grid_step<R: Rng + ?Sized>(&mut self, dt: f64, rng: &mut R) -> Result<Vec<CoagulationEvent>> {
        if !(dt > 0.0) {
            return Err(invalid(format!("dt must be positive (got {dt})")));
        }
        // Per group: (s0, p0, p1) with the path linear in s ∈ [s0, 1].
        let mut paths: Vec<(f64, f64, f64)> = self
            .groups
            .iter()
            .map(|g| {
                let z: f64 = rng.sample(StandardNormal);
                (0.0, g.shifted_center, g.shifted_center + (dt / g.mass).sqrt() * z)
            })
            .collect();
        let value = |p: &(f64, f64, f64), s: f64| {
            if s >= 1.0 {
                p.2
            } else {
                p.1 + (p.2 - p.1) * (s - p.0) / (1.0 - p.0)
            }
        };
        let mut events = Vec::new();
        loop {
            let mut earliest: Option<(f64, usize)> = None;
            for k in 0..paths.len().saturating_sub(1) {
                let (l, r) = (&paths[k], &paths[k + 1]);
                let end = value(r, 1.0) - value(l, 1.0);
                if end > 0.0 {
                    continue;
                }
                let sa = l.0.max(r.0);
                let start = value(r, sa) - value(l, sa);
                let s = if start <= 0.0 { sa } else { sa + (1.0 - sa) * start / (start - end) };
                if earliest.is_none_or(|(best, _)| s < best) {
                    earliest = Some((s, k));
                }
            }
            let Some((s, k)) = earliest else { break };
            let meet = value(&paths[k], s);
            let right = self.groups.remove(k + 1);
            paths.remove(k + 1);
            let left = &mut self.groups[k];
            let event = CoagulationEvent {
                t_macro: self.t_macro + s * dt,
                left_members: left.members.clone(),
                right_members: right.members.clone(),
                new_mass: left.mass + right.mass,
            };
            left.members.extend(right.members);
            left.mass += right.mass;
            let z: f64 = rng.sample(StandardNormal);
            let rest = ((1.0 - s) * dt / left.mass).sqrt() * z;
            paths[k] = if s < 1.0 { (s, meet, meet + rest) } else { (s, meet, meet) };
            events.push(event);
        }
        for (g, p) in self.groups.iter_mut().zip(&paths) {
            g.shifted_center = p.2;
        }
        self.t_macro += dt;
        Ok(events)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RodTrajectory {
    pub times: Vec<f64>,
    /// Per sample, the shifted center of every original rod.
    pub centers: Vec<Vec<f64>>,
    pub events: Vec<CoagulationEvent>,
}

/// Run to `t_end` in steps of `dt` (the last one shortened to land on
/// `t_end`), recording every `sample_stride`-th step plus the final state.
pub fn simulate_rods<R: Rng + ?Sized>(
    system: &mut RodSystem,
    t_end: f64,
    dt: f64,
    sample_stride: usize,
    rng: &mut R,
) -> Result<RodTrajectory> {
    if !(t_end >= 0.0 && dt > 0.0) || sample_stride == 0 {
        return Err(invalid("simulate_rods needs t_end >= 0, dt > 0 and a positive sample stride"));
    }
    let t0 = system.t_macro;
    let mut traj = RodTrajectory { times: vec![t0], centers: vec![system.member_centers()], events: vec![] };
    let n = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    for k in 1..=n {
        let h = if k == n { t_end - (n - 1) as f64 * dt } else { dt };
        traj.events.extend(system.grid_step(h, rng)?);
        if k == n {
            system.t_macro = t0 + t_end;
        }
        if k % sample_stride == 0 || k == n {
            traj.times.push(system.t_macro);
            traj.centers.push(system.member_centers());
        }
    }
    Ok(traj)
}

/// Time of the first coagulation on the grid, or `None` if none occurs by
/// `t_max`.
pub fn first_meeting_time<R: Rng + ?Sized>(
    system: &mut RodSystem,
    dt: f64,
    t_max: f64,
    rng: &mut R,
) -> Result<Option<f64>> {
    let start = system.t_macro;
    while system.t_macro - start < t_max {
        if let Some(ev) = system.grid_step(dt, rng)?.first() {
            return Ok(Some(ev.t_macro - start));
        }
    }
    Ok(None)
}

/// Exact first meeting time of two free rods at shifted-center gap `gap`:
/// `T = (gap / (√v |Z|))²` with `v = 1/ρ₁ + 1/ρ₂`.
pub fn exact_two_rod_meeting<R: Rng + ?Sized>(gap: f64, rho1: f64, rho2: f64, rng: &mut R) -> Result<f64> {
    if !(gap > 0.0) {
        return Err(invalid(format!("gap must be positive (got {gap})")));
    }
    if !(rho1 > 0.0 && rho2 > 0.0) {
        return Err(invalid("masses must be positive"));
    }
    let v = 1.0 / rho1 + 1.0 / rho2;
    let z: f64 = rng.sample(StandardNormal);
    Ok((gap / (v.sqrt() * z.abs())).powi(2))
}

/// `P(T ≤ t)` for the two-rod meeting time: `2(1 − Φ(gap/√(v t)))`.
pub fn two_rod_meeting_cdf(t: f64, gap: f64, v: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    2.0 * crate::harness::stats::normal_sf(gap / (v * t).sqrt())
}

pub fn write_rod_csv<W: Write>(traj: &RodTrajectory, mut w: W) -> Result<()> {
    let n = traj.centers.first().map_or(0, Vec::len);
    let cols: Vec<String> = (0..n).map(|l| format!("rod{l}")).collect();
    writeln!(w, "t_macro{}{}", if n > 0 { "," } else { "" }, cols.join(","))?;
    for (t, row) in traj.times.iter().zip(&traj.centers) {
        write!(w, "{t:.16e}")?;
        for v in row {
            write!(w, ",{v:.16e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn join_members(m: &[usize]) -> String {
    m.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";")
}

pub fn write_events_csv<W: Write>(events: &[CoagulationEvent], mut w: W) -> Result<()> {
    writeln!(w, "t_macro,left_members,right_members,new_mass")?;
    for e in events {
        writeln!(
            w,
            "{:.16e},{},{},{:.16e}",
            e.t_macro,
            join_members(&e.left_members),
            join_members(&e.right_members),
            e.new_mass
        )?;
    }
    Ok(())
}
