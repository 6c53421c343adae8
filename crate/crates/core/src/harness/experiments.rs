//! The five replica experiments. Each replica is a pure function of its seed
//! (`master_seed + r`); replicas run on the rayon pool and results are
//! gathered in replica order, so outputs are byte-identical across runs.

use std::fmt::Write as _;
use std::ops::ControlFlow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Uniform;
use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentId};
use super::report::{Check, StatReport};
use super::stats;
use crate::diagnostics::{self, observe, ObserveContext, StopKind, StoppingRecord};
use crate::error::{invalid, Result};
use crate::microsim::{
    build_initial, integrate_gradient_flow, simulate_micro, write_trajectory_csv, GapMode, InitialKind, Integrator,
    Noise, ParticleState, RecordMode, ScalingParams, Trajectory,
};
use crate::potential::Model;

/// Number of samples after the merge over which E5 measures the merged
/// rod's center increment.
pub const E5_WINDOW_SAMPLES: usize = 10;
/// Extra microscopic distance beyond the range `b` between the two chains at
/// the start of E5.
pub const E5_EXTRA_GAP: f64 = 0.25;
/// Relative slack for the decay bound and absolute slack for energy
/// monotonicity in E4 (floating-point rounding only).
pub const E4_DECAY_RTOL: f64 = 1e-12;
pub const E4_ENERGY_TOL: f64 = 1e-9;

/// A named output file and its contents.
pub type Output = (String, String);

pub struct ExperimentResult {
    pub report: StatReport,
    pub outputs: Vec<Output>,
}

fn model_for(config: &ExperimentConfig) -> Result<Model> {
    Model::example(config.a, config.margin, config.kappa, config.theta)
}

fn params_for(config: &ExperimentConfig, epsilon: f64) -> Result<ScalingParams> {
    ScalingParams::new(
        epsilon,
        config.alpha,
        config.rho.clone(),
        config.mu,
        config.nu,
        config.nu_tilde,
        config.dt_safety,
    )
}

fn integrator_for(model: &Model, params: &ScalingParams, config: &ExperimentConfig, noise: Noise) -> Result<Integrator> {
    Integrator::new(model.spec, &model.constants, params, config.dt_override, noise)
}

/// Every configuration error is raised here, before any simulation starts.
pub fn validate(config: &ExperimentConfig) -> Result<()> {
    if !(config.t_macro_end > 0.0 && config.sample_every > 0.0) {
        return Err(invalid("t_macro_end and sample_every must be positive"));
    }
    let model = model_for(config)?;
    for &eps in &config.epsilon {
        let params = params_for(config, eps)?;
        integrator_for(&model, &params, config, Noise::On)?;
    }
    let single_eps = config.epsilon.len() == 1;
    let (n_rho, need_single_eps) = match config.experiment {
        ExperimentId::E1 => (1, false),
        ExperimentId::E2 => (1, true),
        ExperimentId::E3 => (2, false),
        ExperimentId::E4 => (1, true),
        ExperimentId::E5 => (2, true),
    };
    if config.rho.len() != n_rho {
        return Err(invalid(format!("{} needs {n_rho} mass(es) in rho", config.experiment)));
    }
    if need_single_eps && !single_eps {
        return Err(invalid(format!("{} takes a single epsilon", config.experiment)));
    }
    if config.experiment == ExperimentId::E3 {
        if !(config.delta > 0.0 && config.delta < 1.0) {
            return Err(invalid(format!("delta must lie in (0, 1) (got {})", config.delta)));
        }
        let longest = config.epsilon.iter().map(|e| e.powf(1.0 - config.delta)).fold(0.0, f64::max);
        if config.t_macro_end < longest {
            return Err(invalid(format!(
                "t_macro_end {} is shorter than the coagulation horizon {longest}",
                config.t_macro_end
            )));
        }
    }
    Ok(())
}

fn run_replicas<T, F>(config: &ExperimentConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, u64) -> Result<T> + Sync,
{
    (0..config.replicas)
        .into_par_iter()
        .map(|r| f(r, config.master_seed + r as u64))
        .collect()
}

pub fn run(config: &ExperimentConfig) -> Result<ExperimentResult> {
    validate(config)?;
    let mut result = match config.experiment {
        ExperimentId::E1 => run_e1(config),
        ExperimentId::E2 => run_e2(config),
        ExperimentId::E3 => run_e3(config),
        ExperimentId::E4 => run_e4(config),
        ExperimentId::E5 => run_e5(config),
    }?;
    let summary = result.report.summary(config);
    result.outputs.push(("summary.txt".into(), summary));
    Ok(result)
}

fn stopping_csv(rows: &[(usize, u64, StoppingRecord)]) -> Result<String> {
    let mut buf = Vec::new();
    buf.extend_from_slice(diagnostics::stopping_csv_header().as_bytes());
    buf.push(b'\n');
    for (id, seed, rec) in rows {
        diagnostics::write_stopping_row(&mut buf, *id, *seed, rec)?;
    }
    Ok(String::from_utf8(buf).expect("ascii"))
}

fn trajectory_csv(t: &Trajectory) -> Result<String> {
    let mut buf = Vec::new();
    write_trajectory_csv(t, &mut buf)?;
    Ok(String::from_utf8(buf).expect("ascii"))
}

/// Ladder order is decreasing epsilon; the statistic must not decrease.
fn trend_check(name: &str, ladder: &[(f64, f64)], replicas: usize) -> Check {
    let mut sorted = ladder.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let detail = sorted.iter().map(|(e, f)| format!("eps={e}: {f}")).collect::<Vec<_>>().join(", ");
    if sorted.len() < 2 {
        let mut c = Check::exact(name, true, format!("{detail} [ladder has one rung]"));
        c.verdict = super::report::Verdict::Inconclusive;
        return c;
    }
    let ok = sorted.windows(2).all(|w| w[1].1 >= w[0].1);
    Check::statistical(name, ok, replicas, detail)
}

fn run_e1(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let model = model_for(config)?;
    let mut report = StatReport::new(config);
    let mut outputs = Vec::new();
    let mut ladder = Vec::new();
    for &eps in &config.epsilon {
        let params = params_for(config, eps)?;
        let mut ctx = ObserveContext::new(model.spec, model.constants.b, model.thresholds);
        ctx.sigma_level = Some(eps.powf(config.nu));
        let rows = run_replicas(config, |r, seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x0 = build_initial(&InitialKind::Single, &params, &model.constants, GapMode::Uniform, &mut rng)?;
            let mut state = ParticleState::from_parts(x0, rng);
            let mut integ = integrator_for(&model, &params, config, Noise::On)?;
            let mut rec = StoppingRecord::default();
            let traj = simulate_micro(
                &mut state,
                &mut integ,
                config.t_macro_end,
                config.sample_every,
                RecordMode::Observables,
                |s| {
                    observe(&ctx, s.t_macro, s.positions, None, &mut rec);
                    if rec.get(StopKind::Sigma).is_some() {
                        ControlFlow::Break(())
                    } else {
                        ControlFlow::Continue(())
                    }
                },
            )?;
            Ok((r, seed, rec, (r == 0).then_some(traj)))
        })?;
        let survived = rows.iter().filter(|(_, _, rec, _)| rec.get(StopKind::Sigma).is_none()).count();
        let frac = survived as f64 / rows.len() as f64;
        report.value(format!("eps={eps}.n_particles"), params.total_particles());
        report.value(format!("eps={eps}.tube_radius"), eps.powf(config.nu));
        report.value(format!("eps={eps}.tube_exits"), rows.len() - survived);
        report.value(format!("eps={eps}.fraction_sigma_gt_T"), frac);
        ladder.push((eps, frac));
        let recs: Vec<_> = rows.iter().map(|(r, s, rec, _)| (*r, *s, *rec)).collect();
        outputs.push((format!("stopping_eps{eps}.csv"), stopping_csv(&recs)?));
        if let Some(t) = rows.first().and_then(|r| r.3.as_ref()) {
            outputs.push((format!("trajectory_eps{eps}_run0.csv"), trajectory_csv(t)?));
        }
    }
    report.check(trend_check("tube_persistence_trend", &ladder, config.replicas));
    let flags = params_for(config, config.epsilon[0])?.constraint_flags();
    report.notes.push(format!(
        "mechanism check only: nu > 2 is {} and alpha > 2 nu + 3 is {}; the literal exponents are infeasible at desk scale",
        flags.nu_gt_2, flags.alpha_gt_2nu_plus_3
    ));
    Ok(ExperimentResult { report, outputs })
}

fn run_e2(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let model = model_for(config)?;
    let eps = config.epsilon[0];
    let params = params_for(config, eps)?;
    let n = params.total_particles();
    let target = config.t_macro_end / (eps * n as f64);
    let rows = run_replicas(config, |r, seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = build_initial(&InitialKind::Single, &params, &model.constants, GapMode::Uniform, &mut rng)?;
        let mut state = ParticleState::from_parts(x0, rng);
        let mut integ = integrator_for(&model, &params, config, Noise::On)?;
        let traj = simulate_micro(
            &mut state,
            &mut integ,
            config.t_macro_end,
            config.sample_every,
            RecordMode::Observables,
            |_| ControlFlow::Continue(()),
        )?;
        let inc = traj.samples.last().expect("nonempty").com - traj.samples[0].com;
        Ok((r, seed, inc, (r == 0).then_some(traj)))
    })?;
    let incs: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let m = incs.len();
    let mut report = StatReport::new(config);
    report.value("n_particles", n);
    report.value("dt_micro", integrator_for(&model, &params, config, Noise::On)?.dt());
    report.value("target_variance", target);
    let mut outputs = Vec::new();
    let mut csv = String::from("run_id,seed,increment\n");
    for (r, s, inc, _) in &rows {
        writeln!(csv, "{r},{s},{inc:.16e}").unwrap();
    }
    outputs.push(("increments.csv".into(), csv));
    if let Some(t) = rows.first().and_then(|r| r.3.as_ref()) {
        outputs.push(("trajectory_run0.csv".into(), trajectory_csv(t)?));
    }
    report.value("mean_increment", stats::mean(&incs));
    if m >= 2 {
        let s2 = stats::sample_variance(&incs);
        let (lo, hi) = stats::variance_band(target, m, 0.99)?;
        let (clo, chi) = stats::variance_ci(s2, m, 0.99)?;
        report.value("sample_variance", s2);
        report.value("variance_ratio", s2 / target);
        report.value("variance_ratio_ci99", format!("[{}, {}]", clo / target, chi / target));
        report.check(Check::statistical(
            "variance_chi2_band",
            s2 >= lo && s2 <= hi,
            m,
            format!("s2 = {s2:.6e}, 99% band [{lo:.6e}, {hi:.6e}]"),
        ));
    }
    let sd = target.sqrt();
    let d = stats::ks_statistic(&incs, |x| stats::normal_cdf(x / sd))?;
    let crit = stats::ks_critical_1pct(m);
    report.value("ks_distance", d);
    report.value("ks_critical", crit);
    report.check(Check::statistical("ks_gaussian", d <= crit, m, format!("D = {d:.5}, limit {crit:.5}")));
    report.notes.push("alpha is below the theorem's range; the center-of-mass law checked here holds for any alpha".into());
    Ok(ExperimentResult { report, outputs })
}

fn run_e3(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let model = model_for(config)?;
    let mut report = StatReport::new(config);
    let mut outputs = Vec::new();
    let mut ladder = Vec::new();
    let b = model.constants.b;
    for &eps in &config.epsilon {
        let params = params_for(config, eps)?;
        let (n1, n2) = (params.n_particles[0], params.n_particles[1]);
        let horizon = eps.powf(1.0 - config.delta);
        let mut ctx = ObserveContext::new(model.spec, b, model.thresholds);
        ctx.boundaries = vec![n1 - 1];
        ctx.saddle_ref = Some(diagnostics::saddle_energy(n1, n2, &model.spec, b));
        ctx.tube_level = Some(eps.powf(config.nu_tilde));
        let rows = run_replicas(config, |r, seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x0 = build_initial(&InitialKind::TwoChain, &params, &model.constants, GapMode::Uniform, &mut rng)?;
            let mut state = ParticleState::from_parts(x0, rng);
            let mut integ = integrator_for(&model, &params, config, Noise::On)?;
            let mut rec = StoppingRecord::default();
            let traj = simulate_micro(&mut state, &mut integ, horizon, config.sample_every, RecordMode::Observables, |s| {
                observe(&ctx, s.t_macro, s.positions, None, &mut rec);
                if rec.get(StopKind::Tau).is_some() {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            })?;
            Ok((r, seed, rec, (r == 0).then_some(traj)))
        })?;
        let hit = rows
            .iter()
            .filter(|(_, _, rec, _)| rec.time(StopKind::Tau).is_some_and(|t| t <= horizon))
            .count();
        let frac = hit as f64 / rows.len() as f64;
        let taus: Vec<f64> = rows.iter().filter_map(|(_, _, rec, _)| rec.time(StopKind::Tau)).collect();
        report.value(format!("eps={eps}.n_particles"), format!("{n1}+{n2}"));
        report.value(format!("eps={eps}.horizon"), horizon);
        report.value(format!("eps={eps}.tube_radius"), eps.powf(config.nu_tilde));
        report.value(format!("eps={eps}.fraction_coagulated"), frac);
        if !taus.is_empty() {
            report.value(format!("eps={eps}.mean_tau"), stats::mean(&taus));
        }
        ladder.push((eps, frac));
        let recs: Vec<_> = rows.iter().map(|(r, s, rec, _)| (*r, *s, *rec)).collect();
        outputs.push((format!("stopping_eps{eps}.csv"), stopping_csv(&recs)?));
        if let Some(t) = rows.first().and_then(|r| r.3.as_ref()) {
            outputs.push((format!("trajectory_eps{eps}_run0.csv"), trajectory_csv(t)?));
        }
    }
    report.check(trend_check("coagulation_trend", &ladder, config.replicas));
    let smallest = ladder.iter().copied().fold((f64::INFINITY, 0.0), |acc, p| if p.0 < acc.0 { p } else { acc });
    report.check(Check::statistical(
        "coagulation_floor",
        smallest.1 >= 0.5,
        config.replicas,
        format!("fraction {} at eps = {} (floor 0.5)", smallest.1, smallest.0),
    ));
    report.notes.push("the 0.5 floor is an engineering tolerance, not a property of the limit theorem".into());
    Ok(ExperimentResult { report, outputs })
}

struct DecayRun {
    id: usize,
    rows: Vec<(f64, f64, f64, f64, f64, f64)>,
    gap_violations: usize,
    decay_violations: usize,
    energy_violations: usize,
}

fn run_e4(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let model = model_for(config)?;
    let th = model.thresholds;
    let eps = config.epsilon[0];
    let params = params_for(config, eps)?;
    let n = params.total_particles();
    let rate = th.c_star * eps.powf(-config.alpha) / (n * n) as f64;
    let t_end = config.t_macro_end / eps.powi(3);
    let every = config.sample_every / eps.powi(3);
    let runs = run_replicas(config, |r, seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(th.b3p, th.b2p).map_err(|e| invalid(e.to_string()))?;
        let mut x = Vec::with_capacity(n);
        let mut pos = 0.0;
        x.push(pos);
        while x.len() < n {
            let g = rng.sample(dist);
            if g > th.b3p {
                pos += g;
                x.push(pos);
            }
        }
        let mut integ = integrator_for(&model, &params, config, Noise::Off)?;
        let flow = integrate_gradient_flow(&x, t_end, every, &mut integ)?;
        let sumsq = |g: &[f64]| g.iter().map(|v| (v - config.a) * (v - config.a)).sum::<f64>();
        let s0 = sumsq(&flow.gaps[0]);
        let mut run = DecayRun { id: r, rows: Vec::new(), gap_violations: 0, decay_violations: 0, energy_violations: 0 };
        for k in 0..flow.t_micro.len() {
            let t = flow.t_micro[k];
            let g = &flow.gaps[k];
            let s = sumsq(g);
            let bound = (-rate * t).exp() * s0;
            if !g.iter().all(|&v| th.in_d_double_prime(v)) {
                run.gap_violations += 1;
            }
            if s > bound * (1.0 + E4_DECAY_RTOL) {
                run.decay_violations += 1;
            }
            if k > 0 && flow.energy[k] > flow.energy[k - 1] + E4_ENERGY_TOL {
                run.energy_violations += 1;
            }
            let (lo, hi) = g.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            run.rows.push((t, s, bound, flow.energy[k], lo, hi));
        }
        Ok(run)
    })?;
    let mut report = StatReport::new(config);
    let gaps: usize = runs.iter().map(|r| r.gap_violations).sum();
    let decay: usize = runs.iter().map(|r| r.decay_violations).sum();
    let energy: usize = runs.iter().map(|r| r.energy_violations).sum();
    let samples: usize = runs.iter().map(|r| r.rows.len()).sum();
    report.value("n_particles", n);
    report.value("c_star", th.c_star);
    report.value("decay_exponent_at_end", rate * t_end);
    report.value("samples_checked", samples);
    report.check(Check::exact("gaps_stay_in_D2", gaps == 0, format!("{gaps} violating samples of {samples}")));
    report.check(Check::exact("decay_bound", decay == 0, format!("{decay} violating samples of {samples}")));
    report.check(Check::exact("energy_monotone", energy == 0, format!("{energy} increases above {E4_ENERGY_TOL:e}")));
    let mut csv = String::from("run_id,t_micro,sum_sq,bound,energy,min_gap,max_gap\n");
    for run in &runs {
        for (t, s, bd, e, lo, hi) in &run.rows {
            writeln!(csv, "{},{t:.16e},{s:.16e},{bd:.16e},{e:.16e},{lo:.16e},{hi:.16e}", run.id).unwrap();
        }
    }
    Ok(ExperimentResult { report, outputs: vec![("decay.csv".into(), csv)] })
}

fn run_e5(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let model = model_for(config)?;
    let th = model.thresholds;
    let b = model.constants.b;
    let eps = config.epsilon[0];
    let params = params_for(config, eps)?;
    let window = E5_WINDOW_SAMPLES as f64 * config.sample_every;
    let kind = InitialKind::NChain { separations: vec![(b + E5_EXTRA_GAP) * eps] };
    let rows = run_replicas(config, |r, seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = build_initial(&kind, &params, &model.constants, GapMode::Uniform, &mut rng)?;
        let mut state = ParticleState::from_parts(x0, rng);
        let mut integ = integrator_for(&model, &params, config, Noise::On)?;
        let mut merged: Option<(usize, f64, f64)> = None;
        let mut increment = None;
        let horizon = config.t_macro_end + window;
        simulate_micro(&mut state, &mut integ, horizon, config.sample_every, RecordMode::Observables, |s| {
            let view = diagnostics::segment_view(s.positions, b);
            let com = eps * view.segments[0].com;
            match merged {
                None => {
                    let collapsed = view.segments.len() == 1
                        && diagnostics::gaps(s.positions).iter().all(|&g| th.in_d_double_prime(g));
                    if collapsed && s.t_macro <= config.t_macro_end {
                        merged = Some((s.index, s.t_macro, com));
                    }
                }
                Some((k, _, c0)) if s.index == k + E5_WINDOW_SAMPLES => {
                    increment = Some(com - c0);
                    return ControlFlow::Break(());
                }
                Some(_) => {}
            }
            if merged.is_none() && s.t_macro >= config.t_macro_end {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })?;
        Ok((r, seed, merged.map(|m| m.1), increment))
    })?;
    let incs: Vec<f64> = rows.iter().filter_map(|r| r.3).collect();
    let m = incs.len();
    let expected = 1.0 / config.rho.iter().sum::<f64>();
    let mut report = StatReport::new(config);
    report.value("window", window);
    report.value("merged_runs", m);
    report.value("unmerged_runs", rows.len() - m);
    report.value("expected_rate", expected);
    if m >= 2 {
        let rate = stats::sample_variance(&incs) / window;
        let se = expected * (2.0 / (m as f64 - 1.0)).sqrt();
        report.value("variance_rate", rate);
        report.value("standard_error", se);
        report.check(Check::statistical(
            "merged_rate",
            (rate - expected).abs() <= 3.0 * se,
            m,
            format!("rate {rate:.5} vs 1/(rho1+rho2) = {expected:.5}, 3 SE = {:.5}", 3.0 * se),
        ));
    } else {
        report.check(Check::statistical("merged_rate", false, m, "fewer than two merges observed"));
    }
    let mut csv = String::from("run_id,seed,merge_t_macro,increment\n");
    for (r, s, t, inc) in &rows {
        let t = t.map_or_else(|| "-1".to_string(), |t| format!("{t:.16e}"));
        let inc = inc.map_or_else(|| "nan".to_string(), |v| format!("{v:.16e}"));
        writeln!(csv, "{r},{s},{t},{inc}").unwrap();
    }
    Ok(ExperimentResult { report, outputs: vec![("merges.csv".into(), csv)] })
}
