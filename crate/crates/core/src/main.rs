use std::fs::{self, File};
use std::io::BufWriter;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use coagsim::harness::{parse_config, run_experiment, ExperimentConfig, Verdict};
use coagsim::macroprocess::{init_rods, simulate_rods, write_events_csv, write_rod_csv};
use coagsim::microsim::{
    build_initial, simulate_micro, write_snapshots, write_trajectory_csv, GapMode, InitialKind, Integrator, Noise,
    ParticleState, RecordMode, ScalingParams,
};
use coagsim::potential::{verify_assumptions, Model};
use coagsim::{Error, Result};

#[derive(Parser)]
#[command(name = "coagsim", version, about = "Interacting Brownian particles and coalescing rods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the potential's structural constants and thresholds.
    PotentialInfo {
        #[arg(long, default_value_t = 4.0)]
        a: f64,
        #[arg(long, default_value_t = 0.1)]
        margin: f64,
        #[arg(long, default_value_t = 0.75)]
        kappa: f64,
        #[arg(long, default_value_t = 1.0)]
        theta: f64,
    },
    /// Grid-check the shape assumptions; exits nonzero if any clause fails.
    Verify {
        #[arg(long, default_value_t = 4.0)]
        a: f64,
        #[arg(long, default_value_t = 1e-4)]
        grid_step: f64,
    },
    /// One particle trajectory from a configuration file (first epsilon).
    SimulateMicro {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write every sampled configuration to `snapshots.txt`.
        #[arg(long)]
        snapshots: bool,
    },
    /// Coalescing rods with the configuration's masses.
    SimulateMacro {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Physical rod centers, comma separated, one per mass.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        centers: Vec<f64>,
        #[arg(long, default_value_t = 1e-5)]
        dt: f64,
    },
    /// Run a replica experiment and write its CSVs and `summary.txt`.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn potential_info(a: f64, margin: f64, kappa: f64, theta: f64) -> Result<()> {
    let m = Model::example(a, margin, kappa, theta)?;
    let (c, t) = (m.constants, m.thresholds);
    for (k, v) in [
        ("a", c.a),
        ("u_a", c.u_a),
        ("b", c.b),
        ("b1", c.b1),
        ("b2", c.b2),
        ("b3", c.b3),
        ("b4", c.b4),
        ("c_check", c.c_check),
        ("c_minus", c.c_minus),
        ("b2p", t.b2p),
        ("b3p", t.b3p),
        ("b4p", t.b4p),
        ("delta_bar", t.delta_bar),
        ("delta1", t.delta1),
        ("c_star", t.c_star),
    ] {
        println!("{k} = {v}");
    }
    print!("{}", verify_assumptions(&m.spec, &c, 1e-4)?);
    Ok(())
}

fn simulate_micro_cmd(config: &ExperimentConfig, out: &Path, snapshots: bool) -> Result<()> {
    let model = Model::example(config.a, config.margin, config.kappa, config.theta)?;
    let params = ScalingParams::new(
        config.epsilon[0],
        config.alpha,
        config.rho.clone(),
        config.mu,
        config.nu,
        config.nu_tilde,
        config.dt_safety,
    )?;
    let kind = if config.rho.len() == 1 { InitialKind::Single } else { InitialKind::TwoChain };
    let mut rng = ChaCha8Rng::seed_from_u64(config.master_seed);
    let x0 = build_initial(&kind, &params, &model.constants, GapMode::Uniform, &mut rng)?;
    let mut state = ParticleState::from_parts(x0, rng);
    let mut integ = Integrator::new(model.spec, &model.constants, &params, config.dt_override, Noise::On)?;
    let mode = if snapshots { RecordMode::Snapshots } else { RecordMode::Observables };
    let traj = simulate_micro(&mut state, &mut integ, config.t_macro_end, config.sample_every, mode, |_| {
        ControlFlow::Continue(())
    })?;
    fs::create_dir_all(out)?;
    write_trajectory_csv(&traj, BufWriter::new(File::create(out.join("trajectory.csv"))?))?;
    if snapshots {
        write_snapshots(&traj, BufWriter::new(File::create(out.join("snapshots.txt"))?))?;
    }
    Ok(())
}

fn simulate_macro_cmd(config: &ExperimentConfig, out: &Path, centers: &[f64], dt: f64) -> Result<()> {
    let mut sys = init_rods(&config.rho, centers, config.a)?;
    let stride = ((config.sample_every / dt).round() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.master_seed);
    let traj = simulate_rods(&mut sys, config.t_macro_end, dt, stride, &mut rng)?;
    fs::create_dir_all(out)?;
    write_rod_csv(&traj, BufWriter::new(File::create(out.join("rods.csv"))?))?;
    write_events_csv(&traj.events, BufWriter::new(File::create(out.join("events.csv"))?))?;
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::PotentialInfo { a, margin, kappa, theta } => potential_info(a, margin, kappa, theta)?,
        Command::Verify { a, grid_step } => {
            let m = Model::example(a, 0.1, 0.75, 1.0)?;
            let report = verify_assumptions(&m.spec, &m.constants, grid_step)?;
            print!("{report}");
            if !report.all_pass() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::SimulateMicro { config, out, snapshots } => {
            simulate_micro_cmd(&parse_config(&config)?, &out, snapshots)?
        }
        Command::SimulateMacro { config, out, centers, dt } => {
            simulate_macro_cmd(&parse_config(&config)?, &out, &centers, dt)?
        }
        Command::Experiment { config, out } => {
            let report = run_experiment(&parse_config(&config)?, Some(&out))?;
            print!("{}", fs::read_to_string(out.join("summary.txt"))?);
            if report.verdict() == Verdict::Fail {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Config { .. } | Error::ConfigMissing(_) = e {
                return ExitCode::from(2);
            }
            ExitCode::FAILURE
        }
    }
}
