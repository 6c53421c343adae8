//! Python bindings: the potential, the particle simulator, chain diagnostics,
//! coalescing rods and the experiment runner.

use std::ops::ControlFlow;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use coagsim::diagnostics;
use coagsim::harness::{self, Verdict};
use coagsim::macroprocess;
use coagsim::microsim::{self, GapMode, InitialKind, Integrator, Noise, ParticleState, RecordMode, ScalingParams};
use coagsim::potential::{verify_assumptions, Model};
use coagsim::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// The example pair potential with its constants and thresholds.
#[pyclass(name = "Potential", module = "pycoagsim", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPotential {
    model: Model,
}

#[pymethods]
impl PyPotential {
    #[new]
    #[pyo3(signature = (a = 4.0, margin = 0.1, kappa = 0.75, theta = 1.0))]
    fn new(a: f64, margin: f64, kappa: f64, theta: f64) -> PyResult<Self> {
        Ok(Self { model: Model::example(a, margin, kappa, theta).map_err(to_py)? })
    }

    #[getter]
    fn a(&self) -> f64 {
        self.model.spec.a()
    }

    fn value(&self, x: f64) -> f64 {
        self.model.spec.value(x)
    }

    fn derivative(&self, x: f64) -> f64 {
        self.model.spec.derivative(x)
    }

    fn second_derivative(&self, x: f64) -> f64 {
        self.model.spec.second_derivative(x)
    }

    fn constants<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let c = self.model.constants;
        let d = PyDict::new(py);
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
        ] {
            d.set_item(k, v)?;
        }
        Ok(d)
    }

    fn thresholds<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let t = self.model.thresholds;
        let d = PyDict::new(py);
        for (k, v) in [
            ("b2p", t.b2p),
            ("b3p", t.b3p),
            ("b4p", t.b4p),
            ("delta_bar", t.delta_bar),
            ("delta1", t.delta1),
            ("c_star", t.c_star),
            ("kappa", t.kappa),
            ("theta", t.theta),
        ] {
            d.set_item(k, v)?;
        }
        Ok(d)
    }

    /// `(clause, passed, witness)` for every assumption clause.
    #[pyo3(signature = (grid_step = 1e-4))]
    fn verify(&self, grid_step: f64) -> PyResult<Vec<(String, bool, String)>> {
        let report = verify_assumptions(&self.model.spec, &self.model.constants, grid_step).map_err(to_py)?;
        Ok(report.clauses.into_iter().map(|c| (c.clause.to_string(), c.passed, c.witness)).collect())
    }

    fn hamiltonian(&self, positions: Vec<f64>) -> f64 {
        microsim::hamiltonian(&positions, &self.model.spec)
    }

    fn gradient(&self, positions: Vec<f64>) -> Vec<f64> {
        microsim::grad_hamiltonian(&positions, &self.model.spec)
    }

    fn __repr__(&self) -> String {
        format!("Potential(a={}, b={})", self.model.spec.a(), self.model.constants.b)
    }
}

/// A seeded particle system advanced by Euler–Maruyama.
#[pyclass(name = "Simulator", module = "pycoagsim")]
struct PySimulator {
    state: ParticleState,
    integrator: Integrator,
}

#[pymethods]
impl PySimulator {
    /// `initial` is `"single"`, `"two_chain"`, or a list of macroscopic
    /// separations between consecutive chains.
    #[new]
    #[pyo3(signature = (potential, epsilon, alpha, rho, seed, mu = 1.2, initial = None, dt_override = None, noise = true))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        potential: &PyPotential,
        epsilon: f64,
        alpha: f64,
        rho: Vec<f64>,
        seed: u64,
        mu: f64,
        initial: Option<&Bound<'_, PyAny>>,
        dt_override: Option<f64>,
        noise: bool,
    ) -> PyResult<Self> {
        let m = &potential.model;
        let params = ScalingParams::new(epsilon, alpha, rho, mu, 1.0, 1.0, 1.0).map_err(to_py)?;
        let kind = match initial {
            None => {
                if params.n_particles.len() == 1 {
                    InitialKind::Single
                } else {
                    InitialKind::TwoChain
                }
            }
            Some(obj) => match obj.extract::<String>() {
                Ok(s) if s == "single" => InitialKind::Single,
                Ok(s) if s == "two_chain" => InitialKind::TwoChain,
                Ok(s) => return Err(PyValueError::new_err(format!("unknown initial layout {s:?}"))),
                Err(_) => InitialKind::NChain { separations: obj.extract::<Vec<f64>>()? },
            },
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = microsim::build_initial(&kind, &params, &m.constants, GapMode::Uniform, &mut rng).map_err(to_py)?;
        let noise = if noise { Noise::On } else { Noise::Off };
        let integrator = Integrator::new(m.spec, &m.constants, &params, dt_override, noise).map_err(to_py)?;
        Ok(Self { state: ParticleState::from_parts(x0, rng), integrator })
    }

    #[getter]
    fn positions(&self) -> Vec<f64> {
        self.state.positions.clone()
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.integrator.dt()
    }

    #[getter]
    fn t_micro(&self) -> f64 {
        self.state.t_micro
    }

    /// Advance by `t_macro` macroscopic time; returns the sampled observables
    /// as a dict of equal-length lists.
    fn run<'py>(&mut self, py: Python<'py>, t_macro: f64, sample_every: f64) -> PyResult<Bound<'py, PyDict>> {
        let (state, integ) = (&mut self.state, &mut self.integrator);
        let traj = py
            .detach(|| {
                microsim::simulate_micro(state, integ, t_macro, sample_every, RecordMode::Observables, |_| {
                    ControlFlow::Continue(())
                })
            })
            .map_err(to_py)?;
        let d = PyDict::new(py);
        let s = &traj.samples;
        d.set_item("t_macro", s.iter().map(|v| v.t_macro).collect::<Vec<_>>())?;
        d.set_item("com", s.iter().map(|v| v.com).collect::<Vec<_>>())?;
        d.set_item("energy", s.iter().map(|v| v.energy).collect::<Vec<_>>())?;
        d.set_item("grad_norm_inf", s.iter().map(|v| v.grad_norm_inf).collect::<Vec<_>>())?;
        d.set_item("n_segments", s.iter().map(|v| v.n_segments).collect::<Vec<_>>())?;
        Ok(d)
    }
}

/// `(eta, h, grad_norm_2, grad_norm_inf, laplace_norm_2)`.
#[pyfunction]
#[pyo3(signature = (positions, a = 4.0))]
fn decompose(positions: Vec<f64>, a: f64) -> PyResult<(f64, Vec<f64>, f64, f64, f64)> {
    let d = diagnostics::decompose(&positions, a).map_err(to_py)?;
    Ok((d.eta, d.h, d.grad_norm_2, d.grad_norm_inf, d.laplace_norm_2))
}

/// `(direct, decomposition, gap_sum)` for the split after `n1` particles.
#[pyfunction]
#[pyo3(signature = (positions, n1, a = 4.0))]
fn centers_difference(positions: Vec<f64>, n1: usize, a: f64) -> PyResult<(f64, f64, f64)> {
    let d = diagnostics::centers_difference(&positions, n1, a).map_err(to_py)?;
    Ok((d.direct, d.decomposition, d.gap_sum))
}

/// `(first, count, center)` for each maximal run of gaps below `threshold`.
#[pyfunction]
fn segments(positions: Vec<f64>, threshold: f64) -> Vec<(usize, usize, f64)> {
    diagnostics::segment_view(&positions, threshold)
        .segments
        .into_iter()
        .map(|s| (s.first, s.count, s.com))
        .collect()
}

/// Coalescing rods with their own seeded generator.
#[pyclass(name = "RodSystem", module = "pycoagsim")]
struct PyRodSystem {
    system: macroprocess::RodSystem,
    rng: ChaCha8Rng,
}

#[pymethods]
impl PyRodSystem {
    #[new]
    #[pyo3(signature = (rho, centers, seed, a = 4.0))]
    fn new(rho: Vec<f64>, centers: Vec<f64>, seed: u64, a: f64) -> PyResult<Self> {
        Ok(Self {
            system: macroprocess::init_rods(&rho, &centers, a).map_err(to_py)?,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    #[getter]
    fn t_macro(&self) -> f64 {
        self.system.t_macro
    }

    fn total_mass(&self) -> f64 {
        self.system.total_mass()
    }

    fn member_centers(&self) -> Vec<f64> {
        self.system.member_centers()
    }

    fn physical_centers(&self) -> Vec<f64> {
        self.system.physical_centers()
    }

    /// Group membership as lists of original rod indices.
    fn groups(&self) -> Vec<Vec<usize>> {
        self.system.groups.iter().map(|g| g.members.clone()).collect()
    }

    /// Run for `t_end`; returns `(times, centers, events)` where each event is
    /// `(t_macro, left_members, right_members, new_mass)`.
    #[pyo3(signature = (t_end, dt, sample_stride = 1))]
    #[allow(clippy::type_complexity)]
    fn simulate(
        &mut self,
        t_end: f64,
        dt: f64,
        sample_stride: usize,
    ) -> PyResult<(Vec<f64>, Vec<Vec<f64>>, Vec<(f64, Vec<usize>, Vec<usize>, f64)>)> {
        let t = macroprocess::simulate_rods(&mut self.system, t_end, dt, sample_stride, &mut self.rng).map_err(to_py)?;
        let events = t
            .events
            .into_iter()
            .map(|e| (e.t_macro, e.left_members, e.right_members, e.new_mass))
            .collect();
        Ok((t.times, t.centers, events))
    }
}

/// `n` exact first-meeting times of two free rods.
#[pyfunction]
fn exact_meeting_times(gap: f64, rho1: f64, rho2: f64, n: usize, seed: u64) -> PyResult<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| macroprocess::exact_two_rod_meeting(gap, rho1, rho2, &mut rng).map_err(to_py))
        .collect()
}

/// Run an experiment from a configuration file. Returns a dict with the
/// verdict, the reported values, and `(name, verdict, detail)` checks.
#[pyfunction]
#[pyo3(signature = (config, out_dir = None))]
fn run_experiment<'py>(py: Python<'py>, config: PathBuf, out_dir: Option<PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = harness::parse_config(&config).map_err(to_py)?;
    let report = py.detach(|| harness::run_experiment(&cfg, out_dir.as_deref())).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("experiment", report.experiment.to_string())?;
    d.set_item("verdict", report.verdict().to_string())?;
    d.set_item("passed", report.verdict() == Verdict::Pass)?;
    let values = PyDict::new(py);
    for (k, v) in &report.values {
        values.set_item(k, v)?;
    }
    d.set_item("values", values)?;
    let checks: Vec<(String, String, String)> =
        report.checks.iter().map(|c| (c.name.clone(), c.verdict.to_string(), c.detail.clone())).collect();
    d.set_item("checks", checks)?;
    d.set_item("notes", report.notes.clone())?;
    Ok(d)
}

#[pymodule]
fn pycoagsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPotential>()?;
    m.add_class::<PySimulator>()?;
    m.add_class::<PyRodSystem>()?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(centers_difference, m)?)?;
    m.add_function(wrap_pyfunction!(segments, m)?)?;
    m.add_function(wrap_pyfunction!(exact_meeting_times, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
