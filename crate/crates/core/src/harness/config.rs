//! Experiment configuration files: UTF-8, one `key = value` per line, `#`
//! starts a comment. Every physics key is required; unknown keys are errors.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentId {
    E1,
    E2,
    E3,
    E4,
    E5,
}

impl FromStr for ExperimentId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "E1" => Ok(ExperimentId::E1),
            "E2" => Ok(ExperimentId::E2),
            "E3" => Ok(ExperimentId::E3),
            "E4" => Ok(ExperimentId::E4),
            "E5" => Ok(ExperimentId::E5),
            other => Err(format!("unknown experiment {other:?} (expected E1..E5)")),
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    /// One value, or a ladder for the trend experiments.
    pub epsilon: Vec<f64>,
    pub alpha: f64,
    pub nu: f64,
    pub nu_tilde: f64,
    pub mu: f64,
    pub kappa: f64,
    pub theta: f64,
    pub margin: f64,
    pub a: f64,
    pub rho: Vec<f64>,
    pub t_macro_end: f64,
    pub sample_every: f64,
    /// Absolute microscopic step; `None` uses the safety-factor step.
    pub dt_override: Option<f64>,
    pub delta: f64,
    pub replicas: usize,
    pub master_seed: u64,
    /// Explicit-step safety factor; optional, defaults to 1.
    pub dt_safety: f64,
}

const REQUIRED: [&str; 16] = [
    "experiment",
    "epsilon",
    "alpha",
    "nu",
    "nu_tilde",
    "mu",
    "kappa",
    "theta",
    "margin",
    "a",
    "rho",
    "t_macro_end",
    "sample_every",
    "delta",
    "replicas",
    "master_seed",
];
const OPTIONAL: [&str; 2] = ["dt_override", "dt_safety"];

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config_str(&std::fs::read_to_string(path)?)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let mut entries: Vec<(&'static str, usize, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| Error::Config {
            line,
            message: format!("expected `key = value`, found {body:?}"),
        })?;
        let key = key.trim();
        let known = REQUIRED
            .iter()
            .chain(OPTIONAL.iter())
            .find(|k| **k == key)
            .ok_or_else(|| Error::Config { line, message: format!("unknown key {key:?}") })?;
        if entries.iter().any(|(k, _, _)| k == known) {
            return Err(Error::Config { line, message: format!("duplicate key {key:?}") });
        }
        entries.push((known, line, value.trim().to_string()));
    }
    for key in REQUIRED {
        if !entries.iter().any(|(k, _, _)| *k == key) {
            return Err(Error::ConfigMissing(format!("missing required key {key:?}")));
        }
    }
    let get = |key: &str| entries.iter().find(|(k, _, _)| *k == key).map(|(_, l, v)| (*l, v.as_str()));
    let req = |key: &str| get(key).expect("checked above");

    fn value<T: FromStr>(key: &str, (line, v): (usize, &str)) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        v.parse::<T>()
            .map_err(|e| Error::Config { line, message: format!("bad value {v:?} for {key}: {e}") })
    }
    fn list(key: &str, (line, v): (usize, &str)) -> Result<Vec<f64>> {
        let out: Result<Vec<f64>> = v.split(',').map(|p| value(key, (line, p.trim()))).collect();
        let out = out?;
        if out.is_empty() {
            return Err(Error::Config { line, message: format!("{key} needs at least one value") });
        }
        Ok(out)
    }

    let experiment = {
        let (line, v) = req("experiment");
        v.parse::<ExperimentId>().map_err(|message| Error::Config { line, message })?
    };
    let dt_override = match get("dt_override") {
        None => None,
        Some((_, v)) if v.eq_ignore_ascii_case("none") => None,
        Some(lv) => Some(value::<f64>("dt_override", lv)?),
    };
    let dt_safety = match get("dt_safety") {
        None => 1.0,
        Some(lv) => value::<f64>("dt_safety", lv)?,
    };
    let replicas = value::<usize>("replicas", req("replicas"))?;
    if replicas == 0 {
        let (line, _) = req("replicas");
        return Err(Error::Config { line, message: "replicas must be at least 1".into() });
    }
    Ok(ExperimentConfig {
        experiment,
        epsilon: list("epsilon", req("epsilon"))?,
        alpha: value("alpha", req("alpha"))?,
        nu: value("nu", req("nu"))?,
        nu_tilde: value("nu_tilde", req("nu_tilde"))?,
        mu: value("mu", req("mu"))?,
        kappa: value("kappa", req("kappa"))?,
        theta: value("theta", req("theta"))?,
        margin: value("margin", req("margin"))?,
        a: value("a", req("a"))?,
        rho: list("rho", req("rho"))?,
        t_macro_end: value("t_macro_end", req("t_macro_end"))?,
        sample_every: value("sample_every", req("sample_every"))?,
        dt_override,
        delta: value("delta", req("delta"))?,
        replicas,
        master_seed: value("master_seed", req("master_seed"))?,
        dt_safety,
    })
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    /// Key/value pairs in canonical order; floats use the shortest
    /// representation that parses back to the same value.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("experiment", self.experiment.to_string()),
            ("epsilon", join(&self.epsilon)),
            ("alpha", self.alpha.to_string()),
            ("nu", self.nu.to_string()),
            ("nu_tilde", self.nu_tilde.to_string()),
            ("mu", self.mu.to_string()),
            ("kappa", self.kappa.to_string()),
            ("theta", self.theta.to_string()),
            ("margin", self.margin.to_string()),
            ("a", self.a.to_string()),
            ("rho", join(&self.rho)),
            ("t_macro_end", self.t_macro_end.to_string()),
            ("sample_every", self.sample_every.to_string()),
            ("dt_override", self.dt_override.map_or_else(|| "none".to_string(), |v| v.to_string())),
            ("dt_safety", self.dt_safety.to_string()),
            ("delta", self.delta.to_string()),
            ("replicas", self.replicas.to_string()),
            ("master_seed", self.master_seed.to_string()),
        ]
    }

    pub fn to_config_string(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
