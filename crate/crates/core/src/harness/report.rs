use std::fmt;

use super::config::{ExperimentConfig, ExperimentId};

/// Statistical checks on fewer replicas than this are reported inconclusive.
pub const MIN_REPLICAS_FOR_STATS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub verdict: Verdict,
    pub detail: String,
}

impl Check {
    pub fn exact(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            verdict: if passed { Verdict::Pass } else { Verdict::Fail },
            detail: detail.into(),
        }
    }

    /// A statistical check: inconclusive below the replica floor whatever
    /// the outcome.
    pub fn statistical(name: impl Into<String>, passed: bool, n: usize, detail: impl Into<String>) -> Self {
        let mut c = Self::exact(name, passed, detail);
        if n < MIN_REPLICAS_FOR_STATS {
            c.verdict = Verdict::Inconclusive;
            c.detail = format!("{} [only {n} replicas, need {MIN_REPLICAS_FOR_STATS}]", c.detail);
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatReport {
    pub experiment: ExperimentId,
    pub replicas: usize,
    pub seed_first: u64,
    pub seed_last: u64,
    /// Estimates and statistics, in insertion order.
    pub values: Vec<(String, String)>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl StatReport {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            experiment: config.experiment,
            replicas: config.replicas,
            seed_first: config.master_seed,
            seed_last: config.master_seed + config.replicas as u64 - 1,
            values: Vec::new(),
            checks: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn value(&mut self, key: impl Into<String>, v: impl fmt::Display) {
        self.values.push((key.into(), v.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn find_check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn verdict(&self) -> Verdict {
        if self.checks.iter().any(|c| c.verdict == Verdict::Fail) {
            Verdict::Fail
        } else if self.checks.iter().any(|c| c.verdict == Verdict::Inconclusive) || self.checks.is_empty() {
            Verdict::Inconclusive
        } else {
            Verdict::Pass
        }
    }

    /// `key = value` lines: the configuration, then results and checks.
    pub fn summary(&self, config: &ExperimentConfig) -> String {
        let mut out = String::new();
        for (k, v) in config.entries() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out.push_str(&format!("seed_range = {}..={}\n", self.seed_first, self.seed_last));
        for (k, v) in &self.values {
            out.push_str(&format!("{k} = {v}\n"));
        }
        for c in &self.checks {
            out.push_str(&format!("check.{} = {} ({})\n", c.name, c.verdict, c.detail));
        }
        for (i, n) in self.notes.iter().enumerate() {
            out.push_str(&format!("note.{} = {}\n", i + 1, n));
        }
        out.push_str(&format!("verdict = {}\n", self.verdict()));
        out
    }
}
