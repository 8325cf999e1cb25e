//! Scenario files: a flat TOML subset naming a zoo entry, a partition, the
//! diagnostics to run and where to write the results.

use super::CliError;
use crate::model_zoo;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Diagnostics a scenario may request.
pub const DIAGNOSTICS: [&str; 13] = [
    "edb",
    "edi",
    "chain_rule",
    "evi",
    "contractivity",
    "de_giorgi",
    "cms",
    "slope_estimate",
    "modulus",
    "stability",
    "energetic",
    "rate_independence",
    "tims",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub system: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<Vec<f64>>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    /// Time steps of a convergence study; each must divide `T`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taus: Option<Vec<f64>>,
    #[serde(default)]
    pub diagnostics: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evi: Option<EviSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contractivity: Option<ContractivitySpec>,
    /// Per-diagnostic tolerances; setting one makes that diagnostic hard.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tolerances: BTreeMap<String, f64>,
    /// Makes the oracle error a hard check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EviSpec {
    /// Defaults to the system's convexity parameter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default = "default_probes")]
    pub probes: usize,
    /// Half-width of the box around trajectory nodes the test points are drawn from.
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_pair_cap")]
    pub pair_cap: usize,
}

fn default_probes() -> usize {
    20
}
fn default_radius() -> f64 {
    1.0
}
fn default_pair_cap() -> usize {
    400
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractivitySpec {
    /// Scenario file (relative to this one) whose initial state starts the
    /// second flow.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partner: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Amplitude of the seeded random perturbation used when neither
    /// `partner` nor `u0` is given.
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
}

fn default_perturbation() -> f64 {
    0.1
}

/// Time discretization requested by a scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum Partition {
    /// Zoo defaults or `T`/`N`.
    Uniform { t_end: f64, steps: usize },
    Times(Vec<f64>),
    Taus { t_end: f64, taus: Vec<f64> },
}

impl Partition {
    /// Node times for a single run (the smallest τ of a study).
    pub fn nodes(&self) -> Vec<f64> {
        match self {
            Partition::Uniform { t_end, steps } => uniform(*t_end, *steps),
            Partition::Times(t) => t.clone(),
            Partition::Taus { t_end, taus } => {
                let tau = taus.iter().cloned().fold(f64::INFINITY, f64::min);
                uniform(*t_end, steps_for(*t_end, tau).unwrap_or(1))
            }
        }
    }
}

/// `n + 1` equally spaced nodes on `[0, t_end]` with exact endpoints.
pub fn uniform(t_end: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| if k == n { t_end } else { t_end * k as f64 / n as f64 }).collect()
}

/// `T/τ` when it is an integer up to roundoff.
pub fn steps_for(t_end: f64, tau: f64) -> Option<usize> {
    let n = (t_end / tau).round();
    (n >= 1.0 && (n * tau - t_end).abs() <= 1e-9 * t_end).then_some(n as usize)
}

/// Reads and parses a scenario file.
pub fn load(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })?;
    parse(&text, path)
}

/// Parses scenario text; errors carry the line and, when known, the field.
pub fn parse(text: &str, path: &Path) -> Result<Scenario, CliError> {
    toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        let field = line.and_then(|l| text.lines().nth(l - 1)).and_then(|l| l.split_once('=')).map(|(k, _)| k.trim().to_string());
        let field = backticked(e.message()).or(field);
        CliError::Parse { path: path.to_path_buf(), line, field, message: e.message().trim().to_string() }
    })
}

fn backticked(msg: &str) -> Option<String> {
    let rest = msg.strip_prefix("unknown field `").or_else(|| msg.strip_prefix("missing field `"))?;
    rest.split('`').next().map(str::to_string)
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl Scenario {
    /// Checks everything that can be checked without running, and resolves
    /// the partition against the entry's default horizon and step count.
    pub fn validate(&self, defaults: Option<(f64, usize)>) -> Result<Option<Partition>, CliError> {
        if !model_zoo::list_systems().iter().any(|(id, _)| *id == self.system) {
            return Err(invalid(format!("unknown system '{}'", self.system)));
        }
        let mut seen = Vec::new();
        for d in &self.diagnostics {
            if !DIAGNOSTICS.contains(&d.as_str()) {
                return Err(invalid(format!("unknown diagnostic '{d}'")));
            }
            if seen.contains(&d) {
                return Err(invalid(format!("diagnostic '{d}' listed twice")));
            }
            seen.push(d);
        }
        for (k, v) in &self.tolerances {
            if !DIAGNOSTICS.contains(&k.as_str()) {
                return Err(invalid(format!("tolerance for unknown diagnostic '{k}'")));
            }
            if !(*v >= 0.0) || !v.is_finite() {
                return Err(invalid(format!("tolerance for '{k}' must be finite and nonnegative")));
            }
        }
        if let Some(t) = self.oracle_tolerance {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(invalid("oracle_tolerance must be finite and nonnegative"));
            }
        }
        if let Some(u) = &self.u0 {
            if u.is_empty() || u.iter().any(|x| !x.is_finite()) {
                return Err(invalid("u0 must be a nonempty list of finite numbers"));
            }
        }
        if let Some(e) = &self.evi {
            if e.probes == 0 || e.pair_cap == 0 || !(e.radius > 0.0) || !e.radius.is_finite() {
                return Err(invalid("evi needs probes ≥ 1, pair_cap ≥ 1 and a positive radius"));
            }
            if e.lambda.is_some_and(|l| !l.is_finite()) {
                return Err(invalid("evi.lambda must be finite"));
            }
        }
        if let Some(c) = &self.contractivity {
            if c.partner.is_some() && c.u0.is_some() {
                return Err(invalid("contractivity takes either partner or u0, not both"));
            }
            if !(c.perturbation > 0.0) || !c.perturbation.is_finite() {
                return Err(invalid("contractivity.perturbation must be positive"));
            }
        }
        self.partition(defaults)
    }

    fn partition(&self, default: Option<(f64, usize)>) -> Result<Option<Partition>, CliError> {
        let Some((default_t, default_n)) = default else {
            if self.steps.is_some() || self.times.is_some() || self.taus.is_some() || self.t_end.is_some() {
                return Err(invalid(format!("'{}' takes no time partition", self.system)));
            }
            return Ok(None);
        };
        let given = [self.steps.is_some(), self.times.is_some(), self.taus.is_some()].iter().filter(|x| **x).count();
        if given > 1 {
            return Err(invalid("give at most one of N, times and taus"));
        }
        if let Some(t) = self.t_end {
            if !(t > 0.0) || !t.is_finite() {
                return Err(invalid(format!("T must be positive and finite, got {t}")));
            }
        }
        if let Some(times) = &self.times {
            if self.t_end.is_some() {
                return Err(invalid("T is implied by times"));
            }
            if times.len() < 2 || times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(invalid("times must be finite, strictly increasing, with at least two nodes"));
            }
            return Ok(Some(Partition::Times(times.clone())));
        }
        let t_end = self.t_end.unwrap_or(default_t);
        if let Some(taus) = &self.taus {
            if taus.is_empty() {
                return Err(invalid("taus must not be empty"));
            }
            for &tau in taus {
                if !(tau > 0.0) || !tau.is_finite() {
                    return Err(invalid(format!("time step must be positive, got {tau}")));
                }
                if steps_for(t_end, tau).is_none() {
                    return Err(invalid(format!("τ = {tau} does not divide T = {t_end}")));
                }
            }
            return Ok(Some(Partition::Taus { t_end, taus: taus.clone() }));
        }
        let steps = match self.steps {
            Some(n) if n < 1 => return Err(invalid(format!("N must be at least 1, got {n}"))),
            Some(n) => n as usize,
            None => default_n,
        };
        Ok(Some(Partition::Uniform { t_end, steps }))
    }

    /// Output directory: the command-line override, then `out`, then `gfl_out`.
    pub fn out_dir(&self, cli_override: Option<&Path>) -> PathBuf {
        cli_override.map(Path::to_path_buf).or_else(|| self.out.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("gfl_out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_reports_line_and_field() {
        let err = parse("system = \"quadratic\"\nN = \"ten\"\n", Path::new("s.toml")).unwrap_err();
        match err {
            CliError::Parse { line, field, .. } => {
                assert_eq!(line, Some(2));
                assert_eq!(field.as_deref(), Some("N"));
            }
            e => panic!("unexpected {e:?}"),
        }
        let err = parse("system = \"quadratic\"\nsteps = 3\n", Path::new("s.toml")).unwrap_err();
        assert!(matches!(err, CliError::Parse { field: Some(ref f), .. } if f == "steps"));
    }

    #[test]
    fn partitions() {
        let s = parse("system = \"eris_toy\"\nT = 2.0\nN = 40\n", Path::new("s")).unwrap();
        assert_eq!(s.validate(Some((1.0, 10))).unwrap().unwrap(), Partition::Uniform { t_end: 2.0, steps: 40 });
        let s = parse("system = \"eris_toy\"\nN = 0\n", Path::new("s")).unwrap();
        assert!(matches!(s.validate(Some((1.0, 10))), Err(CliError::Validation(_))));
        let s = parse("system = \"nonsmooth_r2\"\nT = 3.0\ntaus = [0.1, 0.01]\n", Path::new("s")).unwrap();
        assert_eq!(s.validate(Some((1.0, 10))).unwrap().unwrap().nodes().len(), 301);
        let s = parse("system = \"nonsmooth_r2\"\nT = 1.0\ntaus = [0.3]\n", Path::new("s")).unwrap();
        assert!(s.validate(Some((1.0, 10))).is_err());
        let u = uniform(3.0, 7);
        assert_eq!((u[0], u[7], u.len()), (0.0, 3.0, 8));
    }
}
