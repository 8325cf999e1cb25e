//! Scenario execution: a single run with its diagnostics, and families of
//! runs assembled into convergence tables.

use super::report::{ConvergenceRow, ConvergenceTable, CsvRow, DiagnosticResult, RunReport, Status, TrajectorySummary};
use super::scenario::{self, Partition, Scenario};
use super::CliError;
use crate::diagnostics::{
    chain_rule_residual, cms_residual, de_giorgi_identity_residual, discrete_de_giorgi_edi, discrete_edi_check, edb_report, modulus_violation,
    slope_estimate_violation, speed_and_slope_series,
};
use crate::error::GflError;
use crate::evi::{contractivity_check, evi_probe};
use crate::mms_solver::{run_mms_partition, MmsOptions, Trajectory};
use crate::model_zoo::{self, ZooEntry, ZooEris, ZooGradient};
use crate::quad;
use crate::rate_independent::{energetic_solution_residuals, rate_independence_check, run_tims, tims_properties, ErisTrajectory, PowerQuadrature};
use crate::StateVec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// A validated scenario with its zoo entry built.
pub struct Prepared {
    pub scenario: Scenario,
    pub entry: ZooEntry,
    pub u0: Option<StateVec>,
    pub partition: Option<Partition>,
    /// Directory of the scenario file, for resolving partner scenarios.
    pub base_dir: PathBuf,
}

/// Output of one solver run.
pub enum Run {
    Gradient(Trajectory),
    Eris(ErisTrajectory),
}

impl Run {
    fn times(&self) -> &[f64] {
        match self {
            Run::Gradient(t) => &t.times,
            Run::Eris(t) => &t.times,
        }
    }
}

fn solver(context: &str, e: GflError) -> CliError {
    CliError::Solver { context: context.to_string(), source: e }
}

pub fn prepare(scenario: Scenario, base_dir: &Path) -> Result<Prepared, CliError> {
    if !model_zoo::list_systems().iter().any(|(id, _)| *id == scenario.system) {
        return Err(CliError::Validation(format!("unknown system '{}'", scenario.system)));
    }
    let entry = model_zoo::build(&scenario.system, &scenario.params).map_err(|e| CliError::Validation(e.to_string()))?;
    let (defaults, default_u0) = match &entry {
        ZooEntry::Gradient(g) => (Some((g.t_end, g.steps)), Some(&g.u0)),
        ZooEntry::Eris(e) => (Some((e.t_end, e.steps)), Some(&e.u0)),
        ZooEntry::Check(_) => (None, None),
    };
    let partition = scenario.validate(defaults)?;
    let u0 = match (default_u0, &scenario.u0) {
        (Some(d), Some(u)) if u.len() != d.len() => {
            return Err(CliError::Validation(format!("u0 has {} components, '{}' needs {}", u.len(), scenario.system, d.len())));
        }
        (Some(_), Some(u)) => Some(StateVec::from_column_slice(u)),
        (Some(d), None) => Some(d.clone()),
        (None, Some(_)) => return Err(CliError::Validation(format!("'{}' takes no initial state", scenario.system))),
        (None, None) => None,
    };
    Ok(Prepared { scenario, entry, u0, partition, base_dir: base_dir.to_path_buf() })
}

fn options(sc: &Scenario) -> MmsOptions {
    MmsOptions { seed: sc.seed, ..MmsOptions::default() }
}

/// Runs the prepared entry on `times`.
pub fn execute(p: &Prepared, times: &[f64]) -> Result<Run, GflError> {
    let u0 = p.u0.as_ref().ok_or(GflError::InvalidParameter("entry has no trajectory".into()))?;
    match &p.entry {
        ZooEntry::Gradient(g) => run_mms_partition(&g.system, u0, times, &options(&p.scenario)).map(Run::Gradient),
        ZooEntry::Eris(e) => run_tims(&e.system, u0, times).map(Run::Eris),
        ZooEntry::Check(_) => Err(GflError::InvalidParameter("check entries have no trajectory".into())),
    }
}

/// Error against the entry's reference, when it registers one.
pub fn oracle_error(p: &Prepared, run: &Run) -> Option<Result<f64, GflError>> {
    match (&p.entry, run) {
        (ZooEntry::Gradient(g), Run::Gradient(tr)) => g.error_oracle.as_ref().map(|o| o(tr)),
        (ZooEntry::Eris(e), Run::Eris(tr)) => e.exact.as_ref().map(|ex| {
            Ok(tr.times.iter().zip(&tr.states).map(|(t, u)| (u - ex(*t)).amax()).fold(0.0, f64::max))
        }),
        _ => None,
    }
}

#[derive(Clone, Copy)]
enum Bound {
    /// Passes when `metric ≥ −tol`.
    Lower,
    /// Passes when `metric ≤ tol`.
    Upper,
}

struct Measure {
    metric: f64,
    bound: Bound,
    default_tol: Option<f64>,
    values: BTreeMap<String, f64>,
}

fn measure(metric: f64, bound: Bound, default_tol: Option<f64>, values: &[(&str, f64)]) -> Measure {
    Measure { metric, bound, default_tol, values: values.iter().map(|(k, v)| (k.to_string(), *v)).collect() }
}

fn judge(sc: &Scenario, name: &str, m: std::result::Result<Measure, String>) -> DiagnosticResult {
    let m = match m {
        Ok(m) => m,
        Err(reason) => return DiagnosticResult::skipped(name, reason),
    };
    let tol = sc.tolerances.get(name).copied().or(m.default_tol);
    let status = match tol {
        None => Status::Info,
        Some(t) => {
            let ok = match m.bound {
                Bound::Lower => m.metric >= -t,
                Bound::Upper => m.metric <= t,
            };
            if ok {
                Status::Pass
            } else {
                Status::Fail
            }
        }
    };
    DiagnosticResult { name: name.to_string(), status, tolerance: tol, values: m.values, reason: None }
}

fn err(e: GflError) -> String {
    format!("not available: {e}")
}

/// Cumulative discrete EDI residuals, starting at 0 on the first node.
fn edi_cumulative(g: &ZooGradient, tr: &Trajectory) -> Result<Vec<f64>, GflError> {
    let steps = discrete_edi_check(&g.system, tr)?;
    let mut out = vec![0.0];
    for r in steps {
        out.push(out.last().unwrap() + r);
    }
    Ok(out)
}

/// Contraction rate of the implicit scheme, `ln(1 + λτ)/τ` at the largest
/// step: each step contracts by `(1 + λτ)⁻¹`, which is weaker than `e^{−λτ}`.
fn scheme_rate(lambda: f64, times: &[f64]) -> std::result::Result<f64, String> {
    let tau = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if 1.0 + lambda * tau <= 0.0 {
        return Err(format!("time step {tau} too large for λ = {lambda}"));
    }
    Ok((lambda * tau).ln_1p() / tau)
}

fn partner_start(p: &Prepared, g: &ZooGradient, u0: &StateVec) -> Result<StateVec, String> {
    let spec = p.scenario.contractivity.clone().unwrap_or(scenario::ContractivitySpec { partner: None, u0: None, lambda: None, perturbation: 0.1 });
    if let Some(u) = &spec.u0 {
        return if u.len() == u0.len() { Ok(StateVec::from_column_slice(u)) } else { Err("contractivity.u0 has the wrong dimension".into()) };
    }
    if let Some(file) = &spec.partner {
        let path = p.base_dir.join(file);
        let other = scenario::load(&path).map_err(|e| e.to_string())?;
        if other.system != p.scenario.system || other.params != p.scenario.params {
            return Err("partner scenario must use the same system and parameters".into());
        }
        return match other.u0 {
            Some(u) if u.len() == u0.len() => Ok(StateVec::from_column_slice(&u)),
            Some(_) => Err("partner u0 has the wrong dimension".into()),
            None => Ok(g.u0.clone()),
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.scenario.seed);
    Ok(u0.map(|x| x + spec.perturbation * rng.gen_range(-1.0..1.0)))
}

fn gradient_diagnostic(p: &Prepared, g: &ZooGradient, tr: &Trajectory, edi: &Option<Result<Vec<f64>, GflError>>, name: &str) -> std::result::Result<Measure, String> {
    let sys = &g.system;
    let (t0, t1) = (tr.t0(), tr.t_end());
    let u0 = &tr.states[0];
    let opts = options(&p.scenario);
    match name {
        "edb" => {
            let r = edb_report(sys, tr, t0, t1, 0).map_err(err)?;
            Ok(measure(
                r.residual + r.lower_tolerance,
                Bound::Lower,
                Some(0.0),
                &[
                    ("residual", r.residual),
                    ("lower_tolerance", r.lower_tolerance),
                    ("energy_drop", r.energy_drop),
                    ("rate_integral", r.rate_integral),
                    ("slope_integral", r.slope_integral),
                    ("work_integral", r.work_integral),
                    ("quadrature_error", r.quadrature_error),
                ],
            ))
        }
        "edi" => {
            let cum = edi.as_ref().expect("computed when requested").as_ref().map_err(|e| err(e.clone()))?;
            let worst = cum.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
            Ok(measure(worst, Bound::Lower, Some(1e-8), &[("worst_step", worst), ("cumulative", *cum.last().unwrap())]))
        }
        "chain_rule" => {
            let k = (tr.len() / 2).max(1);
            let (a, b) = (tr.times[k - 1], tr.times[k]);
            let r = chain_rule_residual(sys, tr, 0.5 * (a + b), 0.25 * (b - a)).map_err(err)?;
            Ok(measure(r, Bound::Upper, None, &[("residual", r), ("t", 0.5 * (a + b))]))
        }
        "evi" => {
            let spec = p.scenario.evi.clone().unwrap_or(scenario::EviSpec { lambda: None, probes: 20, radius: 1.0, pair_cap: 400 });
            let lambda = spec.lambda.or_else(|| sys.lambda()).ok_or_else(|| err(GflError::UnknownLambda))?;
            let mut rng = ChaCha8Rng::seed_from_u64(p.scenario.seed);
            let probes: Vec<StateVec> = (0..spec.probes)
                .map(|_| {
                    let c = &tr.states[rng.gen_range(0..tr.len())];
                    c.map(|x| x + spec.radius * rng.gen_range(-1.0..1.0))
                })
                .collect();
            let r = evi_probe(sys, tr, &probes, lambda, spec.pair_cap).map_err(err)?;
            Ok(measure(r.worst_violation, Bound::Lower, None, &[("worst_violation", r.worst_violation), ("lambda", lambda), ("probes", r.probes as f64)]))
        }
        "contractivity" => {
            let lambda = match p.scenario.contractivity.as_ref().and_then(|c| c.lambda) {
                Some(l) => l,
                None => scheme_rate(sys.lambda().ok_or_else(|| err(GflError::UnknownLambda))?, &tr.times)?,
            };
            let start = partner_start(p, g, u0)?;
            let other = run_mms_partition(sys, &start, &tr.times, &opts).map_err(|e| format!("partner run failed: {e}"))?;
            let ratio = contractivity_check(tr, &other, lambda, &sys.fixed_norm(), None).map_err(err)?;
            Ok(measure(ratio - 1.0, Bound::Upper, Some(1e-6), &[("worst_ratio", ratio), ("lambda", lambda)]))
        }
        "de_giorgi" => {
            let tau = tr.times[1] - tr.times[0];
            let id = de_giorgi_identity_residual(sys, u0, t0, tau, &opts).map_err(err)?;
            let edi = discrete_de_giorgi_edi(sys, u0, t0, tau, &opts).map_err(err)?;
            Ok(measure(edi.min(-id.residual.abs()), Bound::Lower, Some(1e-6), &[("identity_residual", id.residual), ("discrete_edi", edi), ("tau", tau)]))
        }
        "cms" => {
            let r = cms_residual(sys, tr, t0, t1).map_err(err)?;
            Ok(measure(r, Bound::Upper, None, &[("residual", r)]))
        }
        "slope_estimate" => {
            let r = slope_estimate_violation(sys, tr).map_err(err)?;
            Ok(measure(r, Bound::Upper, Some(0.0), &[("worst_violation", r)]))
        }
        "modulus" => {
            let r = modulus_violation(sys, tr).map_err(err)?;
            Ok(measure(r, Bound::Upper, Some(0.0), &[("worst_violation", r)]))
        }
        _ => Err("applies to rate-independent systems".into()),
    }
}

fn eris_diagnostic(e: &ZooEris, tr: &ErisTrajectory, name: &str) -> std::result::Result<Measure, String> {
    let sys = &e.system;
    match name {
        "stability" => {
            let worst = tr.stability.iter().cloned().fold(f64::INFINITY, f64::min);
            Ok(measure(worst, Bound::Lower, Some(1e-9), &[("worst", worst)]))
        }
        "energetic" => {
            let r = energetic_solution_residuals(sys, tr, PowerQuadrature::HoldLeft).map_err(err)?;
            Ok(measure(
                r.stability_worst,
                Bound::Lower,
                Some(1e-9),
                &[("stability_worst", r.stability_worst), ("energy_balance", r.energy_balance), ("variation", r.variation), ("work", r.work)],
            ))
        }
        "rate_independence" => {
            let phi: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(|s| 2.0 * s);
            let dphi: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(|_| 2.0);
            let d = rate_independence_check(sys, &tr.states[0], &tr.times, phi, &|t| t / 2.0, dphi).map_err(err)?;
            Ok(measure(d, Bound::Upper, Some(1e-12), &[("discrepancy", d)]))
        }
        "tims" => {
            let r = tims_properties(sys, tr).map_err(err)?;
            let worst = r.descent_worst.max(r.telescoped_worst).max(r.apriori_worst).max(-r.stability_worst);
            Ok(measure(
                worst,
                Bound::Upper,
                Some(1e-9),
                &[("descent_worst", r.descent_worst), ("telescoped_worst", r.telescoped_worst), ("apriori_worst", r.apriori_worst), ("stability_worst", r.stability_worst)],
            ))
        }
        _ => Err("applies to gradient systems".into()),
    }
}

fn finite(x: Option<f64>) -> Option<f64> {
    x.filter(|v| v.is_finite())
}

/// Diagnostics, CSV rows and summary for a finished run.
pub fn assemble(p: &Prepared, run: &Run) -> (Vec<DiagnosticResult>, Vec<CsvRow>, TrajectorySummary, Option<f64>) {
    let sc = &p.scenario;
    let mut results = Vec::new();
    let oracle = match oracle_error(p, run) {
        Some(Ok(e)) => {
            let m = measure(e, Bound::Upper, sc.oracle_tolerance, &[("error", e)]);
            results.push(judge(sc, "oracle", Ok(m)));
            Some(e)
        }
        Some(Err(e)) => {
            results.push(DiagnosticResult::skipped("oracle", err(e)));
            None
        }
        None => None,
    };
    let (rows, summary) = match (&p.entry, run) {
        (ZooEntry::Gradient(g), Run::Gradient(tr)) => {
            let edi = sc.diagnostics.iter().any(|d| d == "edi").then(|| edi_cumulative(g, tr));
            results.extend(sc.diagnostics.iter().map(|d| judge(sc, d, gradient_diagnostic(p, g, tr, &edi, d))));
            let series = speed_and_slope_series(&g.system, tr);
            let cum = edi.and_then(|r| r.ok());
            let rows: Vec<CsvRow> = (0..tr.len())
                .map(|k| CsvRow {
                    t: tr.times[k],
                    state: tr.states[k].iter().copied().collect(),
                    energy: finite(g.system.energy.eval(tr.times[k], &tr.states[k]).finite()),
                    slope: finite(series.slope[k]),
                    speed: finite(Some(series.speed[k])),
                    step_increment: (k > 0).then(|| g.system.distance(&tr.states[k - 1], &tr.states[k]).value()).and_then(|x| finite(Some(x))),
                    edi_cum_residual: cum.as_ref().map(|c| c[k]),
                })
                .collect();
            let last = tr.len() - 1;
            let summary = TrajectorySummary {
                nodes: tr.len(),
                final_time: tr.times[last],
                final_state: tr.states[last].iter().copied().collect(),
                final_energy: g.system.energy.eval(tr.times[last], &tr.states[last]).value(),
            };
            (rows, summary)
        }
        (ZooEntry::Eris(e), Run::Eris(tr)) => {
            results.extend(sc.diagnostics.iter().map(|d| judge(sc, d, eris_diagnostic(e, tr, d))));
            let n = tr.times.len();
            let rows = (0..n)
                .map(|k| CsvRow {
                    t: tr.times[k],
                    state: tr.states[k].iter().copied().collect(),
                    energy: finite(e.system.energy.eval(tr.times[k], &tr.states[k]).finite()),
                    slope: None,
                    speed: None,
                    step_increment: (k > 0).then(|| e.system.dist.eval(&tr.states[k - 1], &tr.states[k]).value()).and_then(|x| finite(Some(x))),
                    edi_cum_residual: None,
                })
                .collect();
            let summary = TrajectorySummary {
                nodes: n,
                final_time: tr.times[n - 1],
                final_state: tr.states[n - 1].iter().copied().collect(),
                final_energy: e.system.energy.eval(tr.times[n - 1], &tr.states[n - 1]).value(),
            };
            (rows, summary)
        }
        _ => unreachable!("runs match their entries"),
    };
    (results, rows, summary, oracle)
}

/// Runs a check entry; requested diagnostics are skipped.
pub fn run_check(p: &Prepared) -> Result<Vec<DiagnosticResult>, CliError> {
    let ZooEntry::Check(c) = &p.entry else {
        unreachable!("called for check entries only")
    };
    let outcome = (c.run)().map_err(|e| solver(&p.scenario.system, e))?;
    let mut results = vec![DiagnosticResult {
        name: "check".into(),
        status: if outcome.passed { Status::Pass } else { Status::Fail },
        tolerance: None,
        values: outcome.values,
        reason: None,
    }];
    results.extend(p.scenario.diagnostics.iter().map(|d| DiagnosticResult::skipped(d, "check entries have no trajectory")));
    Ok(results)
}

/// Swept quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    Tau,
    Epsilon,
    #[value(name = "grid_n", alias = "grid-n")]
    GridN,
}

impl SweepParam {
    pub fn label(self) -> &'static str {
        match self {
            SweepParam::Tau => "tau",
            SweepParam::Epsilon => "epsilon",
            SweepParam::GridN => "grid_n",
        }
    }

    /// Discretization scale the order is fitted against.
    fn scale(self, v: f64) -> f64 {
        match self {
            SweepParam::GridN => 1.0 / v,
            _ => v,
        }
    }
}

/// A sweep row and, when the run succeeded, its output.
pub struct SweepOutcome {
    pub row: ConvergenceRow,
    pub run: Option<(Prepared, Run)>,
    pub exit: i32,
}

fn variant(base: &Scenario, param: SweepParam, v: f64, t_end: Option<f64>) -> Result<Scenario, CliError> {
    let mut sc = base.clone();
    match param {
        SweepParam::Tau => {
            let t = t_end.ok_or_else(|| CliError::Validation("a τ sweep needs a uniform partition".into()))?;
            let n = scenario::steps_for(t, v).ok_or_else(|| CliError::Validation(format!("τ = {v} does not divide T = {t}")))?;
            sc.taus = None;
            sc.t_end = Some(t);
            sc.steps = Some(n as i64);
        }
        SweepParam::Epsilon => {
            sc.params.insert("epsilon".into(), v);
        }
        SweepParam::GridN => {
            sc.params.insert("n".into(), v);
        }
    }
    Ok(sc)
}

fn sweep_one(base: &Scenario, base_dir: &Path, param: SweepParam, v: f64, t_end: Option<f64>) -> SweepOutcome {
    let failed = |e: CliError| SweepOutcome {
        row: ConvergenceRow { value: v, nodes: None, error: None, status: format!("failed: {e}") },
        run: None,
        exit: e.exit_code(),
    };
    let prepared = match variant(base, param, v, t_end).and_then(|sc| prepare(sc, base_dir)) {
        Ok(p) => p,
        Err(e) => return failed(e),
    };
    let Some(partition) = &prepared.partition else {
        return failed(CliError::Validation(format!("'{}' has no trajectory to sweep", base.system)));
    };
    let times = partition.nodes();
    let run = match execute(&prepared, &times) {
        Ok(r) => r,
        Err(e) => return failed(solver(&format!("{} = {v}", param.label()), e)),
    };
    let error = match oracle_error(&prepared, &run) {
        Some(Ok(e)) => Some(e),
        Some(Err(e)) => return failed(solver(&format!("oracle at {} = {v}", param.label()), e)),
        None => None,
    };
    let nodes = run.times().len();
    SweepOutcome { row: ConvergenceRow { value: v, nodes: Some(nodes), error, status: "ok".into() }, run: Some((prepared, run)), exit: 0 }
}

/// Runs `values` concurrently and fits the order of the oracle error.
pub fn sweep_runs(base: &Scenario, base_dir: &Path, param: SweepParam, values: &[f64], t_end: Option<f64>) -> (ConvergenceTable, Vec<SweepOutcome>) {
    let outcomes: Vec<SweepOutcome> = values.par_iter().map(|&v| sweep_one(base, base_dir, param, v, t_end)).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = outcomes
        .iter()
        .filter_map(|o| o.row.error.filter(|e| *e > 0.0 && e.is_finite()).map(|e| (param.scale(o.row.value), e)))
        .unzip();
    let order = if xs.len() >= 2 { quad::loglog_slope(&xs, &ys) } else { None };
    let table = ConvergenceTable { parameter: param.label().into(), rows: outcomes.iter().map(|o| o.row.clone()).collect(), order };
    (table, outcomes)
}

/// Horizon of a uniform or τ-study partition.
pub fn uniform_horizon(p: &Option<Partition>) -> Option<f64> {
    match p {
        Some(Partition::Uniform { t_end, .. }) | Some(Partition::Taus { t_end, .. }) => Some(*t_end),
        _ => None,
    }
}

/// Executes a scenario and assembles its report (nothing is written).
pub fn run_report(p: Prepared) -> Result<(RunReport, Vec<CsvRow>, usize), CliError> {
    let kind = match &p.entry {
        ZooEntry::Gradient(_) => "gradient",
        ZooEntry::Eris(_) => "rate_independent",
        ZooEntry::Check(_) => "check",
    };
    let Some(partition) = p.partition.clone() else {
        let diagnostics = run_check(&p)?;
        let passed = diagnostics.iter().all(|d| d.status != Status::Fail);
        let report = RunReport { scenario: p.scenario, kind, trajectory: None, oracle_error: None, diagnostics, convergence: None, passed, wall_time_s: None };
        return Ok((report, Vec::new(), 0));
    };
    let (prepared, run, convergence) = match &partition {
        Partition::Taus { t_end, taus } => {
            let (table, outcomes) = sweep_runs(&p.scenario, &p.base_dir, SweepParam::Tau, taus, Some(*t_end));
            let finest = outcomes
                .into_iter()
                .filter(|o| o.run.is_some())
                .min_by(|a, b| a.row.value.partial_cmp(&b.row.value).unwrap());
            match finest {
                Some(SweepOutcome { run: Some((mut fp, run)), .. }) if table.rows.iter().all(|r| r.status == "ok") => {
                    fp.scenario = p.scenario.clone();
                    (fp, run, Some(table))
                }
                _ => {
                    let msg = table.rows.iter().find(|r| r.status != "ok").map(|r| r.status.clone()).unwrap_or_default();
                    return Err(CliError::Solver { context: "τ study".into(), source: GflError::InvalidParameter(msg) });
                }
            }
        }
        _ => {
            let run = execute(&p, &partition.nodes()).map_err(|e| solver(&p.scenario.system, e))?;
            (p, run, None)
        }
    };
    let (diagnostics, rows, summary, oracle_error) = assemble(&prepared, &run);
    let dim = summary.final_state.len();
    let passed = diagnostics.iter().all(|d| d.status != Status::Fail);
    let report = RunReport { scenario: prepared.scenario, kind, trajectory: Some(summary), oracle_error, diagnostics, convergence, passed, wall_time_s: None };
    Ok((report, rows, dim))
}
