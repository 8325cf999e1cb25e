//! Acceptance suite. Each criterion is a self-contained check with its
//! tolerances pinned below; a criterion passes only if every sub-check does.

use crate::diagnostics::{de_giorgi_identity_residual, discrete_de_giorgi_edi, edb_report, modulus_violation, slope_estimate_violation};
use crate::error::{GflError, Result};
use crate::evi::{contractivity_check, evi_probe, evi_residual, lattice_probes};
use crate::ext::{Finite, PosInf};
use crate::mms_solver::{mms_step, run_mms, MmsOptions, Trajectory};
use crate::model_zoo::{self, allen_cahn, eris_toy, jko, misc, nonsmooth, reaction, wiggly, Params, ZooEntry};
use crate::potentials::{eval_conjugate, fenchel_young_gap, numeric_conjugate_fn, ConjugateOptions, ConjugatePair, ScalarPotential};
use crate::quad;
use crate::rate_independent::{energetic_solution_residuals, rate_independence_check, run_tims, tims_properties, ErisTrajectory, PowerQuadrature};
use crate::StateVec;
use nalgebra::{dvector, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

/// Verdict for one criterion.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {:>2} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.id, self.name, self.detail)
    }
}

/// Identifiers and names of all criteria.
pub const CRITERIA: [(u32, &str); 12] = [
    (1, "duality"),
    (2, "nonsmooth_r2_oracle"),
    (3, "allen_cahn_contractivity"),
    (4, "reaction_network"),
    (5, "energy_dissipation_balance"),
    (6, "de_giorgi"),
    (7, "evi"),
    (8, "jko_fokker_planck"),
    (9, "wiggly"),
    (10, "homogenization"),
    (11, "rate_independent"),
    (12, "slope_and_modulus"),
];

/// Collects sub-check verdicts and the numbers behind them.
struct Verdict {
    ok: bool,
    detail: String,
}

impl Verdict {
    fn new() -> Self {
        Verdict { ok: true, detail: String::new() }
    }

    fn check(&mut self, label: &str, passed: bool, value: impl std::fmt::Display) {
        self.ok &= passed;
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        let _ = write!(self.detail, "{label}={value}{}", if passed { "" } else { " (!)" });
    }
}

/// Runs criterion `id`; solver errors count as failures.
pub fn run_criterion(id: u32) -> CriterionResult {
    let name = CRITERIA.iter().find(|c| c.0 == id).map_or("unknown", |c| c.1);
    let out = match id {
        1 => duality(),
        2 => nonsmooth_oracle(),
        3 => contractivity(),
        4 => reaction_network(),
        5 => energy_balance(),
        6 => de_giorgi(),
        7 => evi(),
        8 => jko_fokker_planck(),
        9 => wiggly_checks(),
        10 => homogenization(),
        11 => rate_independent(),
        12 => slope_and_modulus(),
        _ => Err(GflError::InvalidParameter(format!("no criterion {id}"))),
    };
    match out {
        Ok(v) => CriterionResult { id, name, passed: v.ok, detail: v.detail },
        Err(e) => CriterionResult { id, name, passed: false, detail: format!("error: {e}") },
    }
}

/// Runs every criterion concurrently; results are in criterion order.
pub fn run_all() -> Vec<CriterionResult> {
    CRITERIA.par_iter().map(|(id, _)| run_criterion(*id)).collect()
}

fn fmt_e(x: f64) -> String {
    format!("{x:.3e}")
}

fn duality() -> Result<Verdict> {
    const GAP_TOL: f64 = 1e-10;
    const BICONJ_TOL: f64 = 1e-8;
    const PROBES: usize = 10_000;
    let table_r: Vec<f64> = quad::lin_grid(0.0, 10.0, 401);
    let table_v: Vec<f64> = table_r.iter().map(|r| r * r / 2.0 + r.powi(4) / 24.0).collect();
    let kinds = vec![
        ScalarPotential::quadratic(),
        ScalarPotential::power(1.5)?,
        ScalarPotential::power(3.0)?,
        ScalarPotential::rate_independent(),
        ScalarPotential::viscoplastic(1.0, 2.0)?,
        ScalarPotential::tabulated(table_r, table_v)?,
    ];
    let mut v = Verdict::new();
    let results: Vec<(String, f64, f64)> = kinds
        .par_iter()
        .enumerate()
        .map(|(i, psi)| {
            let pair = ConjugatePair::new(psi.clone());
            let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
            let mut worst_gap = f64::INFINITY;
            for _ in 0..PROBES {
                let x: f64 = rng.gen_range(-5.0..5.0);
                // Half of the probes sit on the graph of ∂ψ, where the gap vanishes.
                let xi: f64 = if rng.gen_bool(0.5) { x.signum() * psi.derivative(x.abs()) } else { rng.gen_range(-5.0..5.0) };
                if let Finite(g) = fenchel_young_gap(&pair, x, xi) {
                    worst_gap = worst_gap.min(g);
                }
            }
            let mut worst_bi = 0.0f64;
            for r in quad::log_grid(1e-3, 9.0, 41) {
                let bi = numeric_conjugate_fn(|z| eval_conjugate(&pair, z), r, &ConjugateOptions::default()).unwrap_or(PosInf);
                let p = psi.eval(r).unwrap_or(PosInf);
                worst_bi = worst_bi.max((bi.value() - p.value()).abs());
            }
            (psi.to_string(), worst_gap, worst_bi)
        })
        .collect();
    for (name, gap, bi) in results {
        v.check(&format!("min_gap[{name}]"), gap >= -GAP_TOL, fmt_e(gap));
        v.check(&format!("biconj_err[{name}]"), bi <= BICONJ_TOL, fmt_e(bi));
    }
    let vp = eval_conjugate(&ConjugatePair::new(ScalarPotential::viscoplastic(1.0, 2.0)?), 3.0)?;
    v.check("viscoplastic_conj(3)", vp == Finite(1.0), vp.value());
    Ok(v)
}

fn nonsmooth_oracle() -> Result<Verdict> {
    const ERR_TOL: f64 = 0.05;
    let (a, b) = (2.0, 1.0);
    let u0 = dvector![3.0, 1.0];
    let t_end = 3.0;
    let sys = nonsmooth::nonsmooth_r2_system(a, b)?;
    let (t1, t2) = nonsmooth::kink_times(a, b, &u0);
    let mut v = Verdict::new();
    v.check("t1", (t1 - 1.0).abs() < 1e-15, t1);
    v.check("t2", (t2 - 2.5).abs() < 1e-15, t2);
    let mut errors = Vec::new();
    for tau in [1e-1, 1e-2, 1e-3] {
        let n = (t_end / tau as f64).round() as usize;
        let tr = run_mms(&sys, &u0, 0.0, t_end, n, &MmsOptions::default())?;
        let err = model_zoo::interpolant_error(&tr, &|t| nonsmooth::nonsmooth_r2_exact(a, b, &u0, t), &[t1, t2]);
        errors.push(err);
        let hit = |pred: &dyn Fn(&StateVec) -> bool| tr.times.iter().zip(&tr.states).find(|(_, u)| pred(u)).map(|(t, _)| *t);
        let k1 = hit(&|u| (u[0].abs() - u[1].abs()).abs() <= 1e-9);
        let k2 = hit(&|u| u.amax() <= 1e-9);
        let d1 = k1.map_or(f64::INFINITY, |t| (t - t1).abs());
        let d2 = k2.map_or(f64::INFINITY, |t| (t - t2).abs());
        v.check(&format!("kink1_dev[τ={tau}]"), d1 <= 2.0 * tau, fmt_e(d1));
        v.check(&format!("kink2_dev[τ={tau}]"), d2 <= 2.0 * tau, fmt_e(d2));
    }
    v.check("interp_sup_err[τ=1e-3]", errors[2] <= ERR_TOL, fmt_e(errors[2]));
    v.check("errors_decreasing", errors.windows(2).all(|w| w[1] < w[0]), format!("{:?}", errors.iter().map(|e| fmt_e(*e)).collect::<Vec<_>>()));
    Ok(v)
}

fn contractivity() -> Result<Verdict> {
    const REL_TOL: f64 = 1e-6;
    let g = model_zoo::build_gradient("allen_cahn", &Params::new())?;
    let n = g.u0.len();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut random = || StateVec::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let (ua, ub) = (random(), random());
    let opts = MmsOptions::default();
    let ta = run_mms(&g.system, &ua, 0.0, g.t_end, g.steps, &opts)?;
    let tb = run_mms(&g.system, &ub, 0.0, g.t_end, g.steps, &opts)?;
    // e^{(β/m)(t−s)} is e^{−λ(t−s)} with λ = −β/m.
    let lambda = g.system.lambda().ok_or(GflError::UnknownLambda)?;
    let ratio = contractivity_check(&ta, &tb, lambda, &g.system.fixed_norm(), None)?;
    let mut v = Verdict::new();
    v.check("lambda", (lambda + 1.0).abs() < 1e-15, lambda);
    v.check("worst_ratio", ratio <= 1.0 + REL_TOL, format!("{ratio:.9}"));
    Ok(v)
}

fn reaction_network() -> Result<Verdict> {
    const RHS_TOL: f64 = 1e-12;
    const MASS_TOL: f64 = 1e-10;
    const EQ_TOL: f64 = 1e-6;
    let net = reaction::ReactionNetwork::default_three([1.0, 1.0, 1.0])?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let c = StateVec::from_fn(3, |_, _| rng.gen_range(0.05..4.0));
        let r = net.mass_action_rhs(&c)?;
        let grad = c.map(|x| x.ln());
        let res = (-(net.onsager(&c)? * grad) - &r).norm() / (1.0 + r.norm());
        worst = worst.max(res);
    }
    let mut v = Verdict::new();
    v.check("rhs_residual", worst <= RHS_TOL, fmt_e(worst));
    let g = model_zoo::build_gradient("reaction3", &Params::new())?;
    let tr = run_mms(&g.system, &g.u0, 0.0, g.t_end, g.steps, &MmsOptions::default())?;
    let m0 = g.u0.sum();
    let drift = tr.states.iter().map(|c| (c.sum() - m0).abs()).fold(0.0, f64::max);
    v.check("mass_drift", drift <= MASS_TOL, fmt_e(drift));
    let f: Vec<f64> = tr.states.iter().map(|c| g.system.energy.eval(0.0, c).value()).collect();
    // Detailed balance at c = 1 with equal rates: the shell equilibrium is m0/3 per species.
    let eq = DVector::from_element(3, m0 / 3.0);
    let f_eq = g.system.energy.eval(0.0, &eq).value();
    // Strict decrease while the gap to equilibrium is above the roundoff
    // floor of F; below it, no increase beyond that floor.
    const FLOOR: f64 = 1e-12;
    let strict = f.windows(2).filter(|w| w[0] - f_eq > FLOOR).count();
    let monotone = f.windows(2).all(|w| if w[0] - f_eq > FLOOR { w[1] < w[0] } else { w[1] <= w[0] + FLOOR });
    v.check("decreasing_steps", monotone, format!("{strict} strict of {}", f.len() - 1));
    let gap = f.last().unwrap() - f_eq;
    v.check("final_energy_gap", (-FLOOR..=EQ_TOL).contains(&gap), fmt_e(gap));
    Ok(v)
}

/// τ ladders for the order fit. The homogenization run carries cell-scale
/// transients that only resolve once τ is below ε²/ā.
fn order_ladder(id: &str) -> [usize; 3] {
    match id {
        "ac_homog" => [32, 64, 128],
        _ => [1, 2, 4],
    }
}

fn gradient_entries() -> Result<Vec<(&'static str, model_zoo::ZooGradient)>> {
    let mut out = Vec::new();
    for (id, _) in model_zoo::list_systems() {
        if let ZooEntry::Gradient(g) = model_zoo::build(id, &Params::new())? {
            out.push((id, g));
        }
    }
    Ok(out)
}

fn exact_quadratic(tau: f64, t_end: f64) -> Trajectory {
    let n = (t_end / tau).round() as usize;
    let times = quad::lin_grid(0.0, t_end, n + 1);
    let states = times.iter().map(|t| dvector![(-t).exp()]).collect();
    Trajectory::from_samples(times, states)
}

fn energy_balance() -> Result<Verdict> {
    const EXACT_TOL: f64 = 1e-5;
    const MIN_ORDER: f64 = 0.8;
    let mut v = Verdict::new();
    let q = misc::quadratic_system(1);
    let rep = edb_report(&q, &exact_quadratic(1e-3, 1.0), 0.0, 1.0, 10_000)?;
    v.check("exact_flow_residual", rep.residual.abs() <= EXACT_TOL, fmt_e(rep.residual));
    let rows: Vec<(&str, Result<(bool, Vec<f64>, f64, Option<f64>)>)> = gradient_entries()?
        .into_par_iter()
        .map(|(id, g)| {
            let run = || -> Result<(bool, Vec<f64>, f64, Option<f64>)> {
                let mut taus = Vec::new();
                let mut res = Vec::new();
                let mut edi = true;
                let mut floor = 0.0f64;
                for m in order_ladder(id) {
                    let n = g.steps * m;
                    let tr = run_mms(&g.system, &g.u0, 0.0, g.t_end, n, &MmsOptions::default())?;
                    let r = edb_report(&g.system, &tr, 0.0, g.t_end, 0)?;
                    edi &= r.edi_holds();
                    floor = floor.max(r.lower_tolerance);
                    taus.push(g.t_end / n as f64);
                    res.push(r.residual);
                }
                let abs: Vec<f64> = res.iter().map(|r| r.abs()).collect();
                let order = quad::loglog_slope(&taus, &abs);
                Ok((edi, res, floor, order))
            };
            (id, run())
        })
        .collect();
    for (id, row) in rows {
        match row {
            Ok((edi, res, floor, order)) => {
                v.check(&format!("edi[{id}]"), edi, format!("{:?}", res.iter().map(|r| fmt_e(*r)).collect::<Vec<_>>()));
                // A balance that already closes to the solver floor at every τ
                // satisfies any power bound; the fit is then meaningless.
                let exact = res.iter().all(|r| r.abs() <= floor);
                let passed = exact || order.is_some_and(|o| o >= MIN_ORDER);
                let shown = if exact { "exact".to_string() } else { order.map_or("n/a".into(), |o| format!("{o:.3}")) };
                v.check(&format!("order[{id}]"), passed, shown);
            }
            Err(e) => v.check(&format!("run[{id}]"), false, e),
        }
    }
    Ok(v)
}

fn de_giorgi() -> Result<Verdict> {
    const TOL: f64 = 1e-6;
    let mut v = Verdict::new();
    let q = misc::quadratic_system(1);
    let opts = MmsOptions::default();
    let rep = de_giorgi_identity_residual(&q, &dvector![1.0], 0.0, 1.0, &opts)?;
    v.check("identity_residual", rep.residual.abs() <= TOL, fmt_e(rep.residual));
    let lhs = rep.phi + rep.integral;
    v.check("lhs", (lhs - 0.5).abs() <= TOL, format!("{lhs:.9}"));
    v.check("energy", (rep.energy - 0.5).abs() <= 1e-15, rep.energy);
    let sys = nonsmooth::nonsmooth_r2_system(2.0, 1.0)?;
    let bases = [dvector![3.0, 1.0], dvector![1.0, 1.0], dvector![0.5, 2.0], dvector![-1.0, 0.3], dvector![2.0, -2.0], dvector![0.2, 0.0]];
    let mut worst = f64::INFINITY;
    for u in &bases {
        for tau in [0.1, 0.5, 1.0] {
            worst = worst.min(discrete_de_giorgi_edi(&sys, u, 0.0, tau, &opts)?);
        }
    }
    v.check("nonsmooth_edi_worst", worst >= -TOL, fmt_e(worst));
    Ok(v)
}

fn evi() -> Result<Verdict> {
    const EXACT_TOL: f64 = 1e-8;
    const CONTROL: f64 = -0.01;
    let mut v = Verdict::new();
    let q = misc::quadratic_system(2);
    let u0 = dvector![1.0, -0.5];
    let times = quad::lin_grid(0.0, 2.0, 2001);
    let states = times.iter().map(|t| &u0 * (-t).exp()).collect();
    let tr = Trajectory::from_samples(times.clone(), states);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = f64::INFINITY;
    for _ in 0..200 {
        let w = StateVec::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
        let i = rng.gen_range(0..times.len() - 1);
        let j = rng.gen_range(i + 1..times.len());
        worst = worst.min(evi_residual(&q, &tr, &w, 1.0, times[i], times[j])?);
    }
    v.check("quadratic_worst", worst >= -EXACT_TOL, fmt_e(worst));
    let eps = 0.01;
    let sys = wiggly::wiggly_system(eps, 0.5)?;
    let wt = run_mms(&sys, &dvector![1.0], 0.0, 1.0, 200, &MmsOptions::default())?;
    let probes = lattice_probes(wt.states.last().unwrap(), 0.25 * PI * eps, 40);
    for lambda in [-10.0, 0.0, 10.0] {
        let rep = evi_probe(&sys, &wt, &probes, lambda, 400)?;
        v.check(&format!("wiggly_worst[λ={lambda}]"), rep.worst_violation < CONTROL, fmt_e(rep.worst_violation));
    }
    Ok(v)
}

fn jko_fokker_planck() -> Result<Verdict> {
    const GIBBS_GAP: f64 = 1e-2;
    const GIBBS_MOVE: f64 = 1e-6;
    const RUNTIME_S: f64 = 300.0;
    let start = Instant::now();
    let mut v = Verdict::new();
    let grid = jko::DensityGrid::new(-4.0, 4.0, 200)?;
    let phi = |x: f64| 0.5 * x * x;
    let sys = jko::fokker_planck_jko_system(grid, &phi)?;
    let u0 = grid.normalized(|x| (-(x - 1.5) * (x - 1.5) / 0.5).exp());
    let tr = run_mms(&sys, &u0, 0.0, 5.0, 500, &MmsOptions::default())?;
    let mass = tr.states.iter().map(|r| (grid.mass(r) - 1.0).abs()).fold(0.0, f64::max);
    v.check("mass_drift", mass <= jko::MASS_TOL, fmt_e(mass));
    let f: Vec<f64> = tr.states.iter().map(|r| sys.energy.eval(0.0, r).value()).collect();
    v.check("strictly_decreasing", f.windows(2).all(|w| w[1] < w[0]), f.len());
    let gibbs = jko::gibbs_state(&grid, &phi);
    let gap = f.last().unwrap() - sys.energy.eval(0.0, &gibbs).value();
    v.check("gibbs_gap_at_T", gap <= GIBBS_GAP, fmt_e(gap));
    let step = mms_step(&sys, &gibbs, 0.0, 0.01, &MmsOptions::default())?;
    let moved = (&step.u - &gibbs).amax();
    v.check("gibbs_move", moved < GIBBS_MOVE, fmt_e(moved));
    let secs = start.elapsed().as_secs_f64();
    v.check("runtime_s", secs <= RUNTIME_S, format!("{secs:.1}"));
    Ok(v)
}

fn wiggly_checks() -> Result<Verdict> {
    const TRACK_TOL: f64 = 0.05;
    const LOWER_TOL: f64 = 1e-6;
    const SLOPE_REL: f64 = 0.01;
    const MIN_TOL: f64 = 1e-3;
    const ARGMIN_TOL: f64 = 1e-2;
    let eps = 0.01;
    let mut v = Verdict::new();
    let opts = MmsOptions::default();
    let stuck = run_mms(&wiggly::wiggly_system(eps, 0.5)?, &dvector![1.0], 0.0, 1.0, 1000, &opts)?;
    let dev = stuck.states.iter().map(|u| (u[0] - 1.0).abs()).fold(0.0, f64::max);
    v.check("stuck_deviation", dev <= 4.0 * PI * eps, fmt_e(dev));
    let track = run_mms(&wiggly::wiggly_system(eps, 2.0)?, &dvector![1.0], 0.0, 1.0, 1000, &opts)?;
    let err = (track.states.last().unwrap()[0] - (-1.0f64).exp()).abs();
    v.check("tracking_error", err <= TRACK_TOL, fmt_e(err));

    let cp = wiggly::WigglyCellProblem::new(1.0, 256)?;
    let grid = quad::lin_grid(-2.0, 2.0, 21);
    let lower: Result<Vec<f64>> = grid
        .par_iter()
        .map(|&vel| {
            let mut w = f64::INFINITY;
            for &xi in &grid {
                w = w.min(cp.m(vel, xi)? - xi * vel);
            }
            Ok(w)
        })
        .collect();
    let lower = lower?.into_iter().fold(f64::INFINITY, f64::min);
    v.check("cell_lower_bound", lower >= -LOWER_TOL, fmt_e(lower));
    let dv = 1e-3;
    let slope = (cp.brute_force(dv, 0.0)? - cp.m0(0.0)) / dv;
    let target = 2.0 / PI;
    v.check("brute_slope_rel_err", (slope - target).abs() <= SLOPE_REL * target, fmt_e((slope - target).abs() / target));
    let xi = 2f64.sqrt();
    let mut fail = None;
    let (vmin, neg) = quad::golden_max(
        &mut |vel| match cp.m(vel, xi) {
            Ok(m) => Finite(xi * vel - m),
            Err(e) => {
                fail = Some(e);
                Finite(f64::NEG_INFINITY)
            }
        },
        0.3,
        3.0,
        1e-10,
    );
    if let Some(e) = fail {
        return Err(e);
    }
    v.check("min_value", neg.abs() <= MIN_TOL, fmt_e(-neg));
    v.check("argmin_v", (vmin - 1.0).abs() <= ARGMIN_TOL, format!("{vmin:.6}"));
    Ok(v)
}

fn homogenization() -> Result<Verdict> {
    let mut v = Verdict::new();
    let eps_list = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0];
    let errors: Result<Vec<f64>> = eps_list
        .par_iter()
        .map(|&eps| {
            let g = model_zoo::build_gradient("ac_homog", &Params::from([("epsilon".to_string(), eps)]))?;
            let tr = run_mms(&g.system, &g.u0, 0.0, g.t_end, g.steps, &MmsOptions::default())?;
            (g.error_oracle.as_ref().ok_or(GflError::InvalidParameter("ac_homog has no oracle".into()))?)(&tr)
        })
        .collect();
    let errors = errors?;
    v.check("l2_errors_decreasing", errors.windows(2).all(|w| w[1] < w[0]), format!("{:?}", errors.iter().map(|e| fmt_e(*e)).collect::<Vec<_>>()));
    let harm = allen_cahn::harmonic_mean(&allen_cahn::sine_profile);
    let d = (harm - 3f64.sqrt()).abs();
    v.check("a_harm_err", d <= 1e-10, fmt_e(d));
    Ok(v)
}

fn rate_independent() -> Result<Verdict> {
    const NODE_TOL: f64 = 1e-12;
    let mut v = Verdict::new();
    let toy = eris_toy::ErisToy::new(1.0, 2.0, 2.0)?;
    let sys = toy.system()?;
    let u0 = dvector![0.0];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut partitions = vec![quad::lin_grid(0.0, 2.0, 41), quad::lin_grid(0.0, 2.0, 7)];
    for _ in 0..3 {
        let mut p: Vec<f64> = (0..30).map(|_| rng.gen_range(0.0..2.0)).collect();
        p.push(0.0);
        p.push(2.0);
        p.sort_by(|a, b| a.partial_cmp(b).unwrap());
        p.dedup();
        partitions.push(p);
    }
    let mut node_err = 0.0f64;
    let mut apriori = f64::NEG_INFINITY;
    for p in &partitions {
        let tr = run_tims(&sys, &u0, p)?;
        for (t, u) in tr.times.iter().zip(&tr.states) {
            node_err = node_err.max((u[0] - (2.0 * t - 3.0).max(0.0)).abs());
        }
        apriori = apriori.max(tims_properties(&sys, &tr)?.apriori_worst);
    }
    v.check("tims_node_err", node_err <= NODE_TOL, fmt_e(node_err));
    v.check("apriori_worst", apriori <= 0.0, fmt_e(apriori));
    let times = quad::lin_grid(0.0, 2.0, 401);
    let states = times.iter().map(|t| dvector![toy.exact(*t)]).collect();
    let closed = ErisTrajectory::from_samples(&sys, times, states)?;
    let res = energetic_solution_residuals(&sys, &closed, PowerQuadrature::Trapezoid)?;
    v.check("stability_worst", res.stability_worst >= -1e-9, fmt_e(res.stability_worst));
    v.check("energy_balance", res.energy_balance.abs() <= 1e-10, fmt_e(res.energy_balance));
    let phi: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(|s| 2.0 * s);
    let dphi: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(|_| 2.0);
    let disc = rate_independence_check(&sys, &u0, &quad::lin_grid(0.0, 2.0, 41), phi, &|t| t / 2.0, dphi)?;
    v.check("rate_independence", disc <= 1e-12, fmt_e(disc));
    Ok(v)
}

fn slope_and_modulus() -> Result<Verdict> {
    let mut v = Verdict::new();
    let rows: Vec<(&str, Result<(f64, f64)>)> = gradient_entries()?
        .into_par_iter()
        .map(|(id, g)| {
            let run = || -> Result<(f64, f64)> {
                let tr = run_mms(&g.system, &g.u0, 0.0, g.t_end, g.steps, &MmsOptions::default())?;
                Ok((slope_estimate_violation(&g.system, &tr)?, modulus_violation(&g.system, &tr)?))
            };
            (id, run())
        })
        .collect();
    for (id, row) in rows {
        match row {
            Ok((s, m)) => {
                v.check(&format!("slope[{id}]"), s <= 0.0, fmt_e(s));
                v.check(&format!("modulus[{id}]"), m <= 0.0, fmt_e(m));
            }
            Err(e) => v.check(&format!("run[{id}]"), false, e),
        }
    }
    Ok(v)
}
