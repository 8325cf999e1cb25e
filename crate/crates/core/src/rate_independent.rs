//! Energetic rate-independent systems: quasi-distances, time-incremental
//! minimization, variation dissipation, stability and energetic-solution
//! residuals.

use crate::energies::{Differential, Energy, probe_directions};
use crate::error::{check_dim, GflError, Result};
use crate::ext::{ExtReal, Finite, PosInf};
use crate::linalg::SymMatrix;
use crate::quad;
use crate::StateVec;
use serde::Serialize;
use std::sync::Arc;

/// Extended quasi-distance `D(u_old, u_new)`.
pub trait QuasiDistance: Send + Sync {
    fn eval(&self, u_old: &StateVec, u_new: &StateVec) -> ExtReal;
    fn symmetric(&self) -> bool;
    /// A true metric `D₀ ≤ D`.
    fn comparison(&self, u: &StateVec, w: &StateVec) -> f64;
}

/// `D(u, w) = Σ f·(wᵢ − uᵢ)₊ + b·(wᵢ − uᵢ)₋`; `b = ∞` gives a unidirectional
/// distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymmetricNorm {
    pub forward: f64,
    pub backward: f64,
}

impl AsymmetricNorm {
    pub fn new(forward: f64, backward: f64) -> Result<Self> {
        if !(forward > 0.0 && backward > 0.0) {
            return Err(GflError::InvalidParameter("asymmetric norm rates must be positive".into()));
        }
        Ok(AsymmetricNorm { forward, backward })
    }
}

impl QuasiDistance for AsymmetricNorm {
    fn eval(&self, u_old: &StateVec, u_new: &StateVec) -> ExtReal {
        let mut s = 0.0;
        for (a, b) in u_old.iter().zip(u_new.iter()) {
            let d = b - a;
            if d > 0.0 {
                s += self.forward * d;
            } else if d < 0.0 {
                if self.backward.is_infinite() {
                    return PosInf;
                }
                s -= self.backward * d;
            }
        }
        Finite(s)
    }
    fn symmetric(&self) -> bool {
        self.forward == self.backward
    }
    fn comparison(&self, u: &StateVec, w: &StateVec) -> f64 {
        self.forward.min(self.backward) * (w - u).lp_norm(1)
    }
}

/// Exact minimizer of `w ↦ D(u_prev, w) + F(t, w)`.
pub trait TimsSolver: Send + Sync {
    fn solve(&self, sys: &Eris, u_prev: &StateVec, t: f64) -> Result<StateVec>;
}

/// Energetic rate-independent system with power bound
/// `|∂ₜF| ≤ C_E(F + c_E)`.
#[derive(Clone)]
pub struct Eris {
    pub name: String,
    pub energy: Arc<dyn Energy>,
    pub dist: Arc<dyn QuasiDistance>,
    pub c_big: f64,
    pub c_small: f64,
    pub exact_step: Option<Arc<dyn TimsSolver>>,
}

impl Eris {
    pub fn dim(&self) -> usize {
        self.energy.dim()
    }

    fn objective(&self, u_prev: &StateVec, t: f64, w: &StateVec) -> f64 {
        if !self.energy.in_domain(w) {
            return f64::INFINITY;
        }
        (self.dist.eval(u_prev, w) + self.energy.eval(t, w)).value()
    }

    /// Worst violation of the power bound on sampled `(t, u)`.
    pub fn power_bound_violation(&self, samples: &[(f64, StateVec)]) -> Result<f64> {
        let mut worst = f64::NEG_INFINITY;
        for (t, u) in samples {
            let Finite(f) = self.energy.eval(*t, u) else {
                continue;
            };
            let p = self.energy.power(*t, u)?;
            worst = worst.max(p.abs() - self.c_big * (f + self.c_small));
        }
        Ok(worst)
    }
}

/// Compass search on `D(u_prev, ·) + F(t, ·)` from several starts.
fn compass_minimize(sys: &Eris, u_prev: &StateVec, t: f64) -> StateVec {
    let n = u_prev.len();
    let mut starts = vec![u_prev.clone()];
    if let Ok(Differential::Smooth(g)) = sys.energy.differential(t, u_prev) {
        let h = sys.energy.hessian(t, u_prev).map(|h: SymMatrix| h.to_dense());
        if let Some(x) = h.and_then(|h| h.cholesky()).map(|c| c.solve(&g)) {
            starts.push(u_prev - x);
        }
    }
    for d in probe_directions(n, 4) {
        starts.push(u_prev + d * (1.0 + u_prev.amax()));
    }
    let mut best = u_prev.clone();
    let mut best_v = sys.objective(u_prev, t, u_prev);
    for s in starts {
        let mut y = s;
        let mut v = sys.objective(u_prev, t, &y);
        if !v.is_finite() {
            continue;
        }
        let mut step = 0.5 * (1.0 + y.amax());
        let mut evals = 0;
        while step > 1e-14 * (1.0 + y.amax()) && evals < 200_000 {
            let mut improved = false;
            for i in 0..n {
                for sgn in [1.0, -1.0] {
                    let mut z = y.clone();
                    z[i] += sgn * step;
                    let vz = sys.objective(u_prev, t, &z);
                    evals += 1;
                    if vz < v {
                        y = z;
                        v = vz;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if v < best_v {
            best_v = v;
            best = y;
        }
    }
    best
}

/// One TIMS step: minimize `D(u_prev, ·) + F(t_k, ·)`.
pub fn tims_step(sys: &Eris, u_prev: &StateVec, t_k: f64) -> Result<StateVec> {
    check_dim(sys.dim(), u_prev.len())?;
    let w = match &sys.exact_step {
        Some(s) => s.solve(sys, u_prev, t_k)?,
        None => compass_minimize(sys, u_prev, t_k),
    };
    let stay = sys.objective(u_prev, t_k, u_prev);
    let moved = sys.objective(u_prev, t_k, &w);
    if !moved.is_finite() {
        return Err(GflError::InnerSolveFailed("TIMS minimizer has infinite objective".into()));
    }
    if moved > stay + 1e-12 * (1.0 + stay.abs()) {
        return Ok(u_prev.clone());
    }
    Ok(w)
}

/// Output of a TIMS run.
#[derive(Debug, Clone)]
pub struct ErisTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVec>,
    /// Stability residual at each node (≥ −tol means stable at probe resolution).
    pub stability: Vec<f64>,
    /// Cumulative dissipation Σ_{j≤k} D(u_{j−1}, u_j).
    pub dissipation: Vec<f64>,
    /// Steps whose increment exceeds `JUMP_FACTOR` times the median increment.
    pub jumps: Vec<usize>,
    pub initial_state_stable: bool,
}

pub const JUMP_FACTOR: f64 = 10.0;

impl ErisTrajectory {
    /// Trajectory from node samples (e.g. a closed form), with stability
    /// and dissipation evaluated for `sys`.
    pub fn from_samples(sys: &Eris, times: Vec<f64>, states: Vec<StateVec>) -> Result<Self> {
        let mut stability = Vec::with_capacity(states.len());
        let mut dissipation = vec![0.0];
        for (k, (t, u)) in times.iter().zip(&states).enumerate() {
            stability.push(stability_check(sys, *t, u, &[])?);
            if k > 0 {
                let d = sys.dist.eval(&states[k - 1], u).value();
                dissipation.push(dissipation[k - 1] + d);
            }
        }
        let jumps = detect_jumps(sys, &states);
        let initial_state_stable = stability[0] >= -1e-9;
        Ok(ErisTrajectory { times, states, stability, dissipation, jumps, initial_state_stable })
    }
}

fn detect_jumps(sys: &Eris, states: &[StateVec]) -> Vec<usize> {
    let inc: Vec<f64> = states.windows(2).map(|w| sys.dist.comparison(&w[0], &w[1])).collect();
    let mut sorted: Vec<f64> = inc.iter().cloned().filter(|x| *x > 0.0).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted.is_empty() {
        return Vec::new();
    }
    let median = sorted[sorted.len() / 2];
    inc.iter().enumerate().filter(|(_, d)| **d > JUMP_FACTOR * median).map(|(i, _)| i + 1).collect()
}

/// TIMS on an explicit partition.
pub fn run_tims(sys: &Eris, u0: &StateVec, partition: &[f64]) -> Result<ErisTrajectory> {
    if partition.is_empty() || partition.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(GflError::InvalidParameter("partition must be strictly increasing".into()));
    }
    let mut states = vec![u0.clone()];
    for k in 1..partition.len() {
        let u = tims_step(sys, &states[k - 1], partition[k]).map_err(|e| e.at_step(k))?;
        states.push(u);
    }
    ErisTrajectory::from_samples(sys, partition.to_vec(), states)
}

/// `Var_D` over the nodes inside `[s, t]` (exact for piecewise-constant
/// interpolants).
pub fn var_dissipation(sys: &Eris, traj: &ErisTrajectory, s: f64, t: f64) -> f64 {
    let idx: Vec<usize> = (0..traj.times.len()).filter(|&i| traj.times[i] >= s - 1e-12 && traj.times[i] <= t + 1e-12).collect();
    idx.windows(2).map(|w| sys.dist.eval(&traj.states[w[0]], &traj.states[w[1]]).value()).sum()
}

/// `Var_D` of a sampled curve on `n` and `2n` uniform nodes; returns the
/// refined value and the change under refinement.
pub fn var_dissipation_curve(dist: &dyn QuasiDistance, curve: &dyn Fn(f64) -> StateVec, s: f64, t: f64, n: usize) -> (f64, f64) {
    let sum = |m: usize| -> f64 {
        let xs = quad::lin_grid(s, t, m + 1);
        xs.windows(2).map(|w| dist.eval(&curve(w[0]), &curve(w[1])).value()).sum()
    };
    let (a, b) = (sum(n), sum(2 * n));
    (b, (b - a).abs())
}

/// `min_w F(t, w) + D(u, w) − F(t, u)` over `candidates`, a radial probe
/// set and the exact step minimizer when one is registered.
pub fn stability_check(sys: &Eris, t: f64, u: &StateVec, candidates: &[StateVec]) -> Result<f64> {
    let fu = sys.energy.eval(t, u).finite().ok_or(GflError::OutsideDomain)?;
    let mut best = 0.0f64;
    let mut test = |w: &StateVec| {
        if let (Finite(fw), Finite(d)) = (sys.energy.eval(t, w), sys.dist.eval(u, w)) {
            best = best.min(fw + d - fu);
        }
    };
    for w in candidates {
        test(w);
    }
    match &sys.exact_step {
        Some(s) => test(&s.solve(sys, u, t)?),
        None => {
            let dirs = probe_directions(u.len(), 16);
            for r in quad::log_grid(1e-6, 10.0, 40) {
                for e in &dirs {
                    test(&(u + e * (r * (1.0 + u.amax()))));
                }
            }
            test(&compass_minimize(sys, u, t));
        }
    }
    Ok(best)
}

/// `sup_w (F(t, u) − F(t, w)) / D(u, w)`; stability is equivalent to this
/// being ≤ 1.
pub fn stability_slope(sys: &Eris, t: f64, u: &StateVec, candidates: &[StateVec]) -> Result<f64> {
    let fu = sys.energy.eval(t, u).finite().ok_or(GflError::OutsideDomain)?;
    let mut best = 0.0f64;
    for w in candidates {
        if let (Finite(fw), Finite(d)) = (sys.energy.eval(t, w), sys.dist.eval(u, w)) {
            if d > 0.0 {
                best = best.max((fu - fw) / d);
            }
        }
    }
    Ok(best)
}

/// Which state carries the power integrand on each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PowerQuadrature {
    /// Trapezoid on nodal values.
    Trapezoid,
    /// u held at u_k on ]t_{k−1}, t_k] (left-continuous), integrated exactly.
    HoldLeft,
    /// u held at u_{k−1} on [t_{k−1}, t_k[ (right-continuous), integrated exactly.
    HoldRight,
}

fn work_integral(sys: &Eris, traj: &ErisTrajectory, i0: usize, i1: usize, rule: PowerQuadrature) -> Result<f64> {
    if sys.energy.is_autonomous() {
        return Ok(0.0);
    }
    let mut w = 0.0;
    for k in i0 + 1..=i1 {
        let (a, b) = (traj.times[k - 1], traj.times[k]);
        w += match rule {
            PowerQuadrature::Trapezoid => 0.5 * (b - a) * (sys.energy.power(a, &traj.states[k - 1])? + sys.energy.power(b, &traj.states[k])?),
            PowerQuadrature::HoldLeft | PowerQuadrature::HoldRight => {
                let u = if rule == PowerQuadrature::HoldLeft { &traj.states[k] } else { &traj.states[k - 1] };
                let mut err = None;
                let (v, _) = quad::integrate(
                    &mut |r| {
                        sys.energy.power(r, u).unwrap_or_else(|e| {
                            err = Some(e);
                            0.0
                        })
                    },
                    a,
                    b,
                    1e-14 * (b - a),
                );
                if let Some(e) = err {
                    return Err(e);
                }
                v
            }
        };
    }
    Ok(w)
}

/// Residuals of global stability (S) and energy balance (E).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergeticResiduals {
    pub stability_worst: f64,
    pub energy_balance: f64,
    pub variation: f64,
    pub work: f64,
}

/// (S): worst nodal stability residual. (E):
/// `F(T, u(T)) + Var_D − F(0, u(0)) − ∫ ∂ₛF(s, u(s)) ds`.
pub fn energetic_solution_residuals(sys: &Eris, traj: &ErisTrajectory, rule: PowerQuadrature) -> Result<EnergeticResiduals> {
    let n = traj.times.len();
    let stability_worst = traj.stability.iter().cloned().fold(f64::INFINITY, f64::min);
    let var = var_dissipation(sys, traj, traj.times[0], traj.times[n - 1]);
    let work = work_integral(sys, traj, 0, n - 1, rule)?;
    let f_end = sys.energy.eval(traj.times[n - 1], &traj.states[n - 1]).value();
    let f_0 = sys.energy.eval(traj.times[0], &traj.states[0]).value();
    Ok(EnergeticResiduals { stability_worst, energy_balance: f_end + var - f_0 - work, variation: var, work })
}

/// LHS − RHS of `F(s, u(s)) + Var_D(u, [r, s]) ≥ F(r, u(r)) + ∫_r^s ∂ₜF dt`,
/// with the power integrated along the left-continuous interpolant.
pub fn chain_rule_lower_estimate(sys: &Eris, traj: &ErisTrajectory, r: f64, s: f64) -> Result<f64> {
    let find = |x: f64| traj.times.iter().position(|&t| (t - x).abs() <= 1e-12 * (1.0 + x.abs())).ok_or(GflError::OutOfRange(x));
    let (i0, i1) = (find(r)?, find(s)?);
    let var = var_dissipation(sys, traj, r, s);
    let work = work_integral(sys, traj, i0, i1, PowerQuadrature::HoldLeft)?;
    Ok(sys.energy.eval(s, &traj.states[i1]).value() + var - sys.energy.eval(r, &traj.states[i0]).value() - work)
}

/// Step-wise TIMS properties: descent, telescoped bound, post-step
/// stability and the exponential a-priori bound.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TimsPropertyReport {
    pub descent_worst: f64,
    pub telescoped_worst: f64,
    pub stability_worst: f64,
    pub apriori_worst: f64,
}

impl TimsPropertyReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.descent_worst <= tol && self.telescoped_worst <= tol && self.stability_worst >= -tol && self.apriori_worst <= tol
    }
}

pub fn tims_properties(sys: &Eris, traj: &ErisTrajectory) -> Result<TimsPropertyReport> {
    let t0 = traj.times[0];
    let f0 = sys.energy.eval(t0, &traj.states[0]).value();
    let mut rep = TimsPropertyReport { descent_worst: f64::NEG_INFINITY, telescoped_worst: f64::NEG_INFINITY, stability_worst: f64::INFINITY, apriori_worst: f64::NEG_INFINITY };
    let mut work = 0.0;
    for k in 1..traj.times.len() {
        let (tk, prev, cur) = (traj.times[k], &traj.states[k - 1], &traj.states[k]);
        let d = sys.dist.eval(prev, cur).value();
        let fk = sys.energy.eval(tk, cur).value();
        let scale = 1e-12 * (1.0 + fk.abs());
        rep.descent_worst = rep.descent_worst.max(fk + d - sys.energy.eval(tk, prev).value() - scale);
        work += work_integral(sys, traj, k - 1, k, PowerQuadrature::HoldRight)?;
        rep.telescoped_worst = rep.telescoped_worst.max(fk + traj.dissipation[k] - f0 - work - scale);
        let bound = (sys.c_big * (tk - t0)).exp() * (f0 + sys.c_small) - sys.c_small;
        rep.apriori_worst = rep.apriori_worst.max(fk + traj.dissipation[k] - bound - 1e-12 * (1.0 + bound.abs()));
        rep.stability_worst = rep.stability_worst.min(traj.stability[k]);
    }
    Ok(rep)
}

/// Energy `F(φ(s), u)` for a strictly increasing time change φ.
#[derive(Clone)]
pub struct TimeRescaled {
    pub base: Arc<dyn Energy>,
    pub phi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub dphi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl Energy for TimeRescaled {
    fn name(&self) -> String {
        format!("{}-rescaled", self.base.name())
    }
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn in_domain(&self, u: &StateVec) -> bool {
        self.base.in_domain(u)
    }
    fn eval(&self, t: f64, u: &StateVec) -> ExtReal {
        self.base.eval((self.phi)(t), u)
    }
    fn differential(&self, t: f64, u: &StateVec) -> Result<Differential> {
        self.base.differential((self.phi)(t), u)
    }
    fn power(&self, t: f64, u: &StateVec) -> Result<f64> {
        Ok((self.dphi)(t) * self.base.power((self.phi)(t), u)?)
    }
    fn lambda(&self) -> Option<f64> {
        self.base.lambda()
    }
    fn hessian(&self, t: f64, u: &StateVec) -> Option<SymMatrix> {
        self.base.hessian((self.phi)(t), u)
    }
    fn is_autonomous(&self) -> bool {
        false
    }
}

struct RescaledSolver {
    base: Eris,
    phi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl TimsSolver for RescaledSolver {
    fn solve(&self, _sys: &Eris, u_prev: &StateVec, t: f64) -> Result<StateVec> {
        tims_step(&self.base, u_prev, (self.phi)(t))
    }
}

/// Runs TIMS on `F̃(s, u) = F(φ(s), u)` with partition `φ⁻¹(t_k)` and returns
/// the largest nodal discrepancy to the original run.
pub fn rate_independence_check(
    sys: &Eris,
    u0: &StateVec,
    partition: &[f64],
    phi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    phi_inv: &dyn Fn(f64) -> f64,
    dphi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
) -> Result<f64> {
    let original = run_tims(sys, u0, partition)?;
    let rescaled = Eris {
        name: format!("{}-rescaled", sys.name),
        energy: Arc::new(TimeRescaled { base: sys.energy.clone(), phi: phi.clone(), dphi }),
        dist: sys.dist.clone(),
        c_big: sys.c_big,
        c_small: sys.c_small,
        exact_step: Some(Arc::new(RescaledSolver { base: sys.clone(), phi })),
    };
    let s_part: Vec<f64> = partition.iter().map(|t| phi_inv(*t)).collect();
    let mut states = vec![u0.clone()];
    for k in 1..s_part.len() {
        states.push(tims_step(&rescaled, &states[k - 1], s_part[k]).map_err(|e| e.at_step(k))?);
    }
    Ok(original.states.iter().zip(&states).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max))
}
