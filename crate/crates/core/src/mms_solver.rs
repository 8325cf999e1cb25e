//! Time-incremental minimization (minimizing movements), trajectory
//! interpolants and De Giorgi's variational interpolant.

use crate::energies::{Differential, Distance, Energy, WeightedNorm};
use crate::error::{check_dim, GflError, Result};
use crate::ext::{ExtReal, Finite, PosInf};
use crate::linalg::SymMatrix;
use crate::potentials::{psd_range, DissipationPotential, OnsagerForm, PotentialKind, ScalarPotential};
use crate::StateVec;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::sync::Arc;

/// Dissipation structure of a gradient system.
#[derive(Clone)]
pub enum Dissipation {
    Banach(DissipationPotential),
    Metric { dist: Arc<dyn Distance>, psi: ScalarPotential },
}

/// Result of an exact or specialised step solver.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub u: StateVec,
    pub iterations: usize,
    pub residual: f64,
}

/// A registered minimizer of the step functional `w ↦ Φ_τ(u_prev, w)`.
pub trait StepSolver: Send + Sync {
    fn solve(&self, sys: &GradientSystem, u_prev: &StateVec, t: f64, tau: f64) -> Result<StepOutcome>;
}

/// Energy plus dissipation, with optional metadata used by diagnostics.
#[derive(Clone)]
pub struct GradientSystem {
    pub name: String,
    pub energy: Arc<dyn Energy>,
    pub dissipation: Dissipation,
    /// Diagonal weights of the norm used in convexity and contraction statements.
    pub metric_weight: Option<Vec<f64>>,
    pub step_solver: Option<Arc<dyn StepSolver>>,
}

impl GradientSystem {
    pub fn banach(name: impl Into<String>, energy: Arc<dyn Energy>, r: DissipationPotential) -> Self {
        GradientSystem { name: name.into(), energy, dissipation: Dissipation::Banach(r), metric_weight: None, step_solver: None }
    }

    /// Metric gradient system; ψ must be superlinear.
    pub fn metric(name: impl Into<String>, energy: Arc<dyn Energy>, dist: Arc<dyn Distance>, psi: ScalarPotential) -> Result<Self> {
        if !psi.is_superlinear() {
            return Err(GflError::InvalidParameter("metric minimizing movements need a superlinear ψ".into()));
        }
        Ok(GradientSystem { name: name.into(), energy, dissipation: Dissipation::Metric { dist, psi }, metric_weight: None, step_solver: None })
    }

    pub fn with_metric_weight(mut self, w: Vec<f64>) -> Self {
        self.metric_weight = Some(w);
        self
    }

    pub fn with_step_solver(mut self, s: Arc<dyn StepSolver>) -> Self {
        self.step_solver = Some(s);
        self
    }

    pub fn dim(&self) -> usize {
        self.energy.dim()
    }

    pub fn lambda(&self) -> Option<f64> {
        self.energy.lambda()
    }

    /// D(u, w): the dissipation norm frozen at `u`, or the metric.
    pub fn distance(&self, u: &StateVec, w: &StateVec) -> ExtReal {
        match &self.dissipation {
            Dissipation::Metric { dist, .. } => dist.dist(u, w),
            Dissipation::Banach(r) => match r.norm(u, &(w - u)) {
                Some(d) => d,
                None => Finite(self.fixed_norm().norm(&(w - u))),
            },
        }
    }

    /// The state-independent norm of the system (metric weight, else the
    /// dissipation weights, else Euclidean).
    pub fn fixed_norm(&self) -> WeightedNorm {
        if let Some(w) = &self.metric_weight {
            return WeightedNorm { weights: w.clone() };
        }
        if let Dissipation::Banach(DissipationPotential::NormComposed { weights, .. }) = &self.dissipation {
            return WeightedNorm { weights: weights.clone() };
        }
        WeightedNorm::euclidean(self.dim())
    }

    /// Distance used by EVI and contraction checks.
    pub fn norm_distance(&self, u: &StateVec, w: &StateVec) -> f64 {
        match (&self.metric_weight, &self.dissipation) {
            (Some(wt), _) => WeightedNorm { weights: wt.clone() }.norm(&(w - u)),
            (None, Dissipation::Metric { dist, .. }) => dist.dist(u, w).value(),
            (None, _) => self.fixed_norm().norm(&(w - u)),
        }
    }

    /// Scalar ψ such that the step cost is τψ(D/τ).
    pub fn psi(&self) -> Option<ScalarPotential> {
        match &self.dissipation {
            Dissipation::Metric { psi, .. } => Some(psi.clone()),
            Dissipation::Banach(r) => r.scalar_potential(),
        }
    }

    /// Dual norm of a covector at `u`.
    pub fn dual_norm(&self, u: &StateVec, xi: &StateVec) -> Option<f64> {
        match &self.dissipation {
            Dissipation::Banach(r) => r.dual_norm(u, xi),
            Dissipation::Metric { dist, .. } => dist.dual_norm(u, xi),
        }
    }

    /// Metric slope at `u`: registered closed form, else the dual norm of
    /// a smooth differential; `None` when neither is available.
    pub fn slope(&self, t: f64, u: &StateVec) -> Option<f64> {
        self.slope_at(t, u, u)
    }

    /// Slope at `u` measured in the dissipation frozen at `frozen`.
    pub fn slope_at(&self, t: f64, u: &StateVec, frozen: &StateVec) -> Option<f64> {
        if let Some(s) = self.energy.slope(t, u) {
            return Some(s);
        }
        match self.energy.differential(t, u) {
            Ok(Differential::Smooth(g)) => self.dual_norm(frozen, &g),
            _ => None,
        }
    }

    /// R(u, v) for Banach systems, ψ(‖v‖) in the fixed norm otherwise.
    pub fn rate(&self, u: &StateVec, v: &StateVec) -> Result<ExtReal> {
        match &self.dissipation {
            Dissipation::Banach(r) => r.eval(u, v),
            Dissipation::Metric { psi, .. } => psi.eval(self.fixed_norm().norm(v)),
        }
    }

    /// R*(u, ξ) for Banach systems.
    pub fn dual_rate(&self, u: &StateVec, xi: &StateVec) -> Result<ExtReal> {
        match &self.dissipation {
            Dissipation::Banach(r) => r.eval_dual(u, xi),
            Dissipation::Metric { psi, .. } => {
                let pair = crate::potentials::ConjugatePair::new(psi.clone());
                crate::potentials::eval_conjugate(&pair, self.fixed_norm().dual(xi))
            }
        }
    }

    /// τ-scaled step cost between `u_prev` and `w`.
    pub fn step_cost(&self, u_prev: &StateVec, w: &StateVec, tau: f64) -> ExtReal {
        match &self.dissipation {
            Dissipation::Banach(r) => match r.eval(u_prev, &((w - u_prev) / tau)) {
                Ok(v) => tau * v,
                Err(_) => PosInf,
            },
            Dissipation::Metric { dist, psi } => match dist.dist(u_prev, w) {
                Finite(d) => tau * psi.eval(d / tau).unwrap_or(PosInf),
                PosInf => PosInf,
            },
        }
    }

    /// Φ_τ(u_prev, w) = step cost + F(t, w).
    pub fn step_objective(&self, u_prev: &StateVec, w: &StateVec, t: f64, tau: f64) -> ExtReal {
        if !self.energy.in_domain(w) {
            return PosInf;
        }
        self.step_cost(u_prev, w, tau) + self.energy.eval(t, w)
    }

    /// Whether the step functional is certified strictly convex, so that a
    /// single start suffices.
    pub fn step_is_certified_convex(&self, tau: f64) -> bool {
        let Some(lambda) = self.lambda() else {
            return false;
        };
        match &self.dissipation {
            Dissipation::Banach(DissipationPotential::NormComposed { psi, weights }) => {
                if lambda >= 0.0 {
                    return psi.is_strictly_convex_c1();
                }
                let same_metric = self.metric_weight.as_ref().map_or(true, |m| m == weights);
                psi.is_quadratic() && same_metric && psi.scale / tau + lambda > 0.0
            }
            Dissipation::Banach(DissipationPotential::OnsagerQuadratic(_)) => lambda >= 0.0,
            Dissipation::Banach(DissipationPotential::Separable { potentials, .. }) => {
                lambda >= 0.0 && potentials.iter().all(|p| p.is_strictly_convex_c1())
            }
            Dissipation::Metric { .. } => false,
        }
    }
}

/// Inner-solver settings.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MmsOptions {
    pub seed: u64,
    pub starts: usize,
    pub max_iter: usize,
    /// Euler–Lagrange residual tolerance, relative to `1 + ‖ξ‖`.
    pub tol: f64,
    /// Near-optimality window for multi-start tie-breaking, relative to `1 + |Φ|`.
    pub tol_phi: f64,
}

impl Default for MmsOptions {
    fn default() -> Self {
        MmsOptions { seed: 0, starts: 8, max_iter: 500, tol: 1e-9, tol_phi: 1e-10 }
    }
}

/// Per-step solver record.
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub increment_norm: f64,
    pub phi: f64,
    pub iterations: usize,
    pub el_residual: f64,
    pub starts: usize,
    /// Number of distinct near-optimal minimizers found.
    pub multiplicity: usize,
}

/// Output of one minimizing-movement step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub u: StateVec,
    pub force: Option<StateVec>,
    pub record: StepRecord,
}

/// Discrete trajectory with forces and step records.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVec>,
    /// ξ_k per node; the entry at node k belongs to the step ending there.
    pub forces: Vec<Option<StateVec>>,
    pub records: Vec<StepRecord>,
}

/// Interpolants of a discrete trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpolantKind {
    /// Piecewise affine û.
    Affine,
    /// Left-continuous piecewise constant ū (value u_k on ]t_{k−1}, t_k]).
    ConstLeft,
    /// Right-continuous piecewise constant u̲ (value u_{k−1} on [t_{k−1}, t_k[).
    ConstRight,
}

impl Trajectory {
    /// Trajectory from sampled states without forces or step records.
    pub fn from_samples(times: Vec<f64>, states: Vec<StateVec>) -> Self {
        let n = states.len();
        Trajectory { times, states, forces: vec![None; n], records: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Index k with t ∈ [t_k, t_{k+1}].
    pub fn segment(&self, t: f64) -> Result<usize> {
        let n = self.times.len();
        if n == 0 || t < self.times[0] || t > self.times[n - 1] || t.is_nan() {
            return Err(GflError::OutOfRange(t));
        }
        if n == 1 {
            return Ok(0);
        }
        let k = self.times.partition_point(|&s| s <= t);
        Ok(k.saturating_sub(1).min(n - 2))
    }

    pub fn interpolate(&self, kind: InterpolantKind, t: f64) -> Result<StateVec> {
        let k = self.segment(t)?;
        if self.times.len() == 1 {
            return Ok(self.states[0].clone());
        }
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        Ok(match kind {
            InterpolantKind::Affine => {
                let th = (t - t0) / (t1 - t0);
                &self.states[k] * (1.0 - th) + &self.states[k + 1] * th
            }
            InterpolantKind::ConstLeft => {
                if t == t0 {
                    self.states[k].clone()
                } else {
                    self.states[k + 1].clone()
                }
            }
            InterpolantKind::ConstRight => {
                if t == t1 {
                    self.states[k + 1].clone()
                } else {
                    self.states[k].clone()
                }
            }
        })
    }

    /// Piecewise-constant force ξ̄ (left-continuous).
    pub fn force_at(&self, t: f64) -> Result<Option<StateVec>> {
        let k = self.segment(t)?;
        if self.times.len() == 1 {
            return Ok(self.forces[0].clone());
        }
        Ok(if t == self.times[k] { self.forces[k].clone().or_else(|| self.forces[k + 1].clone()) } else { self.forces[k + 1].clone() })
    }
}

/// `interpolate` as a free function.
pub fn interpolate(traj: &Trajectory, kind: InterpolantKind, t: f64) -> Result<StateVec> {
    traj.interpolate(kind, t)
}

/// The step functional in coordinates `w = u_prev + B y`.
struct StepProblem<'a> {
    sys: &'a GradientSystem,
    u_prev: &'a StateVec,
    t: f64,
    tau: f64,
    /// Orthonormal basis of range K for singular Onsager forms.
    basis: Option<DMatrix<f64>>,
    inv_eig: Vec<f64>,
    metric_g: Option<DMatrix<f64>>,
    sep_coeff: Option<Vec<f64>>,
}

impl<'a> StepProblem<'a> {
    fn new(sys: &'a GradientSystem, u_prev: &'a StateVec, t: f64, tau: f64) -> Result<Self> {
        let mut p = StepProblem { sys, u_prev, t, tau, basis: None, inv_eig: Vec::new(), metric_g: None, sep_coeff: None };
        match &sys.dissipation {
            Dissipation::Banach(DissipationPotential::OnsagerQuadratic(OnsagerForm::Onsager(k))) => {
                let rb = psd_range(&k(u_prev))?;
                p.inv_eig = rb.eigenvalues.iter().map(|l| 1.0 / l).collect();
                p.basis = Some(rb.basis);
            }
            Dissipation::Banach(DissipationPotential::OnsagerQuadratic(OnsagerForm::Metric(g))) => p.metric_g = Some(g(u_prev)),
            Dissipation::Banach(DissipationPotential::Separable { coeff, .. }) => p.sep_coeff = Some(coeff(u_prev)),
            _ => {}
        }
        Ok(p)
    }

    fn dim(&self) -> usize {
        self.basis.as_ref().map_or(self.u_prev.len(), |b| b.ncols())
    }

    fn lift(&self, y: &DVector<f64>) -> StateVec {
        match &self.basis {
            Some(b) => self.u_prev + b * y,
            None => self.u_prev + y,
        }
    }

    fn cost(&self, y: &DVector<f64>, w: &StateVec) -> ExtReal {
        if self.basis.is_some() {
            let s: f64 = y.iter().zip(&self.inv_eig).map(|(a, l)| a * a * l).sum();
            return Finite(0.5 * s / self.tau);
        }
        if let Some(g) = &self.metric_g {
            let d = w - self.u_prev;
            return Finite(0.5 * d.dot(&(g * &d)) / self.tau);
        }
        self.sys.step_cost(self.u_prev, w, self.tau)
    }

    fn phi(&self, y: &DVector<f64>) -> ExtReal {
        let w = self.lift(y);
        if !self.sys.energy.in_domain(&w) {
            return PosInf;
        }
        let e = self.sys.energy.eval(self.t, &w);
        match e {
            Finite(x) if x.is_finite() => self.cost(y, &w) + e,
            _ => PosInf,
        }
    }

    /// ∇_w of the step cost in full coordinates, when differentiable.
    fn cost_grad_full(&self, w: &StateVec) -> Option<StateVec> {
        let d = w - self.u_prev;
        let tau = self.tau;
        if let Some(b) = &self.basis {
            let y = b.transpose() * &d;
            let z = DVector::from_iterator(y.len(), y.iter().zip(&self.inv_eig).map(|(a, l)| a * l / tau));
            return Some(b * z);
        }
        if let Some(g) = &self.metric_g {
            return Some(g * &d / tau);
        }
        match &self.sys.dissipation {
            Dissipation::Banach(DissipationPotential::NormComposed { psi, weights }) => {
                let v = &d / tau;
                let wv = StateVec::from_iterator(v.len(), weights.iter().zip(v.iter()).map(|(a, b)| a * b));
                let rho = weights.iter().zip(v.iter()).map(|(a, b)| a * b * b).sum::<f64>().sqrt();
                if rho == 0.0 {
                    if psi.derivative(0.0) == 0.0 {
                        return Some(StateVec::zeros(v.len()));
                    }
                    return None;
                }
                if psi.is_quadratic() {
                    return Some(wv * psi.scale);
                }
                Some(wv * (psi.derivative(rho) / rho))
            }
            Dissipation::Banach(DissipationPotential::Separable { potentials, .. }) => {
                let a = self.sep_coeff.as_ref()?;
                let mut g = StateVec::zeros(d.len());
                for i in 0..d.len() {
                    let v = d[i] / tau;
                    if v == 0.0 {
                        if potentials[i].derivative(0.0) != 0.0 {
                            return None;
                        }
                    } else {
                        g[i] = a[i] * potentials[i].derivative(v.abs()) * v.signum();
                    }
                }
                Some(g)
            }
            _ => None,
        }
    }

    fn reduce(&self, g: &StateVec) -> DVector<f64> {
        match &self.basis {
            Some(b) => b.transpose() * g,
            None => g.clone(),
        }
    }

    fn grad(&self, y: &DVector<f64>) -> Option<DVector<f64>> {
        let w = self.lift(y);
        let df = self.sys.energy.differential(self.t, &w).ok()?.smooth()?;
        let cg = self.cost_grad_full(&w)?;
        Some(self.reduce(&(cg + df)))
    }

    fn cost_hess(&self, w: &StateVec) -> Option<SymMatrix> {
        let tau = self.tau;
        if self.basis.is_some() {
            return Some(SymMatrix::Diag(self.inv_eig.iter().map(|l| l / tau).collect()));
        }
        if let Some(g) = &self.metric_g {
            return Some(SymMatrix::Dense(g / tau));
        }
        match &self.sys.dissipation {
            Dissipation::Banach(DissipationPotential::NormComposed { psi, weights }) => {
                if psi.is_quadratic() {
                    return Some(SymMatrix::Diag(weights.iter().map(|a| psi.scale * a / tau).collect()));
                }
                let v = (w - self.u_prev) / tau;
                let rho = weights.iter().zip(v.iter()).map(|(a, b)| a * b * b).sum::<f64>().sqrt();
                if rho == 0.0 {
                    return None;
                }
                let p1 = psi.derivative(rho);
                let p2 = psi.second_derivative(rho)?;
                let c = p1 / rho;
                let cp = (p2 * rho - p1) / (rho * rho);
                let wv = DVector::from_iterator(v.len(), weights.iter().zip(v.iter()).map(|(a, b)| a * b));
                let mut m = &wv * wv.transpose() * (cp / rho);
                for i in 0..v.len() {
                    m[(i, i)] += c * weights[i];
                }
                Some(SymMatrix::Dense(m / tau))
            }
            Dissipation::Banach(DissipationPotential::Separable { potentials, .. }) => {
                let a = self.sep_coeff.as_ref()?;
                let d = w - self.u_prev;
                let mut diag = Vec::with_capacity(d.len());
                for i in 0..d.len() {
                    diag.push(a[i] * potentials[i].second_derivative((d[i] / tau).abs())? / tau);
                }
                Some(SymMatrix::Diag(diag))
            }
            _ => None,
        }
    }

    fn hess(&self, y: &DVector<f64>) -> Option<SymMatrix> {
        let w = self.lift(y);
        let ch = self.cost_hess(&w)?;
        let eh = match self.sys.energy.hessian(self.t, &w) {
            Some(h) => match &self.basis {
                Some(b) => SymMatrix::Dense(b.transpose() * h.to_dense() * b),
                None => h,
            },
            None => return self.fd_hess(y),
        };
        Some(ch.add(&eh))
    }

    fn fd_hess(&self, y: &DVector<f64>) -> Option<SymMatrix> {
        let n = self.dim();
        if n > 16 {
            return None;
        }
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let h = 1e-6 * (1.0 + y[i].abs());
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[i] += h;
            ym[i] -= h;
            let gp = self.grad(&yp)?;
            let gm = self.grad(&ym)?;
            m.set_column(i, &((gp - gm) / (2.0 * h)));
        }
        let m = (&m + m.transpose()) * 0.5;
        Some(SymMatrix::Dense(m))
    }

    /// Stationarity threshold: relative tolerance plus a roundoff floor that
    /// grows with the curvature of the step cost.
    fn threshold(&self, y: &DVector<f64>, opts: &MmsOptions) -> f64 {
        let w = self.lift(y);
        let xi = self.force(&w).map_or(0.0, |f| f.norm());
        let curv = self.cost_hess(&w).map_or(1.0 / self.tau, |h| h.max_abs());
        opts.tol * (1.0 + xi) + 64.0 * f64::EPSILON * curv * (1.0 + self.u_prev.norm() + w.norm())
    }

    /// Force ξ at the step endpoint: DF if smooth, else −D_v R.
    fn force(&self, w: &StateVec) -> Option<StateVec> {
        match self.sys.energy.differential(self.t, w) {
            Ok(Differential::Smooth(g)) => Some(g),
            _ => self.cost_grad_full(w).map(|g| -g),
        }
    }
}

struct Candidate {
    y: DVector<f64>,
    phi: f64,
    iterations: usize,
    residual: f64,
    converged: bool,
}

fn newton_descent(p: &StepProblem, y0: DVector<f64>, opts: &MmsOptions) -> Candidate {
    let mut y = y0;
    let mut phi = p.phi(&y).value();
    let mut it = 0;
    let mut last_res = f64::INFINITY;
    let mut bb_step: Option<f64> = None;
    let mut prev: Option<(DVector<f64>, DVector<f64>)> = None;
    while it < opts.max_iter {
        let Some(g) = p.grad(&y) else {
            return pattern_search(p, y, it);
        };
        let res = g.norm();
        last_res = res;
        if res <= p.threshold(&y, opts) {
            return Candidate { y, phi, iterations: it, residual: res, converged: true };
        }
        let hess = p.hess(&y);
        let dir = match &hess {
            Some(h) => {
                let mut mu = 0.0;
                let scale = 1e-10 * (1.0 + h.max_abs());
                let mut d = None;
                for _ in 0..60 {
                    if let Some(x) = h.solve_spd(mu, &(-&g)) {
                        if x.dot(&g) < 0.0 {
                            d = Some(x);
                            break;
                        }
                    }
                    mu = if mu == 0.0 { scale } else { mu * 4.0 };
                }
                d.unwrap_or_else(|| -&g)
            }
            None => {
                let s = match (&prev, bb_step) {
                    (Some((yp, gp)), _) => {
                        let sy = &y - yp;
                        let gy = &g - gp;
                        let den = sy.dot(&gy);
                        if den > 0.0 {
                            sy.dot(&sy) / den
                        } else {
                            bb_step.unwrap_or(p.tau)
                        }
                    }
                    (None, Some(s)) => s,
                    (None, None) => p.tau.min(1.0) / (1.0 + res).max(1.0),
                };
                bb_step = Some(s);
                -&g * s
            }
        };
        prev = Some((y.clone(), g.clone()));
        let slope = dir.dot(&g);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let yn = &y + &dir * alpha;
            let pn = p.phi(&yn).value();
            if pn.is_finite() && pn <= phi + 1e-4 * alpha * slope {
                y = yn;
                phi = pn;
                accepted = true;
                break;
            }
            // Near the optimum Φ stalls at roundoff; accept steps that keep Φ
            // level and shrink the gradient.
            if pn.is_finite() && (pn - phi).abs() <= 1e-13 * (1.0 + phi.abs()) {
                if let Some(gn) = p.grad(&yn) {
                    if gn.norm() < res {
                        y = yn;
                        phi = pn;
                        accepted = true;
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        it += 1;
        if !accepted {
            break;
        }
    }
    let converged = last_res.is_finite() && p.grad(&y).map_or(false, |g| g.norm() <= p.threshold(&y, opts));
    Candidate { residual: p.grad(&y).map_or(last_res, |g| g.norm()), y, phi, iterations: it, converged }
}

/// Derivative-free compass search, used where the step functional is not
/// differentiable and no registered solver exists.
fn pattern_search(p: &StepProblem, y0: DVector<f64>, it0: usize) -> Candidate {
    let n = y0.len();
    let mut y = y0;
    let mut phi = p.phi(&y).value();
    let mut step = 0.25 * (1.0 + y.amax()) * p.tau.sqrt().min(1.0);
    let mut evals = 0usize;
    while step > 1e-13 * (1.0 + y.amax()) && evals < 400_000 {
        let mut improved = false;
        for i in 0..n {
            for s in [1.0, -1.0] {
                let mut yn = y.clone();
                yn[i] += s * step;
                let pn = p.phi(&yn).value();
                evals += 1;
                if pn < phi {
                    y = yn;
                    phi = pn;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Candidate { y, phi, iterations: it0 + evals, residual: step, converged: phi.is_finite() }
}

fn start_points(p: &StepProblem, opts: &MmsOptions, seed: u64, multistart: bool) -> Vec<DVector<f64>> {
    let k = p.dim();
    let mut starts = vec![DVector::zeros(k)];
    if !multistart || opts.starts <= 1 {
        return starts;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 0.1 * (1.0 + p.u_prev.amax()) * p.tau.sqrt().min(1.0);
    let mut pairs = Vec::new();
    while starts.len() + pairs.len() * 2 < opts.starts - 1 {
        let d = DVector::from_fn(k, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let nd = d.norm().max(1e-12);
        pairs.push(d * (scale * rng.gen_range(0.5..1.5) / nd));
    }
    for d in pairs {
        starts.push(d.clone());
        starts.push(-d);
    }
    while starts.len() < opts.starts {
        let d = DVector::from_fn(k, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let nd = d.norm().max(1e-12);
        starts.push(d * (4.0 * scale / nd));
    }
    starts
        .into_iter()
        .map(|mut y| {
            for _ in 0..40 {
                if p.phi(&y).is_finite() {
                    break;
                }
                y *= 0.5;
            }
            y
        })
        .collect()
}

fn step_seed(opts: &MmsOptions, t: f64) -> u64 {
    opts.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ t.to_bits()
}

/// All converged candidates of one step, best first.
fn step_candidates<'a>(sys: &'a GradientSystem, u_prev: &'a StateVec, t: f64, tau: f64, opts: &MmsOptions, multistart: bool) -> Result<(StepProblem<'a>, Vec<Candidate>)> {
    let p = StepProblem::new(sys, u_prev, t, tau)?;
    let starts = start_points(&p, opts, step_seed(opts, t), multistart);
    let feasible: Vec<_> = starts.into_iter().filter(|y| p.phi(y).is_finite()).collect();
    if feasible.is_empty() {
        return Err(GflError::InfeasibleStart);
    }
    let mut cands: Vec<Candidate> = feasible.into_iter().map(|y| newton_descent(&p, y, opts)).filter(|c| c.phi.is_finite()).collect();
    if cands.is_empty() {
        return Err(GflError::NonfiniteObjective);
    }
    cands.sort_by(|a, b| a.phi.partial_cmp(&b.phi).unwrap());
    Ok((p, cands))
}

/// One minimizing-movement step from `u_prev` to time `t_k` with step `τ`.
pub fn mms_step(sys: &GradientSystem, u_prev: &StateVec, t_k: f64, tau: f64, opts: &MmsOptions) -> Result<StepResult> {
    check_dim(sys.dim(), u_prev.len())?;
    if !(tau > 0.0) {
        return Err(GflError::InvalidParameter(format!("τ must be positive, got {tau}")));
    }
    if let Some(solver) = &sys.step_solver {
        let out = solver.solve(sys, u_prev, t_k, tau)?;
        let p = StepProblem::new(sys, u_prev, t_k, tau)?;
        let phi = sys.step_objective(u_prev, &out.u, t_k, tau);
        let phi = phi.finite().ok_or(GflError::NonfiniteObjective)?;
        let force = p.force(&out.u);
        let el = match (&force, sys.energy.differential(t_k, &out.u)) {
            (_, Ok(Differential::Smooth(_))) => p.grad(&p.reduce(&(&out.u - u_prev))).map_or(out.residual, |g| g.norm()),
            (Some(xi), _) => sys.energy.subdifferential_distance(t_k, &out.u, xi).unwrap_or(out.residual),
            _ => out.residual,
        };
        let record = StepRecord {
            increment_norm: sys.distance(u_prev, &out.u).value(),
            phi,
            iterations: out.iterations,
            el_residual: el,
            starts: 1,
            multiplicity: 1,
        };
        return Ok(StepResult { u: out.u, force, record });
    }
    let multistart = !sys.step_is_certified_convex(tau);
    let (p, cands) = step_candidates(sys, u_prev, t_k, tau, opts, multistart)?;
    let best = cands[0].phi;
    let window = opts.tol_phi * (1.0 + best.abs());
    let near: Vec<&Candidate> = cands.iter().filter(|c| c.phi <= best + window && (c.converged || !cands.iter().any(|d| d.converged))).collect();
    let chosen = near
        .iter()
        .min_by(|a, b| {
            let da = sys.distance(u_prev, &p.lift(&a.y)).value();
            let db = sys.distance(u_prev, &p.lift(&b.y)).value();
            da.partial_cmp(&db).unwrap()
        })
        .unwrap();
    if !chosen.converged && !cands.iter().any(|c| c.converged) {
        return Err(GflError::InnerSolveFailed(format!("no start converged (best residual {:.3e})", chosen.residual)));
    }
    let u = p.lift(&chosen.y);
    let mut distinct: Vec<StateVec> = Vec::new();
    for c in &near {
        let w = p.lift(&c.y);
        if !distinct.iter().any(|d| (d - &w).norm() <= 1e-6 * (1.0 + w.norm())) {
            distinct.push(w);
        }
    }
    let record = StepRecord {
        increment_norm: sys.distance(u_prev, &u).value(),
        phi: chosen.phi,
        iterations: chosen.iterations,
        el_residual: chosen.residual,
        starts: cands.len(),
        multiplicity: distinct.len(),
    };
    Ok(StepResult { force: p.force(&u), u, record })
}

/// Dual norm (frozen at `u_prev`) of `DF(u) + ∇cost(u)`: the stationarity
/// defect of a computed step, in the norm the slope lives in.
pub(crate) fn step_defect(sys: &GradientSystem, u_prev: &StateVec, u: &StateVec, t: f64, tau: f64) -> Option<f64> {
    let p = StepProblem::new(sys, u_prev, t, tau).ok()?;
    let g = sys.energy.differential(t, u).ok()?.smooth()?;
    let c = p.cost_grad_full(u)?;
    sys.dual_norm(u_prev, &(g + c))
}

/// Minimizing movements on a uniform partition of `[t0, T]` into `N` steps.
pub fn run_mms(sys: &GradientSystem, u0: &StateVec, t0: f64, t_end: f64, n: usize, opts: &MmsOptions) -> Result<Trajectory> {
    if n == 0 {
        return Err(GflError::InvalidParameter("N must be at least 1".into()));
    }
    if !(t_end > t0) {
        return Err(GflError::InvalidParameter(format!("empty time interval [{t0}, {t_end}]")));
    }
    let tau = (t_end - t0) / n as f64;
    let times: Vec<f64> = (0..=n).map(|k| if k == n { t_end } else { t0 + k as f64 * tau }).collect();
    run_mms_partition(sys, u0, &times, opts)
}

/// Minimizing movements on an explicit partition (variable time steps).
pub fn run_mms_partition(sys: &GradientSystem, u0: &StateVec, times: &[f64], opts: &MmsOptions) -> Result<Trajectory> {
    check_dim(sys.dim(), u0.len())?;
    if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(GflError::InvalidParameter("partition must be strictly increasing with ≥ 2 nodes".into()));
    }
    if !sys.energy.eval(times[0], u0).is_finite() {
        return Err(GflError::InfeasibleStart);
    }
    let f0 = sys.energy.differential(times[0], u0).ok().and_then(|d| d.smooth());
    let mut traj = Trajectory { times: times.to_vec(), states: vec![u0.clone()], forces: vec![f0], records: Vec::new() };
    for k in 1..times.len() {
        let tau = times[k] - times[k - 1];
        let step = mms_step(sys, &traj.states[k - 1], times[k], tau, opts).map_err(|e| e.at_step(k))?;
        traj.states.push(step.u);
        traj.forces.push(step.force);
        traj.records.push(step.record);
    }
    Ok(traj)
}

/// De Giorgi interpolant: minimizer ũ(r) of `rψ(D(u_base, ·)/r) + F` and
/// the value φ(r).
pub fn de_giorgi_interpolant(sys: &GradientSystem, u_base: &StateVec, t_base: f64, r: f64, opts: &MmsOptions) -> Result<(StateVec, f64)> {
    if !(r > 0.0) {
        return Err(GflError::InvalidParameter(format!("radius must be positive, got {r}")));
    }
    let s = mms_step(sys, u_base, t_base, r, opts)?;
    Ok((s.u, s.record.phi))
}

/// φ, d⁺ and d⁻ of the value function on a radius grid.
#[derive(Debug, Clone, Serialize)]
pub struct ValueFunctionProbe {
    pub radii: Vec<f64>,
    pub phi: Vec<f64>,
    pub d_plus: Vec<f64>,
    pub d_minus: Vec<f64>,
    /// Per radius, the failure message if the inner solve failed.
    pub failures: Vec<Option<String>>,
    pub phi_nonincreasing: bool,
    pub intertwined: bool,
}

/// Multi-start probe of the value function; near-optimal minimizers give
/// d⁺ (largest distance) and d⁻ (smallest distance).
pub fn value_function_probe(sys: &GradientSystem, u_base: &StateVec, t_base: f64, r_grid: &[f64], opts: &MmsOptions) -> Result<ValueFunctionProbe> {
    if r_grid.is_empty() || r_grid.windows(2).any(|w| !(w[1] > w[0])) || r_grid[0] <= 0.0 {
        return Err(GflError::InvalidParameter("radius grid must be positive and increasing".into()));
    }
    let mut probe = ValueFunctionProbe {
        radii: r_grid.to_vec(),
        phi: Vec::new(),
        d_plus: Vec::new(),
        d_minus: Vec::new(),
        failures: Vec::new(),
        phi_nonincreasing: true,
        intertwined: true,
    };
    for &r in r_grid {
        match probe_radius(sys, u_base, t_base, r, opts) {
            Ok((phi, dp, dm)) => {
                probe.phi.push(phi);
                probe.d_plus.push(dp);
                probe.d_minus.push(dm);
                probe.failures.push(None);
            }
            Err(e) => {
                probe.phi.push(f64::NAN);
                probe.d_plus.push(f64::NAN);
                probe.d_minus.push(f64::NAN);
                probe.failures.push(Some(e.to_string()));
            }
        }
    }
    let tol = 1e-9;
    for i in 1..r_grid.len() {
        let (a, b) = (probe.phi[i - 1], probe.phi[i]);
        if a.is_finite() && b.is_finite() && b > a + tol * (1.0 + a.abs()) {
            probe.phi_nonincreasing = false;
        }
        let (dp, dm) = (probe.d_plus[i - 1], probe.d_minus[i]);
        if dp.is_finite() && dm.is_finite() && dm < dp - 1e-6 * (1.0 + dp) {
            probe.intertwined = false;
        }
    }
    Ok(probe)
}

pub(crate) fn probe_radius(sys: &GradientSystem, u_base: &StateVec, t_base: f64, r: f64, opts: &MmsOptions) -> Result<(f64, f64, f64)> {
    if sys.step_solver.is_some() {
        let s = mms_step(sys, u_base, t_base, r, opts)?;
        let d = sys.distance(u_base, &s.u).value();
        return Ok((s.record.phi, d, d));
    }
    let (p, cands) = step_candidates(sys, u_base, t_base, r, opts, true)?;
    let best = cands[0].phi;
    let window = opts.tol_phi.max(1e-9) * (1.0 + best.abs());
    let best_u = p.lift(&cands[0].y);
    let d_best = sys.distance(u_base, &best_u).value();
    // Minimizers that coincide with the best one up to roundoff share its distance.
    let same = 1e-10 * (1.0 + best_u.norm());
    let mut ds: Vec<f64> = cands
        .iter()
        .filter(|c| c.phi <= best + window && c.converged)
        .map(|c| p.lift(&c.y))
        .map(|w| if (&w - &best_u).norm() <= same { d_best } else { sys.distance(u_base, &w).value() })
        .collect();
    if ds.is_empty() {
        ds.push(d_best);
    }
    let dp = ds.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let dm = ds.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok((best, dp, dm))
}

/// Scalar potential kind helper for diagnostics.
pub fn psi_is_quadratic(sys: &GradientSystem) -> bool {
    matches!(sys.psi().map(|p| p.kind), Some(PotentialKind::Quadratic))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energies::QuadraticEnergy;
    use nalgebra::dvector;

    fn quad1() -> GradientSystem {
        GradientSystem::banach("quadratic", Arc::new(QuadraticEnergy::euclidean(1)), DissipationPotential::quadratic_euclidean(1))
    }

    #[test]
    fn quadratic_prox_step() {
        let s = mms_step(&quad1(), &dvector![1.0], 0.5, 0.5, &MmsOptions::default()).unwrap();
        assert!((s.u[0] - 2.0 / 3.0).abs() < 1e-14);
        assert!((s.force.unwrap()[0] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn stationary_point_is_fixed() {
        let s = mms_step(&quad1(), &dvector![0.0], 0.5, 0.5, &MmsOptions::default()).unwrap();
        assert_eq!(s.u[0], 0.0);
        let tr = run_mms(&quad1(), &dvector![0.0], 0.0, 1.0, 1, &MmsOptions::default()).unwrap();
        assert_eq!(tr.states[1][0], 0.0);
    }

    #[test]
    fn run_matches_prox_iteration() {
        let tr = run_mms(&quad1(), &dvector![1.0], 0.0, 1.0, 10, &MmsOptions::default()).unwrap();
        for (k, u) in tr.states.iter().enumerate() {
            assert!((u[0] - 1.1f64.powi(-(k as i32))).abs() < 1e-13);
        }
        let tr = run_mms(&quad1(), &dvector![1.0], 0.0, 1.0, 4000, &MmsOptions::default()).unwrap();
        assert!((tr.states.last().unwrap()[0] - (-1.0f64).exp()).abs() < 1e-4);
    }

    #[test]
    fn interpolants() {
        let tr = Trajectory::from_samples(vec![0.0, 1.0], vec![dvector![0.0], dvector![2.0]]);
        assert_eq!(tr.interpolate(InterpolantKind::Affine, 0.5).unwrap()[0], 1.0);
        assert_eq!(tr.interpolate(InterpolantKind::ConstLeft, 0.5).unwrap()[0], 2.0);
        assert_eq!(tr.interpolate(InterpolantKind::ConstRight, 0.5).unwrap()[0], 0.0);
        assert!(matches!(tr.interpolate(InterpolantKind::Affine, 1.5), Err(GflError::OutOfRange(_))));
    }

    #[test]
    fn de_giorgi_quadratic() {
        for r in [0.1, 0.5, 1.0, 3.0] {
            let (u, phi) = de_giorgi_interpolant(&quad1(), &dvector![1.0], 0.0, r, &MmsOptions::default()).unwrap();
            assert!((u[0] - 1.0 / (1.0 + r)).abs() < 1e-14);
            assert!((phi - 0.5 / (1.0 + r)).abs() < 1e-14);
        }
        let (_, phi) = de_giorgi_interpolant(&quad1(), &dvector![1.0], 0.0, 1e-8, &MmsOptions::default()).unwrap();
        assert!((phi - 0.5).abs() < 1e-8);
        let (u, phi) = de_giorgi_interpolant(&quad1(), &dvector![0.0], 0.0, 2.0, &MmsOptions::default()).unwrap();
        assert_eq!((u[0], phi), (0.0, 0.0));
    }

    #[test]
    fn value_function_quadratic() {
        let radii = [0.01, 0.1, 0.5, 1.0, 2.0];
        let p = value_function_probe(&quad1(), &dvector![1.0], 0.0, &radii, &MmsOptions::default()).unwrap();
        for (i, r) in radii.iter().enumerate() {
            assert!((p.d_plus[i] - r / (1.0 + r)).abs() < 1e-12);
            assert!((p.d_minus[i] - r / (1.0 + r)).abs() < 1e-12);
        }
        assert!(p.phi_nonincreasing && p.intertwined);
        let p = value_function_probe(&quad1(), &dvector![0.0], 0.0, &radii, &MmsOptions::default()).unwrap();
        assert!(p.d_plus.iter().all(|d| *d < 1e-12));
    }

    #[test]
    fn bad_partitions_are_rejected() {
        assert!(run_mms(&quad1(), &dvector![1.0], 0.0, 1.0, 0, &MmsOptions::default()).is_err());
        assert!(run_mms_partition(&quad1(), &dvector![1.0], &[0.0, 0.0], &MmsOptions::default()).is_err());
    }
}
