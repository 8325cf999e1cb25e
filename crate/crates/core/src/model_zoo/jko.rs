//! Linear Fokker–Planck equation as a Wasserstein gradient flow of the
//! relative entropy, discretized by piecewise-constant densities.

use crate::energies::{Differential, Distance, Energy};
use crate::error::{check_dim, GflError, Result};
use crate::ext::{ExtReal, Finite, PosInf};
use crate::linalg::SymMatrix;
use crate::mms_solver::{GradientSystem, StepOutcome, StepSolver};
use crate::potentials::ScalarPotential;
use crate::StateVec;
use std::sync::Arc;

/// Tolerance on `Σ ρᵢ h = 1` accepted by the Wasserstein evaluator.
pub const MASS_TOL: f64 = 1e-12;

/// Uniform cells on `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl DensityGrid {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if n < 3 || !(x_max > x_min) {
            return Err(GflError::InvalidParameter("density grid needs n ≥ 3 and x_max > x_min".into()));
        }
        Ok(DensityGrid { x_min, x_max, n })
    }
    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / self.n as f64
    }
    pub fn centers(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x_min + (i as f64 + 0.5) * self.h()).collect()
    }
    pub fn mass(&self, rho: &StateVec) -> f64 {
        rho.sum() * self.h()
    }

    /// Normalized density proportional to `f` at the cell centers.
    pub fn normalized(&self, f: impl Fn(f64) -> f64) -> StateVec {
        let v = StateVec::from_iterator(self.n, self.centers().into_iter().map(f));
        let m = self.mass(&v);
        v / m
    }

    fn validate(&self, rho: &StateVec) -> Result<()> {
        check_dim(self.n, rho.len())?;
        if rho.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(GflError::NegativeDensity);
        }
        let m = self.mass(rho);
        if (m - 1.0).abs() > MASS_TOL {
            return Err(GflError::MassNotNormalized(m));
        }
        Ok(())
    }

    /// Cumulative masses `M₀ = 0, …, Mₙ`, with `Mₙ` pinned to 1.
    fn cumulative(&self, rho: &StateVec) -> Vec<f64> {
        let h = self.h();
        let mut m = Vec::with_capacity(self.n + 1);
        let mut acc = 0.0;
        m.push(0.0);
        for r in rho.iter() {
            acc += r * h;
            m.push(acc);
        }
        m[self.n] = 1.0;
        m
    }
}

/// Piecewise-linear quantile function of a piecewise-constant density.
struct Quantile<'a> {
    grid: &'a DensityGrid,
    cum: &'a [f64],
}

impl Quantile<'_> {
    /// Value in cell `j` at mass level `s`.
    fn in_cell(&self, j: usize, s: f64) -> f64 {
        let d = self.cum[j + 1] - self.cum[j];
        let h = self.grid.h();
        let left = self.grid.x_min + j as f64 * h;
        if d <= 0.0 {
            return left;
        }
        left + h * ((s - self.cum[j]) / d).clamp(0.0, 1.0)
    }
}

/// Merged breakpoints of two cumulative mass vectors, as pieces
/// `(s₀, s₁, cell in a, cell in b)` of positive length.
fn merged_pieces(a: &[f64], b: &[f64]) -> Vec<(f64, f64, usize, usize)> {
    let n = a.len() - 1;
    let (mut i, mut j) = (0, 0);
    let mut s = 0.0;
    let mut out = Vec::with_capacity(2 * n);
    while i < n && j < n {
        let end = a[i + 1].min(b[j + 1]);
        if end > s {
            out.push((s, end, i, j));
            s = end;
        }
        if a[i + 1] <= end {
            i += 1;
        }
        if j < n && b[j + 1] <= end {
            j += 1;
        }
    }
    out
}

fn simpson(len: f64, f0: f64, fm: f64, f1: f64) -> f64 {
    len * (f0 + 4.0 * fm + f1) / 6.0
}

/// Squared 2-Wasserstein distance between two normalized densities.
pub fn w2_squared(grid: &DensityGrid, rho0: &StateVec, rho1: &StateVec) -> Result<f64> {
    grid.validate(rho0)?;
    grid.validate(rho1)?;
    Ok(w2_squared_cum(grid, &grid.cumulative(rho0), &grid.cumulative(rho1)))
}

fn w2_squared_cum(grid: &DensityGrid, c0: &[f64], c1: &[f64]) -> f64 {
    let q0 = Quantile { grid, cum: c0 };
    let q1 = Quantile { grid, cum: c1 };
    merged_pieces(c0, c1)
        .into_iter()
        .map(|(s0, s1, i, j)| {
            let sm = 0.5 * (s0 + s1);
            let d = |s: f64| q0.in_cell(i, s) - q1.in_cell(j, s);
            simpson(s1 - s0, d(s0).powi(2), d(sm).powi(2), d(s1).powi(2))
        })
        .sum()
}

/// Exact 1D Wasserstein distance; invalid densities are infinitely far.
#[derive(Debug, Clone, Copy)]
pub struct Wasserstein1D {
    pub grid: DensityGrid,
}

impl Distance for Wasserstein1D {
    fn dist(&self, u: &StateVec, w: &StateVec) -> ExtReal {
        match w2_squared(&self.grid, u, w) {
            Ok(d2) => Finite(d2.max(0.0).sqrt()),
            Err(_) => PosInf,
        }
    }
}

/// `F(ρ) = Σ h [ρ log ρ − ρ + 1 + φρ]`.
#[derive(Debug, Clone)]
pub struct FokkerPlanckEnergy {
    pub grid: DensityGrid,
    pub phi: Vec<f64>,
}

impl Energy for FokkerPlanckEnergy {
    fn name(&self) -> String {
        "fp_jko".into()
    }
    fn dim(&self) -> usize {
        self.grid.n
    }
    fn in_domain(&self, u: &StateVec) -> bool {
        u.iter().all(|r| *r >= 0.0 && r.is_finite())
    }
    fn eval(&self, _t: f64, u: &StateVec) -> ExtReal {
        if !self.in_domain(u) {
            return PosInf;
        }
        let h = self.grid.h();
        Finite(h * u.iter().zip(&self.phi).map(|(r, p)| crate::energies::lambda_b(*r) + p * r).sum::<f64>())
    }
    fn differential(&self, _t: f64, u: &StateVec) -> Result<Differential> {
        if u.iter().any(|r| !(*r > 0.0)) {
            return Err(GflError::OutsideDomain);
        }
        let h = self.grid.h();
        Ok(Differential::Smooth(StateVec::from_iterator(u.len(), u.iter().zip(&self.phi).map(|(r, p)| h * (r.ln() + p)))))
    }
    fn lambda(&self) -> Option<f64> {
        None
    }
    /// Slope with respect to W₂ on piecewise-constant densities: the dual
    /// norm of `∂F/∂M_j` in the local transport metric.
    fn slope(&self, _t: f64, u: &StateVec) -> Option<f64> {
        let n = self.grid.n;
        if u.len() != n || u.iter().any(|r| !(*r > 0.0)) {
            return None;
        }
        let h = self.grid.h();
        let f: Vec<f64> = u.iter().zip(&self.phi).map(|(r, p)| r.ln() + p).collect();
        let g = StateVec::from_iterator(n - 1, (0..n - 1).map(|j| f[j] - f[j + 1]));
        let d: Vec<f64> = u.iter().map(|r| r * h).collect();
        transport_dual_norm(h, &d, &g)
    }
}

/// Local W₂ metric in cumulative masses `M₁, …, M_{n−1}` for cell masses
/// `d`: cell `j` contributes `(h²/d_j)[1/3, 1/6; 1/6, 1/3]` to the block of
/// its two end points.
fn transport_metric(h: f64, d: &[f64]) -> SymMatrix {
    let n = d.len();
    let w: Vec<f64> = d.iter().map(|x| h * h / x).collect();
    SymMatrix::Tri { diag: (0..n - 1).map(|j| (w[j] + w[j + 1]) / 3.0).collect(), off: (0..n - 2).map(|j| w[j + 1] / 6.0).collect() }
}

/// `√(gᵀG⁻¹g)` for a covector `g` in cumulative masses.
fn transport_dual_norm(h: f64, d: &[f64], g: &StateVec) -> Option<f64> {
    let x = transport_metric(h, d).solve_spd(0.0, g)?;
    Some(g.dot(&x).max(0.0).sqrt())
}

/// Newton solver for the JKO step in cumulative-mass coordinates
/// `M₁, …, M_{n−1}`. Cell masses are kept as the primary state so that
/// small tail densities retain their relative precision.
#[derive(Debug, Clone, Copy)]
pub struct JkoSolver {
    pub grid: DensityGrid,
    pub tol: f64,
    pub max_iter: usize,
}

fn cumsum(d: &[f64]) -> Vec<f64> {
    let mut m = Vec::with_capacity(d.len() + 1);
    let mut acc = 0.0;
    m.push(0.0);
    for x in d {
        acc += x;
        m.push(acc);
    }
    *m.last_mut().unwrap() = 1.0;
    m
}

/// Newton model: gradient, full Hessian and Gauss–Newton Hessian.
struct Model {
    grad: StateVec,
    full: SymMatrix,
    gauss_newton: SymMatrix,
}

impl JkoSolver {
    fn objective(&self, f: &FokkerPlanckEnergy, prev: &[f64], d: &[f64], tau: f64) -> f64 {
        if d.iter().any(|x| !(*x > 0.0)) {
            return f64::INFINITY;
        }
        let h = self.grid.h();
        let rho = StateVec::from_iterator(d.len(), d.iter().map(|x| x / h));
        f.eval(0.0, &rho).value() + w2_squared_cum(&self.grid, prev, &cumsum(d)) / (2.0 * tau)
    }

    fn model(&self, f: &FokkerPlanckEnergy, prev: &[f64], d: &[f64], tau: f64) -> Model {
        let n = self.grid.n;
        let h = self.grid.h();
        let m = cumsum(d);
        let mut g = StateVec::zeros(n - 1);
        let mut diag = vec![0.0; n - 1];
        let mut off = vec![0.0; n - 2];
        let pot: Vec<f64> = d.iter().zip(&f.phi).map(|(x, p)| (x / h).ln() + p).collect();
        for j in 1..n {
            g[j - 1] = pot[j - 1] - pot[j];
            diag[j - 1] = 1.0 / d[j - 1] + 1.0 / d[j];
            if j + 1 < n {
                off[j - 1] = -1.0 / d[j];
            }
        }
        // Transport term: on cell j with σ = (s − M_j)/d_j,
        // ∂Q/∂M_j = −h(1−σ)/d_j, ∂Q/∂M_{j+1} = −hσ/d_j,
        // ∂²Q/∂M_j² = −2h(1−σ)/d_j², ∂²Q/∂M_{j+1}² = 2hσ/d_j²,
        // ∂²Q/∂M_j∂M_{j+1} = −h(2σ−1)/d_j².
        let (mut dfull, mut ofull) = (diag.clone(), off.clone());
        let qp = Quantile { grid: &self.grid, cum: prev };
        let qn = Quantile { grid: &self.grid, cum: &m };
        let c = 1.0 / tau;
        for (s0, s1, i, j) in merged_pieces(prev, &m) {
            let dj = d[j];
            let sm = 0.5 * (s0 + s1);
            let diff = |s: f64| qn.in_cell(j, s) - qp.in_cell(i, s);
            let sig = |s: f64| ((s - m[j]) / dj).clamp(0.0, 1.0);
            let len = s1 - s0;
            let int = |w: &dyn Fn(f64) -> f64| simpson(len, diff(s0) * w(sig(s0)), diff(sm) * w(sig(sm)), diff(s1) * w(sig(s1)));
            let left = j >= 1;
            let right = j + 1 <= n - 1;
            if left {
                g[j - 1] += c * int(&|sg| -h * (1.0 - sg) / dj);
                dfull[j - 1] += c * int(&|sg| -2.0 * h * (1.0 - sg) / (dj * dj));
            }
            if right {
                g[j] += c * int(&|sg| -h * sg / dj);
                dfull[j] += c * int(&|sg| 2.0 * h * sg / (dj * dj));
            }
            if left && right {
                ofull[j - 1] += c * int(&|sg| -h * (2.0 * sg - 1.0) / (dj * dj));
            }
        }
        // ∂Q/∂M_j jumps across the moving breakpoint s = M_j.
        let mut k = 0;
        for j in 1..n {
            while k + 1 < n && prev[k + 1] < m[j] {
                k += 1;
            }
            let gap = self.grid.x_min + j as f64 * h - qp.in_cell(k, m[j]);
            dfull[j - 1] += c * gap * (h / d[j] - h / d[j - 1]);
        }
        let mut dgn = diag;
        let mut ogn = off;
        for j in 0..n {
            // ∫ over cell j of h²(1−σ)², h²σ², h²σ(1−σ) in s: d/3, d/3, d/6 times h²/d².
            let a = c * h * h / (3.0 * d[j]);
            let b = c * h * h / (6.0 * d[j]);
            let left = j >= 1;
            let right = j + 1 <= n - 1;
            for (dv, ov) in [(&mut dgn, &mut ogn), (&mut dfull, &mut ofull)] {
                if left {
                    dv[j - 1] += a;
                }
                if right {
                    dv[j] += a;
                }
                if left && right {
                    ov[j - 1] += b;
                }
            }
        }
        Model { grad: g, full: SymMatrix::Tri { diag: dfull, off: ofull }, gauss_newton: SymMatrix::Tri { diag: dgn, off: ogn } }
    }

    /// Minimizes `F(ρ) + W₂(ρ_prev, ρ)²/(2τ)` over positive normalized densities.
    /// Stops when `max |∂Φ/∂M_j| ≤ tol` or the Newton decrement reaches the
    /// roundoff level `max(tol², 64ε(1 + |Φ|))` of the objective. The reported
    /// residual is `∇Φ` in the dual transport metric at the returned state.
    pub fn step(&self, f: &FokkerPlanckEnergy, rho_prev: &StateVec, tau: f64) -> Result<StepOutcome> {
        self.grid.validate(rho_prev)?;
        let h = self.grid.h();
        let n = self.grid.n;
        let prev = self.grid.cumulative(rho_prev);
        let mut d: Vec<f64> = rho_prev.iter().map(|r| r * h).collect();
        if d.iter().any(|x| !(*x > 0.0)) {
            // Mix in a uniform density so every cell starts with mass.
            d = d.iter().map(|x| 0.99 * x + 0.01 / n as f64).collect();
        }
        let mut val = self.objective(f, &prev, &d, tau);
        let mut residual = f64::INFINITY;
        let done = |d: &[f64], g: &StateVec, it: usize| StepOutcome {
            u: StateVec::from_iterator(n, d.iter().map(|x| x / h)),
            iterations: it,
            residual: transport_dual_norm(h, d, g).unwrap_or(g.amax()),
        };
        for it in 0..self.max_iter {
            let model = self.model(f, &prev, &d, tau);
            let g = &model.grad;
            residual = g.amax();
            if residual <= self.tol {
                return Ok(done(&d, g, it));
            }
            let mut accepted = false;
            for hm in [&model.full, &model.gauss_newton] {
                let Some(p) = hm.solve_spd(0.0, &(-g)) else { continue };
                let slope = g.dot(&p);
                if !(slope < 0.0) {
                    continue;
                }
                // Newton decrement gᵀH⁻¹g: tail cells with tiny mass can keep a
                // large gradient entry while their effect on Φ is below roundoff.
                if -slope <= (self.tol * self.tol).max(64.0 * f64::EPSILON * (1.0 + val.abs())) {
                    return Ok(done(&d, g, it));
                }
                // Cell-mass increments Δd_j = ΔM_{j+1} − ΔM_j.
                let dm = |j: usize| if j == 0 || j == n { 0.0 } else { p[j - 1] };
                let dd: Vec<f64> = (0..n).map(|j| dm(j + 1) - dm(j)).collect();
                let mut alpha: f64 = 1.0;
                for (x, dx) in d.iter().zip(&dd) {
                    if *dx < 0.0 {
                        alpha = alpha.min(0.95 * x / -dx);
                    }
                }
                while alpha > 1e-16 {
                    let trial: Vec<f64> = d.iter().zip(&dd).map(|(x, dx)| x + alpha * dx).collect();
                    let tv = self.objective(f, &prev, &trial, tau);
                    if tv <= val + 1e-4 * alpha * slope {
                        d = trial;
                        val = tv;
                        accepted = true;
                        break;
                    }
                    alpha *= 0.5;
                }
                if accepted {
                    break;
                }
            }
            if !accepted {
                break;
            }
        }
        // Roundoff floor: no descent step is left but the residual is small.
        if residual <= 1e3 * self.tol {
            return Ok(done(&d, &self.model(f, &prev, &d, tau).grad, self.max_iter));
        }
        Err(GflError::InnerSolveFailed(format!("JKO Newton did not converge, residual {residual:e}")))
    }
}

struct JkoStep {
    solver: JkoSolver,
    energy: FokkerPlanckEnergy,
}

impl StepSolver for JkoStep {
    fn solve(&self, _sys: &GradientSystem, u_prev: &StateVec, _t: f64, tau: f64) -> Result<StepOutcome> {
        self.solver.step(&self.energy, u_prev, tau)
    }
}

/// Metric gradient system `(P(ℝ), F, W₂)` with the quadratic ψ.
pub fn fokker_planck_jko_system(grid: DensityGrid, phi: &dyn Fn(f64) -> f64) -> Result<GradientSystem> {
    let energy = FokkerPlanckEnergy { grid, phi: grid.centers().into_iter().map(phi).collect() };
    let solver = JkoSolver { grid, tol: 1e-11, max_iter: 200 };
    let sys = GradientSystem::metric("fp_jko", Arc::new(energy.clone()), Arc::new(Wasserstein1D { grid }), ScalarPotential::quadratic())?;
    Ok(sys.with_step_solver(Arc::new(JkoStep { solver, energy })))
}

/// Discrete Gibbs state `ρ ∝ e^{−φ}`.
pub fn gibbs_state(grid: &DensityGrid, phi: &dyn Fn(f64) -> f64) -> StateVec {
    grid.normalized(|x| (-phi(x)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> DensityGrid {
        DensityGrid::new(-4.0, 4.0, 200).unwrap()
    }

    #[test]
    fn translation_gives_shift() {
        let g = grid();
        let h = g.h();
        let bump = |c: f64| g.normalized(|x| if (x - c).abs() < 1.0 { 1.0 } else { 0.0 });
        let shift = 10.0 * h;
        let d = w2_squared(&g, &bump(-0.5), &bump(-0.5 + shift)).unwrap().sqrt();
        assert!((d - shift).abs() < 1e-12, "{d} vs {shift}");
        assert_eq!(w2_squared(&g, &bump(0.0), &bump(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn validation_errors() {
        let g = grid();
        let r = g.normalized(|_| 1.0);
        assert!(matches!(w2_squared(&g, &(&r * 2.0), &r), Err(GflError::MassNotNormalized(_))));
        let mut neg = r.clone();
        neg[0] = -1.0;
        assert!(matches!(w2_squared(&g, &neg, &r), Err(GflError::NegativeDensity)));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = DensityGrid::new(-2.0, 2.0, 12).unwrap();
        let f = FokkerPlanckEnergy { grid: g, phi: g.centers().iter().map(|x| 0.5 * x * x).collect() };
        let s = JkoSolver { grid: g, tol: 1e-10, max_iter: 50 };
        let prev = g.cumulative(&g.normalized(|x| (-(x - 0.7) * (x - 0.7)).exp() + 0.05));
        let d: Vec<f64> = g.normalized(|x| (-(x + 0.2) * (x + 0.2)).exp() + 0.1).iter().map(|r| r * g.h()).collect();
        let tau = 0.3;
        // Moving M_j by e shifts mass e from cell j to cell j−1.
        let shifted = |j: usize, e: f64| {
            let mut x = d.clone();
            x[j - 1] += e;
            x[j] -= e;
            x
        };
        let model = s.model(&f, &prev, &d, tau);
        let full = model.full.to_dense();
        let e = 1e-6;
        for j in 1..g.n {
            let fd = (s.objective(&f, &prev, &shifted(j, e), tau) - s.objective(&f, &prev, &shifted(j, -e), tau)) / (2.0 * e);
            assert!((fd - model.grad[j - 1]).abs() < 1e-6 * (1.0 + fd.abs()), "j={j}: {fd} vs {}", model.grad[j - 1]);
            let gp = s.model(&f, &prev, &shifted(j, e), tau).grad;
            let gm = s.model(&f, &prev, &shifted(j, -e), tau).grad;
            let col = (gp - gm) / (2.0 * e);
            for k in 0..g.n - 1 {
                assert!((col[k] - full[(k, j - 1)]).abs() < 1e-4 * (1.0 + col[k].abs()), "H[{k},{}]: {} vs {}", j - 1, col[k], full[(k, j - 1)]);
            }
        }
    }

    #[test]
    fn slope_matches_difference_quotients() {
        let g = grid();
        let f = FokkerPlanckEnergy { grid: g, phi: g.centers().iter().map(|x| 0.5 * x * x).collect() };
        let rho = g.normalized(|x| (-(x - 1.0) * (x - 1.0)).exp() + 0.05);
        let slope = f.slope(0.0, &rho).unwrap();
        let w = Wasserstein1D { grid: g };
        // Steepest descent in cumulative masses: δM = −G⁻¹g, realized on ρ.
        let h = g.h();
        let fr: Vec<f64> = rho.iter().zip(&f.phi).map(|(r, p)| r.ln() + p).collect();
        let gv = StateVec::from_iterator(g.n - 1, (0..g.n - 1).map(|j| fr[j] - fr[j + 1]));
        let d: Vec<f64> = rho.iter().map(|r| r * h).collect();
        let dm = -transport_metric(h, &d).solve_spd(0.0, &gv).unwrap();
        for s in [1e-5, 1e-6] {
            let mut m = vec![0.0; g.n + 1];
            let c = g.cumulative(&rho);
            for j in 1..g.n {
                m[j] = c[j] + s * dm[j - 1];
            }
            m[g.n] = 1.0;
            let next = StateVec::from_iterator(g.n, (0..g.n).map(|j| (m[j + 1] - m[j]) / h));
            let q = (f.eval(0.0, &rho).value() - f.eval(0.0, &next).value()) / w.dist(&rho, &next).value();
            assert!((q - slope).abs() <= 1e-3 * slope, "s={s}: {q} vs {slope}");
        }
    }

    #[test]
    fn gibbs_state_is_fixed() {
        let g = grid();
        let phi = |x: f64| 0.5 * x * x;
        let f = FokkerPlanckEnergy { grid: g, phi: g.centers().iter().map(|x| phi(*x)).collect() };
        let s = JkoSolver { grid: g, tol: 1e-11, max_iter: 200 };
        let rho = gibbs_state(&g, &phi);
        let out = s.step(&f, &rho, 0.01).unwrap();
        assert!((out.u - &rho).amax() < 1e-6);
    }

    #[test]
    fn steps_decrease_entropy() {
        let g = grid();
        let phi = |x: f64| 0.5 * x * x;
        let f = FokkerPlanckEnergy { grid: g, phi: g.centers().iter().map(|x| phi(*x)).collect() };
        let s = JkoSolver { grid: g, tol: 1e-11, max_iter: 200 };
        let mut rho = g.normalized(|x| (-(x - 1.5) * (x - 1.5) / 0.5).exp());
        let mut e = f.eval(0.0, &rho).value();
        for _ in 0..20 {
            rho = s.step(&f, &rho, 0.01).unwrap().u;
            assert!((g.mass(&rho) - 1.0).abs() < MASS_TOL);
            let e2 = f.eval(0.0, &rho).value();
            assert!(e2 < e);
            e = e2;
        }
    }
}
