//! Discrete Allen–Cahn energies on a 1D grid, periodic homogenization and
//! the arithmetic/harmonic mean limits of quadratic functionals.

use crate::energies::{Differential, Energy};
use crate::error::{check_dim, GflError, Result};
use crate::ext::{ExtReal, Finite};
use crate::linalg::SymMatrix;
use crate::mms_solver::GradientSystem;
use crate::potentials::{DissipationPotential, ScalarPotential};
use crate::quad;
use crate::StateVec;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Boundary {
    /// Homogeneous Dirichlet data at both ends, nodes at `ih`, `h = 1/(n+1)`.
    DirichletZero,
    /// Cell-centered nodes `(i + ½)h`, `h = 1/n`, zero flux at both ends.
    Neumann,
}

/// Uniform grid on the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid1D {
    pub n: usize,
    pub h: f64,
    pub bc: Boundary,
}

impl Grid1D {
    pub fn new(n: usize, bc: Boundary) -> Result<Self> {
        if n < 3 {
            return Err(GflError::InvalidParameter(format!("grid needs at least 3 nodes, got {n}")));
        }
        let h = match bc {
            Boundary::DirichletZero => 1.0 / (n as f64 + 1.0),
            Boundary::Neumann => 1.0 / n as f64,
        };
        Ok(Grid1D { n, h, bc })
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| match self.bc {
                Boundary::DirichletZero => (i as f64 + 1.0) * self.h,
                Boundary::Neumann => (i as f64 + 0.5) * self.h,
            })
            .collect()
    }

    /// Positions of the faces carrying a difference quotient.
    pub fn faces(&self) -> Vec<f64> {
        match self.bc {
            Boundary::DirichletZero => (0..=self.n).map(|i| (i as f64 + 0.5) * self.h).collect(),
            Boundary::Neumann => (1..self.n).map(|i| i as f64 * self.h).collect(),
        }
    }

    /// Discrete L² norm `(Σ h uᵢ²)^{1/2}`.
    pub fn l2(&self, u: &StateVec) -> f64 {
        (self.h * u.norm_squared()).sqrt()
    }
}

/// `F(u) = Σ_faces h (a/2)(Δu/h)² + Σ_nodes h [(b/2)u² + (B/4)u⁴]`.
#[derive(Debug, Clone)]
pub struct AllenCahnEnergy {
    pub grid: Grid1D,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub big_b: Vec<f64>,
    lambda: f64,
}

impl AllenCahnEnergy {
    /// Face differences `(u_{i+1} − u_i)/h` with boundary values inserted.
    fn gradients(&self, u: &StateVec) -> Vec<f64> {
        let h = self.grid.h;
        let n = self.grid.n;
        match self.grid.bc {
            Boundary::DirichletZero => (0..=n)
                .map(|f| {
                    let left = if f == 0 { 0.0 } else { u[f - 1] };
                    let right = if f == n { 0.0 } else { u[f] };
                    (right - left) / h
                })
                .collect(),
            Boundary::Neumann => (1..n).map(|f| (u[f] - u[f - 1]) / h).collect(),
        }
    }

    /// Left and right node of face `f` (None for a boundary value).
    fn face_nodes(&self, f: usize) -> (Option<usize>, Option<usize>) {
        match self.grid.bc {
            Boundary::DirichletZero => ((f > 0).then(|| f - 1), (f < self.grid.n).then_some(f)),
            Boundary::Neumann => (Some(f), Some(f + 1)),
        }
    }
}

impl Energy for AllenCahnEnergy {
    fn name(&self) -> String {
        "allen_cahn".into()
    }
    fn dim(&self) -> usize {
        self.grid.n
    }
    fn eval(&self, _t: f64, u: &StateVec) -> ExtReal {
        let h = self.grid.h;
        let grad: f64 = self.gradients(u).iter().zip(&self.a).map(|(g, a)| 0.5 * a * g * g).sum();
        let pot: f64 = u.iter().zip(self.b.iter().zip(&self.big_b)).map(|(x, (b, bb))| 0.5 * b * x * x + 0.25 * bb * x.powi(4)).sum();
        Finite(h * (grad + pot))
    }
    fn differential(&self, _t: f64, u: &StateVec) -> Result<Differential> {
        check_dim(self.grid.n, u.len())?;
        let h = self.grid.h;
        let mut g = StateVec::from_iterator(u.len(), u.iter().zip(self.b.iter().zip(&self.big_b)).map(|(x, (b, bb))| h * (b * x + bb * x.powi(3))));
        for (f, (d, a)) in self.gradients(u).iter().zip(&self.a).enumerate() {
            let (l, r) = self.face_nodes(f);
            if let Some(l) = l {
                g[l] -= a * d;
            }
            if let Some(r) = r {
                g[r] += a * d;
            }
        }
        Ok(Differential::Smooth(g))
    }
    fn lambda(&self) -> Option<f64> {
        Some(self.lambda)
    }
    fn hessian(&self, _t: f64, u: &StateVec) -> Option<SymMatrix> {
        let h = self.grid.h;
        let n = self.grid.n;
        let mut diag: Vec<f64> = u.iter().zip(self.b.iter().zip(&self.big_b)).map(|(x, (b, bb))| h * (b + 3.0 * bb * x * x)).collect();
        let mut off = vec![0.0; n - 1];
        for (f, a) in self.a.iter().enumerate() {
            let (l, r) = self.face_nodes(f);
            let k = a / h;
            if let Some(l) = l {
                diag[l] += k;
            }
            if let Some(r) = r {
                diag[r] += k;
            }
            if let (Some(l), Some(_)) = (l, r) {
                off[l] -= k;
            }
        }
        Some(SymMatrix::Tri { diag, off })
    }
}

/// Coefficient profiles: face stiffness `a`, node values `b`, `B`, `c`.
#[derive(Debug, Clone)]
pub struct AllenCahnCoefficients {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub big_b: Vec<f64>,
    pub c: Vec<f64>,
}

impl AllenCahnCoefficients {
    /// `a = α`, `b = −β`, `B = β`, `c = m`: the double well `(β/4)(u² − 1)²` up to a constant.
    pub fn plain(grid: &Grid1D, alpha: f64, beta: f64, m: f64) -> Self {
        AllenCahnCoefficients { a: vec![alpha; grid.faces().len()], b: vec![-beta; grid.n], big_b: vec![beta; grid.n], c: vec![m; grid.n] }
    }

    /// Samples 1-periodic profiles at `x/ε`.
    pub fn oscillating(grid: &Grid1D, eps: f64, a: &dyn Fn(f64) -> f64, b: &dyn Fn(f64) -> f64, big_b: &dyn Fn(f64) -> f64, c: &dyn Fn(f64) -> f64) -> Self {
        let nodes = grid.nodes();
        AllenCahnCoefficients {
            a: grid.faces().iter().map(|x| a(x / eps)).collect(),
            b: nodes.iter().map(|x| b(x / eps)).collect(),
            big_b: nodes.iter().map(|x| big_b(x / eps)).collect(),
            c: nodes.iter().map(|x| c(x / eps)).collect(),
        }
    }
}

/// Gradient system with quadratic dissipation `½ Σ h cᵢ vᵢ²`; `λ = min b/c`.
pub fn allen_cahn_system(grid: Grid1D, coeffs: AllenCahnCoefficients) -> Result<GradientSystem> {
    let faces = grid.faces().len();
    if coeffs.a.len() != faces {
        return Err(GflError::DimensionMismatch { expected: faces, got: coeffs.a.len() });
    }
    for v in [&coeffs.b, &coeffs.big_b, &coeffs.c] {
        check_dim(grid.n, v.len())?;
    }
    if coeffs.a.iter().chain(&coeffs.c).any(|x| !(*x > 0.0)) || coeffs.big_b.iter().any(|x| *x < 0.0) {
        return Err(GflError::InvalidParameter("Allen–Cahn coefficients a, c must be positive and B nonnegative".into()));
    }
    let lambda = coeffs.b.iter().zip(&coeffs.c).map(|(b, c)| b / c).fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = coeffs.c.iter().map(|c| grid.h * c).collect();
    let energy = AllenCahnEnergy { grid, a: coeffs.a, b: coeffs.b, big_b: coeffs.big_b, lambda };
    let r = DissipationPotential::NormComposed { psi: ScalarPotential::quadratic(), weights: weights.clone() };
    Ok(GradientSystem::banach("allen_cahn", Arc::new(energy), r).with_metric_weight(weights))
}

/// Arithmetic mean of a 1-periodic function.
pub fn arithmetic_mean(f: &dyn Fn(f64) -> f64) -> f64 {
    quad::integrate(&mut |y| f(y), 0.0, 1.0, 1e-14).0
}

/// Harmonic mean `(∫₀¹ 1/f)⁻¹` of a positive 1-periodic function.
pub fn harmonic_mean(f: &dyn Fn(f64) -> f64) -> f64 {
    1.0 / quad::integrate(&mut |y| 1.0 / f(y), 0.0, 1.0, 1e-14).0
}

/// Stiffness profile `2 + sin 2πy` of the homogenization example.
pub fn sine_profile(y: f64) -> f64 {
    2.0 + (2.0 * PI * y).sin()
}

/// Oscillating and homogenized Allen–Cahn systems with `a = 2 + sin 2πy`,
/// `b = −1`, `B = c = 1`, Neumann data.
pub fn ac_homog_pair(n: usize, eps: f64) -> Result<(GradientSystem, GradientSystem)> {
    if !(eps > 0.0) {
        return Err(GflError::InvalidParameter("epsilon must be positive".into()));
    }
    let grid = Grid1D::new(n, Boundary::Neumann)?;
    let osc = AllenCahnCoefficients::oscillating(&grid, eps, &sine_profile, &|_| -1.0, &|_| 1.0, &|_| 1.0);
    let a_harm = harmonic_mean(&sine_profile);
    let hom = AllenCahnCoefficients { a: vec![a_harm; grid.faces().len()], b: vec![-1.0; n], big_b: vec![1.0; n], c: vec![1.0; n] };
    let mut s_eps = allen_cahn_system(grid, osc)?;
    s_eps.name = "ac_homog".into();
    let mut s_hom = allen_cahn_system(grid, hom)?;
    s_hom.name = "ac_homog_limit".into();
    Ok((s_eps, s_hom))
}

/// Initial state `0.8 cos πx` on the cell-centered grid.
pub fn ac_homog_initial(n: usize) -> Result<StateVec> {
    let grid = Grid1D::new(n, Boundary::Neumann)?;
    Ok(StateVec::from_iterator(n, grid.nodes().iter().map(|x| 0.8 * (PI * x).cos())))
}

/// Energies along the recovery and constant sequences for a quadratic
/// functional `½ ∫ A(x/ε) w²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanLimits {
    /// `F_ε(A_ε⁻¹ A_harm ŵ)`.
    pub f_eps_recovery: f64,
    pub f_harm: f64,
    /// `F_ε(ŵ)`.
    pub f_eps_constant: f64,
    pub f_arith: f64,
    pub gap: f64,
}

/// Evaluates both limits of `½ ∫ A(x/ε) w²` on the cell-centered grid carrying `ŵ`.
pub fn mean_limits_check(a: &dyn Fn(f64) -> f64, eps: f64, w_hat: &StateVec) -> Result<MeanLimits> {
    let grid = Grid1D::new(w_hat.len(), Boundary::Neumann)?;
    if !(eps > 0.0) {
        return Err(GflError::InvalidParameter("epsilon must be positive".into()));
    }
    let a_harm = harmonic_mean(a);
    let a_arith = arithmetic_mean(a);
    let h = grid.h;
    let (mut rec, mut harm, mut cons, mut arith) = (0.0, 0.0, 0.0, 0.0);
    for (x, w) in grid.nodes().iter().zip(w_hat.iter()) {
        let ax = a(x / eps);
        if !(ax > 0.0) {
            return Err(GflError::InvalidParameter("coefficient must be positive".into()));
        }
        let we = a_harm / ax * w;
        rec += 0.5 * h * ax * we * we;
        harm += 0.5 * h * a_harm * w * w;
        cons += 0.5 * h * ax * w * w;
        arith += 0.5 * h * a_arith * w * w;
    }
    Ok(MeanLimits { f_eps_recovery: rec, f_harm: harm, f_eps_constant: cons, f_arith: arith, gap: (rec - harm).abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energies::fd_consistency;
    use nalgebra::DVector;

    #[test]
    fn means_of_sine_profiles() {
        assert!((harmonic_mean(&sine_profile) - 3f64.sqrt()).abs() < 1e-10);
        assert!((arithmetic_mean(&|y| 2.0 + (2.0 * PI * y).cos()) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn gradient_and_hessian_consistent() {
        for bc in [Boundary::DirichletZero, Boundary::Neumann] {
            let grid = Grid1D::new(9, bc).unwrap();
            let co = AllenCahnCoefficients::oscillating(&grid, 0.3, &sine_profile, &|y| -1.0 + 0.2 * y.sin(), &|_| 1.5, &|_| 1.0);
            let sys = allen_cahn_system(grid, co).unwrap();
            let u = DVector::from_fn(9, |i, _| (i as f64 * 0.7).sin());
            assert!(fd_consistency(sys.energy.as_ref(), 0.0, &u, 1e-6).unwrap() < 1e-7);
            let hm = sys.energy.hessian(0.0, &u).unwrap().to_dense();
            let g = |v: &StateVec| sys.energy.differential(0.0, v).unwrap().smooth().unwrap();
            for j in 0..9 {
                let mut e = DVector::zeros(9);
                e[j] = 1e-6;
                let col = (g(&(&u + &e)) - g(&(&u - &e))) / 2e-6;
                assert!((col - hm.column(j)).amax() < 1e-5);
            }
        }
    }

    #[test]
    fn plain_lambda_and_double_well() {
        let grid = Grid1D::new(5, Boundary::DirichletZero).unwrap();
        let sys = allen_cahn_system(grid, AllenCahnCoefficients::plain(&grid, 1.0, 2.0, 4.0)).unwrap();
        assert_eq!(sys.lambda(), Some(-0.5));
        let f = &sys.energy;
        let one = DVector::from_element(5, 1.0);
        // Interior nodes all at the well bottom: only the boundary faces contribute gradient energy.
        let e = f.eval(0.0, &one).value();
        let expect = grid.h * (2.0 * 0.5 / (grid.h * grid.h) + 5.0 * (-1.0 + 0.5));
        assert!((e - expect).abs() < 1e-12);
    }

    #[test]
    fn mean_limit_constant_coefficient() {
        let w = DVector::from_fn(64, |i, _| 1.0 + i as f64 / 64.0);
        let m = mean_limits_check(&|_| 3.0, 0.1, &w).unwrap();
        assert!(m.gap < 1e-13);
        assert!((m.f_eps_constant - m.f_arith).abs() < 1e-13);
    }

    #[test]
    fn mean_limit_recovery() {
        let ones = DVector::from_element(2048, 1.0);
        for eps in [1.0 / 16.0, 1.0 / 64.0] {
            let m = mean_limits_check(&sine_profile, eps, &ones).unwrap();
            assert!(m.gap < 1e-9);
            assert!((m.f_eps_constant - 1.0).abs() < 1e-9);
        }
        let ramp = DVector::from_fn(2048, |i, _| 1.0 + (i as f64 + 0.5) / 2048.0);
        let g16 = mean_limits_check(&sine_profile, 1.0 / 16.0, &ramp).unwrap().gap;
        let g64 = mean_limits_check(&sine_profile, 1.0 / 64.0, &ramp).unwrap().gap;
        assert!(g64 * 2.0 <= g16, "{g16} {g64}");
    }
}
