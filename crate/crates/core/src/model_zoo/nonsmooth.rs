//! `F(u) = max{|u₁|, |u₂|}` on ℝ² with the metric `v₁²/a + v₂²/b`.

use crate::energies::{Differential, Energy};
use crate::error::{GflError, Result};
use crate::ext::{ExtReal, Finite};
use crate::mms_solver::{GradientSystem, StepOutcome, StepSolver};
use crate::potentials::{DissipationPotential, ScalarPotential};
use crate::StateVec;
use nalgebra::dvector;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxNormEnergy {
    pub a: f64,
    pub b: f64,
}

/// Which piece of the subdifferential applies at `u`.
enum Branch {
    First(f64),
    Second(f64),
    Diagonal(f64, f64),
    Origin,
}

impl MaxNormEnergy {
    fn branch(&self, u: &StateVec) -> Branch {
        let (x, y) = (u[0], u[1]);
        if x == 0.0 && y == 0.0 {
            Branch::Origin
        } else if x.abs() > y.abs() {
            Branch::First(x.signum())
        } else if y.abs() > x.abs() {
            Branch::Second(y.signum())
        } else {
            Branch::Diagonal(x.signum(), y.signum())
        }
    }

    #[cfg(test)]
    fn dual_norm(&self, xi: &StateVec) -> f64 {
        (self.a * xi[0] * xi[0] + self.b * xi[1] * xi[1]).sqrt()
    }
}

/// Euclidean projection onto the segment `[p, q]`.
fn project_segment(x: &StateVec, p: &StateVec, q: &StateVec) -> StateVec {
    let d = q - p;
    let th = ((x - p).dot(&d) / d.dot(&d)).clamp(0.0, 1.0);
    p + d * th
}

/// Euclidean distance from `x` to the unit ℓ¹ ball in ℝ².
fn dist_l1_ball(x: &StateVec) -> f64 {
    if x[0].abs() + x[1].abs() <= 1.0 {
        return 0.0;
    }
    let s = dvector![x[0].signum().max(0.0) * 2.0 - 1.0, x[1].signum().max(0.0) * 2.0 - 1.0];
    let p = dvector![s[0], 0.0];
    let q = dvector![0.0, s[1]];
    (x - project_segment(x, &p, &q)).norm()
}

impl Energy for MaxNormEnergy {
    fn name(&self) -> String {
        "nonsmooth_r2".into()
    }
    fn dim(&self) -> usize {
        2
    }
    fn eval(&self, _t: f64, u: &StateVec) -> ExtReal {
        Finite(u[0].abs().max(u[1].abs()))
    }
    fn differential(&self, _t: f64, u: &StateVec) -> Result<Differential> {
        Ok(match self.branch(u) {
            Branch::First(s) => Differential::Smooth(dvector![s, 0.0]),
            Branch::Second(s) => Differential::Smooth(dvector![0.0, s]),
            _ => Differential::NonSmooth,
        })
    }
    fn lambda(&self) -> Option<f64> {
        Some(0.0)
    }
    fn slope(&self, _t: f64, u: &StateVec) -> Option<f64> {
        Some(match self.branch(u) {
            Branch::First(_) => self.a.sqrt(),
            Branch::Second(_) => self.b.sqrt(),
            Branch::Diagonal(..) => (self.a * self.b / (self.a + self.b)).sqrt(),
            Branch::Origin => 0.0,
        })
    }
    /// Minimal-norm element of ∂F, i.e. θ = b/(a+b) on the diagonal.
    fn selector(&self, _t: f64, u: &StateVec) -> Option<StateVec> {
        Some(match self.branch(u) {
            Branch::First(s) => dvector![s, 0.0],
            Branch::Second(s) => dvector![0.0, s],
            Branch::Diagonal(s1, s2) => {
                let th = self.b / (self.a + self.b);
                dvector![th * s1, (1.0 - th) * s2]
            }
            Branch::Origin => dvector![0.0, 0.0],
        })
    }
    fn subdifferential_distance(&self, _t: f64, u: &StateVec, xi: &StateVec) -> Option<f64> {
        Some(match self.branch(u) {
            Branch::First(s) => (xi - dvector![s, 0.0]).norm(),
            Branch::Second(s) => (xi - dvector![0.0, s]).norm(),
            Branch::Diagonal(s1, s2) => (xi - project_segment(xi, &dvector![s1, 0.0], &dvector![0.0, s2])).norm(),
            Branch::Origin => dist_l1_ball(xi),
        })
    }
}

/// Exact proximal step by enumeration of the smooth pieces, the diagonals
/// and the origin.
pub struct MaxNormProx {
    pub a: f64,
    pub b: f64,
}

impl MaxNormProx {
    pub fn prox(&self, u: &StateVec, tau: f64) -> StateVec {
        let (a, b) = (self.a, self.b);
        let obj = |w: &StateVec| ((w[0] - u[0]).powi(2) / a + (w[1] - u[1]).powi(2) / b) / (2.0 * tau) + w[0].abs().max(w[1].abs());
        let mut cands = vec![dvector![0.0, 0.0]];
        for s in [1.0, -1.0] {
            let w = dvector![u[0] - tau * a * s, u[1]];
            if w[0].abs() > w[1].abs() && w[0].signum() == s {
                cands.push(w);
            }
            let w = dvector![u[0], u[1] - tau * b * s];
            if w[1].abs() > w[0].abs() && w[1].signum() == s {
                cands.push(w);
            }
        }
        for s1 in [1.0, -1.0] {
            for s2 in [1.0, -1.0] {
                let z = (s1 * u[0] / a + s2 * u[1] / b - tau) / (1.0 / a + 1.0 / b);
                if z > 0.0 {
                    cands.push(dvector![s1 * z, s2 * z]);
                }
            }
        }
        cands.into_iter().map(|w| (obj(&w), w)).min_by(|x, y| x.0.partial_cmp(&y.0).unwrap()).unwrap().1
    }
}

impl StepSolver for MaxNormProx {
    fn solve(&self, _sys: &GradientSystem, u_prev: &StateVec, _t: f64, tau: f64) -> Result<StepOutcome> {
        Ok(StepOutcome { u: self.prox(u_prev, tau), iterations: 1, residual: 0.0 })
    }
}

/// The gradient system with its exact proximal step.
pub fn nonsmooth_r2_system(a: f64, b: f64) -> Result<GradientSystem> {
    if !(a > 0.0 && b > 0.0) {
        return Err(GflError::InvalidParameter("a and b must be positive".into()));
    }
    let r = DissipationPotential::NormComposed { psi: ScalarPotential::quadratic(), weights: vec![1.0 / a, 1.0 / b] };
    Ok(GradientSystem::banach("nonsmooth_r2", Arc::new(MaxNormEnergy { a, b }), r).with_step_solver(Arc::new(MaxNormProx { a, b })))
}

/// Kink times `(t₁, t₂)` of the exact solution from `u0`.
pub fn kink_times(a: f64, b: f64, u0: &StateVec) -> (f64, f64) {
    let (x, y) = (u0[0].abs(), u0[1].abs());
    let (big, small, rate) = if x >= y { (x, y, a) } else { (y, x, b) };
    let t1 = (big - small) / rate;
    (t1, t1 + small * (a + b) / (a * b))
}

/// Closed-form gradient flow from an arbitrary `u0`.
pub fn nonsmooth_r2_exact(a: f64, b: f64, u0: &StateVec, t: f64) -> StateVec {
    let (s1, s2) = (if u0[0] < 0.0 { -1.0 } else { 1.0 }, if u0[1] < 0.0 { -1.0 } else { 1.0 });
    let (x, y) = (u0[0].abs(), u0[1].abs());
    let (t1, t2) = kink_times(a, b, u0);
    let (px, py) = if t <= t1 {
        if x >= y {
            (x - a * t, y)
        } else {
            (x, y - b * t)
        }
    } else if t <= t2 {
        let z = x.min(y) - a * b / (a + b) * (t - t1);
        (z, z)
    } else {
        (0.0, 0.0)
    };
    dvector![s1 * px, s2 * py]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_example() {
        let u0 = dvector![3.0, 1.0];
        assert_eq!(kink_times(2.0, 1.0, &u0), (1.0, 2.5));
        let u = nonsmooth_r2_exact(2.0, 1.0, &u0, 2.0);
        assert!((u - dvector![1.0 / 3.0, 1.0 / 3.0]).amax() < 1e-15);
        assert_eq!(nonsmooth_r2_exact(2.0, 1.0, &dvector![0.0, 0.0], 1.0), dvector![0.0, 0.0]);
    }

    #[test]
    fn reflection_symmetry() {
        let u = nonsmooth_r2_exact(2.0, 1.0, &dvector![3.0, 1.0], 1.7);
        let v = nonsmooth_r2_exact(1.0, 2.0, &dvector![1.0, 3.0], 1.7);
        assert!((u[0] - v[1]).abs() < 1e-15 && (u[1] - v[0]).abs() < 1e-15);
    }

    #[test]
    fn prox_is_optimal() {
        let p = MaxNormProx { a: 2.0, b: 1.0 };
        let u = dvector![0.4, 0.35];
        let w = p.prox(&u, 0.1);
        let obj = |w: &StateVec| ((w[0] - u[0]).powi(2) / 2.0 + (w[1] - u[1]).powi(2)) / 0.2 + w[0].abs().max(w[1].abs());
        let best = obj(&w);
        for i in -40..=40 {
            for j in -40..=40 {
                let z = &w + dvector![i as f64 * 1e-3, j as f64 * 1e-3];
                assert!(obj(&z) >= best - 1e-15);
            }
        }
    }

    #[test]
    fn slopes_per_branch() {
        let f = MaxNormEnergy { a: 2.0, b: 1.0 };
        assert_eq!(f.slope(0.0, &dvector![3.0, 1.0]), Some(2f64.sqrt()));
        assert_eq!(f.slope(0.0, &dvector![0.0, 1.0]), Some(1.0));
        assert!((f.slope(0.0, &dvector![1.0, -1.0]).unwrap() - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(f.slope(0.0, &dvector![0.0, 0.0]), Some(0.0));
        let sel = f.selector(0.0, &dvector![1.0, 1.0]).unwrap();
        assert!((f.dual_norm(&sel) - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
