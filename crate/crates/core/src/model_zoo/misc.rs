//! Small examples: the Euclidean quadratic, polar coordinates, the
//! missing-upper-semicontinuity field and two slope examples on ℝ.

use crate::energies::{Differential, Energy, QuadraticEnergy};
use crate::error::{GflError, Result};
use crate::ext::{ExtReal, Finite};
use crate::mms_solver::GradientSystem;
use crate::potentials::DissipationPotential;
use crate::StateVec;
use nalgebra::{dvector, DVector};
use std::sync::Arc;

/// `F(u) = ½|u|²` with `R(v) = ½|v|²`; the flow is `e^{−t}u⁰`.
pub fn quadratic_system(n: usize) -> GradientSystem {
    GradientSystem::banach("quadratic", Arc::new(QuadraticEnergy::euclidean(n)), DissipationPotential::quadratic_euclidean(n)).with_metric_weight(vec![1.0; n])
}

/// `F(u) = ½u₁² + ½u₂² + (a/4)u₂⁴`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarTestEnergy {
    pub a: f64,
}

impl Energy for PolarTestEnergy {
    fn name(&self) -> String {
        "polar_check".into()
    }
    fn dim(&self) -> usize {
        2
    }
    fn eval(&self, _t: f64, u: &StateVec) -> ExtReal {
        Finite(0.5 * u[0] * u[0] + 0.5 * u[1] * u[1] + 0.25 * self.a * u[1].powi(4))
    }
    fn differential(&self, _t: f64, u: &StateVec) -> Result<Differential> {
        Ok(Differential::Smooth(dvector![u[0], u[1] + self.a * u[1].powi(3)]))
    }
    fn lambda(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// Richardson-extrapolated central difference.
fn derivative(f: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    let h = 1e-3 * (1.0 + x.abs());
    let d = |h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let (d1, d2, d4) = (d(h), d(h / 2.0), d(h / 4.0));
    let r1 = (4.0 * d2 - d1) / 3.0;
    let r2 = (4.0 * d4 - d2) / 3.0;
    (16.0 * r2 - r1) / 15.0
}

/// `K̃ ∇(F∘Φ)` at polar coordinates `(r, φ)`, `K̃ = diag(1, 1/r²)`.
pub fn polar_gradient(f: &dyn Energy, r: f64, phi: f64) -> Result<[f64; 2]> {
    if !(r > 0.0) {
        return Err(GflError::OriginSample);
    }
    let fp = |r: f64, p: f64| f.eval(0.0, &dvector![r * p.cos(), r * p.sin()]).value();
    let dr = derivative(&|x| fp(x, phi), r);
    let dp = derivative(&|x| fp(r, x), phi);
    Ok([dr, dp / (r * r)])
}

/// Worst Euclidean discrepancy between the Cartesian gradient and the polar
/// gradient pushed forward by `DΦ`.
pub fn polar_gradient_check(f: &dyn Energy, samples: &[(f64, f64)]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &(r, phi) in samples {
        let [gr, gp] = polar_gradient(f, r, phi)?;
        let (c, s) = (phi.cos(), phi.sin());
        let pushed = dvector![c * gr - r * s * gp, s * gr + r * c * gp];
        let u = dvector![r * c, r * s];
        let cart = f.differential(0.0, &u)?.smooth().ok_or(GflError::SlopeUnavailable)?;
        worst = worst.max((pushed - cart).norm());
    }
    Ok(worst)
}

/// `F(u) = u₁ (u₁² + u₂⁴)^{1/4}`, whose gradient is the field
/// `((3u₁² + 2u₂⁴)/(2s^{3/4}), u₁u₂³/s^{3/4})`, `s = u₁² + u₂⁴`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissingUscEnergy;

impl Energy for MissingUscEnergy {
    fn name(&self) -> String {
        "missing_usc".into()
    }
    fn dim(&self) -> usize {
        2
    }
    fn eval(&self, _t: f64, u: &StateVec) -> ExtReal {
        Finite(u[0] * (u[0] * u[0] + u[1].powi(4)).powf(0.25))
    }
    fn differential(&self, _t: f64, u: &StateVec) -> Result<Differential> {
        let s = u[0] * u[0] + u[1].powi(4);
        if s == 0.0 {
            return Ok(Differential::NonSmooth);
        }
        let q = s.powf(0.75);
        Ok(Differential::Smooth(dvector![(3.0 * u[0] * u[0] + 2.0 * u[1].powi(4)) / (2.0 * q), u[0] * u[1].powi(3) / q]))
    }
    fn lambda(&self) -> Option<f64> {
        None
    }
}

pub fn missing_usc_system() -> GradientSystem {
    GradientSystem::banach("missing_usc", Arc::new(MissingUscEnergy), DissipationPotential::quadratic_euclidean(2)).with_metric_weight(vec![1.0, 1.0])
}

/// One minimizing-movement step on the axis `u₂ = 0` along the
/// nonnegative branch: `√u_k = √(9τ²/16 + u_{k−1}) − 3τ/4`.
pub fn missing_usc_recursion(u_prev: f64, tau: f64) -> f64 {
    let r = (9.0 * tau * tau / 16.0 + u_prev).sqrt() - 0.75 * tau;
    r * r
}

/// Nonnegative solution on the axis from `u₁(0) = 1`: `(9/16)(4/3 − t)²`, then 0.
pub fn missing_usc_axis_solution(t: f64) -> f64 {
    if t >= 4.0 / 3.0 {
        0.0
    } else {
        0.5625 * (4.0 / 3.0 - t).powi(2)
    }
}

/// `F(u) = ||u| − 1|` on ℝ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsDistanceToOne;

impl Energy for AbsDistanceToOne {
    fn name(&self) -> String {
        "abs_distance_to_one".into()
    }
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, _t: f64, u: &StateVec) -> ExtReal {
        Finite((u[0].abs() - 1.0).abs())
    }
    fn differential(&self, _t: f64, u: &StateVec) -> Result<Differential> {
        let x = u[0];
        if x == 0.0 || x.abs() == 1.0 {
            return Ok(Differential::NonSmooth);
        }
        Ok(Differential::Smooth(DVector::from_element(1, x.signum() * (x.abs() - 1.0).signum())))
    }
    fn lambda(&self) -> Option<f64> {
        None
    }
    fn slope(&self, _t: f64, u: &StateVec) -> Option<f64> {
        Some(if u[0].abs() == 1.0 { 0.0 } else { 1.0 })
    }
}

/// `F(u) = ½u² − |u|` on ℝ, with slope `|1 − |u||`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfSquareMinusAbs;

impl Energy for HalfSquareMinusAbs {
    fn name(&self) -> String {
        "half_square_minus_abs".into()
    }
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, _t: f64, u: &StateVec) -> ExtReal {
        Finite(0.5 * u[0] * u[0] - u[0].abs())
    }
    fn differential(&self, _t: f64, u: &StateVec) -> Result<Differential> {
        if u[0] == 0.0 {
            return Ok(Differential::NonSmooth);
        }
        Ok(Differential::Smooth(DVector::from_element(1, u[0] - u[0].signum())))
    }
    fn lambda(&self) -> Option<f64> {
        None
    }
    fn slope(&self, _t: f64, u: &StateVec) -> Option<f64> {
        Some((1.0 - u[0].abs()).abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polar_example() {
        let f = PolarTestEnergy { a: 1.0 };
        let [gr, gp] = polar_gradient(&f, 1.0, PI / 2.0).unwrap();
        assert!((gr - 2.0).abs() < 1e-9 && gp.abs() < 1e-9);
        let samples: Vec<(f64, f64)> = (1..20).map(|k| (0.1 * k as f64, 0.37 * k as f64)).collect();
        assert!(polar_gradient_check(&f, &samples).unwrap() < 1e-8);
        assert!(matches!(polar_gradient_check(&f, &[(0.0, 1.0)]), Err(GflError::OriginSample)));
    }

    #[test]
    fn missing_usc_gradient_field() {
        let u = dvector![0.7, -0.4];
        assert!(crate::energies::fd_consistency(&MissingUscEnergy, 0.0, &u, 1e-6).unwrap() < 1e-8);
        assert!((missing_usc_recursion(1.0, 0.1) - 0.86083).abs() < 1e-5);
        assert_eq!(missing_usc_recursion(0.0, 0.1), 0.0);
    }

    #[test]
    fn slope_examples() {
        let one = |x: f64| DVector::from_element(1, x);
        assert_eq!(HalfSquareMinusAbs.slope(0.0, &one(0.5)), Some(0.5));
        assert_eq!(AbsDistanceToOne.slope(0.0, &one(1.0)), Some(0.0));
        assert_eq!(AbsDistanceToOne.slope(0.0, &one(-1.0)), Some(0.0));
        assert_eq!(AbsDistanceToOne.slope(0.0, &one(2.0)), Some(1.0));
    }
}
