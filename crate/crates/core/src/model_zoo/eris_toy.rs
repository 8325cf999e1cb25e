//! Scalar rate-independent toy `0 ∈ 2 Sign(u̇) + u̇ + au − λt`.

use crate::energies::{LoadedEnergy, QuadraticEnergy};
use crate::error::{GflError, Result};
use crate::ext::Finite;
use crate::quad;
use crate::rate_independent::{AsymmetricNorm, Eris, TimsSolver};
use crate::StateVec;
use nalgebra::DVector;
use std::sync::Arc;

/// Parameters of the toy problem on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErisToy {
    pub a: f64,
    pub lambda: f64,
    pub t_end: f64,
    /// Backward rate; `∞` forbids decreasing `u`.
    pub backward: f64,
}

impl ErisToy {
    pub fn new(a: f64, lambda: f64, t_end: f64) -> Result<Self> {
        if !(a > 0.0) || !(t_end > 0.0) || !lambda.is_finite() {
            return Err(GflError::InvalidParameter("eris_toy needs a > 0, T > 0 and finite λ".into()));
        }
        Ok(ErisToy { a, lambda, t_end, backward: 1.0 })
    }

    pub fn unidirectional(a: f64, lambda: f64, t_end: f64) -> Result<Self> {
        Ok(ErisToy { backward: f64::INFINITY, ..ErisToy::new(a, lambda, t_end)? })
    }

    /// Stable set `S(t) = [(λt − 3)/a, (λt + 1)/a]`.
    pub fn stable_interval(&self, t: f64) -> (f64, f64) {
        let lo = (self.lambda * t - 3.0) / self.a;
        let hi = if self.backward.is_infinite() { f64::INFINITY } else { (self.lambda * t + 1.0) / self.a };
        (lo, hi)
    }

    /// Energetic solution from `u(0) = 0`.
    pub fn exact(&self, t: f64) -> f64 {
        let (lo, hi) = self.stable_interval(t);
        if self.backward.is_infinite() {
            // The lower boundary only rises when λ ≥ 0; otherwise u stays at 0.
            return if self.lambda >= 0.0 { lo.max(0.0) } else { 0.0 };
        }
        if self.lambda >= 0.0 {
            lo.max(0.0)
        } else {
            hi.min(0.0)
        }
    }

    /// `C_E` for `|∂ₜF| ≤ C_E(F + c_E)` on `[0, T]` with `c_E = (λT)²/(2a) + 1`.
    pub fn power_constants(&self) -> (f64, f64) {
        let c_small = (self.lambda * self.t_end).powi(2) / (2.0 * self.a) + 1.0;
        let lam = self.lambda.abs();
        if lam == 0.0 {
            return (0.0, c_small);
        }
        // F + c_E ≥ ½a(u − λt/a)² + 1; the ratio |λu|/(…) is largest at |λ|T/a.
        let shift = lam * self.t_end / self.a;
        let ratio = |x: f64| Finite(lam * x / (0.5 * self.a * (x - shift).powi(2) + 1.0));
        let hi = shift + 10.0 * (1.0 + 1.0 / self.a.sqrt());
        let grid = quad::lin_grid(0.0, hi, 4001);
        let best = quad::maximize_on_grid(&mut |x| ratio(x), &grid, 1e-13);
        (best.value * (1.0 + 1e-9), c_small)
    }

    pub fn system(&self) -> Result<Eris> {
        let lam = self.lambda;
        let energy = LoadedEnergy {
            base: Arc::new(QuadraticEnergy { weights: vec![self.a] }),
            load: Arc::new(move |t| DVector::from_element(1, lam * t)),
            load_rate: Arc::new(move |_| DVector::from_element(1, lam)),
        };
        let (c_big, c_small) = self.power_constants();
        let name = if self.backward.is_infinite() { "eris_unidir" } else { "eris_toy" };
        Ok(Eris {
            name: name.into(),
            energy: Arc::new(energy),
            dist: Arc::new(AsymmetricNorm::new(3.0, self.backward)?),
            c_big,
            c_small,
            exact_step: Some(Arc::new(*self)),
        })
    }
}

impl TimsSolver for ErisToy {
    fn solve(&self, _sys: &Eris, u_prev: &StateVec, t: f64) -> Result<StateVec> {
        let (lo, hi) = self.stable_interval(t);
        Ok(DVector::from_element(1, u_prev[0].max(lo).min(hi)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate_independent::run_tims;

    #[test]
    fn closed_form_values() {
        let toy = ErisToy::new(1.0, 2.0, 2.0).unwrap();
        assert_eq!(toy.exact(2.0), 1.0);
        assert_eq!(toy.stable_interval(1.0), (-1.0, 3.0));
        assert_eq!(ErisToy::new(1.0, 0.0, 2.0).unwrap().exact(1.3), 0.0);
        let neg = ErisToy::new(1.0, -2.0, 2.0).unwrap();
        assert_eq!(neg.exact(1.0), -1.0);
    }

    #[test]
    fn tims_matches_closed_form() {
        let toy = ErisToy::new(1.0, 2.0, 2.0).unwrap();
        let sys = toy.system().unwrap();
        let times: Vec<f64> = (0..=37).map(|k| 2.0 * (k as f64 / 37.0).powf(1.3)).collect();
        let traj = run_tims(&sys, &DVector::from_element(1, 0.0), &times).unwrap();
        for (t, u) in traj.times.iter().zip(&traj.states) {
            assert!((u[0] - (2.0 * t - 3.0).max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn power_bound_holds() {
        let toy = ErisToy::new(1.0, 2.0, 2.0).unwrap();
        let sys = toy.system().unwrap();
        let samples: Vec<(f64, StateVec)> = (0..=40)
            .flat_map(|i| (-20..=20).map(move |j| (i as f64 * 0.05, DVector::from_element(1, j as f64 * 0.5))))
            .collect();
        assert!(sys.power_bound_violation(&samples).unwrap() <= 0.0);
    }
}
