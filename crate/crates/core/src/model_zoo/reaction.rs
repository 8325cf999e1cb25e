//! Mass-action reaction networks with the log-mean Onsager operator.

use crate::energies::BoltzmannEntropy;
use crate::error::{GflError, Result};
use crate::mms_solver::GradientSystem;
use crate::potentials::{DissipationPotential, OnsagerForm};
use crate::StateVec;
use nalgebra::DMatrix;
use std::sync::Arc;

/// Logarithmic mean `Λ(r, ρ) = (r − ρ)/log(r/ρ)`, `Λ(r, r) = r`.
pub fn log_mean(r: f64, rho: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(GflError::NonpositiveArgument(r));
    }
    if !(rho > 0.0) {
        return Err(GflError::NonpositiveArgument(rho));
    }
    let d = r / rho - 1.0;
    if d.abs() < 1e-4 {
        // (q − 1)/log q = 1 + d/2 − d²/12 + d³/24 − ...
        return Ok(rho * (1.0 + d * (0.5 + d * (-1.0 / 12.0 + d / 24.0))));
    }
    Ok((r - rho) / (r / rho).ln())
}

/// One reaction `α ⇌ β` with forward rate constant `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub k: f64,
    pub alpha: Vec<u32>,
    pub beta: Vec<u32>,
}

impl Reaction {
    fn gamma(&self) -> StateVec {
        StateVec::from_iterator(self.alpha.len(), self.alpha.iter().zip(&self.beta).map(|(a, b)| *a as f64 - *b as f64))
    }
}

fn monomial(c: &StateVec, e: &[u32]) -> f64 {
    c.iter().zip(e).map(|(x, p)| x.powi(*p as i32)).product()
}

/// Reaction network with detailed-balance equilibrium at the all-ones state.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionNetwork {
    pub n: usize,
    pub reactions: Vec<Reaction>,
}

impl ReactionNetwork {
    /// Three species, `X₁ ⇌ X₂`, `X₁ + X₂ ⇌ 2X₃`, `X₁ + X₃ ⇌ 2X₂`.
    pub fn default_three(k: [f64; 3]) -> Result<Self> {
        let r = |k: f64, a: [u32; 3], b: [u32; 3]| Reaction { k, alpha: a.to_vec(), beta: b.to_vec() };
        ReactionNetwork::new(
            3,
            vec![r(k[0], [1, 0, 0], [0, 1, 0]), r(k[1], [1, 1, 0], [0, 0, 2]), r(k[2], [1, 0, 1], [0, 2, 0])],
        )
    }

    pub fn new(n: usize, reactions: Vec<Reaction>) -> Result<Self> {
        for r in &reactions {
            if !(r.k > 0.0) {
                return Err(GflError::InvalidParameter(format!("rate constant must be positive, got {}", r.k)));
            }
            if r.alpha.len() != n || r.beta.len() != n {
                return Err(GflError::DimensionMismatch { expected: n, got: r.alpha.len().min(r.beta.len()) });
            }
        }
        Ok(ReactionNetwork { n, reactions })
    }

    fn check(&self, c: &StateVec) -> Result<()> {
        crate::error::check_dim(self.n, c.len())?;
        if c.iter().any(|x| !(*x > 0.0)) {
            return Err(GflError::NonpositiveConcentration);
        }
        Ok(())
    }

    /// `K(c) = Σ k Λ(c^α, c^β) γγᵀ`, `γ = α − β`.
    pub fn onsager(&self, c: &StateVec) -> Result<DMatrix<f64>> {
        self.check(c)?;
        let mut k = DMatrix::zeros(self.n, self.n);
        for r in &self.reactions {
            let g = r.gamma();
            k += &g * g.transpose() * (r.k * log_mean(monomial(c, &r.alpha), monomial(c, &r.beta))?);
        }
        Ok(k)
    }

    /// Mass-action right-hand side `R(c) = −Σ k (c^α − c^β) γ`.
    pub fn mass_action_rhs(&self, c: &StateVec) -> Result<StateVec> {
        self.check(c)?;
        let mut out = StateVec::zeros(self.n);
        for r in &self.reactions {
            out -= r.gamma() * (r.k * (monomial(c, &r.alpha) - monomial(c, &r.beta)));
        }
        Ok(out)
    }

    /// Gradient system `(ℝⁿ₊, Σ λ_B(cᵢ), K)`.
    pub fn system(&self) -> GradientSystem {
        let net = self.clone();
        let k_field = Arc::new(move |c: &StateVec| net.onsager(c).unwrap_or_else(|_| DMatrix::zeros(c.len(), c.len())));
        GradientSystem::banach("reaction3", Arc::new(BoltzmannEntropy { n: self.n }), DissipationPotential::OnsagerQuadratic(OnsagerForm::Onsager(k_field)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn log_mean_values() {
        assert_eq!(log_mean(1.0, 1.0).unwrap(), 1.0);
        assert!((log_mean(4.0, 1.0).unwrap() - 3.0 / 4f64.ln()).abs() < 1e-15);
        assert!((log_mean(4.0, 1.0).unwrap() - 2.164043).abs() < 1e-6);
        let (a, b) = (1.0 + 3e-5, 1.0);
        let direct = (a - b) / (a / b as f64).ln();
        assert!((log_mean(a, b).unwrap() - direct).abs() < 1e-10);
        assert!(matches!(log_mean(0.0, 1.0), Err(GflError::NonpositiveArgument(_))));
    }

    #[test]
    fn single_reaction_force() {
        let net = ReactionNetwork::new(3, vec![Reaction { k: 1.0, alpha: vec![1, 0, 0], beta: vec![0, 1, 0] }]).unwrap();
        let c = dvector![2.0, 1.0, 1.0];
        let grad = c.map(|x: f64| x.ln());
        let rate = -(net.onsager(&c).unwrap() * grad);
        assert!((rate - dvector![-1.0, 1.0, 0.0]).amax() < 1e-15);
        assert!((net.mass_action_rhs(&c).unwrap() - dvector![-1.0, 1.0, 0.0]).amax() < 1e-15);
    }

    #[test]
    fn equilibrium_at_ones() {
        let net = ReactionNetwork::default_three([1.0, 1.0, 1.0]).unwrap();
        assert_eq!(net.mass_action_rhs(&dvector![1.0, 1.0, 1.0]).unwrap().amax(), 0.0);
        assert!(matches!(net.onsager(&dvector![1.0, -1.0, 1.0]), Err(GflError::NonpositiveConcentration)));
    }
}
