//! Energy functionals `F(t, u)`: evaluation, differentials, power,
//! λ-convexity metadata and metric slopes.

use crate::error::{check_dim, GflError, Result};
use crate::ext::{ExtReal, Finite, PosInf};
use crate::linalg::SymMatrix;
use crate::quad;
use crate::StateVec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Selector of the Fréchet subdifferential at a point.
#[derive(Debug, Clone, PartialEq)]
pub enum Differential {
    Smooth(StateVec),
    NonSmooth,
}

impl Differential {
    pub fn smooth(self) -> Option<StateVec> {
        match self {
            Differential::Smooth(x) => Some(x),
            Differential::NonSmooth => None,
        }
    }
}

/// An energy functional on ℝⁿ, possibly time dependent.
pub trait Energy: Send + Sync {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    /// F(t, u); `+∞` outside the domain.
    fn eval(&self, t: f64, u: &StateVec) -> ExtReal;
    /// DF(t, u) where F is differentiable; `OutsideDomain` off the domain.
    fn differential(&self, t: f64, u: &StateVec) -> Result<Differential>;
    /// ∂ₜF(t, u).
    fn power(&self, _t: f64, _u: &StateVec) -> Result<f64> {
        Ok(0.0)
    }
    /// λ-convexity modulus with respect to the system metric; `None` if unknown.
    fn lambda(&self) -> Option<f64>;
    fn in_domain(&self, _u: &StateVec) -> bool {
        true
    }
    fn hessian(&self, _t: f64, _u: &StateVec) -> Option<SymMatrix> {
        None
    }
    /// Closed-form metric slope, registered by nonsmooth energies.
    fn slope(&self, _t: f64, _u: &StateVec) -> Option<f64> {
        None
    }
    /// A distinguished element of ∂F(t, u) at nonsmooth points.
    fn selector(&self, _t: f64, _u: &StateVec) -> Option<StateVec> {
        None
    }
    /// Euclidean distance from `xi` to ∂F(t, u), when ∂F has a closed form.
    fn subdifferential_distance(&self, t: f64, u: &StateVec, xi: &StateVec) -> Option<f64> {
        match self.differential(t, u) {
            Ok(Differential::Smooth(g)) => Some((g - xi).norm()),
            _ => None,
        }
    }
    fn is_autonomous(&self) -> bool {
        true
    }
}

/// A (possibly asymmetric) distance on states.
pub trait Distance: Send + Sync {
    fn dist(&self, u: &StateVec, w: &StateVec) -> ExtReal;
    /// Dual norm of a covector at `u` when the distance comes from a norm.
    fn dual_norm(&self, _u: &StateVec, _xi: &StateVec) -> Option<f64> {
        None
    }
}

/// ‖v‖² = Σ wᵢ vᵢ².
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNorm {
    pub weights: Vec<f64>,
}

impl WeightedNorm {
    pub fn euclidean(n: usize) -> Self {
        WeightedNorm { weights: vec![1.0; n] }
    }

    pub fn norm(&self, v: &StateVec) -> f64 {
        self.weights.iter().zip(v.iter()).map(|(w, x)| w * x * x).sum::<f64>().sqrt()
    }

    pub fn dual(&self, xi: &StateVec) -> f64 {
        self.weights.iter().zip(xi.iter()).map(|(w, x)| x * x / w).sum::<f64>().sqrt()
    }
}

impl Distance for WeightedNorm {
    fn dist(&self, u: &StateVec, w: &StateVec) -> ExtReal {
        Finite(self.norm(&(w - u)))
    }

    fn dual_norm(&self, _u: &StateVec, xi: &StateVec) -> Option<f64> {
        Some(self.dual(xi))
    }
}

/// F(t, u) with a dimension check.
pub fn eval_energy(f: &dyn Energy, t: f64, u: &StateVec) -> Result<ExtReal> {
    check_dim(f.dim(), u.len())?;
    if !f.in_domain(u) {
        return Ok(PosInf);
    }
    Ok(f.eval(t, u))
}

/// ∂ₜF(t, u).
pub fn power_of_energy(f: &dyn Energy, t: f64, u: &StateVec) -> Result<f64> {
    if !eval_energy(f, t, u)?.is_finite() {
        return Err(GflError::OutsideDomain);
    }
    f.power(t, u)
}

/// Metric slope value with provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeEstimate {
    pub value: ExtReal,
    /// True when the value comes from sampling rather than a closed form.
    pub approximate: bool,
}

/// Deterministic probe directions: the coordinate axes with both signs,
/// completed by random unit vectors up to `m` directions.
pub fn probe_directions(n: usize, m: usize) -> Vec<StateVec> {
    let mut dirs = Vec::new();
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut e = StateVec::zeros(n);
            e[i] = s;
            dirs.push(e);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5107e);
    while dirs.len() < m.max(2 * n) && n > 1 {
        let v = StateVec::from_fn(n, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let nv = v.norm();
        if nv > 1e-3 {
            dirs.push(v / nv);
        }
    }
    dirs
}

/// Local metric slope `limsup_{w→u} [F(u) − F(w)]₊ / D(u, w)`.
///
/// Smooth points use the dual norm of DF; registered closed forms come next;
/// otherwise spheres of radii `probe_radius·2⁻ʲ`, j = 0..8, are sampled along
/// 64 directions and the sequence is extrapolated.
pub fn metric_slope(f: &dyn Energy, t: f64, u: &StateVec, probe_radius: f64, dist: &dyn Distance) -> Result<SlopeEstimate> {
    let fu = eval_energy(f, t, u)?;
    let fu = fu.finite().ok_or(GflError::OutsideDomain)?;
    if let Differential::Smooth(g) = f.differential(t, u)? {
        if let Some(s) = dist.dual_norm(u, &g) {
            return Ok(SlopeEstimate { value: Finite(s), approximate: false });
        }
    }
    if let Some(s) = f.slope(t, u) {
        return Ok(SlopeEstimate { value: Finite(s), approximate: false });
    }
    let dirs = probe_directions(u.len(), 64);
    let mut est = Vec::with_capacity(9);
    for j in 0..=8 {
        let r = probe_radius * 0.5f64.powi(j);
        let mut best = 0.0f64;
        for e in &dirs {
            let w = u + e * r;
            if let (Finite(fw), Finite(d)) = (f.eval(t, &w), dist.dist(u, &w)) {
                if d > 0.0 {
                    best = best.max((fu - fw).max(0.0) / d);
                }
            }
        }
        est.push(best);
    }
    let mut value = est.iter().cloned().fold(0.0, f64::max);
    let (a, b) = (est[7], est[8]);
    if b >= a {
        value = value.max(2.0 * b - a);
    }
    Ok(SlopeEstimate { value: Finite(value), approximate: true })
}

/// Default probe set for global slopes: 32 log-spaced radii in `[1e-6, 1]`
/// along 64 directions.
pub fn default_global_candidates(u: &StateVec) -> Vec<StateVec> {
    let dirs = probe_directions(u.len(), 64);
    let radii = quad::log_grid(1e-6, 1.0, 32);
    let mut out = Vec::with_capacity(dirs.len() * radii.len());
    for r in &radii {
        for e in &dirs {
            out.push(u + e * *r);
        }
    }
    out
}

/// Global λ-slope `sup_w [ (F(u) − F(w))/D(u, w) + (λ/2) D(u, w) ]₊` over
/// `candidates` together with the default radial probe set.
pub fn global_lambda_slope(f: &dyn Energy, t: f64, u: &StateVec, lambda: f64, candidates: &[StateVec], dist: &dyn Distance) -> Result<ExtReal> {
    let fu = eval_energy(f, t, u)?.finite().ok_or(GflError::OutsideDomain)?;
    let defaults = default_global_candidates(u);
    let mut best = 0.0f64;
    for w in candidates.iter().chain(defaults.iter()) {
        let (Finite(fw), Finite(d)) = (f.eval(t, w), dist.dist(u, w)) else {
            continue;
        };
        if d > 0.0 && d.is_finite() && fw.is_finite() {
            best = best.max((fu - fw) / d + 0.5 * lambda * d);
        }
    }
    Ok(Finite(best))
}

/// Local and global slopes at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeRecord {
    pub local_slope: ExtReal,
    pub global_lambda_slope: ExtReal,
    pub lambda_used: f64,
    pub candidate_count: usize,
}

pub fn slope_record(f: &dyn Energy, t: f64, u: &StateVec, lambda: f64, candidates: &[StateVec], dist: &dyn Distance, probe_radius: f64) -> Result<SlopeRecord> {
    let local = metric_slope(f, t, u, probe_radius, dist)?.value;
    let global = global_lambda_slope(f, t, u, lambda, candidates, dist)?;
    Ok(SlopeRecord {
        local_slope: local,
        global_lambda_slope: global,
        lambda_used: lambda,
        candidate_count: candidates.len() + default_global_candidates(u).len(),
    })
}

/// `F(w) − F(u) + slope·D(u, w) − (λ/2) D(u, w)²`.
pub fn lower_bound_inequality_check(f: &dyn Energy, t: f64, u: &StateVec, slope: f64, lambda: f64, w: &StateVec, dist: &dyn Distance) -> f64 {
    let d = dist.dist(u, w).value();
    if d == 0.0 {
        return 0.0;
    }
    f.eval(t, w).value() - f.eval(t, u).value() + slope * d - 0.5 * lambda * d * d
}

/// Largest violation of the λ-convexity inequality over the given triples
/// `(u₀, u₁, θ)`; nonpositive values mean the declared λ is consistent.
pub fn lambda_convexity_violation(f: &dyn Energy, t: f64, lambda: f64, triples: &[(StateVec, StateVec, f64)], norm: &WeightedNorm) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for (u0, u1, th) in triples {
        let ut = u0 * (1.0 - th) + u1 * *th;
        let (Finite(f0), Finite(f1), Finite(ft)) = (f.eval(t, u0), f.eval(t, u1), f.eval(t, &ut)) else {
            continue;
        };
        let d = norm.norm(&(u1 - u0));
        let rhs = (1.0 - th) * f0 + th * f1 - 0.5 * lambda * th * (1.0 - th) * d * d;
        worst = worst.max(ft - rhs - 1e-9 * (1.0 + ft.abs()));
    }
    worst
}

/// Relative discrepancy `‖DF − FD‖ / (1 + ‖DF‖)` against central differences.
pub fn fd_consistency(f: &dyn Energy, t: f64, u: &StateVec, h: f64) -> Option<f64> {
    let g = f.differential(t, u).ok()?.smooth()?;
    let mut fd = StateVec::zeros(u.len());
    for i in 0..u.len() {
        let mut up = u.clone();
        let mut dn = u.clone();
        up[i] += h;
        dn[i] -= h;
        fd[i] = (f.eval(t, &up).value() - f.eval(t, &dn).value()) / (2.0 * h);
    }
    Some((&g - fd).norm() / (1.0 + g.norm()))
}

/// F(u) = ½ Σ wᵢ uᵢ².
#[derive(Debug, Clone)]
pub struct QuadraticEnergy {
    pub weights: Vec<f64>,
}

impl QuadraticEnergy {
    pub fn euclidean(n: usize) -> Self {
        QuadraticEnergy { weights: vec![1.0; n] }
    }
}

impl Energy for QuadraticEnergy {
    fn name(&self) -> String {
        "quadratic".into()
    }
    fn dim(&self) -> usize {
        self.weights.len()
    }
    fn eval(&self, _t: f64, u: &StateVec) -> ExtReal {
        Finite(0.5 * self.weights.iter().zip(u.iter()).map(|(w, x)| w * x * x).sum::<f64>())
    }
    fn differential(&self, _t: f64, u: &StateVec) -> Result<Differential> {
        Ok(Differential::Smooth(StateVec::from_iterator(u.len(), self.weights.iter().zip(u.iter()).map(|(w, x)| w * x))))
    }
    fn lambda(&self) -> Option<f64> {
        Some(1.0)
    }
    fn hessian(&self, _t: f64, _u: &StateVec) -> Option<SymMatrix> {
        Some(SymMatrix::Diag(self.weights.clone()))
    }
}

/// λ_B(z) = z log z − z + 1, extended by λ_B(0) = 1.
pub fn lambda_b(z: f64) -> f64 {
    if z == 0.0 {
        1.0
    } else {
        z * z.ln() - z + 1.0
    }
}

/// Relative Boltzmann entropy F(c) = Σ λ_B(cᵢ) on the positive orthant.
#[derive(Debug, Clone)]
pub struct BoltzmannEntropy {
    pub n: usize,
}

impl Energy for BoltzmannEntropy {
    fn name(&self) -> String {
        "boltzmann".into()
    }
    fn dim(&self) -> usize {
        self.n
    }
    fn in_domain(&self, u: &StateVec) -> bool {
        u.iter().all(|c| *c > 0.0 && c.is_finite())
    }
    fn eval(&self, _t: f64, u: &StateVec) -> ExtReal {
        if !self.in_domain(u) {
            return PosInf;
        }
        Finite(u.iter().map(|c| lambda_b(*c)).sum())
    }
    fn differential(&self, _t: f64, u: &StateVec) -> Result<Differential> {
        if !self.in_domain(u) {
            return Err(GflError::OutsideDomain);
        }
        Ok(Differential::Smooth(u.map(|c| c.ln())))
    }
    fn lambda(&self) -> Option<f64> {
        Some(0.0)
    }
    fn hessian(&self, _t: f64, u: &StateVec) -> Option<SymMatrix> {
        self.in_domain(u).then(|| SymMatrix::Diag(u.iter().map(|c| 1.0 / c).collect()))
    }
}

/// Time-dependent loading.
pub type LoadField = Arc<dyn Fn(f64) -> StateVec + Send + Sync>;

/// F(t, u) = E(u) − ⟨ℓ(t), u⟩.
#[derive(Clone)]
pub struct LoadedEnergy {
    pub base: Arc<dyn Energy>,
    pub load: LoadField,
    pub load_rate: LoadField,
}

impl Energy for LoadedEnergy {
    fn name(&self) -> String {
        format!("{}-loaded", self.base.name())
    }
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn in_domain(&self, u: &StateVec) -> bool {
        self.base.in_domain(u)
    }
    fn eval(&self, t: f64, u: &StateVec) -> ExtReal {
        self.base.eval(t, u) + (-(self.load)(t).dot(u))
    }
    fn differential(&self, t: f64, u: &StateVec) -> Result<Differential> {
        Ok(match self.base.differential(t, u)? {
            Differential::Smooth(g) => Differential::Smooth(g - (self.load)(t)),
            Differential::NonSmooth => Differential::NonSmooth,
        })
    }
    fn power(&self, t: f64, u: &StateVec) -> Result<f64> {
        Ok(self.base.power(t, u)? - (self.load_rate)(t).dot(u))
    }
    fn lambda(&self) -> Option<f64> {
        self.base.lambda()
    }
    fn hessian(&self, t: f64, u: &StateVec) -> Option<SymMatrix> {
        self.base.hessian(t, u)
    }
    fn is_autonomous(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn eval_examples() {
        let q = QuadraticEnergy::euclidean(2);
        assert_eq!(eval_energy(&q, 0.0, &dvector![3.0, 4.0]).unwrap(), Finite(12.5));
        let b = BoltzmannEntropy { n: 3 };
        assert_eq!(eval_energy(&b, 0.0, &dvector![1.0, 1.0, 1.0]).unwrap(), Finite(0.0));
        assert_eq!(eval_energy(&b, 0.0, &dvector![1.0, -1.0, 1.0]).unwrap(), PosInf);
        assert!(matches!(eval_energy(&q, 0.0, &dvector![1.0]), Err(GflError::DimensionMismatch { .. })));
    }

    #[test]
    fn quadratic_slopes() {
        let q = QuadraticEnergy::euclidean(1);
        let e = WeightedNorm::euclidean(1);
        assert_eq!(metric_slope(&q, 0.0, &dvector![3.0], 1e-3, &e).unwrap().value, Finite(3.0));
        let g = global_lambda_slope(&q, 0.0, &dvector![1.0], 1.0, &[dvector![0.0], dvector![0.5], dvector![2.0]], &e).unwrap();
        assert!((g.value() - 1.0).abs() < 1e-9, "{g}");
    }

    #[test]
    fn lower_bound_examples() {
        let q = QuadraticEnergy::euclidean(1);
        let e = WeightedNorm::euclidean(1);
        let u = dvector![1.0];
        assert!(lower_bound_inequality_check(&q, 0.0, &u, 1.0, 1.0, &dvector![0.0], &e).abs() < 1e-15);
        assert!(lower_bound_inequality_check(&q, 0.0, &u, 1.0, 1.0, &dvector![0.9], &e).abs() < 1e-14);
        // Above u the bound is slack by 2h: ½(1.21 − 1) + 0.1 − 0.005.
        assert!((lower_bound_inequality_check(&q, 0.0, &u, 1.0, 1.0, &dvector![1.1], &e) - 0.2).abs() < 1e-14);
        assert_eq!(lower_bound_inequality_check(&q, 0.0, &u, 1.0, 1.0, &u, &e), 0.0);
    }

    #[test]
    fn power_examples() {
        let loaded = LoadedEnergy {
            base: Arc::new(QuadraticEnergy::euclidean(1)),
            load: Arc::new(|t| dvector![t]),
            load_rate: Arc::new(|_| dvector![1.0]),
        };
        assert_eq!(power_of_energy(&loaded, 0.5, &dvector![3.0]).unwrap(), -3.0);
        assert_eq!(power_of_energy(&QuadraticEnergy::euclidean(1), 0.5, &dvector![3.0]).unwrap(), 0.0);
        assert_eq!(power_of_energy(&BoltzmannEntropy { n: 1 }, 0.0, &dvector![-1.0]), Err(GflError::OutsideDomain));
    }

    #[test]
    fn boltzmann_fd_and_convexity() {
        let b = BoltzmannEntropy { n: 3 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut triples = Vec::new();
        for _ in 0..100 {
            let u = StateVec::from_fn(3, |_, _| rng.gen_range(0.1..10.0));
            assert!(fd_consistency(&b, 0.0, &u, 1e-6).unwrap() < 1e-5);
            let w = StateVec::from_fn(3, |_, _| rng.gen_range(0.1..10.0));
            triples.push((u, w, rng.gen::<f64>()));
        }
        assert!(lambda_convexity_violation(&b, 0.0, 0.0, &triples, &WeightedNorm::euclidean(3)) <= 0.0);
    }
}
