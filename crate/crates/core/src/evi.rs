//! Evolutionary variational inequality residuals, λ-contractivity and
//! semigroup checks.

use crate::energies::WeightedNorm;
use crate::error::{GflError, Result};
use crate::mms_solver::{run_mms, GradientSystem, InterpolantKind, MmsOptions, Trajectory};
use crate::StateVec;
use rayon::prelude::*;
use serde::Serialize;

/// `M_λ(τ) = ∫₀^τ e^{−λ(τ−s)} ds`.
pub fn m_lambda(lambda: f64, tau: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    if lambda.abs() <= 1e-12 {
        tau
    } else {
        -(-lambda * tau).exp_m1() / lambda
    }
}

/// RHS − LHS of
/// `½d(u(t), w)² ≤ ½e^{−λ(t−s)}d(u(s), w)² + M_λ(t−s)(F(w) − F(u(t)))`
/// on the affine interpolant, with d the system distance.
pub fn evi_residual(sys: &GradientSystem, traj: &Trajectory, w: &StateVec, lambda: f64, s: f64, t: f64) -> Result<f64> {
    let fw = sys.energy.eval(t, w).finite().ok_or(GflError::OutsideDomain)?;
    if !(s <= t) {
        return Err(GflError::InvalidParameter(format!("need s ≤ t, got {s} > {t}")));
    }
    let us = traj.interpolate(InterpolantKind::Affine, s)?;
    let ut = traj.interpolate(InterpolantKind::Affine, t)?;
    let fu = sys.energy.eval(t, &ut).finite().ok_or(GflError::OutsideDomain)?;
    let ds = sys.norm_distance(&us, w);
    let dt = sys.norm_distance(&ut, w);
    Ok(0.5 * (-lambda * (t - s)).exp() * ds * ds + m_lambda(lambda, t - s) * (fw - fu) - 0.5 * dt * dt)
}

/// Worst EVI residual over a probe set.
#[derive(Debug, Clone, Serialize)]
pub struct EviReport {
    pub lambda: f64,
    pub test_points: usize,
    pub pairs: usize,
    pub probes: usize,
    pub worst_violation: f64,
    pub worst_at: Option<(usize, f64, f64)>,
}

/// Ordered node pairs `(s, t)`, `s < t`, subsampled uniformly beyond `cap`.
pub fn node_pairs(times: &[f64], cap: usize) -> Vec<(f64, f64)> {
    let n = times.len();
    let total = n * n.saturating_sub(1) / 2;
    let stride = total.div_ceil(cap.max(1)).max(1);
    let mut out = Vec::with_capacity(total.min(cap));
    let mut idx = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if idx % stride == 0 {
                out.push((times[i], times[j]));
            }
            idx += 1;
        }
    }
    out
}

/// Test points on an axis-aligned lattice `center + j·spacing·eᵢ`,
/// `j = −half..=half`.
pub fn lattice_probes(center: &StateVec, spacing: f64, half: i64) -> Vec<StateVec> {
    let mut out = vec![center.clone()];
    for i in 0..center.len() {
        for j in -half..=half {
            if j == 0 {
                continue;
            }
            let mut w = center.clone();
            w[i] += j as f64 * spacing;
            out.push(w);
        }
    }
    out
}

/// Evaluates the EVI residual for every test point and node pair (capped at
/// `pair_cap`); the report holds the most negative value.
pub fn evi_probe(sys: &GradientSystem, traj: &Trajectory, test_points: &[StateVec], lambda: f64, pair_cap: usize) -> Result<EviReport> {
    let pairs = node_pairs(&traj.times, pair_cap);
    let results: Vec<Result<(f64, usize, f64, f64)>> = test_points
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let mut worst = (f64::INFINITY, i, 0.0, 0.0);
            for &(s, t) in &pairs {
                let r = evi_residual(sys, traj, w, lambda, s, t)?;
                if r < worst.0 {
                    worst = (r, i, s, t);
                }
            }
            Ok(worst)
        })
        .collect();
    let mut report = EviReport { lambda, test_points: test_points.len(), pairs: pairs.len(), probes: test_points.len() * pairs.len(), worst_violation: f64::INFINITY, worst_at: None };
    for r in results {
        let (v, i, s, t) = r?;
        if v < report.worst_violation {
            report.worst_violation = v;
            report.worst_at = Some((i, s, t));
        }
    }
    Ok(report)
}

/// Largest ratio `‖Δ(t)‖ / (e^{−λ(t−s)}‖Δ(s)‖)` over sampled node pairs;
/// `0/0` counts as 1.
pub fn contractivity_check(a: &Trajectory, b: &Trajectory, lambda: f64, norm: &WeightedNorm, sample_times: Option<&[f64]>) -> Result<f64> {
    if a.times.len() != b.times.len() || a.times.iter().zip(&b.times).any(|(x, y)| (x - y).abs() > 1e-12 * (1.0 + x.abs())) {
        return Err(GflError::GridMismatch);
    }
    let times: Vec<f64> = sample_times.map(|s| s.to_vec()).unwrap_or_else(|| a.times.clone());
    let mut gaps = Vec::with_capacity(times.len());
    for &t in &times {
        let ua = a.interpolate(InterpolantKind::Affine, t)?;
        let ub = b.interpolate(InterpolantKind::Affine, t)?;
        gaps.push(norm.norm(&(ua - ub)));
    }
    let mut worst = 0.0f64;
    for i in 0..times.len() {
        for j in i + 1..times.len() {
            let den = (-lambda * (times[j] - times[i])).exp() * gaps[i];
            let ratio = if den == 0.0 {
                if gaps[j] == 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                }
            } else {
                gaps[j] / den
            };
            worst = worst.max(ratio);
        }
    }
    Ok(worst)
}

/// `max_k ‖S(t_k)u₀ − S(t_k − t_split)S(t_split)u₀‖` at the shared nodes of
/// a uniform N-step run on `[0, T]`; `t_split` is rounded to a node.
pub fn semigroup_check(sys: &GradientSystem, u0: &StateVec, t_split: f64, t_end: f64, n: usize, opts: &MmsOptions) -> Result<f64> {
    if !sys.energy.is_autonomous() {
        return Err(GflError::InvalidParameter("semigroup check needs an autonomous energy".into()));
    }
    let full = run_mms(sys, u0, 0.0, t_end, n, opts)?;
    let tau = t_end / n as f64;
    let k = ((t_split / tau).round() as usize).min(n);
    if k == 0 || k == n {
        return Ok(0.0);
    }
    let first = run_mms(sys, u0, 0.0, k as f64 * tau, k, opts)?;
    let second = run_mms(sys, first.states.last().unwrap(), 0.0, (n - k) as f64 * tau, n - k, opts)?;
    let nrm = sys.fixed_norm();
    let mut worst = 0.0f64;
    for i in 0..=k {
        worst = worst.max(nrm.norm(&(&full.states[i] - &first.states[i])));
    }
    for i in 0..=n - k {
        worst = worst.max(nrm.norm(&(&full.states[k + i] - &second.states[i])));
    }
    Ok(worst)
}

/// Worst violation of `t·F(u(t)) ≤ ½d(u₀, w)² + t·F(w)` at the nodes.
pub fn regularization_violation(sys: &GradientSystem, traj: &Trajectory, test_points: &[StateVec]) -> f64 {
    let u0 = &traj.states[0];
    let mut worst = f64::NEG_INFINITY;
    for w in test_points {
        let fw = sys.energy.eval(traj.t0(), w).value();
        let d = sys.norm_distance(u0, w);
        for (t, u) in traj.times.iter().zip(&traj.states) {
            let rel = t - traj.t0();
            worst = worst.max(rel * sys.energy.eval(*t, u).value() - 0.5 * d * d - rel * fw);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energies::QuadraticEnergy;
    use crate::potentials::DissipationPotential;
    use crate::quad;
    use nalgebra::dvector;
    use std::sync::Arc;

    fn quad1() -> GradientSystem {
        GradientSystem::banach("quadratic", Arc::new(QuadraticEnergy::euclidean(1)), DissipationPotential::quadratic_euclidean(1))
    }

    fn exact(u0: f64) -> Trajectory {
        let times = quad::lin_grid(0.0, 1.0, 11);
        let states = times.iter().map(|t| dvector![u0 * (-t).exp()]).collect();
        Trajectory::from_samples(times, states)
    }

    #[test]
    fn m_lambda_values() {
        assert_eq!(m_lambda(0.0, 2.0), 2.0);
        assert!((m_lambda(1.0, 1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert_eq!(m_lambda(3.0, 0.0), 0.0);
    }

    #[test]
    fn evi_on_exact_flow() {
        let r = evi_residual(&quad1(), &exact(1.0), &dvector![0.0], 1.0, 0.0, 1.0).unwrap();
        let e = (-1.0f64).exp();
        let expect = 0.5 * e + (1.0 - e) * (-0.5 * e * e) - 0.5 * e * e;
        assert!((r - expect).abs() < 1e-14);
        assert!((r - 0.073496).abs() < 1e-5);
    }

    #[test]
    fn contractivity_of_exact_flows() {
        let n = WeightedNorm::euclidean(1);
        let r = contractivity_check(&exact(1.0), &exact(2.0), 1.0, &n, None).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert_eq!(contractivity_check(&exact(1.0), &exact(1.0), 1.0, &n, None).unwrap(), 1.0);
    }

    #[test]
    fn semigroup_for_quadratic() {
        let o = MmsOptions::default();
        assert!(semigroup_check(&quad1(), &dvector![1.0], 0.5, 1.0, 20, &o).unwrap() < 1e-15);
        assert_eq!(semigroup_check(&quad1(), &dvector![1.0], 0.0, 1.0, 20, &o).unwrap(), 0.0);
    }
}
