//! Ready-made gradient systems and rate-independent systems with oracles,
//! addressable by string identifiers.

pub mod allen_cahn;
pub mod eris_toy;
pub mod jko;
pub mod misc;
pub mod nonsmooth;
pub mod reaction;
pub mod wiggly;

use crate::error::{GflError, Result};
use crate::mms_solver::{run_mms_partition, GradientSystem, MmsOptions, Trajectory};
use crate::rate_independent::Eris;
use crate::StateVec;
use nalgebra::{dvector, DVector};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

/// Named numeric parameters of a zoo entry.
pub type Params = BTreeMap<String, f64>;
/// Closed-form solution `t ↦ u(t)`.
pub type ExactFn = Arc<dyn Fn(f64) -> StateVec + Send + Sync>;
/// Error of a computed trajectory against the entry's reference.
pub type ErrorOracle = Arc<dyn Fn(&Trajectory) -> Result<f64> + Send + Sync>;

pub struct ZooGradient {
    pub system: GradientSystem,
    pub u0: StateVec,
    pub t_end: f64,
    pub steps: usize,
    pub exact: Option<ExactFn>,
    pub error_oracle: Option<ErrorOracle>,
}

pub struct ZooEris {
    pub system: Eris,
    pub u0: StateVec,
    pub t_end: f64,
    pub steps: usize,
    pub exact: Option<ExactFn>,
}

/// Outcome of a standalone check entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub passed: bool,
    pub values: BTreeMap<String, f64>,
}

pub struct ZooCheck {
    pub run: Arc<dyn Fn() -> Result<CheckOutcome> + Send + Sync>,
}

pub enum ZooEntry {
    Gradient(ZooGradient),
    Eris(ZooEris),
    Check(ZooCheck),
}

const SYSTEMS: [(&str, &str); 12] = [
    ("quadratic", "½|u|² on ℝⁿ with Euclidean dissipation; exact flow e^{−t}u⁰ [n]"),
    ("reaction3", "three-species mass-action network with log-mean Onsager operator [k1, k2, k3]"),
    ("nonsmooth_r2", "max{|u₁|, |u₂|} with metric v₁²/a + v₂²/b; closed-form flow [a, b, u1, u2]"),
    ("allen_cahn", "discrete Allen–Cahn energy with Dirichlet data [n, alpha, beta, m]"),
    ("ac_homog", "Allen–Cahn with stiffness 2 + sin(2πx/ε); homogenized reference [n, epsilon]"),
    ("fp_jko", "Fokker–Planck with φ = x²/2 by the JKO scheme on [x_min, x_max] [n, x_min, x_max]"),
    ("wiggly", "½u² + ε^α cos(u/ε) with Euclidean dissipation [epsilon, alpha, u0]"),
    ("missing_usc", "u₁(u₁² + u₂⁴)^{1/4} on ℝ² started on the axis [u1]"),
    ("eris_toy", "rate-independent toy 0 ∈ 2Sign(u̇) + u̇ + au − λt [a, lambda, T]"),
    ("eris_unidir", "unidirectional variant of eris_toy [a, lambda, T]"),
    ("polar_check", "gradient in polar coordinates versus Cartesian [a]"),
    ("mean_limits", "arithmetic and harmonic limits of ½∫A(x/ε)w² [epsilon, n]"),
];

/// Identifiers and one-line descriptions of all entries.
pub fn list_systems() -> Vec<(&'static str, &'static str)> {
    SYSTEMS.to_vec()
}

/// Reads the allowed parameters with defaults, rejecting unknown keys.
fn read<const N: usize>(id: &str, params: &Params, spec: [(&str, f64); N]) -> Result<[f64; N]> {
    for k in params.keys() {
        if !spec.iter().any(|(n, _)| n == k) {
            return Err(GflError::InvalidParameter(format!("{id} has no parameter '{k}'")));
        }
    }
    let mut out = [0.0; N];
    for (i, (name, default)) in spec.iter().enumerate() {
        let v = params.get(*name).copied().unwrap_or(*default);
        if !v.is_finite() {
            return Err(GflError::InvalidParameter(format!("{id}.{name} must be finite")));
        }
        out[i] = v;
    }
    Ok(out)
}

fn count(id: &str, name: &str, v: f64) -> Result<usize> {
    if v < 1.0 || v.fract() != 0.0 {
        return Err(GflError::InvalidParameter(format!("{id}.{name} must be a positive integer, got {v}")));
    }
    Ok(v as usize)
}

/// Sup-norm error against a closed form at the trajectory nodes.
pub fn sup_error(traj: &Trajectory, exact: &dyn Fn(f64) -> StateVec) -> f64 {
    traj.times.iter().zip(&traj.states).map(|(t, u)| (u - exact(*t)).amax()).fold(0.0, f64::max)
}

/// `sup_t ‖ū_τ(t) − u(t)‖_∞` for the left-continuous piecewise-constant
/// interpolant, against an exact solution that is affine between `kinks`.
pub fn interpolant_error(traj: &Trajectory, exact: &dyn Fn(f64) -> StateVec, kinks: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for k in 1..traj.len() {
        let (a, b) = (traj.times[k - 1], traj.times[k]);
        let mut ts = vec![a, b];
        ts.extend(kinks.iter().copied().filter(|t| *t > a && *t < b));
        for t in ts {
            worst = worst.max((&traj.states[k] - exact(t)).amax());
        }
    }
    worst
}

fn oracle_from(exact: &ExactFn) -> ErrorOracle {
    let e = exact.clone();
    Arc::new(move |traj: &Trajectory| Ok(sup_error(traj, e.as_ref())))
}

fn gradient(system: GradientSystem, u0: StateVec, t_end: f64, steps: usize, exact: Option<ExactFn>) -> ZooEntry {
    let error_oracle = exact.as_ref().map(oracle_from);
    ZooEntry::Gradient(ZooGradient { system, u0, t_end, steps, exact, error_oracle })
}

/// Builds the entry `id` with the given parameters.
pub fn build(id: &str, params: &Params) -> Result<ZooEntry> {
    match id {
        "quadratic" => {
            let [n] = read(id, params, [("n", 2.0)])?;
            let n = count(id, "n", n)?;
            let u0 = DVector::from_fn(n, |i, _| 1.0 - 0.5 * i as f64 / n as f64);
            let u0c = u0.clone();
            Ok(gradient(misc::quadratic_system(n), u0, 2.0, 200, Some(Arc::new(move |t| &u0c * (-t).exp()))))
        }
        "reaction3" => {
            let [k1, k2, k3] = read(id, params, [("k1", 1.0), ("k2", 1.0), ("k3", 1.0)])?;
            let net = reaction::ReactionNetwork::default_three([k1, k2, k3])?;
            Ok(gradient(net.system(), dvector![1.8, 0.7, 0.5], 10.0, 200, None))
        }
        "nonsmooth_r2" => {
            let [a, b, u1, u2] = read(id, params, [("a", 2.0), ("b", 1.0), ("u1", 3.0), ("u2", 1.0)])?;
            let sys = nonsmooth::nonsmooth_r2_system(a, b)?;
            let u0 = dvector![u1, u2];
            let u0c = u0.clone();
            let exact: ExactFn = Arc::new(move |t| nonsmooth::nonsmooth_r2_exact(a, b, &u0c, t));
            // MMS is exact at the nodes here, so the error is measured on ū_τ.
            let (t1, t2) = nonsmooth::kink_times(a, b, &u0);
            let e = exact.clone();
            let oracle: ErrorOracle = Arc::new(move |traj: &Trajectory| Ok(interpolant_error(traj, e.as_ref(), &[t1, t2])));
            Ok(ZooEntry::Gradient(ZooGradient { system: sys, u0, t_end: 3.0, steps: 300, exact: Some(exact), error_oracle: Some(oracle) }))
        }
        "allen_cahn" => {
            let [n, alpha, beta, m] = read(id, params, [("n", 64.0), ("alpha", 1.0), ("beta", 1.0), ("m", 1.0)])?;
            let grid = allen_cahn::Grid1D::new(count(id, "n", n)?, allen_cahn::Boundary::DirichletZero)?;
            if !(alpha > 0.0 && beta >= 0.0 && m > 0.0) {
                return Err(GflError::InvalidParameter("allen_cahn needs alpha, m > 0 and beta ≥ 0".into()));
            }
            let sys = allen_cahn::allen_cahn_system(grid, allen_cahn::AllenCahnCoefficients::plain(&grid, alpha, beta, m))?;
            let u0 = StateVec::from_iterator(grid.n, grid.nodes().iter().map(|x| 0.5 * (PI * x).sin() + 0.3 * (3.0 * PI * x).sin()));
            Ok(gradient(sys, u0, 1.0, 100, None))
        }
        "ac_homog" => {
            let [n, eps] = read(id, params, [("n", 512.0), ("epsilon", 1.0 / 16.0)])?;
            let n = count(id, "n", n)?;
            let (sys, hom) = allen_cahn::ac_homog_pair(n, eps)?;
            let u0 = allen_cahn::ac_homog_initial(n)?;
            let grid = allen_cahn::Grid1D::new(n, allen_cahn::Boundary::Neumann)?;
            let u0c = u0.clone();
            let oracle: ErrorOracle = Arc::new(move |traj: &Trajectory| {
                let reference = run_mms_partition(&hom, &u0c, &traj.times, &MmsOptions::default())?;
                Ok(grid.l2(&(traj.states.last().unwrap() - reference.states.last().unwrap())))
            });
            Ok(ZooEntry::Gradient(ZooGradient { system: sys, u0, t_end: 0.5, steps: 500, exact: None, error_oracle: Some(oracle) }))
        }
        "fp_jko" => {
            let [n, lo, hi] = read(id, params, [("n", 200.0), ("x_min", -4.0), ("x_max", 4.0)])?;
            let grid = jko::DensityGrid::new(lo, hi, count(id, "n", n)?)?;
            let sys = jko::fokker_planck_jko_system(grid, &|x| 0.5 * x * x)?;
            let u0 = grid.normalized(|x| (-(x - 1.5) * (x - 1.5) / 0.5).exp());
            Ok(gradient(sys, u0, 5.0, 500, None))
        }
        "wiggly" => {
            let [eps, alpha, u0] = read(id, params, [("epsilon", 0.01), ("alpha", 2.0), ("u0", 1.0)])?;
            let sys = wiggly::wiggly_system(eps, alpha)?;
            let start = DVector::from_element(1, u0);
            match wiggly::wiggly_regime(eps, alpha) {
                wiggly::WigglyRegime::Tracking => Ok(gradient(sys, start, 1.0, 1000, Some(Arc::new(move |t| DVector::from_element(1, u0 * (-t).exp()))))),
                wiggly::WigglyRegime::Stuck { .. } => {
                    let stuck: ExactFn = Arc::new(move |_| DVector::from_element(1, u0));
                    let oracle = oracle_from(&stuck);
                    Ok(ZooEntry::Gradient(ZooGradient { system: sys, u0: start, t_end: 1.0, steps: 1000, exact: None, error_oracle: Some(oracle) }))
                }
            }
        }
        "missing_usc" => {
            let [u1] = read(id, params, [("u1", 1.0)])?;
            if u1 < 0.0 {
                return Err(GflError::InvalidParameter("missing_usc starts on the nonnegative axis".into()));
            }
            let r0 = u1.sqrt();
            let exact: ExactFn = Arc::new(move |t| dvector![(r0 - 0.75 * t).max(0.0).powi(2), 0.0]);
            Ok(gradient(misc::missing_usc_system(), dvector![u1, 0.0], 1.0, 100, Some(exact)))
        }
        "eris_toy" | "eris_unidir" => {
            let [a, lambda, t_end] = read(id, params, [("a", 1.0), ("lambda", 2.0), ("T", 2.0)])?;
            let toy = if id == "eris_toy" { eris_toy::ErisToy::new(a, lambda, t_end)? } else { eris_toy::ErisToy::unidirectional(a, lambda, t_end)? };
            Ok(ZooEntry::Eris(ZooEris {
                system: toy.system()?,
                u0: DVector::from_element(1, 0.0),
                t_end,
                steps: 40,
                exact: Some(Arc::new(move |t| DVector::from_element(1, toy.exact(t)))),
            }))
        }
        "polar_check" => {
            let [a] = read(id, params, [("a", 1.0)])?;
            Ok(ZooEntry::Check(ZooCheck {
                run: Arc::new(move || {
                    let samples: Vec<(f64, f64)> = (1..=40).map(|k| (0.1 * k as f64, 0.61 * k as f64)).collect();
                    let worst = misc::polar_gradient_check(&misc::PolarTestEnergy { a }, &samples)?;
                    Ok(CheckOutcome { passed: worst <= 1e-8, values: BTreeMap::from([("worst_residual".to_string(), worst)]) })
                }),
            }))
        }
        "mean_limits" => {
            let [eps, n] = read(id, params, [("epsilon", 1.0 / 16.0), ("n", 2048.0)])?;
            let n = count(id, "n", n)?;
            Ok(ZooEntry::Check(ZooCheck {
                run: Arc::new(move || {
                    let w = DVector::from_element(n, 1.0);
                    let m = allen_cahn::mean_limits_check(&allen_cahn::sine_profile, eps, &w)?;
                    let values = BTreeMap::from([
                        ("f_eps_recovery".to_string(), m.f_eps_recovery),
                        ("f_harm".to_string(), m.f_harm),
                        ("f_eps_constant".to_string(), m.f_eps_constant),
                        ("f_arith".to_string(), m.f_arith),
                        ("gap".to_string(), m.gap),
                    ]);
                    Ok(CheckOutcome { passed: m.gap <= 1e-9, values })
                }),
            }))
        }
        _ => Err(GflError::InvalidParameter(format!("unknown system '{id}'"))),
    }
}

/// Builds a gradient-system entry, rejecting rate-independent and check entries.
pub fn build_gradient(id: &str, params: &Params) -> Result<ZooGradient> {
    match build(id, params)? {
        ZooEntry::Gradient(g) => Ok(g),
        _ => Err(GflError::InvalidParameter(format!("'{id}' is not a gradient system"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_listed_system_builds() {
        for (id, _) in list_systems() {
            assert!(build(id, &Params::new()).is_ok(), "{id}");
        }
        assert!(build("nope", &Params::new()).is_err());
        let bad = Params::from([("zeta".to_string(), 1.0)]);
        assert!(build("quadratic", &bad).is_err());
    }
}
