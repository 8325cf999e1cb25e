use gfl_core::evi::*;
use gfl_core::mms_solver::{run_mms, MmsOptions, Trajectory};
use gfl_core::model_zoo::misc::quadratic_system;
use gfl_core::model_zoo::{build_gradient, Params};
use nalgebra::dvector;
use proptest::prelude::*;

fn exact(u0: f64, n: usize) -> Trajectory {
    let times: Vec<f64> = (0..=n).map(|k| 2.0 * k as f64 / n as f64).collect();
    let states = times.iter().map(|t| dvector![u0 * (-t).exp()]).collect();
    Trajectory::from_samples(times, states)
}

#[test]
fn exact_quadratic_flow_satisfies_the_evi() {
    let probes = lattice_probes(&dvector![0.0], 0.5, 6);
    let rep = evi_probe(&quadratic_system(1), &exact(1.5, 400), &probes, 1.0, 2000).unwrap();
    assert!(rep.worst_violation >= -1e-4, "{rep:?}");
    assert_eq!(rep.test_points, 13);
}

#[test]
fn mms_contracts_at_the_discrete_rate() {
    let sys = quadratic_system(1);
    let (n, t_end) = (20, 2.0);
    let tau = t_end / n as f64;
    let a = run_mms(&sys, &dvector![1.0], 0.0, t_end, n, &MmsOptions::default()).unwrap();
    let b = run_mms(&sys, &dvector![-0.5], 0.0, t_end, n, &MmsOptions::default()).unwrap();
    let rate = (1.0 + tau).ln() / tau;
    let ratio = contractivity_check(&a, &b, rate, &sys.fixed_norm(), None).unwrap();
    assert!(ratio <= 1.0 + 1e-12, "{ratio}");
    // The continuous rate λ = 1 is too strong for the implicit scheme.
    assert!(contractivity_check(&a, &b, 1.0, &sys.fixed_norm(), None).unwrap() > 1.0);
}

#[test]
fn mismatched_grids_are_rejected() {
    assert!(contractivity_check(&exact(1.0, 10), &exact(1.0, 11), 1.0, &quadratic_system(1).fixed_norm(), None).is_err());
}

#[test]
fn allen_cahn_splits_into_a_semigroup() {
    let g = build_gradient("allen_cahn", &Params::new()).unwrap();
    let gap = semigroup_check(&g.system, &g.u0, 0.3 * g.t_end, g.t_end, 20, &MmsOptions::default()).unwrap();
    assert!(gap <= 1e-8, "{gap}");
}

#[test]
fn quadratic_run_regularizes() {
    let sys = quadratic_system(2);
    let tr = run_mms(&sys, &dvector![2.0, -1.0], 0.0, 1.0, 20, &MmsOptions::default()).unwrap();
    let probes = lattice_probes(&dvector![0.0, 0.0], 0.5, 3);
    assert!(regularization_violation(&sys, &tr, &probes) <= 1e-12);
}

#[test]
fn node_pairs_respect_the_cap() {
    let times: Vec<f64> = (0..100).map(f64::from).collect();
    let all = node_pairs(&times, usize::MAX);
    assert_eq!(all.len(), 100 * 99 / 2);
    let few = node_pairs(&times, 50);
    assert!(few.len() <= 50 && !few.is_empty());
    assert!(few.iter().all(|(s, t)| s < t));
}

proptest! {
    #[test]
    fn m_lambda_is_the_integral(lambda in -3.0f64..3.0, tau in 0.0f64..2.0) {
        let n = 4000;
        let h = tau / n as f64;
        let mid: f64 = (0..n).map(|i| (-lambda * (tau - (i as f64 + 0.5) * h)).exp() * h).sum();
        prop_assert!((m_lambda(lambda, tau) - mid).abs() <= 1e-6 * (1.0 + mid));
    }
}
