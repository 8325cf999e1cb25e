use gfl_core::mms_solver::*;
use gfl_core::model_zoo::misc::{missing_usc_recursion, missing_usc_system, quadratic_system};
use gfl_core::model_zoo::{build_gradient, Params};
use nalgebra::dvector;
use proptest::prelude::*;

#[test]
fn missing_usc_step_follows_the_recursion() {
    let tau = 0.1;
    let s = mms_step(&missing_usc_system(), &dvector![1.0, 0.0], 0.0, tau, &MmsOptions::default()).unwrap();
    let root = (9.0 * tau * tau / 16.0 + 1.0f64).sqrt() - 0.75 * tau;
    assert!((s.u[0] - root * root).abs() < 1e-9, "{}", s.u);
    assert!((s.u[0] - 0.86083).abs() < 1e-5);
    assert!(s.u[1].abs() < 1e-9);
    assert!((missing_usc_recursion(1.0, tau) - root * root).abs() < 1e-14);
}

#[test]
fn energy_is_nonincreasing_along_zoo_runs() {
    for id in ["quadratic", "reaction3", "nonsmooth_r2", "allen_cahn", "fp_jko"] {
        let g = build_gradient(id, &Params::new()).unwrap();
        let tr = run_mms(&g.system, &g.u0, 0.0, g.t_end, g.steps.min(100), &MmsOptions::default()).unwrap();
        let e: Vec<f64> = tr.states.iter().zip(&tr.times).map(|(u, t)| g.system.energy.eval(*t, u).value()).collect();
        for (k, w) in e.windows(2).enumerate() {
            assert!(w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()), "{id} step {k}: {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn partition_runs_match_uniform_runs() {
    let sys = quadratic_system(2);
    let u0 = dvector![1.0, -2.0];
    let a = run_mms(&sys, &u0, 0.0, 1.0, 8, &MmsOptions::default()).unwrap();
    let times: Vec<f64> = (0..=8).map(|k| k as f64 / 8.0).collect();
    let b = run_mms_partition(&sys, &u0, &times, &MmsOptions::default()).unwrap();
    for (x, y) in a.states.iter().zip(&b.states) {
        assert!((x - y).norm() < 1e-14);
    }
}

#[test]
fn nonuniform_partition_of_the_quadratic() {
    let times = [0.0, 0.1, 0.35, 1.0];
    let tr = run_mms_partition(&quadratic_system(1), &dvector![1.0], &times, &MmsOptions::default()).unwrap();
    let mut u = 1.0;
    for (k, w) in times.windows(2).enumerate() {
        u /= 1.0 + (w[1] - w[0]);
        assert!((tr.states[k + 1][0] - u).abs() < 1e-14);
    }
}

#[test]
fn zero_steps_are_rejected() {
    assert!(run_mms(&quadratic_system(1), &dvector![1.0], 0.0, 1.0, 0, &MmsOptions::default()).is_err());
    assert!(run_mms_partition(&quadratic_system(1), &dvector![1.0], &[0.0, 0.5, 0.5], &MmsOptions::default()).is_err());
}

#[test]
fn value_function_distances_vanish_at_small_radii() {
    let p = value_function_probe(&quadratic_system(1), &dvector![2.0], 0.0, &[1e-6, 1e-3, 1.0], &MmsOptions::default()).unwrap();
    let d = p.d_plus[0];
    assert!(d <= 1e-5, "{d}");
    for (r, dp) in [1e-6, 1e-3, 1.0].iter().zip(&p.d_plus) {
        assert!((dp - r * 2.0 / (1.0 + r)).abs() < 1e-12);
    }
    let at_min = value_function_probe(&quadratic_system(1), &dvector![0.0], 0.0, &[0.5, 1.0], &MmsOptions::default()).unwrap();
    assert!(at_min.d_plus.iter().all(|d| *d == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn quadratic_steps_are_the_prox(u in -10.0f64..10.0, tau in 1e-3f64..5.0) {
        let s = mms_step(&quadratic_system(1), &dvector![u], 0.0, tau, &MmsOptions::default()).unwrap();
        prop_assert!((s.u[0] - u / (1.0 + tau)).abs() <= 1e-12 * (1.0 + u.abs()));
    }

    #[test]
    fn interpolants_agree_at_nodes(k in 0usize..5) {
        let tr = run_mms(&quadratic_system(1), &dvector![1.0], 0.0, 1.0, 5, &MmsOptions::default()).unwrap();
        let t = tr.times[k];
        let a = interpolate(&tr, InterpolantKind::Affine, t).unwrap();
        prop_assert!((a[0] - tr.states[k][0]).abs() < 1e-15);
        let r = interpolate(&tr, InterpolantKind::ConstRight, t).unwrap();
        prop_assert!((r[0] - tr.states[k][0]).abs() < 1e-15);
    }
}
