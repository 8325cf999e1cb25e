use gfl_core::diagnostics::*;
use gfl_core::mms_solver::{run_mms, GradientSystem, MmsOptions, Trajectory};
use gfl_core::model_zoo::misc::{quadratic_system, HalfSquareMinusAbs};
use gfl_core::model_zoo::{build_gradient, Params};
use gfl_core::potentials::{DissipationPotential, ScalarPotential};
use gfl_core::quad::lin_grid;
use nalgebra::dvector;
use std::sync::Arc;

fn sampled(n: usize, t_end: f64, u: impl Fn(f64) -> f64) -> Trajectory {
    let times = lin_grid(0.0, t_end, n + 1);
    let states = times.iter().map(|t| dvector![u(*t)]).collect();
    Trajectory::from_samples(times, states)
}

#[test]
fn both_branches_of_the_kinked_energy_balance() {
    let sys = GradientSystem::banach("half_square_minus_abs", Arc::new(HalfSquareMinusAbs), DissipationPotential::quadratic_euclidean(1));
    for sign in [1.0, -1.0] {
        let tr = sampled(20_000, 1.0, |t| sign * (1.0 - (-t).exp()));
        let r = cms_residual(&sys, &tr, 0.0, 1.0).unwrap();
        assert!(r.abs() <= 1e-4, "sign {sign}: {r}");
    }
}

#[test]
fn edb_residual_shrinks_with_the_step_on_the_nonsmooth_system() {
    let g = build_gradient("nonsmooth_r2", &Params::new()).unwrap();
    let mut last = f64::INFINITY;
    for n in [20, 40, 80] {
        let tr = run_mms(&g.system, &g.u0, 0.0, g.t_end, n, &MmsOptions::default()).unwrap();
        let rep = edb_report(&g.system, &tr, 0.0, g.t_end, 10 * n).unwrap();
        assert!(rep.edi_holds(), "{rep:?}");
        let tau = g.t_end / n as f64;
        assert!(rep.residual.abs() <= 10.0 * tau, "N={n}: {}", rep.residual);
        assert!(rep.residual.abs() < last);
        last = rep.residual.abs();
    }
}

#[test]
fn allen_cahn_steps_satisfy_the_discrete_edi() {
    let g = build_gradient("allen_cahn", &Params::new()).unwrap();
    let tr = run_mms(&g.system, &g.u0, 0.0, g.t_end, g.steps.min(50), &MmsOptions::default()).unwrap();
    let worst = discrete_edi_check(&g.system, &tr).unwrap().into_iter().fold(f64::INFINITY, f64::min);
    assert!(worst >= -1e-9, "{worst}");
}

#[test]
fn de_giorgi_edi_from_the_diagonal() {
    let g = build_gradient("nonsmooth_r2", &Params::new()).unwrap();
    for tau in [0.05, 0.2, 1.0] {
        let r = discrete_de_giorgi_edi(&g.system, &dvector![1.0, 1.0], 0.0, tau, &MmsOptions::default()).unwrap();
        assert!(r >= -1e-6, "τ={tau}: {r}");
    }
}

#[test]
fn de_giorgi_identity_tends_to_zero_with_the_step() {
    let sys = quadratic_system(1);
    for tau in [1.0, 0.1, 1e-3] {
        let rep = de_giorgi_identity_residual(&sys, &dvector![1.0], 0.0, tau, &MmsOptions::default()).unwrap();
        assert!((rep.phi - 0.5 / (1.0 + tau)).abs() < 1e-12);
        assert!(rep.residual.abs() <= 1e-6, "τ={tau}: {rep:?}");
    }
    let rep = de_giorgi_identity_residual(&sys, &dvector![0.0], 0.0, 0.5, &MmsOptions::default()).unwrap();
    assert_eq!(rep.residual, 0.0);
}

#[test]
fn stationary_trajectories_have_no_residuals() {
    let sys = quadratic_system(1);
    let tr = sampled(10, 1.0, |_| 0.0);
    assert_eq!(chain_rule_residual(&sys, &tr, 0.5, 1e-3).unwrap(), 0.0);
    assert_eq!(cms_residual(&sys, &tr, 0.0, 1.0).unwrap(), 0.0);
    assert_eq!(edb_report(&sys, &tr, 0.0, 1.0, 10).unwrap().residual, 0.0);
}

#[test]
fn modulus_degenerate_arguments() {
    let q = ScalarPotential::quadratic();
    assert_eq!(modulus_bound(&q, 0.0, 3.0), 0.0);
    assert!(modulus_bound(&q, 1.0, 0.0) <= 1e-6);
    let p3 = ScalarPotential::power(3.0).unwrap();
    assert!(modulus_bound(&p3, 1.0, 1e-4) < modulus_bound(&p3, 1.0, 1e-2));
}

#[test]
fn young_holds_trivially_on_zero_arguments() {
    let r = DissipationPotential::NormComposed { psi: ScalarPotential::power(3.0).unwrap(), weights: vec![1.0] };
    let u = dvector![0.0];
    assert!(quantitative_young_check(&r, &u, &dvector![0.0], &dvector![5.0], 1.0, 0.0).unwrap());
    assert!(quantitative_young_check(&r, &u, &dvector![5.0], &dvector![0.0], 1.0, 0.0).unwrap());
}
