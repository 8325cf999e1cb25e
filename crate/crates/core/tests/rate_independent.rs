use gfl_core::model_zoo::eris_toy::ErisToy;
use gfl_core::rate_independent::*;
use gfl_core::ExtReal::Finite;
use nalgebra::dvector;
use std::sync::Arc;

fn uniform(t_end: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| t_end * k as f64 / n as f64).collect()
}

#[test]
fn tims_reproduces_the_toy_solution() {
    let toy = ErisToy::new(1.0, 2.0, 2.0).unwrap();
    let sys = toy.system().unwrap();
    let tr = run_tims(&sys, &dvector![0.0], &uniform(2.0, 40)).unwrap();
    for (t, u) in tr.times.iter().zip(&tr.states) {
        assert!((u[0] - toy.exact(*t)).abs() <= 1e-10, "t={t}: {} vs {}", u[0], toy.exact(*t));
    }
    assert!(tr.initial_state_stable);
    assert!(tr.stability.iter().all(|s| *s >= -1e-9));
    let props = tims_properties(&sys, &tr).unwrap();
    assert!(props.holds(1e-9), "{props:?}");
}

#[test]
fn toy_energetic_residuals() {
    let toy = ErisToy::new(1.0, 2.0, 2.0).unwrap();
    let sys = toy.system().unwrap();
    let tr = run_tims(&sys, &dvector![0.0], &uniform(2.0, 200)).unwrap();
    let res = energetic_solution_residuals(&sys, &tr, PowerQuadrature::HoldLeft).unwrap();
    assert!(res.stability_worst >= -1e-9);
    // Forward motion costs 3 per unit, so Var_D is three times the rise of u.
    assert!((res.variation - 3.0 * toy.exact(2.0)).abs() < 1e-9, "{res:?}");
    assert!(res.energy_balance.abs() <= 2e-2, "{res:?}");
    let lower = chain_rule_lower_estimate(&sys, &tr, 0.0, 2.0).unwrap();
    assert!(lower >= -1e-9, "{lower}");
}

#[test]
fn unidirectional_toy_never_decreases() {
    let toy = ErisToy::unidirectional(1.0, 2.0, 2.0).unwrap();
    let sys = toy.system().unwrap();
    let tr = run_tims(&sys, &dvector![0.0], &uniform(2.0, 40)).unwrap();
    assert!(tr.states.windows(2).all(|w| w[1][0] >= w[0][0]));
}

#[test]
fn reparametrized_time_gives_the_same_states() {
    let toy = ErisToy::new(1.0, 2.0, 2.0).unwrap();
    let sys = toy.system().unwrap();
    let phi: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(|s: f64| s * s / 2.0);
    let dphi: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(|s: f64| s);
    let gap = rate_independence_check(&sys, &dvector![0.0], &uniform(2.0, 40), phi, &|t: f64| (2.0 * t).sqrt(), dphi).unwrap();
    assert!(gap <= 1e-12, "{gap}");
}

#[test]
fn power_bound_holds_on_samples() {
    let toy = ErisToy::new(1.0, 2.0, 2.0).unwrap();
    let sys = toy.system().unwrap();
    let samples: Vec<_> = (0..=20).flat_map(|i| (-10..=10).map(move |j| (0.1 * i as f64, dvector![0.3 * j as f64]))).collect();
    assert!(sys.power_bound_violation(&samples).unwrap() <= 0.0);
}

#[test]
fn asymmetric_norm_rejects_bad_rates() {
    assert!(AsymmetricNorm::new(-1.0, 1.0).is_err());
    let d = AsymmetricNorm::new(2.0, 0.5).unwrap();
    assert_eq!(d.eval(&dvector![0.0], &dvector![-2.0]), Finite(1.0));
}

#[test]
fn curve_variation_converges() {
    let d = AsymmetricNorm::new(1.0, 1.0).unwrap();
    let (v, change) = var_dissipation_curve(&d, &|t| dvector![(std::f64::consts::PI * t).sin()], 0.0, 1.0, 64);
    assert!((v - 2.0).abs() < 1e-3 && change < 1e-2, "{v} {change}");
}
