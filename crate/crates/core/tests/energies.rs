use gfl_core::energies::*;
use gfl_core::model_zoo::misc::{AbsDistanceToOne, HalfSquareMinusAbs};
use gfl_core::model_zoo::{build, ZooEntry};
use gfl_core::ExtReal::Finite;
use gfl_core::StateVec;
use nalgebra::dvector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn euclid() -> WeightedNorm {
    WeightedNorm::euclidean(1)
}

#[test]
fn slopes_at_kinks() {
    let d = euclid();
    let s = metric_slope(&HalfSquareMinusAbs, 0.0, &dvector![0.5], 0.1, &d).unwrap();
    assert!((s.value.value() - 0.5).abs() < 1e-9);
    let s = metric_slope(&AbsDistanceToOne, 0.0, &dvector![1.0], 0.1, &d).unwrap();
    assert!(s.value.value().abs() < 1e-9);
    let s = metric_slope(&QuadraticEnergy::euclidean(1), 0.0, &dvector![3.0], 0.1, &d).unwrap();
    assert_eq!(s.value, Finite(3.0));
}

#[test]
fn global_slope_of_the_double_cone() {
    let d = euclid();
    let u = dvector![2.0];
    let cands: Vec<StateVec> = (0..=4000).map(|i| dvector![-2.0 + 5.0 * i as f64 / 4000.0]).collect();
    let g0 = global_lambda_slope(&AbsDistanceToOne, 0.0, &u, 0.0, &cands, &d).unwrap().value();
    assert!((g0 - 1.0).abs() < 1e-9, "{g0}");
    let g = global_lambda_slope(&AbsDistanceToOne, 0.0, &u, 0.5, &cands, &d).unwrap().value();
    assert!((g - 1.25).abs() < 1e-3, "{g}");
}

#[test]
fn boltzmann_vanishes_at_equilibrium() {
    let f = BoltzmannEntropy { n: 3 };
    assert_eq!(eval_energy(&f, 0.0, &dvector![1.0, 1.0, 1.0]).unwrap(), Finite(0.0));
    assert_eq!(lambda_b(1.0), 0.0);
}

/// Every zoo energy with a declared λ satisfies λ-convexity on random
/// triples near its initial datum, and its differential matches central
/// differences.
#[test]
fn zoo_energies_are_lambda_convex_and_differentiable() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for id in ["quadratic", "reaction3", "allen_cahn", "ac_homog", "wiggly"] {
        let ZooEntry::Gradient(g) = build(id, &Default::default()).unwrap() else { panic!("{id}") };
        let f = g.system.energy.clone();
        let n = g.u0.len();
        let norm = g.system.fixed_norm();
        let mut jitter = |u: &StateVec, r: f64| u.map(|x| x + rng.gen_range(-r..r));
        let triples: Vec<_> = (0..300).map(|_| (jitter(&g.u0, 0.3), jitter(&g.u0, 0.3), 0.5)).collect();
        if let Some(lambda) = f.lambda() {
            let v = lambda_convexity_violation(f.as_ref(), 0.0, lambda, &triples, &norm);
            assert!(v <= 0.0, "{id}: λ={lambda} violated by {v}");
        }
        for (u, _, _) in triples.iter().take(20) {
            if let Some(rel) = fd_consistency(f.as_ref(), 0.0, u, 1e-6 * (1.0 + u.norm() / (n as f64).sqrt())) {
                assert!(rel <= 1e-5, "{id}: {rel}");
            }
        }
    }
}

proptest! {
    #[test]
    fn lower_bound_holds_for_the_quadratic(w in -4.0f64..4.0) {
        let f = QuadraticEnergy::euclidean(1);
        let r = lower_bound_inequality_check(&f, 0.0, &dvector![1.0], 1.0, 1.0, &dvector![w], &euclid());
        prop_assert!(r >= -1e-14);
        if w <= 1.0 {
            prop_assert!(r.abs() < 1e-13, "tight below u, got {r}");
        }
    }

    #[test]
    fn quadratic_power_is_zero_and_loaded_power_is_minus_the_state(u in -5.0f64..5.0) {
        let q = QuadraticEnergy::euclidean(1);
        prop_assert_eq!(power_of_energy(&q, 0.3, &dvector![u]).unwrap(), 0.0);
        let loaded = LoadedEnergy {
            base: std::sync::Arc::new(q),
            load: std::sync::Arc::new(|t| dvector![t]),
            load_rate: std::sync::Arc::new(|_| dvector![1.0]),
        };
        prop_assert!((power_of_energy(&loaded, 0.7, &dvector![u]).unwrap() + u).abs() < 1e-14);
    }
}
