use gfl_core::potentials::*;
use gfl_core::ExtReal::{Finite, PosInf};
use nalgebra::{dvector, DMatrix};
use std::sync::Arc;
use proptest::prelude::*;

fn pairs() -> Vec<ConjugatePair> {
    vec![
        ConjugatePair::new(ScalarPotential::quadratic()),
        ConjugatePair::new(ScalarPotential::power(3.0).unwrap()),
        ConjugatePair::new(ScalarPotential::power(1.5).unwrap()),
        ConjugatePair::new(ScalarPotential::viscoplastic(1.0, 2.0).unwrap()),
        ConjugatePair::new(ScalarPotential::rate_independent()),
    ]
}

#[test]
fn closed_form_values() {
    assert_eq!(eval_potential(&ScalarPotential::quadratic(), 2.0).unwrap(), Finite(2.0));
    assert_eq!(eval_potential(&ScalarPotential::viscoplastic(1.0, 2.0).unwrap(), 2.0).unwrap(), Finite(6.0));
    let p3 = ConjugatePair::new(ScalarPotential::power(3.0).unwrap());
    assert!((eval_conjugate(&p3, 1.0).unwrap().value() - 2.0 / 3.0).abs() < 1e-14);
    let ri = ConjugatePair::new(ScalarPotential::rate_independent());
    assert_eq!(eval_conjugate(&ri, 0.5).unwrap(), Finite(0.0));
    assert_eq!(eval_conjugate(&ri, 2.0).unwrap(), PosInf);
}

#[test]
fn invalid_parameters_are_rejected() {
    assert!(ScalarPotential::power(1.0).is_err());
    assert!(ScalarPotential::viscoplastic(1.0, 0.0).is_err());
}

#[test]
fn rate_independent_subdifferential_at_rest() {
    let ri = ConjugatePair::new(ScalarPotential::rate_independent());
    assert_eq!(check_fenchel_equivalences(&ri, 0.0, 0.7, 1e-8).as_tuple(), (true, true, true));
    assert_eq!(check_fenchel_equivalences(&ri, 0.0, 1.3, 1e-8).as_tuple(), (false, false, false));
}

#[test]
fn vector_dissipations() {
    let g = DissipationPotential::OnsagerQuadratic(OnsagerForm::Metric(Arc::new(|_| DMatrix::from_diagonal(&dvector![2.0, 1.0]))));
    let k = DissipationPotential::OnsagerQuadratic(OnsagerForm::Onsager(Arc::new(|_| DMatrix::from_diagonal(&dvector![0.5, 1.0]))));
    let u = dvector![0.0, 0.0];
    assert!((eval_dissipation(&g, &u, &dvector![1.0, 1.0]).unwrap().value() - 1.5).abs() < 1e-14);
    assert!((eval_dual_dissipation(&g, &u, &dvector![2.0, 1.0]).unwrap().value() - 1.5).abs() < 1e-14);
    assert!((eval_dissipation(&k, &u, &dvector![1.0, 1.0]).unwrap().value() - 1.5).abs() < 1e-12);
}

proptest! {
    #[test]
    fn fenchel_young_gap_is_nonnegative(v in -5.0f64..5.0, xi in -5.0f64..5.0) {
        for pair in pairs() {
            let gap = fenchel_young_gap(&pair, v, xi);
            prop_assert!(gap.value() >= -1e-12, "{:?} at ({v}, {xi}): {gap:?}", pair.primal.kind);
        }
    }

    #[test]
    fn gap_vanishes_on_the_derivative(v in 0.01f64..4.0) {
        for pair in pairs().into_iter().take(4) {
            let xi = pair.primal.derivative(v);
            prop_assert!(fenchel_young_gap(&pair, v, xi).value().abs() <= 1e-9 * (1.0 + xi.abs() * v));
        }
    }

    #[test]
    fn numeric_conjugate_agrees_with_closed_form(zeta in 0.0f64..6.0) {
        for pair in pairs().into_iter().take(4) {
            let exact = eval_conjugate(&pair, zeta).unwrap().value();
            let num = pair.primal.numeric_conjugate(zeta, &ConjugateOptions::default()).unwrap().value();
            prop_assert!((exact - num).abs() <= 1e-8 * (1.0 + exact.abs()), "{:?} ζ={zeta}: {exact} vs {num}", pair.primal.kind);
        }
    }

    #[test]
    fn biconjugate_recovers_the_potential(r in 0.0f64..3.0) {
        for pair in pairs().into_iter().take(4) {
            let conj = |z: f64| eval_conjugate(&pair, z);
            let bi = numeric_conjugate_fn(conj, r, &ConjugateOptions::default()).unwrap().value();
            let psi = eval_potential(&pair.primal, r).unwrap().value();
            prop_assert!((bi - psi).abs() <= 1e-8 * (1.0 + psi), "{:?} r={r}: {bi} vs {psi}", pair.primal.kind);
        }
    }

    #[test]
    fn midpoint_convexity(a in 0.0f64..5.0, b in 0.0f64..5.0) {
        for pair in pairs() {
            let psi = &pair.primal;
            let mid = eval_potential(psi, 0.5 * (a + b)).unwrap().value();
            let avg = 0.5 * (eval_potential(psi, a).unwrap().value() + eval_potential(psi, b).unwrap().value());
            prop_assert!(mid <= avg + 1e-12);
        }
    }
}
