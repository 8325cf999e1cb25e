use gfl_core::mms_solver::{run_mms, MmsOptions};
use gfl_core::model_zoo::*;
use gfl_core::rate_independent::run_tims;
use std::collections::BTreeSet;

#[test]
fn registry_ids_are_unique_and_buildable() {
    let systems = list_systems();
    let ids: BTreeSet<_> = systems.iter().map(|(id, _)| *id).collect();
    assert_eq!(ids.len(), systems.len());
    for (id, desc) in systems {
        assert!(!desc.is_empty());
        build(id, &Params::new()).unwrap_or_else(|e| panic!("{id}: {e}"));
    }
}

#[test]
fn unknown_ids_and_bad_parameters_fail() {
    assert!(build("no_such_system", &Params::new()).is_err());
    let bad = Params::from([("a".to_string(), -1.0)]);
    assert!(build("eris_toy", &bad).is_err());
}

#[test]
fn check_entries_pass() {
    for (id, _) in list_systems() {
        if let ZooEntry::Check(c) = build(id, &Params::new()).unwrap() {
            let out = (c.run)().unwrap();
            assert!(out.passed, "{id}: {:?}", out.values);
        }
    }
}

#[test]
fn oracle_errors_shrink_under_refinement() {
    for id in ["quadratic", "nonsmooth_r2", "missing_usc"] {
        let g = build_gradient(id, &Params::new()).unwrap();
        let oracle = g.error_oracle.clone().or_else(|| {
            let exact = g.exact.clone()?;
            Some(std::sync::Arc::new(move |tr: &gfl_core::mms_solver::Trajectory| Ok(sup_error(tr, exact.as_ref()))) as ErrorOracle)
        });
        let oracle = oracle.unwrap_or_else(|| panic!("{id} has no oracle"));
        let errs: Vec<f64> = [20, 40, 80]
            .iter()
            .map(|n| oracle(&run_mms(&g.system, &g.u0, 0.0, g.t_end, *n, &MmsOptions::default()).unwrap()).unwrap())
            .collect();
        assert!(errs[1] < errs[0] && errs[2] < errs[1], "{id}: {errs:?}");
        let order = (errs[0] / errs[2]).log2() / 2.0;
        assert!(order > 0.8, "{id}: order {order}");
    }
}

#[test]
fn eris_entries_match_their_closed_forms() {
    for id in ["eris_toy", "eris_unidir"] {
        let ZooEntry::Eris(e) = build(id, &Params::new()).unwrap() else { panic!("{id}") };
        let times: Vec<f64> = (0..=e.steps).map(|k| e.t_end * k as f64 / e.steps as f64).collect();
        let tr = run_tims(&e.system, &e.u0, &times).unwrap();
        let exact = e.exact.unwrap();
        for (t, u) in tr.times.iter().zip(&tr.states) {
            assert!((u - exact(*t)).norm() <= 1e-10, "{id} at {t}");
        }
    }
}

#[test]
fn interpolant_error_sees_the_gap_between_nodes() {
    let tr = gfl_core::mms_solver::Trajectory::from_samples(vec![0.0, 1.0], vec![nalgebra::dvector![1.0], nalgebra::dvector![0.0]]);
    let exact = |t: f64| nalgebra::dvector![1.0 - t];
    assert_eq!(sup_error(&tr, &exact), 0.0);
    assert!((interpolant_error(&tr, &exact, &[]) - 1.0).abs() < 1e-9);
}
