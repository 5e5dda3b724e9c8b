use std::f64::consts::{PI, TAU};

use darkband_core::classical::*;
use darkband_core::Exec;
use proptest::prelude::*;

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

#[test]
fn energy_examples() {
    let m = Model::reference();
    assert!((energy(PhasePoint::new(PI / 2.0, 0.6), &m) - 0.18).abs() < 1e-15);
    assert_eq!(energy(PhasePoint::new(0.0, 0.0), &Model::new(0.7, 1.9)), 1.9);
    // The global minimum of the reference model sits at (π, 0).
    let mut lowest = (f64::INFINITY, 0.0, 0.0);
    for i in 0..400 {
        for k in 0..=200 {
            let p = PhasePoint::new(TAU * i as f64 / 400.0, -1.0 + 0.01 * k as f64);
            let e = energy(p, &m);
            if e < lowest.0 {
                lowest = (e, p.phi, p.eta);
            }
        }
    }
    assert_eq!(energy(PhasePoint::new(PI, 0.0), &m), -1.0);
    assert!(lowest.0 >= -1.0 && (lowest.1 - PI).abs() < 1e-12 && lowest.2.abs() < 1e-12);
}

#[test]
fn flow_examples_and_pole_error() {
    let m = Model::reference();
    assert_eq!(flow_rhs(PhasePoint::new(0.0, 0.0), &m).unwrap(), (0.0, 0.0));
    let (dphi, deta) = flow_rhs(PhasePoint::new(PI / 2.0, 0.0), &m).unwrap();
    assert!(dphi.abs() < 1e-15 && (deta - 1.0).abs() < 1e-15);
    assert!(flow_rhs(PhasePoint::new(0.3, 1.0 - 1e-13), &m).is_err());
}

#[test]
fn energy_drift_is_bounded() {
    let m = Model::reference();
    for (phi, eta) in [(0.0, 0.6), (1.1, 0.6), (2.9, -0.3), (4.4, 0.95)] {
        let tr = integrate(PhasePoint::new(phi, eta), &m, 10.0, 1e-10).unwrap();
        assert!(tr.max_drift < 1e-9, "({phi}, {eta}): {}", tr.max_drift);
        for p in &tr.points {
            assert!((energy(*p, &m) - tr.energy).abs() < 1e-9, "{} {:?}", energy(*p, &m) - tr.energy, p);
            assert!((0.0..TAU).contains(&p.phi) && p.eta.abs() <= 1.0);
        }
    }
}

#[test]
fn fixed_point_stays_put() {
    let m = Model::reference();
    let tr = integrate(PhasePoint::new(PI, 0.0), &m, 5.0, 1e-10).unwrap();
    for p in &tr.points {
        assert!(angle_gap(p.phi, PI) < 1e-12 && p.eta.abs() < 1e-12);
    }
}

#[test]
fn libration_returns_twice_per_period() {
    let m = Model::reference();
    let period = darkband_core::wkb::period(energy(PhasePoint::new(0.3, 0.6), &m), &m).unwrap();
    let hits = crossing_times(PhasePoint::new(0.3, 0.6), &m, 0.6, 3.0 * period, 1e-12).unwrap();
    assert_eq!(hits.len(), 5);
    for w in hits.windows(3) {
        assert!((w[2] - w[0] - period).abs() < 1e-7);
    }
    // Starting at φ0 = 0 puts the orbit on its turning point: the two returns
    // merge into one tangency per period.
    let p0 = PhasePoint::new(0.0, 0.6);
    let period = darkband_core::wkb::period(energy(p0, &m), &m).unwrap();
    let times: Vec<f64> = (0..=2000).map(|k| 2.0 * period * k as f64 / 2000.0).collect();
    let path = integrate_at(p0, &m, &times, 1e-12).unwrap();
    assert!(path.iter().all(|p| p.eta < 0.6 + 1e-10));
    assert!((path[1000].eta - 0.6).abs() < 1e-9 && (path[2000].eta - 0.6).abs() < 1e-9);
    assert!(path[500].eta < 0.5);
}

#[test]
fn reflection_reverses_the_flow() {
    let m = Model::reference();
    let tol = 1e-11;
    for (phi, eta, t) in [(0.4, 0.6, 3.3), (2.0, -0.2, 7.0), (5.5, 0.8, 1.4)] {
        let out = *integrate(PhasePoint::new(phi, eta), &m, t, tol).unwrap().points.last().unwrap();
        let back = integrate(PhasePoint::new(TAU - out.phi, out.eta), &m, t, tol).unwrap();
        let end = back.points.last().unwrap();
        assert!(angle_gap(end.phi, TAU - phi) < 1e-8 && (end.eta - eta).abs() < 1e-8, "({phi}, {eta})");
    }
}

#[test]
fn dense_samples_match_direct_integration() {
    let m = Model::reference();
    let p0 = PhasePoint::new(1.0, 0.6);
    let times = [0.5, 1.7, 2.9];
    let dense = integrate_at(p0, &m, &times, 1e-12).unwrap();
    for (t, p) in times.iter().zip(dense) {
        let end = *integrate(p0, &m, *t, 1e-12).unwrap().points.last().unwrap();
        assert!(angle_gap(end.phi, p.phi) < 1e-9 && (end.eta - p.eta).abs() < 1e-9);
    }
}

fn reference_ensemble(times: &[f64]) -> Ensemble {
    ensemble(0.6, 1200, times, &Model::reference(), 1e-10, Exec::Parallel).unwrap()
}

#[test]
fn ensemble_starts_on_the_initial_latitude_and_is_dark_at_three() {
    let ens = reference_ensemble(&[0.0, 3.0]);
    assert!(ens.failed.is_empty());
    assert!(ens.eta[0].iter().all(|&e| e == 0.6));
    assert!(ens.eta[1].iter().all(|&e| e < 0.6));
    let folds = detect_folds(ens.snapshot(0), CUSP_CURVATURE).unwrap();
    assert!(folds.degenerate && folds.folds.is_empty());
}

#[test]
fn two_folds_at_unit_time() {
    let ens = reference_ensemble(&[1.0]);
    let folds = detect_folds(ens.snapshot(0), CUSP_CURVATURE).unwrap();
    assert_eq!(folds.folds.len(), 2);
    let upper = folds.folds.iter().find(|f| f.kind == FoldKind::Upper).unwrap();
    let lower = folds.folds.iter().find(|f| f.kind == FoldKind::Lower).unwrap();
    // Every ensemble member lies between the two folds.
    let (lo, hi) = ens.eta[0].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &e| (a.0.min(e), a.1.max(e)));
    assert!((upper.eta - hi).abs() < 1e-5 && (lower.eta - lo).abs() < 1e-5);
    assert!(!upper.is_cusp && !lower.is_cusp);
    // Dense single-trajectory scan around the maximum as oracle.
    let m = Model::reference();
    let fine = (0..=400)
        .map(|i| upper.phi0 - 0.02 + 1e-4 * i as f64)
        .map(|p| integrate_at(PhasePoint::new(p, 0.6), &m, &[1.0], 1e-12).unwrap()[0].eta)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!((upper.eta - fine).abs() < 1e-6);
}

#[test]
fn cusp_near_the_reference_location() {
    let times: Vec<f64> = (0..=70).map(|k| 1.5 + 0.025 * k as f64).collect();
    let ens = reference_ensemble(&times);
    let cusps = find_cusps(&ens, CUSP_CURVATURE).unwrap();
    assert_eq!(cusps.len(), 1, "{cusps:?}");
    let c = cusps[0];
    assert!((c.eta + 0.6).abs() < 0.05 && (c.t - 2.4).abs() < 0.15, "{c:?}");
}

#[test]
fn fold_count_is_even_away_from_cusps() {
    let times: Vec<f64> = (1..=30).map(|k| 0.2 * k as f64).collect();
    let ens = reference_ensemble(&times);
    for k in 0..times.len() {
        let folds = detect_folds(ens.snapshot(k), CUSP_CURVATURE).unwrap();
        if !folds.folds.iter().any(|f| f.is_cusp) {
            assert_eq!(folds.folds.len() % 2, 0, "t={}", times[k]);
        }
    }
}

#[test]
fn ensemble_is_deterministic_across_execution_paths() {
    let times = [0.5, 2.0];
    let m = Model::reference();
    let a = ensemble(0.6, 64, &times, &m, 1e-10, Exec::Sequential).unwrap();
    let b = ensemble(0.6, 64, &times, &m, 1e-10, Exec::Parallel).unwrap();
    assert_eq!(a.eta, b.eta);
    assert!(ensemble(0.6, 4, &times, &m, 1e-10, Exec::Sequential).is_err());
}

#[test]
fn legacy_sign_flips_the_interaction() {
    let m = Model::reference().with_legacy_sign();
    let p = PhasePoint::new(0.7, 0.4);
    let want = (1.0 - 0.16f64).sqrt() * 0.7f64.cos() - 0.5 * 0.16;
    assert!((energy(p, &m) - want).abs() < 1e-15);
}

proptest! {
    #[test]
    fn bloch_vectors_are_unit(phi in 0.0f64..TAU, eta in -1.0f64..=1.0) {
        let [x, y, z] = bloch_xyz(PhasePoint::new(phi, eta));
        prop_assert!((x * x + y * y + z * z - 1.0).abs() < 1e-14);
        prop_assert_eq!(z, eta);
    }

    #[test]
    fn cartesian_and_canonical_energies_agree(phi in 0.0f64..TAU, eta in -0.99f64..0.99, g in 0.1f64..3.0, om in 0.1f64..3.0) {
        let m = Model::new(g, om);
        let p = PhasePoint::new(phi, eta);
        prop_assert!((energy(p, &m) - energy_xyz(bloch_xyz(p), &m)).abs() < 1e-13);
    }

    #[test]
    fn flow_preserves_energy(phi in 0.0f64..TAU, eta in -0.95f64..0.95) {
        let m = Model::reference();
        let tr = integrate(PhasePoint::new(phi, eta), &m, 4.0, 1e-10).unwrap();
        prop_assert!(tr.max_drift < 1e-9);
    }
}
