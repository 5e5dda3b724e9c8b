use std::f64::consts::PI;

use darkband_core::classical::{self, Model, PhasePoint};
use darkband_core::dicke::{build_hamiltonian, diagonalize, DickeSpace};
use darkband_core::numerics::quad::{integrate_pieces, Tolerance};
use darkband_core::wkb::*;
use proptest::prelude::*;

const ETA0: f64 = 0.6;

/// Enclosed area as the measure of `{H < ε}` over the whole cylinder.
fn area_oracle(eps: f64, m: &Model) -> f64 {
    let tol = Tolerance { abs: 1e-13, rel: 1e-12, max_intervals: 20000 };
    let mut f = |eta: f64| {
        let c = (eps - 0.5 * m.g * eta * eta) / (m.omega * (1.0 - eta * eta).sqrt());
        2.0 * PI - 2.0 * c.clamp(-1.0, 1.0).acos()
    };
    let mut cuts = vec![-1.0, 1.0];
    // Latitudes where the cosine argument saturates.
    for i in 1..4000 {
        let a = -1.0 + 2.0 * (i - 1) as f64 / 3999.0;
        let b = -1.0 + 2.0 * i as f64 / 3999.0;
        let g = |eta: f64| (eps - 0.5 * m.g * eta * eta).abs() - m.omega * (1.0 - eta * eta).sqrt();
        if g(a).signum() != g(b).signum() {
            cuts.push(darkband_core::numerics::roots::brent(g, a, b, 1e-15).unwrap());
        }
    }
    cuts.sort_by(f64::total_cmp);
    integrate_pieces(&mut f, &cuts, tol).unwrap().value
}

#[test]
fn round_trip_action_is_enclosed_area() {
    for m in [Model::reference(), Model::new(0.5, 1.3)] {
        for eps in [-0.9, -0.3, 0.1, 0.2, 0.45, 0.6, 0.95] {
            let eps = eps * m.omega;
            let s = round_trip_action(eps, &m).unwrap();
            let oracle = area_oracle(eps, &m);
            assert!((s - oracle).abs() < 1e-8, "ε={eps}: {s} vs {oracle}");
        }
    }
}

#[test]
fn round_trip_action_limits() {
    let m = Model::reference();
    assert_eq!(round_trip_action(-1.0, &m).unwrap(), 0.0);
    assert_eq!(round_trip_action(1.0, &m).unwrap(), 4.0 * PI);
    let below = round_trip_action(0.5 - 1e-9, &m).unwrap();
    let above = round_trip_action(0.5 + 1e-9, &m).unwrap();
    assert!((below - above).abs() < 1e-7);
}

#[test]
fn reduced_action_vanishes_at_the_turning_point() {
    let m = Model::reference();
    for eps in [-0.4, 0.3, 0.8] {
        let (top, _) = upper_turning(eps, &m).unwrap();
        assert!(reduced_action(eps, top, &m).unwrap().abs() < 1e-14);
    }
    assert!(reduced_action(0.9, 0.9, &m).is_err());
}

#[test]
fn derivative_and_direct_return_times_agree() {
    let m = Model::reference();
    let (lo, hi) = energy_window(ETA0, &m);
    for i in 1..24 {
        let eps = lo + (hi - lo) * i as f64 / 24.0;
        for b in Branch::BOTH {
            let d = return_time(eps, b, ETA0, &m).unwrap();
            let q = return_time_direct(eps, b, ETA0, &m).unwrap();
            assert!((d - q).abs() < 1e-6 * q.max(1.0), "ε={eps} {b:?}: {d} vs {q}");
        }
    }
}

#[test]
fn return_times_match_timed_trajectories() {
    let m = Model::reference();
    for eps in [-0.4, 0.1, 0.3, 0.7, 0.9] {
        let phi0 = initial_angle(eps, Branch::Direct, ETA0, &m).unwrap();
        let t0 = return_time(eps, Branch::Direct, ETA0, &m).unwrap();
        let t1 = return_time(eps, Branch::Winding, ETA0, &m).unwrap();
        let start = PhasePoint::new(phi0, ETA0);
        let hits = classical::crossing_times(start, &m, ETA0, t0 + t1 + 1.0, 1e-12).unwrap();
        assert!((hits[0] - t0).abs() < 1e-6, "ε={eps}: {} vs {t0}", hits[0]);
        assert!((hits[1] - (t0 + t1)).abs() < 1e-6);
        let winding = PhasePoint::new(2.0 * PI - phi0, ETA0);
        let hits = classical::crossing_times(winding, &m, ETA0, t1 + 0.5, 1e-12).unwrap();
        assert!((hits[0] - t1).abs() < 1e-6);
    }
}

#[test]
fn reference_caustic_times() {
    let m = Model::reference();
    let (first, second) = caustic_times(ETA0, &m).unwrap();
    assert!((first.t - 2.379074907638).abs() < 1e-8, "{first:?}");
    assert!((first.phi0 - 0.453307531783).abs() < 1e-6);
    assert!((second.t - 3.945760696415).abs() < 1e-8, "{second:?}");
    assert!((second.phi0 - (2.0 * PI - 2.14233978)).abs() < 1e-6);
}

#[test]
fn first_caustic_is_tangent_to_the_classical_envelope() {
    let m = Model::reference();
    let (first, _) = caustic_times(ETA0, &m).unwrap();
    let times = [first.t - 0.02, first.t + 0.02];
    let ens = classical::ensemble(ETA0, 4000, &times, &m, 1e-11, darkband_core::Exec::Parallel).unwrap();
    let reach = |k: usize| ens.eta[k].iter().cloned().fold(f64::MIN, f64::max);
    assert!(reach(0) > ETA0 && reach(1) < ETA0);
}

#[test]
fn stationary_energy_counts() {
    let m = Model::reference();
    let (first, second) = caustic_times(ETA0, &m).unwrap();
    assert_eq!(stationary_energies(first.t - 0.3, Branch::Direct, ETA0, &m).unwrap().len(), 2);
    assert!(stationary_energies(first.t + 0.3, Branch::Direct, ETA0, &m).unwrap().is_empty());
    let at = stationary_energies(first.t, Branch::Direct, ETA0, &m).unwrap();
    assert_eq!(at.len(), 1);
    assert!(at[0].degenerate);
    assert!(stationary_energies(second.t - 0.3, Branch::Winding, ETA0, &m).unwrap().is_empty());
    let two = stationary_energies(second.t + 0.3, Branch::Winding, ETA0, &m).unwrap();
    assert_eq!(two.len(), 2);
    for s in two {
        let t = return_time(s.eps, Branch::Winding, ETA0, &m).unwrap();
        assert!((t - second.t - 0.3).abs() < 1e-7);
    }
}

#[test]
fn bohr_sommerfeld_tracks_exact_levels() {
    let m = Model::reference();
    for j in [40.0, 350.0] {
        let space = DickeSpace::from_j(j).unwrap();
        let es = diagonalize(space, &build_hamiltonian(space, m.g, m.omega)).unwrap();
        let levels = bohr_sommerfeld(space, &m).unwrap();
        assert_eq!(levels.len(), space.dim() - 1);
        let width = 2.0 * m.omega;
        let worst = levels
            .iter()
            .filter(|l| !l.near_separatrix)
            .map(|l| (l.eps - es.energies[l.n] / j).abs() / width)
            .fold(0.0, f64::max);
        assert!(worst * j < 0.3, "j={j}: {}", worst * j);
    }
}

#[test]
fn unsupported_models_are_rejected() {
    assert!(round_trip_action(0.0, &Model::new(2.0, 1.0)).is_err());
    assert!(caustic_times(ETA0, &Model::reference().with_legacy_sign()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn area_is_monotone(a in -0.999f64..0.999, b in -0.999f64..0.999) {
        let m = Model::reference();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-6);
        let (s_lo, s_hi) = (round_trip_action(lo, &m).unwrap(), round_trip_action(hi, &m).unwrap());
        prop_assert!(s_lo < s_hi && s_lo >= 0.0 && s_hi <= 4.0 * PI);
    }

    #[test]
    fn branch_times_sum_to_the_period(frac in 0.02f64..0.98) {
        let m = Model::reference();
        let (lo, hi) = energy_window(ETA0, &m);
        let eps = lo + frac * (hi - lo);
        let p = period(eps, &m).unwrap();
        let sum = return_time(eps, Branch::Direct, ETA0, &m).unwrap()
            + return_time(eps, Branch::Winding, ETA0, &m).unwrap();
        prop_assert!((sum - p).abs() < 1e-6 * p);
    }
}
