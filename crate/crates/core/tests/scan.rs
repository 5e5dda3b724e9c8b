use std::sync::OnceLock;

use darkband_core::classical::Model;
use darkband_core::complexmech::{asymptotic_rate, branch_rate, class_envelope, dark_continuations};
use darkband_core::dicke::{DickeSpace, QuenchConfig};
use darkband_core::numerics::roots::bisect;
use darkband_core::scan::*;
use darkband_core::wkb::{caustic_times, Branch};
use darkband_core::Exec;
use proptest::prelude::*;

const ETA0: f64 = 0.6;
const T_CRIT: f64 = 3.6675163322548;

fn grid(lo: f64, step: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + step * k as f64).collect()
}

struct Pair {
    r0: RateSurface,
    r1: RateSurface,
}

fn window() -> &'static Pair {
    static PAIR: OnceLock<Pair> = OnceLock::new();
    PAIR.get_or_init(|| {
        let m = Model::reference();
        let ts = grid(3.0, 0.05, 25);
        let es = grid(0.1, 0.025, 37);
        Pair {
            r0: branch_rate_surface(Branch::Direct, &ts, &es, ETA0, &m, Exec::default()).unwrap(),
            r1: branch_rate_surface(Branch::Winding, &ts, &es, ETA0, &m, Exec::default()).unwrap(),
        }
    })
}

fn exact_row(j: f64, times: &[f64]) -> Vec<f64> {
    let cfg = QuenchConfig::reference(DickeSpace::from_j(j).unwrap(), times.to_vec());
    let s = rate_surface_exact(&cfg).unwrap();
    let i = s.etas.iter().position(|&e| e == cfg.m0 / j).unwrap();
    (0..times.len()).map(|k| s.get(k, i).unwrap()).collect()
}

#[test]
fn exact_surface_starts_on_the_initial_state() {
    let cfg = QuenchConfig::reference(DickeSpace::from_j(80.0).unwrap(), grid(0.0, 0.25, 17));
    let s = rate_surface_exact(&cfg).unwrap();
    assert_eq!(s.r.len(), s.times.len());
    assert!(s.r.iter().all(|col| col.len() == s.etas.len() && col.len() == 161));
    assert_eq!(s.source, Source::Exact { j: 80.0 });
    let i = s.etas.iter().position(|&e| e == ETA0).unwrap();
    assert!(s.get(0, i).unwrap().abs() < 1e-12);
    assert!(s.r.iter().flatten().flatten().all(|&r| r >= -1e-12));
}

#[test]
fn exact_rates_vanish_when_bright_and_converge_when_dark() {
    let bright = [1.0, 1.5, 2.0];
    let dark = [3.0, 3.3, 3.6];
    let ts: Vec<f64> = bright.iter().chain(&dark).cloned().collect();
    let (a, b) = (exact_row(80.0, &ts), exact_row(160.0, &ts));
    for k in 0..bright.len() {
        assert!(b[k] / a[k] < 0.7, "t={} {} {}", ts[k], a[k], b[k]);
    }
    for k in bright.len()..ts.len() {
        assert!(b[k] / a[k] > 0.75, "t={} {} {}", ts[k], a[k], b[k]);
        assert!(b[k] - (321f64).ln() / 160.0 > 0.05);
    }
}

#[test]
fn branch_surface_row_matches_the_branch_rate() {
    let m = Model::reference();
    let ts = grid(2.45, 0.1, 15);
    let es = [0.4, ETA0, 0.8];
    let [d, w] = dark_continuations(&ts, ETA0, &m, Exec::default()).unwrap();
    for (branch, cont) in [(Branch::Direct, d), (Branch::Winding, w)] {
        let s = branch_rate_surface(branch, &ts, &es, ETA0, &m, Exec::default()).unwrap();
        assert_eq!(s.source, Source::Branch(branch));
        for sol in &cont.solutions {
            let k = ts.iter().position(|&t| t == sol.t).unwrap();
            let r = s.get(k, 1).unwrap();
            assert!((r - branch_rate(sol).unwrap()).abs() < 1e-9, "{branch:?} t={}", sol.t);
        }
    }
}

#[test]
fn branch_rates_rise_from_zero_at_the_fold() {
    let m = Model::reference();
    for (branch, t) in [(Branch::Direct, 3.2), (Branch::Winding, 3.6)] {
        let (_, hi) = class_envelope(t, branch, ETA0, &m).unwrap();
        let es: Vec<f64> = grid(hi - 0.02, 0.005, 14);
        let s = branch_rate_surface(branch, &[t], &es, ETA0, &m, Exec::default()).unwrap();
        let r: Vec<f64> = (0..es.len()).map(|i| s.get(0, i).unwrap()).collect();
        for (e, v) in es.iter().zip(&r) {
            if *e <= hi {
                assert_eq!(*v, 0.0);
            }
        }
        let outside: Vec<f64> = es.iter().zip(&r).filter(|(e, _)| **e > hi).map(|(_, v)| *v).collect();
        assert!(outside[0] < 1e-3, "{branch:?}: {}", outside[0]);
        assert!(outside.windows(2).all(|w| w[1] > w[0]), "{branch:?}: {outside:?}");
    }
}

#[test]
fn switching_line_crosses_the_initial_latitude_at_the_dpt() {
    let p = window();
    let line = switching_line(&p.r0, &p.r1).unwrap();
    let at = line.iter().find(|q| (q.1 - ETA0).abs() < 1e-12).unwrap();
    assert!((at.0 - T_CRIT).abs() < 5e-3, "{at:?}");
}

#[test]
fn switching_line_is_a_level_set_of_the_branch_gap() {
    let m = Model::reference();
    let p = window();
    let line = switching_line(&p.r0, &p.r1).unwrap();
    for q in line.iter().step_by(5) {
        let r0 = branch_rate_surface(Branch::Direct, &[q.0], &[q.1], ETA0, &m, Exec::default()).unwrap();
        let r1 = branch_rate_surface(Branch::Winding, &[q.0], &[q.1], ETA0, &m, Exec::default()).unwrap();
        let (a, b) = (r0.get(0, 0).unwrap(), r1.get(0, 0).unwrap());
        // Linear interpolation over cells of 0.05 × 0.025.
        assert!((a - b).abs() < 5e-3, "{q:?}: {a} {b}");
    }
}

#[test]
fn switching_line_starts_where_the_folds_cross() {
    let m = Model::reference();
    let gap = |t: f64| {
        class_envelope(t, Branch::Direct, ETA0, &m).unwrap().1 - class_envelope(t, Branch::Winding, ETA0, &m).unwrap().1
    };
    let t_x = bisect(gap, 3.45, 3.55, 1e-9).unwrap();
    let eta_x = class_envelope(t_x, Branch::Direct, ETA0, &m).unwrap().1;
    let p = window();
    let line = switching_line(&p.r0, &p.r1).unwrap();
    let low = line.iter().cloned().fold((0.0, f64::INFINITY), |a, q| if q.1 < a.1 { q } else { a });
    assert!((low.0 - t_x).abs() < 0.1 && (low.1 - eta_x).abs() < 0.075, "{low:?} vs ({t_x}, {eta_x})");
}

#[test]
fn switching_line_is_one_connected_curve() {
    let p = window();
    let mut line = switching_line(&p.r0, &p.r1).unwrap();
    assert!(line.len() > 20);
    line.sort_by(|a, b| a.1.total_cmp(&b.1));
    let cell = (0.05f64.powi(2) + 0.025f64.powi(2)).sqrt();
    for w in line.windows(2) {
        let d = ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
        assert!(d <= cell, "{:?} -> {:?}", w[0], w[1]);
    }
    assert!(line.last().unwrap().1 > 0.95);
}

#[test]
fn mismatched_surfaces_are_rejected() {
    let p = window();
    let mut other = p.r1.clone();
    other.etas.pop();
    assert!(switching_line(&p.r0, &other).is_err());
}

#[test]
fn branch_minimum_bounds_the_exact_surface() {
    let m = Model::reference();
    let j = 350.0;
    let ts = grid(2.8, 0.1, 12);
    let ms = [158.0, 175.0, 193.0, 210.0, 228.0, 245.0, 263.0, 280.0];
    let es: Vec<f64> = ms.iter().map(|m| m / j).collect();
    let cfg = QuenchConfig::reference(DickeSpace::from_j(j).unwrap(), ts.clone());
    let exact = rate_surface_exact(&cfg).unwrap();
    let r0 = branch_rate_surface(Branch::Direct, &ts, &es, ETA0, &m, Exec::default()).unwrap();
    let r1 = branch_rate_surface(Branch::Winding, &ts, &es, ETA0, &m, Exec::default()).unwrap();
    let slack = j.ln() / j;
    // Spectral synthesis resolves probabilities down to about 1e-28.
    let resolvable = -(1e-26f64).ln() / j;
    let mut checked = 0;
    for k in 0..ts.len() {
        for (i, &e) in es.iter().enumerate() {
            let (Some(a), Some(b)) = (r0.get(k, i), r1.get(k, i)) else { continue };
            if a <= 0.0 || b <= 0.0 {
                continue;
            }
            let ie = exact.etas.iter().position(|&x| x == e).unwrap();
            let r = exact.get(k, ie).unwrap();
            if r > resolvable {
                continue;
            }
            assert!(a.min(b) - slack <= r, "t={} eta={e}: {} vs {r}", ts[k], a.min(b));
            checked += 1;
        }
    }
    assert!(checked > 25, "{checked}");
}

#[test]
fn dpt_from_the_branches() {
    let m = Model::reference();
    let coarse = grid(2.4, 0.075, 21);
    let fine = grid(2.4, 0.0375, 41);
    let a = branch_dpt(&coarse, ETA0, &m, Exec::default()).unwrap().unwrap();
    let b = branch_dpt(&fine, ETA0, &m, Exec::default()).unwrap().unwrap();
    assert!((a.t_c - 3.7).abs() <= 0.15);
    assert!((a.t_c - T_CRIT).abs() < 1e-7, "{}", a.t_c);
    assert!((a.t_c - b.t_c).abs() < 1e-6);
    assert!((a.r - 0.15486469855425).abs() < 1e-7);
    let (c1, c2) = caustic_times(ETA0, &m).unwrap();
    assert!(c1.t < a.t_c && a.t_c < c2.t);
    // Both branches bright: no crossing.
    assert!(branch_dpt(&grid(0.5, 0.1, 10), ETA0, &m, Exec::default()).unwrap().is_none());
}

#[test]
fn dark_band_extrapolation_meets_the_asymptotic_rate() {
    let m = Model::reference();
    let ts = [3.6, T_CRIT];
    let asym = asymptotic_rate(&ts, ETA0, &m, Exec::default()).unwrap();
    let rows: Vec<(f64, Vec<f64>)> = [80.0, 160.0, 350.0].iter().map(|&j| (j, exact_row(j, &ts))).collect();
    for k in 0..ts.len() {
        let s: Vec<(f64, f64)> = rows.iter().map(|(j, r)| (*j, r[k])).collect();
        let e = finite_size_extrapolate(&s, FOCK_LOG_WEIGHT).unwrap();
        assert!((e.r_inf - asym.r[k]).abs() <= 2.0 * e.error, "t={}: {e:?} vs {}", ts[k], asym.r[k]);
        assert!(!e.low_confidence);
    }
}

#[test]
fn bright_extrapolation_is_consistent_with_zero() {
    let ts = grid(0.5, 0.05, 37);
    let rows: Vec<(f64, Vec<f64>)> = [80.0, 160.0, 350.0].iter().map(|&j| (j, exact_row(j, &ts))).collect();
    let fits: Vec<Extrapolation> = (0..ts.len())
        .map(|k| {
            let s: Vec<(f64, f64)> = rows.iter().map(|(j, r)| (*j, r[k])).collect();
            finite_size_extrapolate(&s, FOCK_LOG_WEIGHT).unwrap()
        })
        .collect();
    let within = fits.iter().filter(|e| e.r_inf.abs() <= 2.0 * e.error).count();
    assert!(within as f64 >= 0.85 * fits.len() as f64, "{within}/{}", fits.len());
    let mean = fits.iter().map(|e| e.r_inf).sum::<f64>() / fits.len() as f64;
    assert!(mean.abs() < 5e-3, "{mean}");
}

#[test]
fn extrapolation_flags_non_monotone_sizes() {
    let e = finite_size_extrapolate(&[(40.0, 0.2), (80.0, 0.1), (160.0, 0.15)], 0.0).unwrap();
    assert!(e.low_confidence);
    assert!(finite_size_extrapolate(&[(40.0, 0.2), (40.0, 0.1), (160.0, 0.15)], 0.0).is_err());
    assert!(finite_size_extrapolate(&[(40.0, 0.2), (80.0, f64::NAN), (160.0, 0.15)], 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn linear_data_is_recovered(a in -1.0f64..1.0, b in -5.0f64..5.0, c in -20.0f64..20.0, four in any::<bool>()) {
        let js: &[f64] = if four { &[40.0, 80.0, 160.0, 350.0] } else { &[40.0, 80.0, 160.0] };
        let quad = if four { c } else { 0.0 };
        let s: Vec<(f64, f64)> = js.iter().map(|&j| (j, a + b / j + quad / (j * j) + (2.0 * j + 1.0).ln() / j)).collect();
        let e = finite_size_extrapolate(&s, FOCK_LOG_WEIGHT).unwrap();
        prop_assert!((e.r_inf - a).abs() < 1e-10);
        prop_assert!(e.residual < 1e-10);
    }

    #[test]
    fn symmetric_pairs_cross_at_the_midpoint(a in 0.0f64..2.0, w in 0.5f64..3.0, p in 1.2f64..2.5) {
        let b = a + w;
        let f = move |x: f64| x.max(0.0).powf(p);
        let d = locate_dpt(|t| Ok(f(t - a)), |t| Ok(f(b - t)), a, b).unwrap().unwrap();
        prop_assert!((d.t_c - 0.5 * (a + b)).abs() < 2.0 * DPT_TOL);
    }
}
