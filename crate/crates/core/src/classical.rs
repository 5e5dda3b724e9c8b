//! Classical limit on the Bloch sphere: mean-field energy, Hamilton's
//! equations, trajectory ensembles and caustic (fold/cusp) detection.
//!
//! Trajectories are integrated in Cartesian coordinates `(x, y, z)` on the
//! unit sphere, where the flow `ṡ = ∇H × s` is polynomial and regular at the
//! poles; `(φ, η)` are recovered for output.

use std::f64::consts::{PI, TAU};

use crate::error::{numeric, Result};
use crate::exec::Exec;
use crate::numerics::ode::{Dopri5, Flow};

/// Mean-field couplings. A negative `g` selects the alternative sign of the
/// interaction term, `H = Ω√(1−η²)cos φ − (|G|/2)η²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Model {
    pub g: f64,
    pub omega: f64,
}

impl Model {
    pub fn new(g: f64, omega: f64) -> Self {
        Self { g, omega }
    }

    /// `G = Ω = 1`.
    pub fn reference() -> Self {
        Self { g: 1.0, omega: 1.0 }
    }

    pub fn with_legacy_sign(self) -> Self {
        Self { g: -self.g.abs(), ..self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhasePoint {
    pub phi: f64,
    pub eta: f64,
}

impl PhasePoint {
    pub fn new(phi: f64, eta: f64) -> Self {
        Self { phi, eta }
    }

    /// Radially projects `s` onto the unit sphere first.
    pub fn from_xyz(s: [f64; 3]) -> Self {
        let norm = (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt();
        let eta = (s[2] / norm).clamp(-1.0, 1.0);
        Self { phi: wrap_angle(s[1].atan2(s[0])), eta }
    }
}

/// Angle reduced to `[0, 2π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

pub fn energy(p: PhasePoint, m: &Model) -> f64 {
    0.5 * m.g * p.eta * p.eta + m.omega * (1.0 - p.eta * p.eta).max(0.0).sqrt() * p.phi.cos()
}

/// `H` in Cartesian form, `(G/2) z² + Ω x`.
pub fn energy_xyz(s: [f64; 3], m: &Model) -> f64 {
    0.5 * m.g * s[2] * s[2] + m.omega * s[0]
}

/// `(dφ/dt, dη/dt)`. Errors within `1e-12` of a pole, where the angle is undefined.
pub fn flow_rhs(p: PhasePoint, m: &Model) -> Result<(f64, f64)> {
    if p.eta.abs() >= 1.0 - 1e-12 {
        return numeric(format!("flow evaluated at pole η = {}", p.eta));
    }
    let r = (1.0 - p.eta * p.eta).sqrt();
    let dphi = m.g * p.eta - m.omega * p.eta * p.phi.cos() / r;
    let deta = m.omega * r * p.phi.sin();
    Ok((dphi, deta))
}

/// Cartesian velocity `∇H × s`.
pub fn flow_xyz(s: &[f64], m: &Model, out: &mut [f64]) {
    let (x, y, z) = (s[0], s[1], s[2]);
    out[0] = -m.g * z * y;
    out[1] = m.g * z * x - m.omega * z;
    out[2] = m.omega * y;
}

pub fn bloch_xyz(p: PhasePoint) -> [f64; 3] {
    let r = (1.0 - p.eta * p.eta).max(0.0).sqrt();
    [r * p.phi.cos(), r * p.phi.sin(), p.eta]
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
    pub energy: f64,
    pub max_drift: f64,
}

fn stepper(tol: f64) -> Dopri5 {
    Dopri5::with_tol(tol, tol * 1e-2)
}

/// Integrate from `p0`, sampling at every accepted step.
pub fn integrate(p0: PhasePoint, m: &Model, t_end: f64, tol: f64) -> Result<Trajectory> {
    let s0 = bloch_xyz(p0);
    let e0 = energy_xyz(s0, m);
    let mut times = vec![0.0];
    let mut points = vec![p0];
    let mut max_drift = 0.0f64;
    stepper(tol).solve_observed(
        |_t, s, d| flow_xyz(s, m, d),
        0.0,
        &s0,
        t_end,
        |step| {
            let p = PhasePoint::from_xyz([step.y1[0], step.y1[1], step.y1[2]]);
            max_drift = max_drift.max((energy(p, m) - e0).abs());
            times.push(step.t1);
            points.push(p);
            Flow::Continue
        },
    )?;
    Ok(Trajectory { times, points, energy: e0, max_drift })
}

/// Positions at the requested (increasing, non-negative) times via dense output.
pub fn integrate_at(p0: PhasePoint, m: &Model, times: &[f64], tol: f64) -> Result<Vec<PhasePoint>> {
    let mut out = Vec::with_capacity(times.len());
    let mut next = 0;
    while next < times.len() && times[next] <= 0.0 {
        out.push(p0);
        next += 1;
    }
    let Some(&t_end) = times.last() else { return Ok(out) };
    if next == times.len() {
        return Ok(out);
    }
    let mut buf = [0.0; 3];
    stepper(tol).solve_observed(
        |_t, s, d| flow_xyz(s, m, d),
        0.0,
        &bloch_xyz(p0),
        t_end,
        |step| {
            while next < times.len() && times[next] <= step.t1 {
                step.interpolate(times[next], &mut buf);
                out.push(PhasePoint::from_xyz(buf));
                next += 1;
            }
            Flow::Continue
        },
    )?;
    Ok(out)
}

/// Times in `(0, t_end]` at which `η(t)` crosses `level`, located on the dense output.
pub fn crossing_times(p0: PhasePoint, m: &Model, level: f64, t_end: f64, tol: f64) -> Result<Vec<f64>> {
    let mut hits = Vec::new();
    let mut buf = [0.0; 3];
    stepper(tol).solve_observed(
        |_t, s, d| flow_xyz(s, m, d),
        0.0,
        &bloch_xyz(p0),
        t_end,
        |step| {
            let (a, b) = (step.y0[2] - level, step.y1[2] - level);
            // Skip the trivial root at t = 0 when starting on the level.
            let a_live = if step.t0 == 0.0 && a.abs() < 1e-14 { 0.0 } else { a };
            if a_live != 0.0 && a_live.signum() != b.signum() {
                let root = crate::numerics::roots::brent(
                    |t| {
                        step.interpolate(t, &mut buf);
                        buf[2] - level
                    },
                    step.t0,
                    step.t1,
                    1e-14,
                );
                if let Ok(t) = root {
                    hits.push(t);
                }
            }
            Flow::Continue
        },
    )?;
    Ok(hits)
}

/// `η(t; φ0)` for `n_traj` initial angles uniform in `[0, 2π)` at every requested time.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub times: Vec<f64>,
    pub phi0: Vec<f64>,
    /// `eta[k][i]`: time `k`, trajectory `i`.
    pub eta: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    /// Trajectories whose integration failed; their entries are NaN.
    pub failed: Vec<usize>,
}

impl Ensemble {
    pub fn snapshot(&self, k: usize) -> Snapshot<'_> {
        Snapshot { phi0: &self.phi0, eta: &self.eta[k] }
    }
}

pub fn ensemble(
    eta0: f64,
    n_traj: usize,
    times: &[f64],
    m: &Model,
    tol: f64,
    exec: Exec,
) -> Result<Ensemble> {
    if n_traj < 8 {
        return crate::error::config(format!("ensemble needs at least 8 trajectories, got {n_traj}"));
    }
    let phi0: Vec<f64> = (0..n_traj).map(|i| TAU * i as f64 / n_traj as f64).collect();
    let runs = exec.map(&phi0, |&p| integrate_at(PhasePoint::new(p, eta0), m, times, tol));
    let nt = times.len();
    let mut eta = vec![vec![f64::NAN; n_traj]; nt];
    let mut phi = vec![vec![f64::NAN; n_traj]; nt];
    let mut failed = Vec::new();
    for (i, run) in runs.into_iter().enumerate() {
        match run {
            Ok(pts) => {
                for (k, p) in pts.iter().enumerate() {
                    eta[k][i] = p.eta;
                    phi[k][i] = p.phi;
                }
            }
            Err(_) => failed.push(i),
        }
    }
    Ok(Ensemble { times: times.to_vec(), phi0, eta, phi, failed })
}

/// `η(φ0)` at a fixed time on a uniform periodic grid of initial angles.
#[derive(Clone, Copy, Debug)]
pub struct Snapshot<'a> {
    pub phi0: &'a [f64],
    pub eta: &'a [f64],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FoldKind {
    /// Local maximum of `η(φ0)`: upper envelope.
    Upper,
    /// Local minimum: lower envelope.
    Lower,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fold {
    pub eta: f64,
    pub phi0: f64,
    pub kind: FoldKind,
    /// Second derivative `∂²η/∂φ0²` of the local quadratic fit.
    pub curvature: f64,
    pub is_cusp: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Folds {
    pub folds: Vec<Fold>,
    /// The snapshot is constant (e.g. `t = 0`); no projection singularities exist.
    pub degenerate: bool,
}

/// Default curvature threshold below which a fold is flagged as cusp-like.
pub const CUSP_CURVATURE: f64 = 0.05;

/// Stationary points of the projection `φ0 → η`, refined by a three-point
/// quadratic fit. Folds whose curvature is below `cusp_curvature`, or that sit
/// on adjacent grid cells (two folds about to annihilate), are flagged as cusps.
pub fn detect_folds(snap: Snapshot<'_>, cusp_curvature: f64) -> Result<Folds> {
    let n = snap.eta.len();
    if n < 3 || snap.phi0.len() != n {
        return numeric("snapshot too small for fold detection");
    }
    if snap.eta.iter().any(|v| !v.is_finite()) {
        return numeric("snapshot contains failed trajectories");
    }
    let spread = snap.eta.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
        - snap.eta.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if spread < 1e-13 {
        return Ok(Folds { folds: Vec::new(), degenerate: true });
    }
    let h = TAU / n as f64;
    let at = |i: isize| snap.eta[i.rem_euclid(n as isize) as usize];
    let mut idx = Vec::new();
    for i in 0..n as isize {
        let (a, b, c) = (at(i - 1), at(i), at(i + 1));
        let upper = b > a && b >= c;
        let lower = b < a && b <= c;
        if upper || lower {
            idx.push(i);
        }
    }
    let mut folds: Vec<Fold> = idx
        .iter()
        .map(|&i| {
            let (a, b, c) = (at(i - 1), at(i), at(i + 1));
            let curv = (a - 2.0 * b + c) / (h * h);
            let slope = (c - a) / (2.0 * h);
            let shift = if curv != 0.0 { (-slope / curv).clamp(-h, h) } else { 0.0 };
            let eta = b + slope * shift + 0.5 * curv * shift * shift;
            Fold {
                eta,
                phi0: wrap_angle(snap.phi0[i as usize] + shift),
                kind: if c - 2.0 * b + a < 0.0 { FoldKind::Upper } else { FoldKind::Lower },
                curvature: curv,
                is_cusp: curv.abs() < cusp_curvature,
            }
        })
        .collect();
    for w in 0..idx.len() {
        let next = (w + 1) % idx.len();
        let gap = (idx[next] - idx[w]).rem_euclid(n as isize);
        if idx.len() > 1 && gap <= 1 {
            folds[w].is_cusp = true;
            folds[next].is_cusp = true;
        }
    }
    Ok(Folds { folds, degenerate: false })
}

/// Highest upper fold whose initial angle lies in `[lo, hi)`.
pub fn upper_envelope(folds: &Folds, lo: f64, hi: f64) -> Option<Fold> {
    folds
        .folds
        .iter()
        .filter(|f| f.kind == FoldKind::Upper && f.phi0 >= lo && f.phi0 < hi)
        .copied()
        .max_by(|a, b| a.eta.total_cmp(&b.eta))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cusp {
    pub t: f64,
    pub eta: f64,
    pub phi0: f64,
}

/// Cusps where a new pair of folds is born between consecutive snapshots.
/// Time and position are taken midway between the bracketing snapshots and
/// at the mean of the newborn pair.
pub fn find_cusps(ens: &Ensemble, cusp_curvature: f64) -> Result<Vec<Cusp>> {
    let mut out = Vec::new();
    let mut prev: Option<Folds> = None;
    for k in 0..ens.times.len() {
        let folds = detect_folds(ens.snapshot(k), cusp_curvature)?;
        if let Some(p) = &prev {
            if !p.degenerate && folds.folds.len() > p.folds.len() {
                // Newborn folds: those with no counterpart of the same kind nearby in φ0.
                let fresh: Vec<&Fold> = folds
                    .folds
                    .iter()
                    .filter(|f| {
                        !p.folds.iter().any(|q| {
                            let d = (q.phi0 - f.phi0).rem_euclid(TAU);
                            q.kind == f.kind && d.min(TAU - d) < 0.25
                        })
                    })
                    .collect();
                if fresh.len() >= 2 {
                    let n = fresh.len() as f64;
                    out.push(Cusp {
                        t: 0.5 * (ens.times[k - 1] + ens.times[k]),
                        eta: fresh.iter().map(|f| f.eta).sum::<f64>() / n,
                        phi0: fresh.iter().map(|f| f.phi0).sum::<f64>() / n,
                    });
                }
            }
        }
        prev = Some(folds);
    }
    Ok(out)
}

/// Initial-angle classes: returns that pass the upper turning point first
/// start with `φ0 ∈ (0, π)`, the others with `φ0 ∈ (π, 2π)`.
pub fn class_range(k: usize) -> (f64, f64) {
    if k == 0 {
        (0.0, PI)
    } else {
        (PI, TAU)
    }
}
