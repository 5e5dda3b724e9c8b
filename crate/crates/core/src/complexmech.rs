//! Complex classical trajectories for the dark band.
//!
//! Inside the dark band no real trajectory from latitude `η0` comes back to
//! it, and the return amplitude is carried by complex solutions of Hamilton's
//! equations. The initial angle `φ0` is continued into the complex plane and
//! fixed by shooting on `η(t) = η_target`. The action of that solution sets
//! the exponential decay: its imaginary part gives the rate, and the real
//! parts make up the interference phases.
//!
//! Trajectories are integrated holomorphically in Cartesian form,
//! `(x, y, z)` with `x² + y² + z² = 1`. The angle `φ` and the action
//! `W = ∫ −φ ż ds − ε t` ride along as extra components. The square root
//! `√(1−η²)` is never evaluated along the path. At the end it is recovered
//! as `x cos φ + y sin φ`, which continues analytically by construction.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::classical::{class_range, integrate_at, Model, PhasePoint};
use crate::error::{numeric, Error, Result};
use crate::exec::Exec;
use crate::numerics::ode::{Dopri5, Flow};
use crate::numerics::roots::{brent, golden_min};
use crate::wkb::{caustic_times, initial_angle, stationary_energies, Branch, Caustic};

/// Integration tolerance used for shooting.
pub const TOL: f64 = 1e-11;
/// Boundary residual below which a saddle counts as converged.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Forward-difference step of the shooting Jacobian.
pub const JACOBIAN_STEP: f64 = 1e-7;
/// Imaginary kick that splits a coalescing real pair into its complex pair.
pub const CAUSTIC_KICK: f64 = 1e-2;
/// Central-difference step for the prefactor derivative.
pub const PREFACTOR_STEP: f64 = 1e-5;
/// `|∂η(t)/∂φ0|` below which the prefactor is reported as divergent.
pub const DIVERGENCE_TOL: f64 = 1e-6;

const MAX_NEWTON: usize = 40;
const BRANCH_GUARD: f64 = 1e-10;
/// Largest accepted jump of `φ0` between consecutive continuation points.
const MAX_JUMP: f64 = 0.3;
const SEED_SAMPLES: usize = 240;
/// `Im W` down to this value still counts as the decaying (physical) root.
const PHYSICAL_SLACK: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexPhasePoint {
    pub phi: Complex64,
    pub eta: Complex64,
    /// `√(1−η²)` continued along the path.
    pub root: Complex64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexEnd {
    pub point: ComplexPhasePoint,
    pub action: Complex64,
    pub energy: Complex64,
    /// Largest `|H − ε|` over accepted steps.
    pub max_drift: f64,
}

fn pack(v: [Complex64; 5]) -> [f64; 10] {
    let mut s = [0.0; 10];
    for (i, z) in v.iter().enumerate() {
        s[2 * i] = z.re;
        s[2 * i + 1] = z.im;
    }
    s
}

fn at(s: &[f64], i: usize) -> Complex64 {
    Complex64::new(s[2 * i], s[2 * i + 1])
}

fn put(out: &mut [f64], i: usize, z: Complex64) {
    out[2 * i] = z.re;
    out[2 * i + 1] = z.im;
}

fn rhs(s: &[f64], m: &Model, out: &mut [f64]) {
    let (x, y, z, phi) = (at(s, 0), at(s, 1), at(s, 2), at(s, 3));
    let dz = m.omega * y;
    put(out, 0, -m.g * z * y);
    put(out, 1, m.g * z * x - m.omega * z);
    put(out, 2, dz);
    put(out, 3, m.g * z - m.omega * z * x / (1.0 - z * z));
    put(out, 4, -phi * dz);
}

fn complex_energy(x: Complex64, z: Complex64, m: &Model) -> Complex64 {
    0.5 * m.g * z * z + m.omega * x
}

/// Integrate from `(φ0, η0)` to `t_end`, accumulating the action.
pub fn integrate_complex(phi0: Complex64, eta0: f64, t_end: f64, m: &Model, tol: f64) -> Result<ComplexEnd> {
    if !(eta0.abs() < 1.0) {
        return numeric(format!("initial latitude {eta0} is not inside the sphere"));
    }
    let r = (1.0 - eta0 * eta0).sqrt();
    let z0 = Complex64::new(eta0, 0.0);
    let x0 = r * phi0.cos();
    let s0 = pack([x0, r * phi0.sin(), z0, phi0, Complex64::new(0.0, 0.0)]);
    let energy = complex_energy(x0, z0, m);
    let mut max_drift = 0.0f64;
    let mut hit_branch = None;
    let sol = Dopri5::with_tol(tol, tol * 1e-2).solve_observed(
        |_t, s, d| rhs(s, m, d),
        0.0,
        &s0,
        t_end,
        |step| {
            let z = at(step.y1, 2);
            if (1.0 - z * z).norm() < BRANCH_GUARD {
                hit_branch = Some(step.t1);
                return Flow::Stop;
            }
            max_drift = max_drift.max((complex_energy(at(step.y1, 0), z, m) - energy).norm());
            Flow::Continue
        },
    )?;
    if let Some(t) = hit_branch {
        return numeric(format!("trajectory reached the branch point η² = 1 at t = {t}"));
    }
    let y = &sol.y;
    let (x, yy, z, phi) = (at(y, 0), at(y, 1), at(y, 2), at(y, 3));
    Ok(ComplexEnd {
        point: ComplexPhasePoint { phi, eta: z, root: x * phi.cos() + yy * phi.sin() },
        action: at(y, 4) - energy * t_end,
        energy,
        max_drift,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SaddleSolution {
    pub t: f64,
    pub branch: Branch,
    pub eta0: f64,
    pub eta_target: f64,
    pub phi0: Complex64,
    pub action: Complex64,
    pub energy: Complex64,
    pub converged: bool,
    pub residual: f64,
    /// The shooting Jacobian vanished: a caustic.
    pub degenerate: bool,
}

impl SaddleSolution {
    pub fn is_physical(&self) -> bool {
        self.action.im >= -PHYSICAL_SLACK
    }
}

fn end_eta(phi0: Complex64, eta0: f64, t: f64, m: &Model) -> Result<Complex64> {
    Ok(integrate_complex(phi0, eta0, t, m, TOL)?.point.eta)
}

/// Newton iteration on `η(t; φ0) = η_target` from `seed`. The map is
/// holomorphic, so one forward difference gives the full 2×2 Jacobian.
pub fn shoot_return(
    t: f64,
    branch: Branch,
    eta0: f64,
    eta_target: f64,
    seed: Complex64,
    m: &Model,
) -> Result<SaddleSolution> {
    if !(t > 0.0) {
        return numeric(format!("shooting needs t > 0, got {t}"));
    }
    let mut p = seed;
    let mut f = end_eta(p, eta0, t, m)? - eta_target;
    let mut best = (f.norm(), p);
    let mut degenerate = false;
    for _ in 0..MAX_NEWTON {
        if f.norm() < 1e-13 {
            break;
        }
        let d = (end_eta(p + JACOBIAN_STEP, eta0, t, m)? - eta_target - f) / JACOBIAN_STEP;
        if d.norm() < 1e-12 {
            degenerate = true;
            break;
        }
        let step = f / d;
        // Backtrack while the residual grows.
        let mut lambda = 1.0;
        let mut next = None;
        for _ in 0..8 {
            let q = p - lambda * step;
            if let Ok(eta) = end_eta(q, eta0, t, m) {
                let g = eta - eta_target;
                if g.norm() < f.norm() {
                    next = Some((q, g));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let Some((q, g)) = next else { break };
        let stalled = g.norm() > 0.5 * f.norm();
        p = q;
        f = g;
        if f.norm() < best.0 {
            best = (f.norm(), p);
        }
        if stalled && f.norm() < RESIDUAL_TOL {
            break;
        }
    }
    let (residual, p) = best;
    let end = integrate_complex(p, eta0, t, m, TOL)?;
    Ok(SaddleSolution {
        t,
        branch,
        eta0,
        eta_target,
        phi0: p,
        action: end.action,
        energy: end.energy,
        converged: residual < RESIDUAL_TOL,
        residual,
        degenerate,
    })
}

/// Rate contribution `2 Im W` of a converged physical saddle.
pub fn branch_rate(sol: &SaddleSolution) -> Result<f64> {
    if !sol.converged {
        return numeric(format!("saddle at t = {} did not converge (residual {:e})", sol.t, sol.residual));
    }
    if !sol.is_physical() {
        return numeric(format!("saddle at t = {} grows (Im W = {:e})", sol.t, sol.action.im));
    }
    Ok(2.0 * sol.action.im.max(0.0))
}

fn sample_latitudes(t: f64, branch: Branch, eta0: f64, m: &Model) -> Result<(Vec<f64>, Vec<f64>)> {
    let (a, b) = class_range(branch.index());
    let phis: Vec<f64> = (0..SEED_SAMPLES).map(|i| a + (b - a) * (i as f64 + 0.5) / SEED_SAMPLES as f64).collect();
    let etas = phis
        .iter()
        .map(|&p| Ok(integrate_at(PhasePoint::new(p, eta0), m, &[t], 1e-12)?[0].eta))
        .collect::<Result<Vec<_>>>()?;
    Ok((phis, etas))
}

fn real_eta(phi0: f64, t: f64, eta0: f64, m: &Model) -> f64 {
    integrate_at(PhasePoint::new(phi0, eta0), m, &[t], 1e-12).map(|v| v[0].eta).unwrap_or(f64::NAN)
}

/// Extreme interior fold of the class at time `t`: `(φ*, η*, ∂²η/∂φ0²)`.
fn extreme_fold(phis: &[f64], etas: &[f64], upper: bool, t: f64, eta0: f64, m: &Model) -> Result<(f64, f64, f64)> {
    let s = if upper { 1.0 } else { -1.0 };
    let i = (1..etas.len() - 1)
        .filter(|&i| s * etas[i] >= s * etas[i - 1] && s * etas[i] >= s * etas[i + 1])
        .max_by(|&a, &b| (s * etas[a]).total_cmp(&(s * etas[b])))
        .ok_or_else(|| Error::Numeric(format!("no interior fold at t = {t}")))?;
    let (p, e) = golden_min(|x| -s * real_eta(x, t, eta0, m), phis[i - 1], phis[i + 1], 1e-10);
    let h = 1e-3;
    let curv = (real_eta(p + h, t, eta0, m) + real_eta(p - h, t, eta0, m) + 2.0 * s * e) / (h * h);
    Ok((p, -s * e, curv))
}

fn pick_physical(cands: impl IntoIterator<Item = Result<SaddleSolution>>) -> Option<SaddleSolution> {
    cands
        .into_iter()
        .filter_map(|c| c.ok())
        .filter(|c| c.converged && c.is_physical())
        .min_by(|a, b| a.action.im.total_cmp(&b.action.im))
}

/// Starting saddle for the class at `(t, η_target)`, built from the real
/// ensemble at time `t`. Beyond the extreme fold `η* + ½η''(φ0 − φ*)²`
/// puts the complex pair at `φ* ± √(2(η_target − η*)/η'')`; inside the
/// class range the real root next to the matching fold is used.
pub fn seed_saddle(t: f64, branch: Branch, eta0: f64, eta_target: f64, m: &Model) -> Result<SaddleSolution> {
    let (phis, etas) = sample_latitudes(t, branch, eta0, m)?;
    let hi = etas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = etas.iter().cloned().fold(f64::INFINITY, f64::min);
    let shoot = |seed: Complex64| shoot_return(t, branch, eta0, eta_target, seed, m);
    if eta_target > hi || eta_target < lo {
        let (p, e, curv) = extreme_fold(&phis, &etas, eta_target > hi, t, eta0, m)?;
        let w = Complex64::new(2.0 * (eta_target - e) / curv, 0.0).sqrt();
        let p = Complex64::new(p, 0.0);
        return pick_physical([shoot(p + w), shoot(p - w)])
            .ok_or_else(|| Error::Numeric(format!("no decaying saddle beyond the fold at t = {t}")));
    }
    let upper = eta_target >= 0.5 * (hi + lo);
    let anchor = etas
        .iter()
        .enumerate()
        .max_by(|a, b| if upper { a.1.total_cmp(b.1) } else { b.1.total_cmp(a.1) })
        .map(|(i, _)| i)
        .unwrap_or(0);
    let i = (0..etas.len() - 1)
        .filter(|&i| (etas[i] - eta_target).signum() != (etas[i + 1] - eta_target).signum())
        .min_by_key(|&i| i.abs_diff(anchor))
        .ok_or_else(|| Error::Numeric(format!("no real return at t = {t}")))?;
    let p = brent(|x| real_eta(x, t, eta0, m) - eta_target, phis[i], phis[i + 1], 1e-13)?;
    let sol = shoot(Complex64::new(p, 0.0))?;
    if !sol.converged {
        return numeric(format!("real return at t = {t} failed to polish"));
    }
    Ok(sol)
}

/// One continuation step from `prev` (and the point before it, if any) to
/// the boundary data `(t, η_target)`; only one of the two may change.
fn advance(
    t: f64,
    eta_target: f64,
    prev: &SaddleSolution,
    before: Option<&SaddleSolution>,
    m: &Model,
) -> Option<SaddleSolution> {
    let param = |s: &SaddleSolution| if t != prev.t { s.t } else { s.eta_target };
    let x = if t != prev.t { t } else { eta_target };
    let pred = match before {
        Some(b) if param(prev) != param(b) => prev.phi0 + (prev.phi0 - b.phi0) * ((x - param(prev)) / (param(prev) - param(b))),
        _ => prev.phi0,
    };
    let shoot = |seed: Complex64| shoot_return(t, prev.branch, prev.eta0, eta_target, seed, m);
    let near = |s: &SaddleSolution| (s.phi0 - prev.phi0).norm() < MAX_JUMP;
    let first = shoot(pred).ok().filter(|s| s.converged && s.is_physical() && near(s));
    if first.is_some() {
        return first;
    }
    let kick = Complex64::new(0.0, CAUSTIC_KICK);
    let base = prev.phi0;
    pick_physical([shoot(base), shoot(base + kick), shoot(base - kick), shoot(base.conj())].map(|r| {
        r.and_then(|s| if near(&s) { Ok(s) } else { numeric("continuation jumped") })
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Continuation {
    pub branch: Branch,
    /// Tracked saddles, in the order of the input grid.
    pub solutions: Vec<SaddleSolution>,
    /// Grid time at which tracking was lost.
    pub broken_at: Option<f64>,
}

/// Follow a saddle of `branch` along `t_grid`. `Direct` saddles are born at
/// the first caustic and followed forward in time, `Winding` ones are born
/// at the second caustic and followed backward; the grid is walked in that
/// direction starting from its first point.
pub fn continue_branch(branch: Branch, t_grid: &[f64], eta0: f64, eta_target: f64, m: &Model) -> Result<Continuation> {
    let mut order: Vec<f64> = t_grid.to_vec();
    order.sort_by(f64::total_cmp);
    if branch == Branch::Winding {
        order.reverse();
    }
    let mut out: Vec<SaddleSolution> = Vec::with_capacity(order.len());
    let mut broken_at = None;
    for &t in &order {
        let next = match out.len() {
            0 => Some(seed_saddle(t, branch, eta0, eta_target, m)?),
            n => advance(t, eta_target, &out[n - 1], n.checked_sub(2).map(|k| &out[k]), m),
        };
        match next {
            Some(s) => out.push(s),
            None => {
                broken_at = Some(t);
                break;
            }
        }
    }
    out.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(Continuation { branch, solutions: out, broken_at })
}

/// Rate of one branch at an arbitrary time, tracked from a nearby saddle.
pub fn track(near: &SaddleSolution, t: f64, m: &Model) -> Result<SaddleSolution> {
    advance(t, near.eta_target, near, None, m).ok_or_else(|| Error::Numeric(format!("lost the {:?} saddle at t = {t}", near.branch)))
}

/// Follow `start` at fixed time through the target latitudes `targets`,
/// in the given order, with intermediate steps no larger than
/// [`HELPER_STEP`]. Returns one entry per target until tracking is lost.
pub fn continue_in_target(start: &SaddleSolution, targets: &[f64], m: &Model) -> Vec<SaddleSolution> {
    let mut out = Vec::with_capacity(targets.len());
    let mut prev = *start;
    let mut before: Option<SaddleSolution> = None;
    for &e in targets {
        let n = ((e - prev.eta_target).abs() / HELPER_STEP).ceil().max(1.0) as usize;
        let from = prev.eta_target;
        for k in 1..=n {
            let ek = if k == n { e } else { from + (e - from) * k as f64 / n as f64 };
            if ek == prev.eta_target {
                continue;
            }
            match advance(prev.t, ek, &prev, before.as_ref(), m) {
                Some(s) => {
                    before = Some(prev);
                    prev = s;
                }
                None => return out,
            }
        }
        out.push(prev);
    }
    out
}

/// Range `[lo, hi]` of latitudes reached at time `t` by real trajectories of
/// the class; outside it the class contributes only complex saddles.
pub fn class_envelope(t: f64, branch: Branch, eta0: f64, m: &Model) -> Result<(f64, f64)> {
    let (phis, etas) = sample_latitudes(t, branch, eta0, m)?;
    let top = etas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bottom = etas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = extreme_fold(&phis, &etas, true, t, eta0, m).map_or(top, |f| f.1.max(top));
    let lo = extreme_fold(&phis, &etas, false, t, eta0, m).map_or(bottom, |f| f.1.min(bottom));
    Ok((lo, hi))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateCurve {
    pub times: Vec<f64>,
    pub r0: Vec<Option<f64>>,
    pub r1: Vec<Option<f64>>,
    /// Minimum of the branch rates inside the dark band, zero outside.
    pub r: Vec<f64>,
    pub caustics: (Caustic, Caustic),
    /// Time at which the two branch rates cross.
    pub kink: Option<f64>,
    pub broken_at: Option<f64>,
}

/// Spacing of the helper points that carry a branch from its caustic to the grid.
const HELPER_STEP: f64 = 0.02;

/// Saddle just inside the dark side of a caustic, split off the coalesced
/// real solution by an imaginary kick.
pub fn caustic_saddle(c: &Caustic, offset: f64, eta0: f64, m: &Model) -> Result<SaddleSolution> {
    let t = match c.branch {
        Branch::Direct => c.t + offset,
        Branch::Winding => c.t - offset,
    };
    let p = Complex64::new(c.phi0, 0.0);
    let kick = Complex64::new(0.0, CAUSTIC_KICK);
    let shoot = |s: Complex64| shoot_return(t, c.branch, eta0, eta0, s, m);
    pick_physical([shoot(p + kick), shoot(p - kick)])
        .ok_or_else(|| Error::Numeric(format!("no decaying saddle next to the caustic at t = {}", c.t)))
}

/// Continue both branches from their caustics over the part of the grid
/// where each is complex: `Direct` after the first caustic, `Winding`
/// before the second.
pub fn dark_continuations(t_grid: &[f64], eta0: f64, m: &Model, exec: Exec) -> Result<[Continuation; 2]> {
    let (c1, c2) = caustic_times(eta0, m)?;
    let parts = exec.try_map(&[c1, c2], |c| {
        let b = c.branch;
        let mut ts: Vec<f64> = match b {
            Branch::Direct => t_grid.iter().cloned().filter(|&t| t > c.t).collect(),
            Branch::Winding => t_grid.iter().cloned().filter(|&t| t < c.t && t > 0.0).collect(),
        };
        let dir = if b == Branch::Direct { 1.0 } else { -1.0 };
        ts.sort_by(|x, y| (dir * x).total_cmp(&(dir * y)));
        let mut out = Continuation { branch: b, solutions: Vec::new(), broken_at: None };
        let Some(&first) = ts.first() else { return Ok(out) };
        let start_offset = (dir * (first - c.t)).min(HELPER_STEP);
        let mut path = vec![caustic_saddle(c, start_offset, eta0, m)?];
        let mut before: Option<SaddleSolution> = None;
        for t in ts {
            // Walk to `t` through helper points no further apart than HELPER_STEP.
            let last_t = path.last().expect("non-empty").t;
            let n = ((dir * (t - last_t)) / HELPER_STEP).ceil().max(1.0) as usize;
            let mut lost = false;
            for k in 1..=n {
                let tk = if k == n { t } else { last_t + (t - last_t) * k as f64 / n as f64 };
                let prev = *path.last().expect("non-empty");
                if prev.t == tk {
                    continue;
                }
                match advance(tk, eta0, &prev, before.as_ref(), m) {
                    Some(s) => {
                        before = Some(prev);
                        path.push(s);
                    }
                    None => {
                        lost = true;
                        break;
                    }
                }
            }
            if lost {
                out.broken_at = Some(t);
                break;
            }
            out.solutions.push(*path.last().expect("non-empty"));
        }
        out.solutions.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(out)
    })?;
    let [a, b]: [Continuation; 2] = parts.try_into().expect("two branches");
    Ok([a, b])
}

fn lookup(c: &Continuation, t: f64) -> Option<&SaddleSolution> {
    c.solutions.iter().find(|s| s.t == t)
}

/// Asymptotic rate `min(r0, r1)` over the grid, with the branch crossing.
pub fn asymptotic_rate(t_grid: &[f64], eta0: f64, m: &Model, exec: Exec) -> Result<RateCurve> {
    let (c1, c2) = caustic_times(eta0, m)?;
    let [d, w] = dark_continuations(t_grid, eta0, m, exec)?;
    let rate = |c: &Continuation, t: f64| lookup(c, t).and_then(|s| branch_rate(s).ok());
    let r0: Vec<Option<f64>> = t_grid.iter().map(|&t| rate(&d, t)).collect();
    let r1: Vec<Option<f64>> = t_grid.iter().map(|&t| rate(&w, t)).collect();
    let r = t_grid
        .iter()
        .zip(r0.iter().zip(&r1))
        .map(|(&t, (a, b))| {
            if t <= c1.t || t >= c2.t {
                return 0.0;
            }
            match (a, b) {
                (Some(a), Some(b)) => a.min(*b),
                (Some(a), None) | (None, Some(a)) => *a,
                (None, None) => f64::NAN,
            }
        })
        .collect();
    let kink = locate_crossing(t_grid, &r0, &r1, &d, &w, m)?;
    Ok(RateCurve {
        times: t_grid.to_vec(),
        r0,
        r1,
        r,
        caustics: (c1, c2),
        kink,
        broken_at: d.broken_at.or(w.broken_at),
    })
}

fn locate_crossing(
    ts: &[f64],
    r0: &[Option<f64>],
    r1: &[Option<f64>],
    d: &Continuation,
    w: &Continuation,
    m: &Model,
) -> Result<Option<f64>> {
    let diff: Vec<Option<f64>> = r0.iter().zip(r1).map(|(a, b)| Some((*a)? - (*b)?)).collect();
    let Some(i) = (0..ts.len().saturating_sub(1)).find(|&i| match (diff[i], diff[i + 1]) {
        (Some(a), Some(b)) => a.signum() != b.signum(),
        _ => false,
    }) else {
        return Ok(None);
    };
    let (sd, sw) = (lookup(d, ts[i]).copied(), lookup(w, ts[i]).copied());
    let (Some(sd), Some(sw)) = (sd, sw) else { return Ok(None) };
    let gap = |t: f64| -> f64 {
        let a = track(&sd, t, m).and_then(|s| branch_rate(&s));
        let b = track(&sw, t, m).and_then(|s| branch_rate(&s));
        match (a, b) {
            (Ok(a), Ok(b)) => a - b,
            _ => f64::NAN,
        }
    };
    Ok(Some(brent(gap, ts[i], ts[i + 1], 1e-10)?))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prefactor {
    /// `∂η(t)/∂φ0` at the saddle.
    pub derivative: Complex64,
    /// `|∂φ0/∂η(t)|^{1/2}`.
    pub amplitude: f64,
    pub divergent: bool,
}

/// Van Vleck factor of a saddle by central differences of the shooting map
/// along the complex initial angle.
pub fn van_vleck_prefactor(sol: &SaddleSolution, m: &Model, step: f64) -> Result<Prefactor> {
    if !sol.converged {
        return numeric("prefactor needs a converged saddle");
    }
    let up = end_eta(sol.phi0 + step, sol.eta0, sol.t, m)?;
    let down = end_eta(sol.phi0 - step, sol.eta0, sol.t, m)?;
    let derivative = (up - down) / (2.0 * step);
    let size = derivative.norm();
    Ok(Prefactor { derivative, amplitude: size.powf(-0.5), divergent: size < DIVERGENCE_TOL })
}

/// Overall normalisation of the saddle amplitudes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Normalization {
    /// `|a|² = j/(2j+1)² · |∂φ0/∂η(t)|`, from the Fock state written as a
    /// plane wave in `φ`.
    #[default]
    Fock,
    /// `|a|² = 1/(2πj) · |∂φ0/∂η(t)|`, plain stationary phase on the
    /// unit-normalised Fourier integral.
    Fourier,
}

/// Logarithm of the complex amplitude `c · (∂η/∂φ0)^{−1/2} e^{ijW}` of one saddle.
pub fn saddle_log_amplitude(sol: &SaddleSolution, pre: &Prefactor, j: f64, norm: Normalization) -> Complex64 {
    let log_scale = match norm {
        Normalization::Fock => 0.5 * (j / (2.0 * j + 1.0).powi(2)).ln(),
        Normalization::Fourier => -0.5 * (2.0 * PI * j).ln(),
    };
    log_scale - 0.5 * pre.derivative.ln() + Complex64::i() * j * sol.action
}

/// `ln |Σ exp(c_k)|`, safe against underflow of the individual terms.
fn log_abs_sum(logs: &[Complex64]) -> f64 {
    let top = logs.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return f64::NEG_INFINITY;
    }
    let sum: Complex64 = logs.iter().map(|c| (c - top).exp()).sum();
    top + sum.norm().ln()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SemiclassicalPoint {
    pub t: f64,
    pub l: f64,
    /// `ln L`, finite where `l` underflows.
    pub log_l: f64,
    pub saddles: usize,
    /// A contributing saddle sits on a caustic; `l` is not meaningful.
    pub divergent: bool,
    /// Inside the dark band with only one branch available.
    pub single_branch: bool,
}

/// Real saddles of the branch at `t` (zero, one or two).
pub fn real_saddles(t: f64, branch: Branch, eta0: f64, m: &Model) -> Result<Vec<SaddleSolution>> {
    let mut out = Vec::new();
    for s in stationary_energies(t, branch, eta0, m)? {
        let p = initial_angle(s.eps, branch, eta0, m)?;
        let sol = shoot_return(t, branch, eta0, eta0, Complex64::new(p, 0.0), m)?;
        if sol.converged {
            out.push(sol);
        }
    }
    Ok(out)
}

/// Coherent sum of all saddle contributions at each grid time.
pub fn semiclassical_loschmidt(
    j: f64,
    t_grid: &[f64],
    eta0: f64,
    m: &Model,
    norm: Normalization,
    exec: Exec,
) -> Result<Vec<SemiclassicalPoint>> {
    let (c1, c2) = caustic_times(eta0, m)?;
    let dark = dark_continuations(t_grid, eta0, m, exec)?;
    exec.try_map(t_grid, |&t| {
        let mut saddles = Vec::new();
        let mut missing = false;
        for (b, cont) in Branch::BOTH.iter().zip(&dark) {
            let complex_side = match b {
                Branch::Direct => t > c1.t,
                Branch::Winding => t < c2.t,
            };
            if complex_side {
                match lookup(cont, t) {
                    Some(s) => saddles.push(*s),
                    None => missing = true,
                }
            } else {
                saddles.extend(real_saddles(t, *b, eta0, m)?);
            }
        }
        let mut logs = Vec::with_capacity(saddles.len());
        let mut divergent = false;
        for s in &saddles {
            let pre = van_vleck_prefactor(s, m, PREFACTOR_STEP)?;
            divergent |= pre.divergent;
            logs.push(saddle_log_amplitude(s, &pre, j, norm));
        }
        let log_l = 2.0 * log_abs_sum(&logs);
        Ok(SemiclassicalPoint {
            t,
            l: log_l.exp(),
            log_l,
            saddles: saddles.len(),
            divergent,
            single_branch: missing && t > c1.t && t < c2.t,
        })
    })
}
