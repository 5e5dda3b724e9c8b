//! Action-angle machinery of the classical limit: turning points, reduced and
//! round-trip actions, Bohr–Sommerfeld levels, the return-time function
//! `T(ε)` and its extrema (the caustic times).
//!
//! Energies are per particle, `ε = E/j`. The formulas assume `Ω ≥ G > 0`,
//! where every energy in `(−Ω, Ω)` carries a single closed orbit: orbits with
//! `ε < G/2` circle `(φ, η) = (π, 0)` and turn at `φ = π`, those with `ε > G/2`
//! circle `(0, 0)` and turn at `φ = 0`.

use std::f64::consts::PI;

use crate::classical::Model;
use crate::dicke::DickeSpace;
use crate::error::{config, numeric, Error, Result};
use crate::numerics::quad::{integrate_pieces, Tolerance};
use crate::numerics::roots::brent;

/// Return classes. `Direct` trajectories (`k = 0`) pass the upper turning
/// point once and come back; `Winding` ones (`k = 1`) go the other way round
/// the orbit, adding one full period minus the direct excursion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Branch {
    Direct,
    Winding,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::Direct, Branch::Winding];

    /// Number of extra round trips.
    pub fn k(self) -> i32 {
        match self {
            Branch::Direct => 0,
            Branch::Winding => 1,
        }
    }

    /// Signed number of passes through the upper turning point.
    pub fn l(self) -> i32 {
        match self {
            Branch::Direct => 1,
            Branch::Winding => -1,
        }
    }

    pub fn index(self) -> usize {
        self.k() as usize
    }
}

/// Width of the flagged window around the pole-passage energy `G/2`, in units of `G`.
pub const SEPARATRIX_WINDOW: f64 = 1e-3;

/// Finite-difference step for energy derivatives, in units of `Ω`.
pub const ENERGY_STEP: f64 = 1e-5;

fn quad_tol() -> Tolerance {
    Tolerance { abs: 1e-14, rel: 1e-13, max_intervals: 4000 }
}

pub fn check_model(m: &Model) -> Result<()> {
    if !(m.g > 0.0) || !(m.omega >= m.g) {
        return config(format!(
            "semiclassical actions need Ω ≥ G > 0 (got G = {}, Ω = {})",
            m.g, m.omega
        ));
    }
    Ok(())
}

fn cos_arg(eps: f64, eta: f64, m: &Model) -> f64 {
    (eps - 0.5 * m.g * eta * eta) / (m.omega * (1.0 - eta * eta).sqrt())
}

/// `φ ∈ [0, π]` solving `H(φ, η) = ε`.
pub fn momentum_branch(eps: f64, eta: f64, m: &Model) -> Result<f64> {
    let c = cos_arg(eps, eta, m);
    if !(c.abs() <= 1.0 + 1e-12) {
        return Err(Error::Numeric(format!("(ε = {eps}, η = {eta}) is classically forbidden")));
    }
    Ok(c.clamp(-1.0, 1.0).acos())
}

/// Allowed energies at latitude `eta0`: `[H(π, η0), H(0, η0)]`.
pub fn energy_window(eta0: f64, m: &Model) -> (f64, f64) {
    let base = 0.5 * m.g * eta0 * eta0;
    let r = m.omega * (1.0 - eta0 * eta0).sqrt();
    (base - r, base + r)
}

/// Upper turning latitude of the orbit at energy `eps` and the angle there
/// (`0` above the pole-passage energy `G/2`, `π` below).
pub fn upper_turning(eps: f64, m: &Model) -> Result<(f64, f64)> {
    check_model(m)?;
    if !(eps >= -m.omega && eps <= m.omega) {
        return numeric(format!("energy {eps} outside the spectrum [−Ω, Ω]"));
    }
    // With s = √(1−η²) the turning condition is a quadratic in s.
    let d = (m.omega * m.omega - m.g * (2.0 * eps - m.g)).max(0.0);
    let s = ((2.0 * eps - m.g).abs() / (m.omega + d.sqrt())).min(1.0);
    let eta = ((1.0 - s) * (1.0 + s)).sqrt();
    Ok((eta, if eps >= 0.5 * m.g { 0.0 } else { PI }))
}

/// Positive turning latitude `η*` where `φ = 0`; exists for `ε ∈ [G/2, Ω]`.
pub fn turning_point(eps: f64, m: &Model) -> Result<f64> {
    check_model(m)?;
    if !(eps >= 0.5 * m.g && eps <= m.omega) {
        return numeric(format!("no φ = 0 turning point at energy {eps}"));
    }
    Ok(upper_turning(eps, m)?.0)
}

/// Orbit at fixed energy, parametrised by the distance `δ = η_top − η`
/// below its upper turning point.
struct Orbit<'a> {
    top: f64,
    phi_top: f64,
    m: &'a Model,
}

impl<'a> Orbit<'a> {
    fn new(eps: f64, m: &'a Model) -> Result<Self> {
        let (top, phi_top) = upper_turning(eps, m)?;
        Ok(Orbit { top, phi_top, m })
    }

    /// `(|φ − φ_top|, sin φ, √(1−η²))` at depth `delta`; the energy gap to
    /// the turning point is factorised so nothing cancels near `δ = 0`.
    fn local(&self, delta: f64) -> (f64, f64, f64) {
        let m = self.m;
        let eta = self.top - delta;
        let r = (1.0 - eta * eta).max(0.0).sqrt();
        let r_top = ((1.0 - self.top) * (1.0 + self.top)).max(0.0).sqrt();
        let band = delta * (2.0 * self.top - delta);
        let coupling = m.omega / (r + r_top);
        let gap = if self.phi_top == 0.0 { band * (coupling - 0.5 * m.g) } else { band * (coupling + 0.5 * m.g) };
        let small = (gap / (m.omega * r)).clamp(0.0, 2.0);
        let angle = 2.0 * (0.5 * small).sqrt().min(1.0).asin();
        (angle, (small * (2.0 - small)).sqrt(), r)
    }

    /// `∫_{η}^{η_top} f(local(δ)) dη` for `0 ≤ η ≤ η_top`, with `η = η_top − u²`
    /// absorbing the square-root edge at the turning point.
    fn integrate_to_top<F: FnMut((f64, f64, f64)) -> f64>(&self, eta: f64, mut f: F) -> Result<f64> {
        let depth = (self.top - eta).max(0.0);
        if depth == 0.0 {
            return Ok(0.0);
        }
        let mut g = |u: f64| 2.0 * u * f(self.local(u * u));
        Ok(integrate_pieces(&mut g, &[0.0, depth.sqrt()], quad_tol())?.value)
    }

    fn inverse_speed(&self, (_, sin, r): (f64, f64, f64)) -> f64 {
        1.0 / (self.m.omega * r * sin)
    }
}

/// `S(ε, η) = ∫_{η_top}^{η} (φ(ε, η′) − φ_top) dη′`, zero at the upper
/// turning point and continuous along the allowed band of the orbit.
pub fn reduced_action(eps: f64, eta: f64, m: &Model) -> Result<f64> {
    let orbit = Orbit::new(eps, m)?;
    let top = orbit.top;
    if eta.abs() > top * (1.0 + 1e-12) + 1e-15 {
        return numeric(format!("η = {eta} is outside the orbit band |η| ≤ {top} at ε = {eps}"));
    }
    let sign = if orbit.phi_top == 0.0 { 1.0 } else { -1.0 };
    let above = |x: f64| -> Result<f64> { Ok(-sign * orbit.integrate_to_top(x, |(a, _, _)| a)?) };
    if eta >= 0.0 {
        above(eta.min(top))
    } else {
        // The integrand is even in η.
        Ok(2.0 * above(0.0)? - above((-eta).min(top))?)
    }
}

/// Phase-space area enclosed below energy `eps`; runs from 0 at `ε = −Ω` to `4π` at `ε = Ω`.
pub fn round_trip_action(eps: f64, m: &Model) -> Result<f64> {
    check_model(m)?;
    if eps <= -m.omega {
        return Ok(0.0);
    }
    if eps >= m.omega {
        return Ok(4.0 * PI);
    }
    let quarter = reduced_action(eps, 0.0, m)?;
    Ok(4.0 * quarter + if eps >= 0.5 * m.g { 4.0 * PI } else { 0.0 })
}

/// Orbit period `∮ dη / η̇`.
pub fn period(eps: f64, m: &Model) -> Result<f64> {
    let orbit = Orbit::new(eps, m)?;
    Ok(4.0 * orbit.integrate_to_top(0.0, |l| orbit.inverse_speed(l))?)
}

/// Time for the orbit at `eps` to climb from `eta0` to its upper turning point.
pub fn time_to_top(eps: f64, eta0: f64, m: &Model) -> Result<f64> {
    let orbit = Orbit::new(eps, m)?;
    if eta0 > orbit.top * (1.0 + 1e-12) || eta0 < -orbit.top {
        return numeric(format!("η0 = {eta0} not reached by the orbit at ε = {eps}"));
    }
    if eta0 >= 0.0 {
        orbit.integrate_to_top(eta0, |l| orbit.inverse_speed(l))
    } else {
        Ok(0.5 * period(eps, m)? - orbit.integrate_to_top(-eta0, |l| orbit.inverse_speed(l))?)
    }
}

/// Return time to `eta0` computed directly from time integrals along the orbit.
pub fn return_time_direct(eps: f64, branch: Branch, eta0: f64, m: &Model) -> Result<f64> {
    let up = 2.0 * time_to_top(eps, eta0, m)?;
    Ok(match branch {
        Branch::Direct => up,
        Branch::Winding => period(eps, m)? - up,
    })
}

/// Exponent of the return amplitude: `2l·S(ε, η0) + k·S(ε)`.
pub fn branch_action(eps: f64, branch: Branch, eta0: f64, m: &Model) -> Result<f64> {
    let red = reduced_action(eps, eta0, m)?;
    let full = if branch.k() != 0 { round_trip_action(eps, m)? } else { 0.0 };
    Ok(2.0 * branch.l() as f64 * red + branch.k() as f64 * full)
}

/// Richardson-extrapolated derivative of `f` at `x` with base step `h`,
/// falling back to one-sided stencils that stay inside `[lo, hi]`.
fn derivative<F: FnMut(f64) -> Result<f64>>(mut f: F, x: f64, h: f64, lo: f64, hi: f64) -> Result<f64> {
    let mut central = |h: f64| -> Result<f64> { Ok((f(x + h)? - f(x - h)?) / (2.0 * h)) };
    if x - h >= lo && x + h <= hi {
        let d1 = central(h)?;
        let d2 = central(0.5 * h)?;
        return Ok((4.0 * d2 - d1) / 3.0);
    }
    let s = if x + 2.0 * h <= hi { 1.0 } else { -1.0 };
    let mut one_sided = |h: f64| -> Result<f64> {
        let f0 = f(x)?;
        let f1 = f(x + s * h)?;
        let f2 = f(x + 2.0 * s * h)?;
        Ok(s * (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h))
    };
    let d1 = one_sided(h)?;
    let d2 = one_sided(0.5 * h)?;
    Ok((4.0 * d2 - d1) / 3.0)
}

/// `T(ε) = d/dε [2l·S(ε, η0) + k·S(ε)]` by finite differences of the actions.
/// Stencils never straddle `G/2`, where the reduced action changes branch.
pub fn return_time(eps: f64, branch: Branch, eta0: f64, m: &Model) -> Result<f64> {
    check_model(m)?;
    let (w_lo, w_hi) = energy_window(eta0, m);
    if !(eps >= w_lo && eps <= w_hi) {
        return numeric(format!("ε = {eps} outside the window [{w_lo}, {w_hi}] at η0 = {eta0}"));
    }
    let half = 0.5 * m.g;
    let (lo, hi) = if eps >= half { (half.max(w_lo), w_hi) } else { (w_lo, half.min(w_hi)) };
    derivative(|e| branch_action(e, branch, eta0, m), eps, ENERGY_STEP * m.omega, lo, hi)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Level {
    pub n: usize,
    pub eps: f64,
    /// Within [`SEPARATRIX_WINDOW`] of `G/2`.
    pub near_separatrix: bool,
}

/// Levels solving `j S(ε_n) = 2π(n + ½)`; the condition admits `2j` of the `2j + 1` states.
pub fn bohr_sommerfeld(space: DickeSpace, m: &Model) -> Result<Vec<Level>> {
    check_model(m)?;
    let j = space.j();
    if j <= 0.0 {
        return config("Bohr–Sommerfeld levels need j > 0");
    }
    let mut out = Vec::new();
    for n in 0..space.dim() {
        let target = 2.0 * PI * (n as f64 + 0.5) / j;
        if target >= 4.0 * PI {
            break;
        }
        let eps = brent(
            |e| round_trip_action(e, m).map(|s| s - target).unwrap_or(f64::NAN),
            -m.omega,
            m.omega,
            1e-15,
        )?;
        out.push(Level { n, eps, near_separatrix: (eps - 0.5 * m.g).abs() < SEPARATRIX_WINDOW * m.g });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stationary {
    pub eps: f64,
    /// Two solutions coalesce here (caustic).
    pub degenerate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Caustic {
    pub branch: Branch,
    pub eps: f64,
    pub t: f64,
    /// Initial angle of the coalescing real trajectory.
    pub phi0: f64,
}

/// Initial angle at `eta0` for energy `eps` in the given return class.
pub fn initial_angle(eps: f64, branch: Branch, eta0: f64, m: &Model) -> Result<f64> {
    let p = momentum_branch(eps, eta0, m)?;
    Ok(match branch {
        Branch::Direct => p,
        Branch::Winding => 2.0 * PI - p,
    })
}

const SCAN_POINTS: usize = 240;

fn interior_grid(eta0: f64, m: &Model) -> Vec<f64> {
    let (lo, hi) = energy_window(eta0, m);
    let pad = 1e-9 * (hi - lo);
    (0..SCAN_POINTS)
        .map(|i| lo + pad + (hi - lo - 2.0 * pad) * i as f64 / (SCAN_POINTS - 1) as f64)
        .collect()
}

/// Extremum of `T(ε)` for the branch: the maximum for `Direct`, the minimum for `Winding`.
pub fn caustic_time(branch: Branch, eta0: f64, m: &Model) -> Result<Caustic> {
    check_model(m)?;
    let grid = interior_grid(eta0, m);
    let sign = if branch == Branch::Direct { 1.0 } else { -1.0 };
    let ts = grid
        .iter()
        .map(|&e| return_time_direct(e, branch, eta0, m))
        .collect::<Result<Vec<_>>>()?;
    let best = (1..grid.len() - 1)
        .max_by(|&a, &b| (sign * ts[a]).total_cmp(&(sign * ts[b])))
        .ok_or_else(|| Error::Numeric("energy window too small".into()))?;
    let (lo, hi) = (grid[best - 1], grid[best + 1]);
    let h = 1e-3 * (hi - lo);
    let slope = |e: f64| {
        let d = |h: f64| -> Result<f64> {
            Ok((return_time_direct(e + h, branch, eta0, m)? - return_time_direct(e - h, branch, eta0, m)?) / (2.0 * h))
        };
        match (d(h), d(0.5 * h)) {
            (Ok(a), Ok(b)) => (4.0 * b - a) / 3.0,
            _ => f64::NAN,
        }
    };
    let eps = brent(slope, lo, hi, 1e-13)?;
    let t = return_time_direct(eps, branch, eta0, m)?;
    Ok(Caustic { branch, eps, t, phi0: initial_angle(eps, branch, eta0, m)? })
}

/// First (direct maximum) and second (winding minimum) caustic times.
pub fn caustic_times(eta0: f64, m: &Model) -> Result<(Caustic, Caustic)> {
    Ok((caustic_time(Branch::Direct, eta0, m)?, caustic_time(Branch::Winding, eta0, m)?))
}

/// Relative tolerance on `|t − T_extremum|` within which a caustic is reported as one degenerate solution.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Energies with `T(ε) = t` for the branch: 0, 1 or 2 solutions.
pub fn stationary_energies(t: f64, branch: Branch, eta0: f64, m: &Model) -> Result<Vec<Stationary>> {
    let c = caustic_time(branch, eta0, m)?;
    if (t - c.t).abs() <= DEGENERACY_TOL * c.t.max(1.0) {
        return Ok(vec![Stationary { eps: c.eps, degenerate: true }]);
    }
    let (lo, hi) = energy_window(eta0, m);
    let pad = 1e-12 * (hi - lo);
    let f = |e: f64| return_time_direct(e, branch, eta0, m).map(|v| v - t).unwrap_or(f64::NAN);
    let mut out = Vec::new();
    for (a, b) in [(lo + pad, c.eps), (c.eps, hi - pad)] {
        let (fa, fb) = (f(a), f(b));
        if fa.is_finite() && fb.is_finite() && fa.signum() != fb.signum() {
            out.push(Stationary { eps: brent(f, a, b, 1e-13)?, degenerate: false });
        }
    }
    Ok(out)
}
