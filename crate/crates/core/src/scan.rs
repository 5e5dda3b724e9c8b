//! Rate functions over the `(t, η)` plane: exact Fock-space rate surfaces,
//! complex-saddle branch surfaces for arbitrary target latitude, the
//! switching line where the two branches exchange dominance, the DPT time
//! and finite-size extrapolation.

use nalgebra::{DMatrix, DVector};

use crate::classical::Model;
use crate::complexmech::{
    branch_rate, class_envelope, continue_in_target, dark_continuations, seed_saddle, track, SaddleSolution,
};
use crate::dicke::{fock_map, QuenchConfig, UNDERFLOW_FLOOR};
use crate::error::{config, Error, Result};
use crate::exec::Exec;
use crate::numerics::roots::bisect;
use crate::wkb::Branch;

/// Figure-quality grid, `(times, latitudes)`.
pub const DEFAULT_GRID: (usize, usize) = (400, 301);
/// Bisection tolerance on the DPT time.
pub const DPT_TOL: f64 = 1e-8;
/// Distance beyond a fold at which a branch surface column is seeded.
const FOLD_OFFSET: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Source {
    Exact { j: f64 },
    Branch(Branch),
}

impl Source {
    pub fn label(&self) -> String {
        match self {
            Source::Exact { j } => format!("exact_j{j}"),
            Source::Branch(b) => format!("branch_k{}", b.k()),
        }
    }
}

/// `r[k][i]` is the rate at `times[k]`, `etas[i]`; `None` marks masked or
/// underflowed cells.
#[derive(Clone, Debug, PartialEq)]
pub struct RateSurface {
    pub times: Vec<f64>,
    pub etas: Vec<f64>,
    pub r: Vec<Vec<Option<f64>>>,
    pub source: Source,
}

impl RateSurface {
    pub fn get(&self, k: usize, i: usize) -> Option<f64> {
        self.r[k][i]
    }

    fn same_axes(&self, other: &RateSurface) -> bool {
        self.times == other.times && self.etas == other.etas
    }
}

/// `r(t, m/j) = −ln |⟨j,m|ψ(t)⟩|² / size` from exact dynamics.
pub fn rate_surface_exact(cfg: &QuenchConfig) -> Result<RateSurface> {
    let map = fock_map(cfg)?;
    let j = cfg.space.j();
    let size = cfg.norm.size(cfg.space);
    let etas = map.ms().iter().map(|m| m / j).collect();
    let r = map
        .columns
        .iter()
        .map(|col| {
            col.iter()
                .map(|&a| {
                    let p = a * a;
                    (p >= UNDERFLOW_FLOOR).then(|| -p.ln() / size)
                })
                .collect()
        })
        .collect();
    Ok(RateSurface { times: map.times, etas, r, source: Source::Exact { j } })
}

fn rates(sols: &[SaddleSolution]) -> Vec<Option<f64>> {
    sols.iter().map(|s| branch_rate(s).ok()).collect()
}

fn fill(col: &mut [Option<f64>], etas: &[f64], mut idx: Vec<usize>, up: bool, start: &SaddleSolution, m: &Model) {
    idx.sort_by(|&a, &b| if up { etas[a].total_cmp(&etas[b]) } else { etas[b].total_cmp(&etas[a]) });
    let targets: Vec<f64> = idx.iter().map(|&i| etas[i]).collect();
    for (&i, r) in idx.iter().zip(rates(&continue_in_target(start, &targets, m))) {
        col[i] = r;
    }
}

fn branch_column(
    t: f64,
    branch: Branch,
    etas: &[f64],
    eta0: f64,
    anchor: Option<&SaddleSolution>,
    m: &Model,
) -> Vec<Option<f64>> {
    let mut col = vec![None; etas.len()];
    let Ok((lo, hi)) = class_envelope(t, branch, eta0, m) else { return col };
    for (c, &e) in col.iter_mut().zip(etas) {
        if (lo..=hi).contains(&e) {
            *c = Some(0.0);
        }
    }
    for upper in [true, false] {
        let idx: Vec<usize> = (0..etas.len()).filter(|&i| if upper { etas[i] > hi } else { etas[i] < lo }).collect();
        if idx.is_empty() {
            continue;
        }
        match anchor.filter(|a| if upper { a.eta_target > hi } else { a.eta_target < lo }) {
            Some(a) => {
                let (ahead, behind): (Vec<usize>, Vec<usize>) =
                    idx.into_iter().partition(|&i| (etas[i] >= a.eta_target) == upper);
                fill(&mut col, etas, ahead, upper, a, m);
                fill(&mut col, etas, behind, !upper, a, m);
            }
            None => {
                let start = if upper { hi + FOLD_OFFSET } else { lo - FOLD_OFFSET };
                if let Ok(seed) = seed_saddle(t, branch, eta0, start, m) {
                    fill(&mut col, etas, idx, upper, &seed, m);
                }
            }
        }
    }
    col
}

/// `r_k(t, η) = 2 Im W` of the class-`k` saddle returning to `η` at time `t`.
/// Inside the class's real envelope the rate is zero. Beyond it, the saddle is
/// continued in `η` from the complex saddle at `η0` when that is forbidden,
/// otherwise from a seed just past the extreme fold. Cells where the
/// continuation is lost are masked.
pub fn branch_rate_surface(
    branch: Branch,
    t_grid: &[f64],
    eta_grid: &[f64],
    eta0: f64,
    m: &Model,
    exec: Exec,
) -> Result<RateSurface> {
    if t_grid.iter().any(|&t| !(t > 0.0)) {
        return config("branch surfaces need t > 0");
    }
    let anchors = match dark_continuations(t_grid, eta0, m, exec) {
        Ok(c) => c[branch.k() as usize].solutions.clone(),
        Err(_) => Vec::new(),
    };
    let r = exec.map(t_grid, |&t| {
        let anchor = anchors.iter().find(|s| s.t == t);
        branch_column(t, branch, eta_grid, eta0, anchor, m)
    });
    Ok(RateSurface { times: t_grid.to_vec(), etas: eta_grid.to_vec(), r, source: Source::Branch(branch) })
}

/// Zero contour of `r0 − r1` where both branches are forbidden (`r0, r1 > 0`),
/// linearly interpolated across grid edges in both directions, sorted by time.
pub fn switching_line(r0: &RateSurface, r1: &RateSurface) -> Result<Vec<(f64, f64)>> {
    if !r0.same_axes(r1) {
        return config("switching line needs surfaces on the same grid");
    }
    let (nt, ne) = (r0.times.len(), r0.etas.len());
    let diff = |k: usize, i: usize| -> Option<f64> {
        match (r0.get(k, i), r1.get(k, i)) {
            (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some(a - b),
            _ => None,
        }
    };
    let cross = |a: f64, b: f64| a == 0.0 || (a < 0.0) != (b < 0.0);
    let mut pts = Vec::new();
    for k in 0..nt {
        for i in 0..ne.saturating_sub(1) {
            if let (Some(a), Some(b)) = (diff(k, i), diff(k, i + 1)) {
                if cross(a, b) {
                    let s = a / (a - b);
                    pts.push((r0.times[k], r0.etas[i] + s * (r0.etas[i + 1] - r0.etas[i])));
                }
            }
        }
    }
    for i in 0..ne {
        for k in 0..nt.saturating_sub(1) {
            if let (Some(a), Some(b)) = (diff(k, i), diff(k + 1, i)) {
                if cross(a, b) && a != 0.0 {
                    let s = a / (a - b);
                    pts.push((r0.times[k] + s * (r0.times[k + 1] - r0.times[k]), r0.etas[i]));
                }
            }
        }
    }
    pts.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
    pts.dedup();
    Ok(pts)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dpt {
    pub t_c: f64,
    pub r: f64,
}

/// Root of `r0(t) − r1(t)` on `[lo, hi]` by bisection to [`DPT_TOL`].
/// `Ok(None)` when the branches do not cross there.
pub fn locate_dpt<F0, F1>(mut r0: F0, mut r1: F1, lo: f64, hi: f64) -> Result<Option<Dpt>>
where
    F0: FnMut(f64) -> Result<f64>,
    F1: FnMut(f64) -> Result<f64>,
{
    let (a, b) = (r0(lo)? - r1(lo)?, r0(hi)? - r1(hi)?);
    if (a < 0.0) == (b < 0.0) && a != 0.0 && b != 0.0 {
        return Ok(None);
    }
    let mut failure = None;
    let t_c = bisect(
        |t| match (r0(t), r1(t)) {
            (Ok(x), Ok(y)) => x - y,
            (Err(e), _) | (_, Err(e)) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        lo,
        hi,
        DPT_TOL,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(Some(Dpt { t_c, r: r0(t_c)? }))
}

/// DPT from the two complex branches at `η0`: continue both over `t_grid`,
/// bracket their crossing, then bisect with saddles tracked from the bracket.
pub fn branch_dpt(t_grid: &[f64], eta0: f64, m: &Model, exec: Exec) -> Result<Option<Dpt>> {
    let [d, w] = dark_continuations(t_grid, eta0, m, exec)?;
    let at = |sols: &[SaddleSolution], t: f64| sols.iter().find(|s| s.t == t).copied();
    let mut prev: Option<(f64, SaddleSolution, SaddleSolution, f64)> = None;
    for &t in t_grid {
        let (Some(a), Some(b)) = (at(&d.solutions, t), at(&w.solutions, t)) else { continue };
        let gap = branch_rate(&a)? - branch_rate(&b)?;
        if let Some((t0, a0, b0, g0)) = prev {
            if (g0 < 0.0) != (gap < 0.0) {
                let r0 = |s: f64| track(&a0, s, m).and_then(|x| branch_rate(&x));
                let r1 = |s: f64| track(&b0, s, m).and_then(|x| branch_rate(&x));
                return locate_dpt(r0, r1, t0, t);
            }
        }
        prev = Some((t, a, b, gap));
    }
    Ok(None)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extrapolation {
    /// Intercept at `1/j → 0`.
    pub r_inf: f64,
    /// Standard error of the intercept; NaN for an exactly determined fit.
    pub error: f64,
    /// Coefficient of `1/j`.
    pub slope: f64,
    /// Root-mean-square fit residual.
    pub residual: f64,
    /// The input rates are not monotone in `j`.
    pub low_confidence: bool,
}

/// Weight of the `ln(2j+1)/j` term carried by Fock-normalized rates.
pub const FOCK_LOG_WEIGHT: f64 = 1.0;

/// Least-squares fit of `r(j) − w·ln(2j+1)/j` against `1/j` (plus `1/j²` from
/// four sizes on), with `w = log_weight` for the known prefactor term.
pub fn finite_size_extrapolate(samples: &[(f64, f64)], log_weight: f64) -> Result<Extrapolation> {
    let mut s: Vec<(f64, f64)> = samples.to_vec();
    s.sort_by(|a, b| a.0.total_cmp(&b.0));
    s.dedup_by(|a, b| a.0 == b.0);
    if s.len() != samples.len() || s.len() < 3 {
        return config("extrapolation needs at least three distinct sizes");
    }
    if s.iter().any(|p| !(p.0 > 0.0) || !p.1.is_finite()) {
        return config("extrapolation needs positive sizes and finite rates");
    }
    let n = s.len();
    let cols = if n >= 4 { 3 } else { 2 };
    let x = DMatrix::from_fn(n, cols, |i, c| s[i].0.powi(-(c as i32)));
    let y = DVector::from_iterator(n, s.iter().map(|p| p.1 - log_weight * (2.0 * p.0 + 1.0).ln() / p.0));
    let xtx = x.transpose() * &x;
    let inv = xtx.try_inverse().ok_or_else(|| Error::Numeric("singular extrapolation fit".into()))?;
    let beta = &inv * x.transpose() * &y;
    let res = &y - &x * &beta;
    let ssr = res.norm_squared();
    let dof = n - cols;
    let error = if dof > 0 { (ssr / dof as f64 * inv[(0, 0)]).sqrt() } else { f64::NAN };
    let rs: Vec<f64> = s.iter().map(|p| p.1).collect();
    let monotone = rs.windows(2).all(|w| w[1] <= w[0]) || rs.windows(2).all(|w| w[1] >= w[0]);
    Ok(Extrapolation {
        r_inf: beta[0],
        error,
        slope: beta[1],
        residual: (ssr / n as f64).sqrt(),
        low_confidence: !monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_fit_recovers_the_intercept() {
        let s: Vec<(f64, f64)> = [40.0, 80.0, 160.0].iter().map(|&j| (j, 0.3 + 2.0 / j)).collect();
        let e = finite_size_extrapolate(&s, 0.0).unwrap();
        assert!((e.r_inf - 0.3).abs() < 1e-13 && (e.slope - 2.0).abs() < 1e-10);
        assert!(e.residual < 1e-14 && !e.low_confidence);
        assert!(finite_size_extrapolate(&s[..2], 0.0).is_err());
    }

    #[test]
    fn symmetric_branches_cross_midway() {
        let f = |x: f64| x * x * (1.0 + 0.1 * x);
        let (a, b) = (2.3, 4.1);
        let d = locate_dpt(|t| Ok(f(t - a)), |t| Ok(f(b - t)), a + 0.01, b - 0.01).unwrap().unwrap();
        assert!((d.t_c - 0.5 * (a + b)).abs() < 2.0 * DPT_TOL);
        assert!(locate_dpt(|t| Ok(t), |t| Ok(t - 1.0), 0.0, 1.0).unwrap().is_none());
    }
}
