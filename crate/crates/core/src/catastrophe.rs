//! Diffraction catastrophes and the rainbow analogy: Airy and Pearcey
//! integrals, raindrop ray optics and the two-tail dark-band model.

use std::f64::consts::{FRAC_PI_8, PI};

use num_complex::Complex64;

use crate::error::{config, Result};
use crate::numerics::quad::{integrate_pieces, Tolerance};
use crate::numerics::roots::{bisect, brent};

const AI0: f64 = 0.355_028_053_887_817_239;
const AIP0: f64 = -0.258_819_403_792_806_798;

/// Below this the oscillatory asymptotic expansion is used.
const NEG_ASYMPTOTIC: f64 = -12.0;
/// Below this the Maclaurin series hands over to Taylor marching.
const NEG_SERIES: f64 = -4.5;
/// Above this Ai is recessive for the series; it is marched in from the asymptotic region instead.
const POS_SERIES: f64 = 1.5;
/// Above this the decaying asymptotic expansion is used.
const POS_ASYMPTOTIC: f64 = 8.0;
const MARCH_STEP: f64 = 0.25;

/// `Ai(x)`.
pub fn airy(x: f64) -> f64 {
    airy_pair(x).0
}

/// `(Ai(x), Ai′(x))`.
pub fn airy_pair(x: f64) -> (f64, f64) {
    if x > POS_ASYMPTOTIC {
        airy_decaying(x)
    } else if x > POS_SERIES {
        let (y, yp) = airy_decaying(POS_ASYMPTOTIC);
        taylor_march(POS_ASYMPTOTIC, y, yp, x)
    } else if x >= NEG_SERIES {
        airy_series(x)
    } else if x >= NEG_ASYMPTOTIC {
        let (y, yp) = airy_series(NEG_SERIES);
        taylor_march(NEG_SERIES, y, yp, x)
    } else {
        airy_oscillating(x)
    }
}

fn airy_series(x: f64) -> (f64, f64) {
    let x3 = x * x * x;
    let (mut t, mut v) = (1.0, 1.0);
    let (mut f, mut fp, mut g, mut gp) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..200 {
        let k3 = 3.0 * k as f64;
        f += t;
        fp += t * x * x / (k3 + 2.0);
        g += v;
        gp += v * (k3 + 1.0);
        if t.abs() < 1e-18 * f.abs().max(1.0) && v.abs() < 1e-18 * g.abs().max(1.0) && k > 2 {
            break;
        }
        t *= x3 / ((k3 + 2.0) * (k3 + 3.0));
        v *= x3 / ((k3 + 3.0) * (k3 + 4.0));
    }
    (AI0 * f + AIP0 * x * g, AI0 * fp + AIP0 * gp)
}

/// Integrates `y″ = x y` from `x0` to `x1` by local Taylor expansions.
fn taylor_march(x0: f64, y: f64, yp: f64, x1: f64) -> (f64, f64) {
    let steps = ((x1 - x0).abs() / MARCH_STEP).ceil().max(1.0) as usize;
    let h = (x1 - x0) / steps as f64;
    let (mut x, mut y, mut yp) = (x0, y, yp);
    for _ in 0..steps {
        let (mut a_prev, mut a_cur) = (y, yp);
        let (mut sum, mut dsum) = (y + yp * h, yp);
        let mut hp = h;
        // a_{n+1} from a_n and a_{n−1}; a_2 = x a_0 / 2.
        let mut a_prev2 = 0.0;
        for n in 1..80usize {
            let next = (x * a_prev + a_prev2) / ((n + 1) as f64 * n as f64);
            let term_d = (n + 1) as f64 * next * hp;
            hp *= h;
            let term = next * hp;
            sum += term;
            dsum += term_d;
            a_prev2 = a_prev;
            a_prev = a_cur;
            a_cur = next;
            if term.abs() < 1e-19 && term_d.abs() < 1e-19 && n > 4 {
                break;
            }
        }
        x += h;
        y = sum;
        yp = dsum;
    }
    (y, yp)
}

fn asymptotic_coefficients(zeta: f64) -> impl Iterator<Item = (f64, f64)> {
    let mut u = 1.0;
    let mut k = 0;
    let mut last = f64::INFINITY;
    std::iter::from_fn(move || {
        let v = if k == 0 { 1.0 } else { -u * (6 * k + 1) as f64 / (6 * k - 1) as f64 };
        let out = (u / zeta.powi(k), v / zeta.powi(k));
        let size = out.0.abs().max(out.1.abs());
        if size > last || size < 1e-18 || k > 60 {
            return None;
        }
        last = size;
        k += 1;
        let kf = k as f64;
        u *= (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0) / ((2.0 * kf - 1.0) * 216.0 * kf);
        Some(out)
    })
}

fn airy_decaying(x: f64) -> (f64, f64) {
    let zeta = 2.0 / 3.0 * x.powf(1.5);
    let (mut s, mut sp, mut sign) = (0.0, 0.0, 1.0);
    for (u, v) in asymptotic_coefficients(zeta) {
        s += sign * u;
        sp += sign * v;
        sign = -sign;
    }
    let e = (-zeta).exp() / (2.0 * PI.sqrt());
    let q = x.powf(0.25);
    (e * s / q, -e * q * sp)
}

fn airy_oscillating(x: f64) -> (f64, f64) {
    let a = -x;
    let zeta = 2.0 / 3.0 * a.powf(1.5);
    let (mut p, mut q, mut r, mut s) = (0.0, 0.0, 0.0, 0.0);
    for (k, (u, v)) in asymptotic_coefficients(zeta).enumerate() {
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * u;
            r += sign * v;
        } else {
            q += sign * u;
            s += sign * v;
        }
    }
    let (sn, cs) = (zeta + 0.25 * PI).sin_cos();
    let root = PI.sqrt();
    let qa = a.powf(0.25);
    ((sn * p - cs * q) / (root * qa), -qa * (cs * r + sn * s) / root)
}

/// `Φ_fold(s, x) = s³/3 + x s`.
pub fn fold_phase(s: Complex64, x: f64) -> Complex64 {
    s * s * s / 3.0 + s * x
}

/// `Φ_cusp(s, x, y) = s⁴/4 + y s²/2 + x s`.
pub fn cusp_phase(s: Complex64, x: f64, y: f64) -> Complex64 {
    let s2 = s * s;
    s2 * s2 / 4.0 + s2 * (0.5 * y) + s * x
}

fn contour_tol() -> Tolerance {
    Tolerance { abs: 1e-13, rel: 1e-12, max_intervals: 20000 }
}

/// `∫ exp(iΦ_fold) ds` along rays at `π/6` and `5π/6`, where the cubic decays; equals `2π Ai(x)`.
pub fn fold_integral(x: f64) -> Result<Complex64> {
    let rays = [Complex64::from_polar(1.0, PI / 6.0), Complex64::from_polar(1.0, 5.0 * PI / 6.0)];
    let reach = 6.0 + 2.0 * x.abs().sqrt();
    let mut f = |r: f64| {
        let out = (fold_phase(rays[0] * r, x) * Complex64::i()).exp() * rays[0];
        let inn = (fold_phase(rays[1] * r, x) * Complex64::i()).exp() * rays[1];
        out - inn
    };
    Ok(integrate_pieces(&mut f, &[0.0, 0.5 * reach, reach], contour_tol())?.value)
}

/// Supported window `|x|, |y| ≤ PEARCEY_WINDOW`.
pub const PEARCEY_WINDOW: f64 = 12.0;

/// `Pe(x, y) = ∫ exp(iΦ_cusp) ds`. The real axis is kept on a finite core,
/// where the integrand has unit modulus; beyond it the tails are rotated by `π/8`.
pub fn pearcey(x: f64, y: f64) -> Result<Complex64> {
    if !(x.abs() <= PEARCEY_WINDOW && y.abs() <= PEARCEY_WINDOW) {
        return config(format!("pearcey({x}, {y}) outside the supported window |x|, |y| ≤ {PEARCEY_WINDOW}"));
    }
    let core = 2.0 + 1.5 * y.abs().sqrt().max(x.abs().cbrt());
    let i = Complex64::i();
    let mut real = |s: f64| (cusp_phase(Complex64::new(s, 0.0), x, y) * i).exp();
    let cuts: Vec<f64> = (0..=16).map(|k| -core + 2.0 * core * k as f64 / 16.0).collect();
    let centre = integrate_pieces(&mut real, &cuts, contour_tol())?.value;
    let dir = Complex64::from_polar(1.0, FRAC_PI_8);
    let mut tails = |v: f64| {
        let right = Complex64::new(core, 0.0) + dir * v;
        ((cusp_phase(right, x, y) * i).exp() + (cusp_phase(-right, x, y) * i).exp()) * dir
    };
    let tail = integrate_pieces(&mut tails, &[0.0, 1.0, 3.0, 8.0], contour_tol())?.value;
    Ok(centre + tail)
}

/// Viewing angle of a ray leaving a drop of index `n` after `order` internal reflections.
pub fn raindrop_deflection(h: f64, n: f64, order: u8) -> Result<f64> {
    if !(0.0..=1.0).contains(&h) {
        return config(format!("impact parameter {h} outside [0, 1]"));
    }
    let (inc, refr) = (h.asin(), (h / n).asin());
    match order {
        1 => Ok(4.0 * refr - 2.0 * inc),
        2 => Ok(PI - (6.0 * refr - 2.0 * inc)),
        _ => config(format!("unsupported ray order {order}")),
    }
}

/// `dθ/dh` of [`raindrop_deflection`].
pub fn deflection_slope(h: f64, n: f64, order: u8) -> Result<f64> {
    let a = 1.0 / (n * n - h * h).sqrt();
    let b = 1.0 / (1.0 - h * h).sqrt();
    match order {
        1 => Ok(4.0 * a - 2.0 * b),
        2 => Ok(-(6.0 * a - 2.0 * b)),
        _ => config(format!("unsupported ray order {order}")),
    }
}

/// Impact parameter of the stationary (rainbow) ray.
pub fn rainbow_impact(n: f64, order: u8) -> Result<f64> {
    if !(n > 1.0 && n < 2.0) {
        return config(format!("refractive index {n} outside (1, 2)"));
    }
    let k = f64::from(order) + 1.0;
    let cos2 = (n * n - 1.0) / (k * k - 1.0);
    let guess = (1.0 - cos2).sqrt();
    let width = 1e-3;
    let (lo, hi) = ((guess - width).max(0.0), (guess + width).min(1.0 - 1e-15));
    brent(|h| deflection_slope(h, n, order).unwrap_or(f64::NAN), lo, hi, 1e-15)
}

/// Primary (maximum, one reflection) and secondary (minimum, two reflections) bow angles.
pub fn rainbow_angles(n: f64) -> Result<(f64, f64)> {
    let t1 = raindrop_deflection(rainbow_impact(n, 1)?, n, 1)?;
    let t2 = raindrop_deflection(rainbow_impact(n, 2)?, n, 2)?;
    Ok((t1, t2))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RainbowParams {
    pub n: f64,
    pub k: f64,
    pub d1: f64,
    pub d2: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub c1: f64,
    pub c2: f64,
}

impl RainbowParams {
    /// Bow angles from the refractive index, unit prefactors.
    pub fn for_index(n: f64, k: f64, d1: f64, d2: f64) -> Result<Self> {
        let (theta1, theta2) = rainbow_angles(n)?;
        let p = RainbowParams { n, k, d1, d2, theta1, theta2, c1: 1.0, c2: 1.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n > 1.0) || !(self.theta1 < self.theta2) || !(self.d1 > 0.0) || !(self.d2 > 0.0) || !(self.k > 0.0) {
            return config(format!("invalid rainbow parameters {self:?}"));
        }
        Ok(())
    }

    fn check_band(&self, theta: f64) -> Result<()> {
        self.validate()?;
        if !(theta >= self.theta1 && theta <= self.theta2) {
            return config(format!("θ = {theta} outside the dark band [{}, {}]", self.theta1, self.theta2));
        }
        Ok(())
    }

    /// Tail exponents `(2/3)D^{3/2}Δθ^{3/2}` of the two bows, per unit wavenumber.
    pub fn exponents(&self, theta: f64) -> (f64, f64) {
        let a = 2.0 / 3.0 * (self.d1 * (theta - self.theta1).max(0.0)).powf(1.5);
        let b = 2.0 / 3.0 * (self.d2 * (self.theta2 - theta).max(0.0)).powf(1.5);
        (a, b)
    }
}

/// Dark-band intensity from the two exponential tails.
pub fn dark_band_intensity(theta: f64, p: &RainbowParams) -> Result<f64> {
    p.check_band(theta)?;
    let (a, b) = p.exponents(theta);
    let amp = p.c1 * (-p.k * a).exp() + p.c2 * (-p.k * b).exp();
    Ok(amp * amp)
}

/// `ln I`, finite even where the intensity underflows.
pub fn dark_band_log_intensity(theta: f64, p: &RainbowParams) -> Result<f64> {
    p.check_band(theta)?;
    let (a, b) = p.exponents(theta);
    let (la, lb) = (p.c1.ln() - p.k * a, p.c2.ln() - p.k * b);
    let hi = la.max(lb);
    Ok(2.0 * (hi + ((la - hi).exp() + (lb - hi).exp()).ln()))
}

/// `−ln I / 2k`: the amplitude decay rate, which tends to [`dark_band_rate`] as `k → ∞`.
pub fn dark_band_log_rate(theta: f64, p: &RainbowParams) -> Result<f64> {
    Ok(-dark_band_log_intensity(theta, p)? / (2.0 * p.k))
}

/// Intensity from the full Airy profiles of both bows, valid on either side of the band.
pub fn two_airy_intensity(theta: f64, p: &RainbowParams) -> Result<f64> {
    p.validate()?;
    let scale = p.k.powf(2.0 / 3.0);
    let amp = p.c1 * airy(scale * p.d1 * (theta - p.theta1)) + p.c2 * airy(scale * p.d2 * (p.theta2 - theta));
    Ok(amp * amp)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DarkBandRate {
    pub rate: f64,
    /// Angle where the two tail exponents are equal.
    pub switch_angle: f64,
}

/// Smaller of the two tail exponents and the angle where they cross.
pub fn dark_band_rate(theta: f64, p: &RainbowParams) -> Result<DarkBandRate> {
    p.check_band(theta)?;
    let (a, b) = p.exponents(theta);
    let switch_angle = bisect(
        |t| {
            let (a, b) = p.exponents(t);
            a - b
        },
        p.theta1,
        p.theta2,
        1e-15 * p.theta2.abs().max(1.0),
    )?;
    Ok(DarkBandRate { rate: a.min(b), switch_angle })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regimes_join_continuously() {
        for edge in [NEG_SERIES, POS_SERIES, POS_ASYMPTOTIC, NEG_ASYMPTOTIC] {
            let (a, ap) = airy_pair(edge - 1e-12);
            let (b, bp) = airy_pair(edge + 1e-12);
            assert!((a - b).abs() < 1e-11 && (ap - bp).abs() < 1e-10, "x = {edge}");
        }
    }

    #[test]
    fn series_and_asymptotics_cross_agree() {
        let (s, sp) = airy_series(POS_SERIES);
        let (a, ap) = airy_decaying(POS_ASYMPTOTIC);
        let (m, mp) = taylor_march(POS_ASYMPTOTIC, a, ap, POS_SERIES);
        assert!((s - m).abs() < 1e-13 && (sp - mp).abs() < 1e-13);
        assert!(((s - m) / s).abs() < 1e-11);
        let (y, yp) = taylor_march(NEG_SERIES, airy_series(NEG_SERIES).0, airy_series(NEG_SERIES).1, -12.0);
        let (o, op) = airy_oscillating(-12.0);
        assert!((y - o).abs() < 1e-11 && (yp - op).abs() < 1e-11);
    }

    #[test]
    fn deflection_at_axis() {
        assert_eq!(raindrop_deflection(0.0, 4.0 / 3.0, 1).unwrap(), 0.0);
        assert!(raindrop_deflection(1.2, 4.0 / 3.0, 1).is_err());
    }
}
