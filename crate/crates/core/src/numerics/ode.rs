//! Dormand–Prince 5(4) with Hairer's continuous extension.
//!
//! States are flat `f64` slices; complex systems pack real and imaginary parts.

use crate::error::{numeric, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Clone, Copy, Debug)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, h_max: f64::INFINITY, max_steps: 200_000 }
    }
}

/// One accepted step, with dense output over `[t0, t1]`.
pub struct Step<'a> {
    pub t0: f64,
    pub t1: f64,
    pub y0: &'a [f64],
    pub y1: &'a [f64],
    cont: &'a [Vec<f64>; 5],
}

impl Step<'_> {
    pub fn interpolate(&self, t: f64, out: &mut [f64]) {
        let h = self.t1 - self.t0;
        let th = if h == 0.0 { 1.0 } else { (t - self.t0) / h };
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = self.cont;
        for i in 0..out.len() {
            out[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
        }
    }
}

pub enum Flow {
    Continue,
    Stop,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub t: f64,
    pub y: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
}

impl Dopri5 {
    pub fn with_tol(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, ..Self::default() }
    }

    /// Integrate to `t_end` without observing intermediate steps.
    pub fn solve<F>(&self, f: F, t0: f64, y0: &[f64], t_end: f64) -> Result<Solution>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        self.solve_observed(f, t0, y0, t_end, |_| Flow::Continue)
    }

    /// Integrate, handing every accepted step to `observe`. Integration ends
    /// early if the observer returns [`Flow::Stop`].
    pub fn solve_observed<F, O>(
        &self,
        mut f: F,
        t0: f64,
        y0: &[f64],
        t_end: f64,
        mut observe: O,
    ) -> Result<Solution>
    where
        F: FnMut(f64, &[f64], &mut [f64]),
        O: FnMut(&Step) -> Flow,
    {
        let n = y0.len();
        let dir = if t_end >= t0 { 1.0 } else { -1.0 };
        let span = (t_end - t0).abs();
        let mut t = t0;
        let mut y = y0.to_vec();
        if span == 0.0 {
            return Ok(Solution { t, y, accepted: 0, rejected: 0 });
        }

        let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; n]);
        let mut ytmp = vec![0.0; n];
        let mut ynew = vec![0.0; n];
        let mut cont: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);

        f(t, &y, &mut k[0]);
        let mut h = self.initial_step(&mut f, t, &y, &k[0], dir, span, &mut ytmp, &mut ynew);
        let mut accepted = 0;
        let mut rejected = 0;
        let mut last_rejected = false;

        loop {
            if accepted + rejected >= self.max_steps {
                return numeric(format!("integrator exceeded {} steps at t = {t}", self.max_steps));
            }
            let remaining = (t_end - t) * dir;
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            let hs = h * dir;
            if t + hs == t {
                return numeric(format!("step size underflow at t = {t}"));
            }

            for i in 0..n {
                ytmp[i] = y[i] + hs * A21 * k[0][i];
            }
            f(t + C2 * hs, &ytmp, &mut k[1]);
            for i in 0..n {
                ytmp[i] = y[i] + hs * (A31 * k[0][i] + A32 * k[1][i]);
            }
            f(t + C3 * hs, &ytmp, &mut k[2]);
            for i in 0..n {
                ytmp[i] = y[i] + hs * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
            }
            f(t + C4 * hs, &ytmp, &mut k[3]);
            for i in 0..n {
                ytmp[i] = y[i]
                    + hs * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
            }
            f(t + C5 * hs, &ytmp, &mut k[4]);
            for i in 0..n {
                ytmp[i] = y[i]
                    + hs * (A61 * k[0][i]
                        + A62 * k[1][i]
                        + A63 * k[2][i]
                        + A64 * k[3][i]
                        + A65 * k[4][i]);
            }
            f(t + hs, &ytmp, &mut k[5]);
            for i in 0..n {
                ynew[i] = y[i]
                    + hs * (A71 * k[0][i]
                        + A73 * k[2][i]
                        + A74 * k[3][i]
                        + A75 * k[4][i]
                        + A76 * k[5][i]);
            }
            f(t + hs, &ynew, &mut k[6]);

            let mut err = 0.0;
            for i in 0..n {
                let e = hs
                    * (E1 * k[0][i]
                        + E3 * k[2][i]
                        + E4 * k[3][i]
                        + E5 * k[4][i]
                        + E6 * k[5][i]
                        + E7 * k[6][i]);
                let sk = self.atol + self.rtol * y[i].abs().max(ynew[i].abs());
                err += (e / sk).powi(2);
            }
            err = (err / n as f64).sqrt();
            if !err.is_finite() {
                if h < 1e-14 * span {
                    return numeric(format!("non-finite derivative near t = {t}"));
                }
                h *= 0.1;
                rejected += 1;
                last_rejected = true;
                continue;
            }

            let fac = (err.powf(0.2) / 0.9).clamp(0.1, 5.0);
            let mut h_next = (h / fac).min(self.h_max);
            if err <= 1.0 {
                for i in 0..n {
                    let dy = ynew[i] - y[i];
                    let bspl = hs * k[0][i] - dy;
                    cont[0][i] = y[i];
                    cont[1][i] = dy;
                    cont[2][i] = bspl;
                    cont[3][i] = dy - hs * k[6][i] - bspl;
                    cont[4][i] = hs
                        * (D1 * k[0][i]
                            + D3 * k[2][i]
                            + D4 * k[3][i]
                            + D5 * k[4][i]
                            + D6 * k[5][i]
                            + D7 * k[6][i]);
                }
                let t_new = if last { t_end } else { t + hs };
                let flow = observe(&Step { t0: t, t1: t_new, y0: &y, y1: &ynew, cont: &cont });
                t = t_new;
                std::mem::swap(&mut y, &mut ynew);
                k.swap(0, 6);
                accepted += 1;
                if last_rejected {
                    h_next = h_next.min(h);
                }
                last_rejected = false;
                if last || matches!(flow, Flow::Stop) {
                    return Ok(Solution { t, y, accepted, rejected });
                }
            } else {
                h_next = h / (err.powf(0.2) / 0.9).min(10.0);
                rejected += 1;
                last_rejected = true;
            }
            h = h_next;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn initial_step<F>(
        &self,
        f: &mut F,
        t: f64,
        y: &[f64],
        f0: &[f64],
        dir: f64,
        span: f64,
        y1: &mut [f64],
        f1: &mut [f64],
    ) -> f64
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y.len() as f64;
        let sk = |v: f64| self.atol + self.rtol * v.abs();
        let d0 = (y.iter().map(|&v| (v / sk(v)).powi(2)).sum::<f64>() / n).sqrt();
        let d1 = (y.iter().zip(f0).map(|(&v, &d)| (d / sk(v)).powi(2)).sum::<f64>() / n).sqrt();
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(self.h_max).min(span);
        for i in 0..y.len() {
            y1[i] = y[i] + dir * h0 * f0[i];
        }
        f(t + dir * h0, y1, f1);
        let d2 = (y
            .iter()
            .zip(f0.iter().zip(f1.iter()))
            .map(|(&v, (&a, &b))| ((b - a) / sk(v)).powi(2))
            .sum::<f64>()
            / n)
            .sqrt()
            / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(self.h_max).min(span)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_round_trip() {
        let ode = Dopri5::with_tol(1e-12, 1e-14);
        let rhs = |_t: f64, y: &[f64], d: &mut [f64]| {
            d[0] = y[1];
            d[1] = -y[0];
        };
        let tf = 2.0 * std::f64::consts::PI;
        let sol = ode.solve(rhs, 0.0, &[1.0, 0.0], tf).unwrap();
        assert!((sol.y[0] - 1.0).abs() < 1e-10);
        assert!(sol.y[1].abs() < 1e-10);
        assert_eq!(sol.t, tf);
    }

    #[test]
    fn backward_integration() {
        let ode = Dopri5::with_tol(1e-12, 1e-14);
        let sol = ode
            .solve(|_t, y, d| d[0] = -y[0], 1.0, &[(-1.0f64).exp()], 0.0)
            .unwrap();
        assert!((sol.y[0] - 1.0).abs() < 1e-11);
    }

    #[test]
    fn dense_output_is_accurate_inside_steps() {
        let ode = Dopri5::with_tol(1e-10, 1e-12);
        let mut worst = 0.0f64;
        let mut buf = [0.0; 2];
        ode.solve_observed(
            |_t, y, d| {
                d[0] = y[1];
                d[1] = -y[0];
            },
            0.0,
            &[0.0, 1.0],
            10.0,
            |s| {
                for q in 1..8 {
                    let t = s.t0 + (s.t1 - s.t0) * q as f64 / 8.0;
                    s.interpolate(t, &mut buf);
                    worst = worst.max((buf[0] - t.sin()).abs());
                }
                Flow::Continue
            },
        )
        .unwrap();
        assert!(worst < 1e-8, "dense output error {worst}");
    }

    #[test]
    fn observer_can_stop() {
        let ode = Dopri5::default();
        let sol = ode
            .solve_observed(|_t, _y, d| d[0] = 1.0, 0.0, &[0.0], 100.0, |s| {
                if s.y1[0] > 1.0 {
                    Flow::Stop
                } else {
                    Flow::Continue
                }
            })
            .unwrap();
        assert!(sol.t < 100.0 && sol.y[0] > 1.0);
    }
}
