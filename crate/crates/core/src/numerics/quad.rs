//! Globally adaptive Gauss–Kronrod (7/15) quadrature.

use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{numeric, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Values that can be integrated: reals and complex numbers.
pub trait Integrand:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn zero() -> Self;
    fn magnitude(self) -> f64;
}

impl Integrand for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl Integrand for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs: 1e-13, rel: 1e-12, max_intervals: 2000 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
}

/// Single 15-point Kronrod rule with the embedded 7-point Gauss estimate.
pub fn kronrod15<T: Integrand, F: FnMut(f64) -> T>(f: &mut F, a: f64, b: f64) -> Estimate<T> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        kron = kron + s * WGK[i];
        if i % 2 == 1 {
            gauss = gauss + s * WG[i / 2];
        }
    }
    Estimate { value: kron * h, error: ((kron - gauss) * h).magnitude() }
}

struct Piece<T> {
    a: f64,
    b: f64,
    est: Estimate<T>,
}

impl<T> PartialEq for Piece<T> {
    fn eq(&self, o: &Self) -> bool {
        self.est.error == o.est.error
    }
}
impl<T> Eq for Piece<T> {}
impl<T> PartialOrd for Piece<T> {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl<T> Ord for Piece<T> {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.est.error.total_cmp(&o.est.error)
    }
}

/// Integrate `f` over `[a, b]`, bisecting the worst interval until the
/// summed error estimate meets the tolerance.
pub fn integrate<T: Integrand, F: FnMut(f64) -> T>(
    mut f: F,
    a: f64,
    b: f64,
    tol: Tolerance,
) -> Result<Estimate<T>> {
    integrate_pieces(&mut f, &[a, b], tol)
}

/// As [`integrate`], with interior breakpoints where the integrand is not smooth.
pub fn integrate_pieces<T: Integrand, F: FnMut(f64) -> T>(
    f: &mut F,
    points: &[f64],
    tol: Tolerance,
) -> Result<Estimate<T>> {
    let mut heap = BinaryHeap::new();
    for w in points.windows(2) {
        if w[1] != w[0] {
            heap.push(Piece { a: w[0], b: w[1], est: kronrod15(f, w[0], w[1]) });
        }
    }
    loop {
        let (value, error) = heap
            .iter()
            .fold((T::zero(), 0.0), |(v, e), p| (v + p.est.value, e + p.est.error));
        if error <= tol.abs.max(tol.rel * value.magnitude()) {
            return Ok(Estimate { value, error });
        }
        if heap.len() >= tol.max_intervals {
            return numeric(format!(
                "quadrature did not converge: error {error:.3e} after {} intervals",
                heap.len()
            ));
        }
        let worst = heap.pop().expect("non-empty interval set");
        let m = 0.5 * (worst.a + worst.b);
        if m <= worst.a || m >= worst.b {
            // Interval cannot be split further; accept what we have.
            heap.push(worst);
            let (value, error) = heap
                .iter()
                .fold((T::zero(), 0.0), |(v, e), p| (v + p.est.value, e + p.est.error));
            return Ok(Estimate { value, error });
        }
        heap.push(Piece { a: worst.a, b: m, est: kronrod15(f, worst.a, m) });
        heap.push(Piece { a: m, b: worst.b, est: kronrod15(f, m, worst.b) });
    }
}
