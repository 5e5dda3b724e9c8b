//! Exact dynamics in the maximal-spin (Dicke) sector: Hamiltonian, spectrum,
//! spectral time evolution, Loschmidt echo and Fock-space amplitude maps.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{config, numeric, Result};
use crate::exec::Exec;
use crate::numerics::linalg;

/// Echo values below this are reported as underflow rather than as a rate.
pub const UNDERFLOW_FLOOR: f64 = 1e-300;

/// Spin-`j` symmetric sector. Stored as `2j` so half-integers are exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DickeSpace {
    two_j: u32,
}

impl DickeSpace {
    pub fn from_twice_j(two_j: u32) -> Self {
        Self { two_j }
    }

    /// Sector of `n_atoms` spin-1/2 particles, `j = N/2`.
    pub fn from_atoms(n_atoms: u32) -> Self {
        Self { two_j: n_atoms }
    }

    pub fn from_j(j: f64) -> Result<Self> {
        let two = 2.0 * j;
        if !(two >= 0.0) || (two - two.round()).abs() > 1e-12 || two > u32::MAX as f64 {
            return config(format!("j = {j} is not a non-negative half-integer"));
        }
        Ok(Self { two_j: two.round() as u32 })
    }

    pub fn j(&self) -> f64 {
        self.two_j as f64 / 2.0
    }

    pub fn n_atoms(&self) -> u32 {
        self.two_j
    }

    pub fn dim(&self) -> usize {
        self.two_j as usize + 1
    }

    /// Magnetic quantum number of basis index `i` (`i = 0` is `m = -j`).
    pub fn m(&self, i: usize) -> f64 {
        i as f64 - self.j()
    }

    pub fn index(&self, m: f64) -> Result<usize> {
        let i = m + self.j();
        if (i - i.round()).abs() > 1e-9 || i.round() < 0.0 || i.round() as usize >= self.dim() {
            return config(format!("m = {m} is not a valid magnetic number for j = {}", self.j()));
        }
        Ok(i.round() as usize)
    }

    /// Allowed `m` nearest to `fraction · j`; ties round toward +∞.
    pub fn nearest_m(&self, fraction: f64) -> f64 {
        let j = self.j();
        let i = (fraction * j + j + 0.5).floor().clamp(0.0, 2.0 * j);
        i - j
    }
}

/// Per-site normalisation of the rate function.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RateNorm {
    /// `r = -ln L / j`
    #[default]
    PerJ,
    /// `r = -ln L / N` with `N = 2j`
    PerN,
}

impl RateNorm {
    pub fn size(self, space: DickeSpace) -> f64 {
        match self {
            RateNorm::PerJ => space.j(),
            RateNorm::PerN => 2.0 * space.j(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinState {
    pub space: DickeSpace,
    pub amp: Vec<Complex64>,
}

impl SpinState {
    pub fn fock(space: DickeSpace, m: f64) -> Result<Self> {
        let mut amp = vec![Complex64::new(0.0, 0.0); space.dim()];
        amp[space.index(m)?] = Complex64::new(1.0, 0.0);
        Ok(Self { space, amp })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn overlap(&self, other: &SpinState) -> Complex64 {
        self.amp.iter().zip(&other.amp).map(|(a, b)| a.conj() * b).sum()
    }
}

#[derive(Clone, Debug)]
pub struct QuenchConfig {
    pub g: f64,
    pub omega: f64,
    pub space: DickeSpace,
    pub m0: f64,
    pub times: Vec<f64>,
    pub norm: RateNorm,
    pub exec: Exec,
}

impl QuenchConfig {
    /// Reference quench: `G = Ω = 1`, initial Fock state nearest `0.6 j`.
    pub fn reference(space: DickeSpace, times: Vec<f64>) -> Self {
        Self {
            g: 1.0,
            omega: 1.0,
            space,
            m0: space.nearest_m(0.6),
            times,
            norm: RateNorm::PerJ,
            exec: Exec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.space.index(self.m0)?;
        if !self.g.is_finite() || !self.omega.is_finite() {
            return config("couplings must be finite");
        }
        if self.times.first().is_some_and(|&t| t < 0.0) {
            return config("times must start at t >= 0");
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return config("times must be strictly increasing");
        }
        Ok(())
    }

    pub fn initial_state(&self) -> Result<SpinState> {
        SpinState::fock(self.space, self.m0)
    }
}

/// `H = (G/2j) J_z² + Ω J_x` as a symmetric tridiagonal matrix in the `J_z` basis.
#[derive(Clone, Debug, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut s = v[i] * self.diag[i];
                if i > 0 {
                    s += v[i - 1] * self.off[i - 1];
                }
                if i + 1 < n {
                    s += v[i + 1] * self.off[i];
                }
                s
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
        }
        for (i, &b) in self.off.iter().enumerate() {
            m[(i, i + 1)] = b;
            m[(i + 1, i)] = b;
        }
        m
    }
}

pub fn build_hamiltonian(space: DickeSpace, g: f64, omega: f64) -> Tridiagonal {
    let j = space.j();
    let n = space.dim();
    let diag = (0..n)
        .map(|i| {
            let m = space.m(i);
            if j > 0.0 {
                g / (2.0 * j) * m * m
            } else {
                0.0
            }
        })
        .collect();
    let off = (0..n.saturating_sub(1))
        .map(|i| {
            let m = space.m(i);
            0.5 * omega * (j * (j + 1.0) - m * (m + 1.0)).sqrt()
        })
        .collect();
    Tridiagonal { diag, off }
}

/// Orthonormal eigenbasis; column `n` of `vectors` belongs to `energies[n]`.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub space: DickeSpace,
    pub energies: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn diagonalize(space: DickeSpace, h: &Tridiagonal) -> Result<EigenSystem> {
    if h.dim() != space.dim() {
        return numeric(format!("Hamiltonian has size {}, space has {}", h.dim(), space.dim()));
    }
    let e = linalg::tridiagonal_eigen(&h.diag, &h.off)?;
    Ok(EigenSystem { space, energies: e.values, vectors: e.vectors })
}

impl EigenSystem {
    /// Expansion coefficients `⟨E_n|ψ⟩`.
    pub fn coefficients(&self, psi: &SpinState) -> Result<Vec<Complex64>> {
        if psi.space != self.space {
            return numeric("state and eigensystem live in different spaces");
        }
        let n = self.space.dim();
        Ok((0..n)
            .map(|k| (0..n).map(|i| psi.amp[i] * self.vectors[(i, k)]).sum())
            .collect())
    }

    /// State at time `t` from precomputed coefficients.
    pub fn synthesize(&self, coeffs: &[Complex64], t: f64) -> SpinState {
        let n = self.space.dim();
        let phased: Vec<Complex64> = coeffs
            .iter()
            .zip(&self.energies)
            .map(|(c, &e)| c * Complex64::from_polar(1.0, -e * t))
            .collect();
        let amp = (0..n)
            .map(|i| (0..n).map(|k| phased[k] * self.vectors[(i, k)]).sum())
            .collect();
        SpinState { space: self.space, amp }
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.energies.clone()));
        &self.vectors * d * self.vectors.transpose()
    }
}

pub fn evolve(es: &EigenSystem, psi0: &SpinState, t: f64) -> Result<SpinState> {
    let c = es.coefficients(psi0)?;
    Ok(es.synthesize(&c, t))
}

pub fn energy_expectation(h: &Tridiagonal, psi: &SpinState) -> f64 {
    let hpsi = h.apply(&psi.amp);
    psi.amp.iter().zip(&hpsi).map(|(a, b)| (a.conj() * b).re).sum()
}

#[derive(Clone, Debug)]
pub struct Echo {
    pub times: Vec<f64>,
    pub l: Vec<f64>,
}

/// Return probability of the initial Fock state, `|Σ_n c_n² e^{-iE_n t}|²`.
pub fn loschmidt(cfg: &QuenchConfig) -> Result<Echo> {
    cfg.validate()?;
    let h = build_hamiltonian(cfg.space, cfg.g, cfg.omega);
    let row = cfg.space.index(cfg.m0)?;
    let (energies, rows) = linalg::tridiagonal_eigen_rows(&h.diag, &h.off, &[row])?;
    let weights: Vec<f64> = rows[0].iter().map(|c| c * c).collect();
    let l = cfg.exec.map(&cfg.times, |&t| echo_from_spectrum(&energies, &weights, t));
    Ok(Echo { times: cfg.times.clone(), l })
}

/// `|Σ_n w_n e^{-iE_n t}|²`, clamped to `[0, 1]` against roundoff.
pub fn echo_from_spectrum(energies: &[f64], weights: &[f64], t: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let amp: Complex64 = energies
        .iter()
        .zip(weights)
        .map(|(&e, &w)| Complex64::from_polar(w, -e * t))
        .sum();
    amp.norm_sqr().min(1.0)
}

/// `-ln L / size`, or `None` where `L` fell below [`UNDERFLOW_FLOOR`].
pub fn rate(l: f64, space: DickeSpace, norm: RateNorm) -> Option<f64> {
    if l < UNDERFLOW_FLOOR || !l.is_finite() {
        None
    } else {
        Some(-l.ln() / norm.size(space))
    }
}

pub fn rate_function(l: &[f64], space: DickeSpace, norm: RateNorm) -> Vec<Option<f64>> {
    l.iter().map(|&x| rate(x, space, norm)).collect()
}

/// `|⟨j,m|ψ(t)⟩|` on the configured time grid; `columns[k][i]` is time `k`, basis index `i`.
#[derive(Clone, Debug)]
pub struct FockMap {
    pub space: DickeSpace,
    pub times: Vec<f64>,
    pub columns: Vec<Vec<f64>>,
}

impl FockMap {
    pub fn ms(&self) -> Vec<f64> {
        (0..self.space.dim()).map(|i| self.space.m(i)).collect()
    }
}

pub fn fock_map(cfg: &QuenchConfig) -> Result<FockMap> {
    cfg.validate()?;
    let h = build_hamiltonian(cfg.space, cfg.g, cfg.omega);
    let es = diagonalize(cfg.space, &h)?;
    let c = es.coefficients(&cfg.initial_state()?)?;
    let columns = cfg
        .exec
        .map(&cfg.times, |&t| es.synthesize(&c, t).amp.iter().map(|a| a.norm()).collect());
    Ok(FockMap { space: cfg.space, times: cfg.times.clone(), columns })
}
