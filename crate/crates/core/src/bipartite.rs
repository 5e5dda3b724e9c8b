//! Two coupled collective spins `I` and `S` of `N` atoms each, the reduced
//! Loschmidt echo of `I`, and its decomposition by the sign of `S_y`.
//!
//! Product-basis amplitudes are stored with `m_I` as the slow index and
//! `m_S` as the fast one: `index = i_I · (N + 1) + i_S`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::dicke::{DickeSpace, SpinState, UNDERFLOW_FLOOR};
use crate::error::{config, Error, Result};
use crate::exec::Exec;
use crate::numerics::linalg::{sym_eigen, tridiagonal_eigen};

/// Largest product-space dimension propagated by dense diagonalisation.
pub const DENSE_BUDGET: usize = 2500;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BipartiteSpace {
    n_per_side: u32,
}

impl BipartiteSpace {
    pub fn new(n_per_side: u32) -> Result<Self> {
        if n_per_side == 0 || n_per_side % 2 != 0 {
            return config(format!("atoms per subsystem must be even and positive, got {n_per_side}"));
        }
        Ok(Self { n_per_side })
    }

    pub fn n_per_side(&self) -> u32 {
        self.n_per_side
    }

    pub fn side(&self) -> DickeSpace {
        DickeSpace::from_atoms(self.n_per_side)
    }

    pub fn side_dim(&self) -> usize {
        self.n_per_side as usize + 1
    }

    pub fn dim(&self) -> usize {
        self.side_dim() * self.side_dim()
    }

    pub fn index(&self, i_i: usize, i_s: usize) -> usize {
        i_i * self.side_dim() + i_s
    }
}

/// Real symmetric operator in coordinate form: diagonal plus upper-triangle couplings.
#[derive(Clone, Debug)]
pub struct SparseSymmetric {
    pub diag: Vec<f64>,
    pub upper: Vec<(usize, usize, f64)>,
}

impl SparseSymmetric {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = self.diag.iter().zip(v).map(|(d, x)| x * *d).collect();
        for &(i, j, h) in &self.upper {
            out[i] += v[j] * h;
            out[j] += v[i] * h;
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diag));
        for &(i, j, h) in &self.upper {
            m[(i, j)] = h;
            m[(j, i)] = h;
        }
        m
    }
}

/// `H = (G/2N)(I_z + S_z)² + Ω(I_x + S_x)`, with `N` atoms per subsystem.
pub fn build_bipartite_hamiltonian(space: BipartiteSpace, g: f64, omega: f64) -> SparseSymmetric {
    let side = space.side();
    let n = space.side_dim();
    let j = side.j();
    let scale = g / (2.0 * f64::from(space.n_per_side));
    let ladder: Vec<f64> = (0..n - 1)
        .map(|i| {
            let m = side.m(i);
            0.5 * omega * (j * (j + 1.0) - m * (m + 1.0)).sqrt()
        })
        .collect();
    let mut diag = vec![0.0; space.dim()];
    let mut upper = Vec::with_capacity(2 * n * (n - 1));
    for a in 0..n {
        for b in 0..n {
            let mz = side.m(a) + side.m(b);
            diag[space.index(a, b)] = scale * mz * mz;
            if a + 1 < n {
                upper.push((space.index(a, b), space.index(a + 1, b), ladder[a]));
            }
            if b + 1 < n {
                upper.push((space.index(a, b), space.index(a, b + 1), ladder[b]));
            }
        }
    }
    SparseSymmetric { diag, upper }
}

#[derive(Clone, Debug)]
pub struct BipartiteState {
    pub space: BipartiteSpace,
    pub amp: Vec<Complex64>,
}

impl BipartiteState {
    pub fn product(space: BipartiteSpace, a: &SpinState, b: &SpinState) -> Result<Self> {
        let n = space.side_dim();
        if a.amp.len() != n || b.amp.len() != n {
            return config("subsystem states do not match the bipartite space");
        }
        let amp = a.amp.iter().flat_map(|x| b.amp.iter().map(move |y| x * y)).collect();
        Ok(Self { space, amp })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Amplitudes `⟨m_I = row, m_S|Ψ⟩` as a vector over `m_S`.
    pub fn row(&self, i_i: usize) -> &[Complex64] {
        let n = self.space.side_dim();
        &self.amp[i_i * n..(i_i + 1) * n]
    }
}

/// Dense eigendecomposition of the product-space Hamiltonian.
#[derive(Clone, Debug)]
pub struct Propagator {
    pub space: BipartiteSpace,
    pub energies: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl Propagator {
    pub fn new(space: BipartiteSpace, h: &SparseSymmetric) -> Result<Self> {
        if space.dim() > DENSE_BUDGET {
            return Err(Error::Resource(format!(
                "product dimension {} exceeds the dense propagation budget {DENSE_BUDGET}",
                space.dim()
            )));
        }
        let eig = sym_eigen(h.to_dense())?;
        Ok(Self { space, energies: eig.values, vectors: eig.vectors })
    }

    pub fn coefficients(&self, psi: &BipartiteState) -> Vec<Complex64> {
        (0..self.energies.len())
            .map(|k| self.vectors.column(k).iter().zip(&psi.amp).map(|(v, a)| a * *v).sum())
            .collect()
    }

    pub fn evolve_coefficients(&self, coeffs: &[Complex64], t: f64) -> BipartiteState {
        let mut amp = vec![Complex64::new(0.0, 0.0); self.space.dim()];
        for (k, (c, e)) in coeffs.iter().zip(&self.energies).enumerate() {
            let w = c * Complex64::from_polar(1.0, -e * t);
            for (a, v) in amp.iter_mut().zip(self.vectors.column(k).iter()) {
                *a += w * *v;
            }
        }
        BipartiteState { space: self.space, amp }
    }

    pub fn evolve(&self, psi0: &BipartiteState, t: f64) -> BipartiteState {
        if t == 0.0 {
            return psi0.clone();
        }
        self.evolve_coefficients(&self.coefficients(psi0), t)
    }
}

/// `ρ_I = tr_S |Ψ⟩⟨Ψ|`.
#[derive(Clone, Debug)]
pub struct ReducedState {
    pub rho: DMatrix<Complex64>,
}

impl ReducedState {
    pub fn trace(&self) -> f64 {
        self.rho.diagonal().iter().map(|c| c.re).sum()
    }

    pub fn purity(&self) -> f64 {
        self.rho.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.rho.clone().symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

pub fn reduced_density(psi: &BipartiteState) -> ReducedState {
    let n = psi.space.side_dim();
    let rho = DMatrix::from_fn(n, n, |a, b| {
        psi.row(a).iter().zip(psi.row(b)).map(|(x, y)| x * y.conj()).sum()
    });
    ReducedState { rho }
}

fn rate_per(l: f64, n: f64) -> Option<f64> {
    (l >= UNDERFLOW_FLOOR && l.is_finite()).then(|| -l.ln() / n)
}

/// `L = ⟨ψ0|ρ_I|ψ0⟩` and `r = −ln L / N`.
pub fn mixed_loschmidt(rho: &ReducedState, psi0: &SpinState, space: BipartiteSpace) -> (f64, Option<f64>) {
    let v = nalgebra::DVector::from_column_slice(&psi0.amp);
    let l = (v.adjoint() * &rho.rho * &v)[(0, 0)].re.clamp(0.0, 1.0);
    (l, rate_per(l, f64::from(space.n_per_side)))
}

/// Projectors onto `S_y ≥ 0` and `S_y < 0` on one subsystem; the product-space
/// POVM elements are `1_I ⊗ plus` and `1_I ⊗ minus`.
#[derive(Clone, Debug)]
pub struct SyPovm {
    pub plus: DMatrix<Complex64>,
    pub minus: DMatrix<Complex64>,
    /// `S_y` eigenvalues in ascending order.
    pub eigenvalues: Vec<f64>,
}

/// `S_y = U T U†` with `U = diag(iᵏ)` and `T` real tridiagonal; the eigenbasis
/// of `T` comes from the tridiagonal solver. `m = 0` belongs to the plus element.
pub fn sy_povm(space: BipartiteSpace) -> Result<SyPovm> {
    let side = space.side();
    let n = space.side_dim();
    let j = side.j();
    let off: Vec<f64> = (0..n - 1)
        .map(|i| {
            let m = side.m(i);
            -0.5 * (j * (j + 1.0) - m * (m + 1.0)).sqrt()
        })
        .collect();
    let eig = tridiagonal_eigen(&vec![0.0; n], &off)?;
    let phase = |k: usize| Complex64::i().powu(k as u32);
    let mut plus = DMatrix::zeros(n, n);
    let mut minus = DMatrix::zeros(n, n);
    for (k, &lam) in eig.values.iter().enumerate() {
        let v: Vec<Complex64> = (0..n).map(|a| phase(a) * eig.vectors[(a, k)]).collect();
        let target = if lam > -0.5 { &mut plus } else { &mut minus };
        for a in 0..n {
            for b in 0..n {
                target[(a, b)] += v[a] * v[b].conj();
            }
        }
    }
    Ok(SyPovm { plus, minus, eigenvalues: eig.values })
}

/// Dense `S_y` of one subsystem.
pub fn sy_matrix(space: BipartiteSpace) -> DMatrix<Complex64> {
    let side = space.side();
    let n = space.side_dim();
    let j = side.j();
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n - 1 {
        let m = side.m(i);
        let c = 0.5 * (j * (j + 1.0) - m * (m + 1.0)).sqrt();
        s[(i + 1, i)] = Complex64::new(0.0, -c);
        s[(i, i + 1)] = Complex64::new(0.0, c);
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conditioned {
    pub l: f64,
    pub l_plus: f64,
    pub l_minus: f64,
    pub p_plus: f64,
    pub p_minus: f64,
    pub r: Option<f64>,
    pub r_plus: Option<f64>,
    pub r_minus: Option<f64>,
}

fn projected_norm(p: &DMatrix<Complex64>, v: &[Complex64]) -> f64 {
    let v = nalgebra::DVector::from_column_slice(v);
    (p * v).norm_squared()
}

/// Echo of `ψ0` on `I` split by the outcome of the `S_y` measurement on `S`.
pub fn conditioned_loschmidt(psi: &BipartiteState, psi0: &SpinState, povm: &SyPovm) -> Result<Conditioned> {
    let n = psi.space.side_dim();
    if psi0.amp.len() != n {
        return config("reference state does not match the subsystem");
    }
    // Component of Ψ along ψ0 on I, as a vector over m_S.
    let mut phi = vec![Complex64::new(0.0, 0.0); n];
    for a in 0..n {
        let w = psi0.amp[a].conj();
        if w != Complex64::new(0.0, 0.0) {
            for (p, x) in phi.iter_mut().zip(psi.row(a)) {
                *p += w * x;
            }
        }
    }
    let l_plus = projected_norm(&povm.plus, &phi);
    let l_minus = projected_norm(&povm.minus, &phi);
    let p_plus: f64 = (0..n).map(|a| projected_norm(&povm.plus, psi.row(a))).sum();
    let p_minus: f64 = (0..n).map(|a| projected_norm(&povm.minus, psi.row(a))).sum();
    let l = phi.iter().map(|c| c.norm_sqr()).sum::<f64>();
    let size = f64::from(psi.space.n_per_side);
    Ok(Conditioned {
        l,
        l_plus,
        l_minus,
        p_plus,
        p_minus,
        r: rate_per(l, size),
        r_plus: rate_per(l_plus, size),
        r_minus: rate_per(l_minus, size),
    })
}

#[derive(Clone, Debug)]
pub struct BipartiteConfig {
    pub space: BipartiteSpace,
    pub g: f64,
    pub omega: f64,
    pub m0: f64,
    pub times: Vec<f64>,
    pub exec: Exec,
}

impl BipartiteConfig {
    /// `G = Ω = 1`, `m0` the integer nearest `0.6 j` of one subsystem.
    pub fn reference(n_per_side: u32, times: Vec<f64>) -> Result<Self> {
        let space = BipartiteSpace::new(n_per_side)?;
        let m0 = space.side().nearest_m(0.6);
        Ok(Self { space, g: 1.0, omega: 1.0, m0, times, exec: Exec::default() })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BipartiteRow {
    pub t: f64,
    pub echo: Conditioned,
}

/// Conditioned echo of the product state `|m0⟩ ⊗ |m0⟩` at every requested time.
pub fn bipartite_rates(cfg: &BipartiteConfig) -> Result<Vec<BipartiteRow>> {
    let side = cfg.space.side();
    let psi0 = SpinState::fock(side, cfg.m0)?;
    let start = BipartiteState::product(cfg.space, &psi0, &psi0)?;
    let h = build_bipartite_hamiltonian(cfg.space, cfg.g, cfg.omega);
    let prop = Propagator::new(cfg.space, &h)?;
    let povm = sy_povm(cfg.space)?;
    let coeffs = prop.coefficients(&start);
    cfg.exec.try_map(&cfg.times, |&t| {
        let psi = if t == 0.0 { start.clone() } else { prop.evolve_coefficients(&coeffs, t) };
        Ok(BipartiteRow { t, echo: conditioned_loschmidt(&psi, &psi0, &povm)? })
    })
}
