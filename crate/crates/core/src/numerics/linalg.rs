//! Symmetric eigenproblems: implicit-shift QL for tridiagonal matrices and a
//! dense solver for the bipartite propagator.

use nalgebra::DMatrix;

use crate::error::{numeric, Result};

/// Eigenpairs sorted by ascending eigenvalue. Column `n` of `vectors` is the
/// eigenvector of `values[n]`, signed so its largest-magnitude entry is positive.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Implicit QL with Wilkinson-style shifts on `d` (diagonal) and `e` (`e[i]`
/// couples `i` and `i + 1`, `e[n - 1]` ignored). Rotations are accumulated into
/// the row-major `z`, which holds `z.len() / n` selected rows of the
/// eigenvector matrix. On return `d` holds the unsorted eigenvalues.
fn tql2(d: &mut [f64], e: &mut [f64], z: &mut [f64]) -> Result<()> {
    let n = d.len();
    let rows = if n == 0 { 0 } else { z.len() / n };
    if n > 0 {
        e[n - 1] = 0.0;
    }
    let scale = d.iter().chain(e.iter()).fold(0.0f64, |a, x| a.max(x.abs()));
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > f64::EPSILON * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return numeric(format!(
                        "tridiagonal QL did not converge: size {n}, residual {:.3e} (scale {scale:.3e})",
                        e[l].abs()
                    ));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    let h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..rows {
                        let row = &mut z[k * n..(k + 1) * n];
                        let h = row[i + 1];
                        row[i + 1] = s * row[i] + c * h;
                        row[i] = c * row[i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= f64::EPSILON * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

fn ascending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
}

fn check_tridiagonal(diag: &[f64], off: &[f64]) -> Result<()> {
    if diag.is_empty() {
        return numeric("empty tridiagonal matrix");
    }
    if off.len() + 1 != diag.len() {
        return numeric(format!(
            "tridiagonal off-diagonal has length {} for dimension {}",
            off.len(),
            diag.len()
        ));
    }
    Ok(())
}

/// Full eigen-decomposition of a symmetric tridiagonal matrix given by its
/// diagonal and off-diagonal (`off[i]` couples rows `i` and `i + 1`).
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Result<Eigen> {
    check_tridiagonal(diag, off)?;
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    tql2(&mut d, &mut e, &mut z)?;
    let order = ascending(&d);
    let values = order.iter().map(|&i| d[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let mut big = 0.0f64;
        for r in 0..n {
            let v = z[r * n + src];
            if v.abs() > big.abs() {
                big = v;
            }
        }
        let s = if big < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            vectors[(r, col)] = s * z[r * n + src];
        }
    }
    Ok(Eigen { values, vectors })
}

/// Eigenvalues together with selected rows of the eigenvector matrix; costs
/// O(n²) per row instead of O(n³) for the full basis. Row signs follow the
/// solver and are only meaningful up to the column sign convention.
pub fn tridiagonal_eigen_rows(
    diag: &[f64],
    off: &[f64],
    rows: &[usize],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    check_tridiagonal(diag, off)?;
    let n = diag.len();
    if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
        return numeric(format!("row {bad} out of range for dimension {n}"));
    }
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    let mut z = vec![0.0; rows.len() * n];
    for (k, &r) in rows.iter().enumerate() {
        z[k * n + r] = 1.0;
    }
    tql2(&mut d, &mut e, &mut z)?;
    let order = ascending(&d);
    let values = order.iter().map(|&i| d[i]).collect();
    let out = (0..rows.len())
        .map(|k| order.iter().map(|&i| z[k * n + i]).collect())
        .collect();
    Ok((values, out))
}

/// Dense real symmetric eigenproblem, same ordering and sign convention.
pub fn sym_eigen(m: DMatrix<f64>) -> Result<Eigen> {
    let n = m.nrows();
    if n != m.ncols() {
        return numeric("eigenproblem matrix is not square");
    }
    let eig = nalgebra::SymmetricEigen::try_new(m, f64::EPSILON, 0)
        .ok_or_else(|| crate::Error::Numeric(format!("dense eigensolver failed at size {n}")))?;
    let vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let order = ascending(&vals);
    let values = order.iter().map(|&i| vals[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        let big = v.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
        let s = if big < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            vectors[(r, col)] = s * v[r];
        }
    }
    Ok(Eigen { values, vectors })
}
