//! Dense reference constructions for small rings.
//!
//! Everything here is built from explicit 2×2 spin matrices and tensor
//! products, independently of the bit-manipulation kernels in
//! [`crate::operators`], and is used to cross-check them.

use nalgebra::DMatrix;

use crate::linalg::{symmetric_eigen, symmetric_eigenvalues, SymmetricEigen};
use num_complex::Complex64;

use crate::basis::{ChainSpec, Space};
use crate::error::{Error, Result};
use crate::measurement::{ProjectorSpec, Sign};
use crate::operators::{Axis, StateVector};

/// Largest ring for which dense matrices are built.
pub const MAX_DENSE_SITES: usize = 12;

fn guard(n_sites: usize) -> Result<()> {
    if n_sites > MAX_DENSE_SITES {
        Err(Error::ResourceGuard {
            n_sites,
            limit: MAX_DENSE_SITES,
        })
    } else {
        Ok(())
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Spin-1/2 matrix in the local basis (index 0 = down, index 1 = up), which
/// matches the bit value of a site in a basis code.
pub fn spin_matrix(axis: Axis) -> [[Complex64; 2]; 2] {
    let z = c(0.0, 0.0);
    match axis {
        Axis::X => [[z, c(0.5, 0.0)], [c(0.5, 0.0), z]],
        // S^y = [[0, -i/2], [i/2, 0]] in (up, down) order; rows/cols swapped here.
        Axis::Y => [[z, c(0.0, 0.5)], [c(0.0, -0.5), z]],
        Axis::Z => [[c(-0.5, 0.0), z], [z, c(0.5, 0.0)]],
    }
}

/// 4×4 two-site bond Hamiltonian `J S·S + Δ S^z S^z` in the basis
/// `2·bit_a + bit_b`.
fn bond_matrix(spec: &ChainSpec) -> [[f64; 4]; 4] {
    let mut out = [[c(0.0, 0.0); 4]; 4];
    for axis in Axis::ALL {
        let s = spin_matrix(axis);
        let weight = spec.exchange_j + if axis == Axis::Z { spec.anisotropy_delta } else { 0.0 };
        for r in 0..4 {
            for col in 0..4 {
                out[r][col] += s[r >> 1][col >> 1] * s[r & 1][col & 1] * weight;
            }
        }
    }
    let mut real = [[0.0; 4]; 4];
    for r in 0..4 {
        for col in 0..4 {
            assert!(out[r][col].im.abs() < 1e-15);
            real[r][col] = out[r][col].re;
        }
    }
    real
}

/// Dense H over `space` for N ≤ 12.
pub fn dense_hamiltonian(spec: &ChainSpec, space: &Space) -> Result<DMatrix<f64>> {
    guard(spec.n_sites)?;
    let n = spec.n_sites;
    let dim = space.dim();
    let bond = bond_matrix(spec);
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for col in 0..dim {
        let code = space.code(col);
        for a in 0..n {
            let b = (a + 1) % n;
            let local_col = (((code >> a) & 1) << 1 | ((code >> b) & 1)) as usize;
            for (local_row, row_of_bond) in bond.iter().enumerate() {
                let v = row_of_bond[local_col];
                if v == 0.0 {
                    continue;
                }
                let bit_a = (local_row >> 1) as u64;
                let bit_b = (local_row & 1) as u64;
                let target = (code & !(1 << a) & !(1 << b)) | bit_a << a | bit_b << b;
                if let Some(row) = space.index_of(target) {
                    h[(row, col)] += v;
                }
            }
        }
    }
    Ok(h)
}

/// All eigenvalues of H on `space`, ascending.
pub fn dense_spectrum(spec: &ChainSpec, space: &Space) -> Result<Vec<f64>> {
    Ok(symmetric_eigenvalues(dense_hamiltonian(spec, space)?))
}

/// Full eigendecomposition of H on `space`.
pub fn dense_eigen(spec: &ChainSpec, space: &Space) -> Result<SymmetricEigen> {
    Ok(symmetric_eigen(dense_hamiltonian(spec, space)?))
}

pub fn dense_matvec(h: &DMatrix<f64>, v: &[Complex64]) -> Vec<Complex64> {
    (0..h.nrows())
        .map(|r| h.row(r).iter().zip(v).map(|(a, b)| b * *a).sum())
        .collect()
}

/// `exp(-iHt)·psi` through the eigendecomposition of the dense H.
pub fn dense_evolve(psi: &StateVector, t: f64) -> Result<StateVector> {
    let eig = dense_eigen(psi.spec(), psi.space())?;
    let v = &eig.eigenvectors;
    let dim = psi.dim();
    let mut coeffs = vec![c(0.0, 0.0); dim];
    for (k, coeff) in coeffs.iter_mut().enumerate() {
        let overlap: Complex64 = (0..dim).map(|i| psi.amplitudes()[i] * v[(i, k)]).sum();
        *coeff = overlap * Complex64::from_polar(1.0, -eig.eigenvalues[k] * t);
    }
    let out = (0..dim)
        .map(|i| (0..dim).map(|k| coeffs[k] * v[(i, k)]).sum())
        .collect();
    psi.with_amplitudes(out)
}

/// `S^axis_site` as a dense 2^N × 2^N matrix.
pub fn dense_local_spin(n_sites: usize, site: usize, axis: Axis) -> Result<DMatrix<Complex64>> {
    guard(n_sites)?;
    let dim = 1usize << n_sites;
    let s = spin_matrix(axis);
    let bit = site - 1;
    let mut m = DMatrix::from_element(dim, dim, c(0.0, 0.0));
    for col in 0..dim {
        let local = (col >> bit) & 1;
        for (row_local, row) in s.iter().enumerate() {
            let v = row[local];
            if v != c(0.0, 0.0) {
                let target = (col & !(1 << bit)) | row_local << bit;
                m[(target, col)] += v;
            }
        }
    }
    Ok(m)
}

/// `(1 ± 2S^α_m)/2` as a dense matrix.
pub fn dense_projector(n_sites: usize, p: ProjectorSpec) -> Result<DMatrix<Complex64>> {
    let s = dense_local_spin(n_sites, p.site, p.axis)?;
    let sign = match p.sign {
        Sign::Plus => 1.0,
        Sign::Minus => -1.0,
    };
    let dim = 1usize << n_sites;
    Ok((DMatrix::identity(dim, dim) + s * c(2.0 * sign, 0.0)) * c(0.5, 0.0))
}

/// `|ψ⟩⟨ψ|` in the full space.
pub fn density_matrix(psi: &StateVector) -> DMatrix<Complex64> {
    let full = psi.to_full();
    let v = nalgebra::DVector::from_column_slice(full.amplitudes());
    &v * v.adjoint()
}

pub fn trace_product(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Complex64 {
    // Tr[AB] = Σ_ij A_ij B_ji
    let mut acc = c(0.0, 0.0);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}
