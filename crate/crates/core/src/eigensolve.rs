//! Ground states: Lanczos for production sizes, dense diagonalization as a
//! small-N oracle, and the thermodynamic-limit Bethe Ansatz energy density.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{enumerate_sector, ChainSpec, Space};
use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, tridiagonal_eigen};
use crate::operators::{dot, hamiltonian_affine, norm, scale, StateVector};
use crate::oracle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reorthogonalization {
    /// Gram-Schmidt (twice) against every stored Lanczos vector.
    Full,
    /// Orthogonalize only against Ritz vectors that have converged to
    /// roughly half machine precision.
    Selective,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanczosConfig {
    pub max_krylov_dim: usize,
    /// Relative change of the Ritz value between checks accepted as converged.
    pub energy_tol: f64,
    pub reorthogonalize: Reorthogonalization,
    pub seed: u64,
    pub max_restarts: usize,
    /// Solve in the S^z = 0 sector instead of the full space.
    pub use_sector: bool,
}

impl Default for LanczosConfig {
    fn default() -> Self {
        LanczosConfig {
            max_krylov_dim: 300,
            energy_tol: 1e-12,
            reorthogonalize: Reorthogonalization::Full,
            seed: 1,
            max_restarts: 3,
            use_sector: true,
        }
    }
}

impl LanczosConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_krylov_dim < 2 {
            return Err(Error::Domain("max_krylov_dim must be at least 2".into()));
        }
        if !(self.energy_tol > 0.0) {
            return Err(Error::Domain("energy_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GroundStateResult {
    pub energy: f64,
    pub state: StateVector,
    /// ‖Hψ - Eψ‖₂
    pub residual: f64,
    pub iterations: usize,
    /// Total S^z of the sector the solve ran in, if any.
    pub sector_used: Option<f64>,
}

/// Residual accepted for a ground state, relative to max(1, |E|).
pub const RESIDUAL_TOL: f64 = 1e-10;

pub fn lanczos_ground_state(spec: &ChainSpec, cfg: &LanczosConfig) -> Result<GroundStateResult> {
    let space = if cfg.use_sector {
        Space::sector(enumerate_sector(spec, 0.0)?)
    } else {
        Space::full(spec.n_sites)
    };
    lanczos_ground_state_in(spec, &space, cfg)
}

/// Lowest eigenpair of H restricted to `space`.
pub fn lanczos_ground_state_in(
    spec: &ChainSpec,
    space: &Space,
    cfg: &LanczosConfig,
) -> Result<GroundStateResult> {
    cfg.validate()?;
    let dim = space.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut start = random_unit(dim, &mut rng);
    let mut iterations = 0;
    let mut best_residual = f64::INFINITY;
    let mut previous_energy = f64::INFINITY;

    for attempt in 0..=cfg.max_restarts {
        let run = krylov_pass(spec, space, &start, cfg)?;
        iterations += run.steps;
        let (energy, vector, residual) = refine(spec, space, run.ritz_vector);
        log::debug!(
            "lanczos pass {attempt}: E = {energy:.15}, residual = {residual:.3e}, {} steps",
            run.steps
        );
        best_residual = best_residual.min(residual);
        if residual <= RESIDUAL_TOL * energy.abs().max(1.0) {
            let amplitudes = vector.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            let mut state = StateVector::new(*spec, space.clone(), amplitudes)?;
            state.fix_global_phase();
            return Ok(GroundStateResult {
                energy,
                state,
                residual,
                iterations,
                sector_used: space.as_sector().map(|s| s.total_sz()),
            });
        }
        // Restart from the Ritz vector; if the pass made no progress, mix in a
        // fresh random direction.
        start = vector;
        if (previous_energy - energy).abs() <= 1e-14 * energy.abs().max(1.0) {
            let kick = random_unit(dim, &mut rng);
            start.iter_mut().zip(&kick).for_each(|(s, k)| *s += 1e-2 * k);
            let n = norm(&start);
            scale(&mut start, 1.0 / n);
        }
        previous_energy = energy;
    }
    Err(Error::Convergence {
        iterations,
        best_residual,
    })
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect();
    let n = norm(&v);
    scale(&mut v, 1.0 / n);
    v
}

struct KrylovRun {
    ritz_vector: Vec<f64>,
    steps: usize,
}

fn krylov_pass(spec: &ChainSpec, space: &Space, start: &[f64], cfg: &LanczosConfig) -> Result<KrylovRun> {
    let dim = space.dim();
    let max_dim = cfg.max_krylov_dim.min(dim);
    let mut basis: Vec<Vec<f64>> = vec![start.to_vec()];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut locked: Vec<Vec<f64>> = Vec::new();
    let mut w = vec![0.0; dim];
    let mut last_theta = f64::INFINITY;
    let mut ritz = None;

    for j in 0..max_dim {
        hamiltonian_affine(spec, space, &basis[j], 1.0, 0.0, 0.0, &mut w);
        let a = dot(&basis[j], &w);
        axpy(-a, &basis[j], &mut w);
        if j > 0 {
            axpy(-betas[j - 1], &basis[j - 1], &mut w);
        }
        match cfg.reorthogonalize {
            Reorthogonalization::Full => {
                for _ in 0..2 {
                    for v in &basis {
                        let overlap = dot(v, &w);
                        axpy(-overlap, v, &mut w);
                    }
                }
            }
            Reorthogonalization::Selective => {
                for y in &locked {
                    let overlap = dot(y, &w);
                    axpy(-overlap, y, &mut w);
                }
            }
        }
        alphas.push(a);
        let b = norm(&w);
        betas.push(b);

        let m = alphas.len();
        let breakdown = b <= 1e-13 * a.abs().max(1.0);
        let last = m == max_dim;
        if breakdown || last || m < 30 || m % 4 == 0 {
            let eig = tridiagonal_eigen(&alphas, &betas[..m - 1]);
            let k = argmin(eig.eigenvalues.as_slice());
            let theta = eig.eigenvalues[k];
            let estimate = (b * eig.eigenvectors[(m - 1, k)]).abs();
            let scale_e = theta.abs().max(1.0);

            if cfg.reorthogonalize == Reorthogonalization::Selective {
                let t_norm = eig.eigenvalues.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
                let threshold = f64::EPSILON.sqrt() * t_norm;
                locked.clear();
                for col in 0..m {
                    if (b * eig.eigenvectors[(m - 1, col)]).abs() <= threshold {
                        locked.push(combine(&basis, eig.eigenvectors.column(col).as_slice()));
                    }
                }
            }

            let settled = (theta - last_theta).abs() <= cfg.energy_tol * scale_e;
            if breakdown || last || (estimate <= 0.1 * RESIDUAL_TOL * scale_e && settled) {
                let s = eig.eigenvectors.column(k);
                ritz = Some(combine(&basis, s.as_slice()));
                if breakdown || estimate <= 0.1 * RESIDUAL_TOL * scale_e {
                    break;
                }
            }
            last_theta = theta;
        }
        if breakdown || last {
            break;
        }
        scale(&mut w, 1.0 / b);
        basis.push(std::mem::replace(&mut w, vec![0.0; dim]));
    }

    Ok(KrylovRun {
        ritz_vector: ritz.expect("final Krylov step always forms a Ritz vector"),
        steps: alphas.len(),
    })
}

/// Normalize, recompute the Rayleigh quotient and the true residual.
fn refine(spec: &ChainSpec, space: &Space, mut v: Vec<f64>) -> (f64, Vec<f64>, f64) {
    let n = norm(&v);
    scale(&mut v, 1.0 / n);
    let mut hv = vec![0.0; v.len()];
    hamiltonian_affine(spec, space, &v, 1.0, 0.0, 0.0, &mut hv);
    let energy = dot(&v, &hv);
    axpy(-energy, &v, &mut hv);
    let residual = norm(&hv);
    (energy, v, residual)
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

fn combine(basis: &[Vec<f64>], coeffs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; basis[0].len()];
    for (v, &c) in basis.iter().zip(coeffs) {
        axpy(c, v, &mut out);
    }
    out
}

fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap()
}

/// Lowest eigenpair from full dense diagonalization, N ≤ 12 only.
pub fn dense_ground_state(spec: &ChainSpec) -> Result<GroundStateResult> {
    let space = Space::full(spec.n_sites);
    let h = oracle::dense_hamiltonian(spec, &space)?;
    let eig = symmetric_eigen(h.clone());
    let k = argmin(eig.eigenvalues.as_slice());
    let energy = eig.eigenvalues[k];
    let v = eig.eigenvectors.column(k).into_owned();
    let r = &h * &v - &v * energy;
    let amplitudes = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut state = StateVector::new(*spec, space, amplitudes)?;
    state.fix_global_phase();
    Ok(GroundStateResult {
        energy,
        state,
        residual: r.norm(),
        iterations: 0,
        sector_used: None,
    })
}

/// Ground-state energy per site of the infinite isotropic chain, in units of J:
/// `1/4 - ln 2`.
pub fn bethe_reference_energy_per_site() -> f64 {
    0.25 - std::f64::consts::LN_2
}
