//! State vectors and matrix-free application of the XXZ Hamiltonian and of
//! single-site spin operators.
//!
//! `H = J Σ_b S_b·S_{b+1} + Δ Σ_b S^z_b S^z_{b+1}` over the N bonds of the ring.
//! In the product basis the Ising part is diagonal with coefficient `J + Δ`
//! and the transverse part swaps antiparallel neighbours with amplitude `J/2`.
//! Units: ħ = 1, energies in units of J as given, times as `tJ`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul};
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisIndex, ChainSpec, Space};
use crate::error::{Error, Result};
use crate::linalg::tridiagonal_eigen;

/// Tolerance on ‖ψ‖ - 1 for states treated as physical.
pub const NORM_TOLERANCE: f64 = 1e-10;

const PAR_CHUNK: usize = 1 << 12;

/// Scalar types the Hamiltonian kernel can act on.
pub trait Amplitude:
    Copy + Send + Sync + Add<Output = Self> + AddAssign + Mul<f64, Output = Self>
{
    fn zero() -> Self;
}

impl Amplitude for f64 {
    fn zero() -> Self {
        0.0
    }
}

impl Amplitude for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(Error::Domain(format!("unknown axis {other:?}"))),
        }
    }
}

/// `S^axis` acting on `site` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalSpinOp {
    pub site: usize,
    pub axis: Axis,
}

impl LocalSpinOp {
    pub fn new(site: usize, axis: Axis) -> Self {
        LocalSpinOp { site, axis }
    }

    pub(crate) fn check(&self, n_sites: usize) -> Result<()> {
        check_site(self.site, n_sites)
    }
}

pub(crate) fn check_site(site: usize, n_sites: usize) -> Result<()> {
    if site == 0 || site > n_sites {
        Err(Error::Domain(format!("site {site} outside 1..={n_sites}")))
    } else {
        Ok(())
    }
}

/// Complex amplitudes over a [`Space`] for a given chain.
///
/// Physical states are normalized; results of operator application are not,
/// and callers renormalize explicitly.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    spec: ChainSpec,
    space: Space,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn new(spec: ChainSpec, space: Space, amplitudes: Vec<Complex64>) -> Result<Self> {
        if space.n_sites() != spec.n_sites {
            return Err(Error::Domain(format!(
                "space has {} sites, chain has {}",
                space.n_sites(),
                spec.n_sites
            )));
        }
        if amplitudes.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                found: amplitudes.len(),
            });
        }
        Ok(StateVector {
            spec,
            space,
            amplitudes,
        })
    }

    pub fn zeros(spec: ChainSpec, space: Space) -> Self {
        let dim = space.dim();
        StateVector {
            spec,
            space,
            amplitudes: vec![Complex64::new(0.0, 0.0); dim],
        }
    }

    /// A single product state in the full space.
    pub fn product(spec: ChainSpec, code: BasisIndex) -> Result<Self> {
        Self::product_in(spec, Space::full(spec.n_sites), code)
    }

    pub fn product_in(spec: ChainSpec, space: Space, code: BasisIndex) -> Result<Self> {
        let index = space
            .index_of(code.0)
            .ok_or_else(|| Error::Domain(format!("product state {code} not in the chosen space")))?;
        let mut psi = Self::zeros(spec, space);
        psi.amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(psi)
    }

    /// Normalized state with uniformly random real and imaginary parts.
    pub fn random(spec: ChainSpec, space: Space, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amplitudes = (0..space.dim())
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let mut psi = StateVector {
            spec,
            space,
            amplitudes,
        };
        psi.normalize();
        psi
    }

    pub fn spec(&self) -> &ChainSpec {
        &self.spec
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    /// Same chain and space, new amplitudes.
    pub fn with_amplitudes(&self, amplitudes: Vec<Complex64>) -> Result<Self> {
        Self::new(self.spec, self.space.clone(), amplitudes)
    }

    /// Amplitude of a basis code; zero if the space excludes it.
    pub fn amplitude_of(&self, code: BasisIndex) -> Complex64 {
        self.space
            .index_of(code.0)
            .map_or(Complex64::new(0.0, 0.0), |i| self.amplitudes[i])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Scales to unit norm and returns the previous norm.
    pub fn normalize(&mut self) -> f64 {
        let norm = self.norm();
        if norm > 0.0 {
            let inv = 1.0 / norm;
            self.amplitudes.iter_mut().for_each(|a| *a *= inv);
        }
        norm
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() <= NORM_TOLERANCE
    }

    pub(crate) fn ensure_normalized(&self) -> Result<()> {
        if self.is_normalized() {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "state is not normalized (norm = {})",
                self.norm()
            )))
        }
    }

    /// `⟨self|other⟩`, embedding into the full space when the spaces differ.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        if self.space == other.space {
            inner(&self.amplitudes, &other.amplitudes)
        } else {
            inner(&self.to_full().amplitudes, &other.to_full().amplitudes)
        }
    }

    /// Embedding into the full 2^N space.
    pub fn to_full(&self) -> StateVector {
        match &self.space {
            Space::Full { .. } => self.clone(),
            Space::Sector(sector) => {
                let mut full = StateVector::zeros(self.spec, Space::full(self.spec.n_sites));
                for (&code, &a) in sector.member_codes().iter().zip(&self.amplitudes) {
                    full.amplitudes[code as usize] = a;
                }
                full
            }
        }
    }

    /// Codes carrying amplitude above `threshold` in magnitude.
    pub fn support(&self, threshold: f64) -> impl Iterator<Item = BasisIndex> + '_ {
        self.amplitudes
            .iter()
            .enumerate()
            .filter(move |(_, a)| a.norm() > threshold)
            .map(|(i, _)| BasisIndex(self.space.code(i)))
    }

    /// Multiply by a global phase so the largest-magnitude amplitude is real
    /// and positive. Among entries within a relative 1e-6 of the maximum the
    /// lowest index is used, so near-degenerate maxima pick a stable entry.
    pub fn fix_global_phase(&mut self) {
        let max = self.amplitudes.iter().map(|a| a.norm()).fold(0.0, f64::max);
        if max == 0.0 {
            return;
        }
        let pivot = self
            .amplitudes
            .iter()
            .find(|a| a.norm() >= max * (1.0 - 1e-6))
            .copied()
            .unwrap();
        let phase = pivot.conj() / pivot.norm();
        self.amplitudes.iter_mut().for_each(|a| *a *= phase);
    }

    /// Largest componentwise |difference|, comparing in the full space if needed.
    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        if self.space == other.space {
            max_abs_diff(&self.amplitudes, &other.amplitudes)
        } else {
            max_abs_diff(&self.to_full().amplitudes, &other.to_full().amplitudes)
        }
    }
}

pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Cyclic right rotation of an N-bit code: bit b of the result is bit b+1 mod N.
#[inline]
pub(crate) fn rotate_down(code: u64, n_sites: usize) -> u64 {
    (code >> 1) | ((code & 1) << (n_sites - 1))
}

/// `out = alpha·H·input + beta·input + gamma·out`, gathered per output index.
///
/// With `gamma == 0` the previous contents of `out` are never read.
pub fn hamiltonian_affine<T: Amplitude>(
    spec: &ChainSpec,
    space: &Space,
    input: &[T],
    alpha: f64,
    beta: f64,
    gamma: f64,
    out: &mut [T],
) {
    let n = spec.n_sites;
    assert_eq!(input.len(), space.dim());
    assert_eq!(out.len(), space.dim());
    let ising = 0.25 * (spec.exchange_j + spec.anisotropy_delta);
    let hop = 0.5 * spec.exchange_j * alpha;

    // Flip mask of bond (b, b+1 mod N), indexed by the lower bit b.
    let mut pair = [0u64; 64];
    for (b, m) in pair.iter_mut().enumerate().take(n) {
        *m = (1u64 << b) | (1u64 << ((b + 1) % n));
    }

    let kernel = |start: usize, chunk: &mut [T]| match space {
        Space::Full { .. } => {
            for (offset, slot) in chunk.iter_mut().enumerate() {
                let i = start + offset;
                let code = i as u64;
                let mut anti = code ^ rotate_down(code, n);
                let diag = ising * (n as f64 - 2.0 * anti.count_ones() as f64);
                let mut hops = T::zero();
                while anti != 0 {
                    let b = anti.trailing_zeros() as usize;
                    anti &= anti - 1;
                    hops += input[(code ^ pair[b]) as usize];
                }
                let mut acc = input[i] * (alpha * diag + beta) + hops * hop;
                if gamma != 0.0 {
                    acc += *slot * gamma;
                }
                *slot = acc;
            }
        }
        Space::Sector(sector) => {
            let codes = &sector.member_codes()[start..start + chunk.len()];
            for (offset, (slot, &code)) in chunk.iter_mut().zip(codes).enumerate() {
                let i = start + offset;
                let mut anti = code ^ rotate_down(code, n);
                let diag = ising * (n as f64 - 2.0 * anti.count_ones() as f64);
                let mut hops = T::zero();
                while anti != 0 {
                    let b = anti.trailing_zeros() as usize;
                    anti &= anti - 1;
                    hops += input[sector.rank_unchecked(code ^ pair[b])];
                }
                let mut acc = input[i] * (alpha * diag + beta) + hops * hop;
                if gamma != 0.0 {
                    acc += *slot * gamma;
                }
                *slot = acc;
            }
        }
    };

    if out.len() >= 2 * PAR_CHUNK {
        out.par_chunks_mut(PAR_CHUNK)
            .enumerate()
            .for_each(|(c, chunk)| kernel(c * PAR_CHUNK, chunk));
    } else {
        kernel(0, out);
    }
}

/// `H·psi` (not normalized).
pub fn apply_hamiltonian(spec: &ChainSpec, psi: &StateVector) -> Result<StateVector> {
    check_chain(spec, psi)?;
    let mut out = vec![Complex64::new(0.0, 0.0); psi.dim()];
    hamiltonian_affine(spec, psi.space(), psi.amplitudes(), 1.0, 0.0, 0.0, &mut out);
    psi.with_amplitudes(out)
}

fn check_chain(spec: &ChainSpec, psi: &StateVector) -> Result<()> {
    if psi.spec().n_sites != spec.n_sites {
        return Err(Error::DimensionMismatch {
            expected: spec.dimension(),
            found: psi.dim(),
        });
    }
    Ok(())
}

/// `S^axis_site·psi` (not normalized). S^x and S^y leave any S^z sector, so
/// their result is always in the full space.
pub fn apply_local_spin(op: LocalSpinOp, psi: &StateVector) -> Result<StateVector> {
    op.check(psi.spec().n_sites)?;
    let bit = 1u64 << (op.site - 1);
    match op.axis {
        Axis::Z => {
            let space = psi.space();
            let out = psi
                .amplitudes()
                .iter()
                .enumerate()
                .map(|(i, &a)| if space.code(i) & bit != 0 { a * 0.5 } else { a * -0.5 })
                .collect();
            psi.with_amplitudes(out)
        }
        Axis::X | Axis::Y => {
            let full = psi.to_full();
            let src = full.amplitudes();
            let half_i = Complex64::new(0.0, 0.5);
            let out = (0..src.len())
                .map(|c| {
                    let from = src[c ^ bit as usize];
                    match op.axis {
                        Axis::X => from * 0.5,
                        // S^y|↑⟩ = (i/2)|↓⟩, S^y|↓⟩ = (-i/2)|↑⟩
                        _ if c as u64 & bit != 0 => -half_i * from,
                        _ => half_i * from,
                    }
                })
                .collect();
            full.with_amplitudes(out)
        }
    }
}

/// `N·(3|J|/4 + |Δ|/4)`: triangle-inequality bound on ‖H‖.
pub fn certified_norm_bound(spec: &ChainSpec) -> f64 {
    spec.n_sites as f64 * (0.75 * spec.exchange_j.abs() + 0.25 * spec.anisotropy_delta.abs())
}

const BOUNDS_STEPS: usize = 120;
const BOUNDS_PADDING: f64 = 0.01;
const BOUNDS_SEED: u64 = 0x5eed_b00d;

/// Interval containing the spectrum of H on the full space.
pub fn spectral_bounds(spec: &ChainSpec) -> (f64, f64) {
    spectral_bounds_in(spec, &Space::full(spec.n_sites))
}

/// Interval containing the spectrum of H restricted to `space`.
///
/// Extremal Ritz values of an unreorthogonalized Lanczos run are padded by 1%
/// of the spectral width plus their residual bounds, then clipped to the
/// certified norm bound.
pub fn spectral_bounds_in(spec: &ChainSpec, space: &Space) -> (f64, f64) {
    let cap = certified_norm_bound(spec);
    let dim = space.dim();
    let steps = BOUNDS_STEPS.min(dim);

    let mut rng = ChaCha8Rng::seed_from_u64(BOUNDS_SEED);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect();
    let n0 = norm(&v);
    scale(&mut v, 1.0 / n0);
    let mut v_prev = vec![0.0; dim];
    let mut w = vec![0.0; dim];
    let mut alphas = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::with_capacity(steps);

    for _ in 0..steps {
        hamiltonian_affine(spec, space, &v, 1.0, 0.0, 0.0, &mut w);
        let a = dot(&v, &w);
        let b_prev = betas.last().copied().unwrap_or(0.0);
        for ((wi, vi), pi) in w.iter_mut().zip(&v).zip(&v_prev) {
            *wi -= a * vi + b_prev * pi;
        }
        alphas.push(a);
        let b = norm(&w);
        betas.push(b);
        if b <= 1e-12 * cap.max(1.0) {
            break;
        }
        std::mem::swap(&mut v_prev, &mut v);
        std::mem::swap(&mut v, &mut w);
        scale(&mut v, 1.0 / b);
    }

    let m = alphas.len();
    let eig = tridiagonal_eigen(&alphas[..m], &betas[..m - 1]);
    let (mut lo, mut hi) = (0usize, 0usize);
    for k in 0..m {
        if eig.eigenvalues[k] < eig.eigenvalues[lo] {
            lo = k;
        }
        if eig.eigenvalues[k] > eig.eigenvalues[hi] {
            hi = k;
        }
    }
    let last_beta = betas[m - 1];
    let resid = |k: usize| (last_beta * eig.eigenvectors[(m - 1, k)]).abs();
    let (theta_min, theta_max) = (eig.eigenvalues[lo], eig.eigenvalues[hi]);
    let pad = BOUNDS_PADDING * (theta_max - theta_min).max(cap.max(1.0) * 1e-2);
    let e_min = (theta_min - pad - resid(lo)).max(-cap);
    let e_max = (theta_max + pad + resid(hi)).min(cap);
    (e_min, e_max)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn scale(a: &mut [f64], s: f64) {
    a.iter_mut().for_each(|x| *x *= s);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::enumerate_sector;
    use crate::oracle;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn polarized_state_energies() {
        let up = BasisIndex(0b1111);
        for (delta, expected) in [(0.0, 1.0), (1.0, 2.0)] {
            let spec = ChainSpec::new(4, 1.0, delta).unwrap();
            let psi = StateVector::product(spec, up).unwrap();
            let h = apply_hamiltonian(&spec, &psi).unwrap();
            let mut want = psi.clone();
            want.amplitudes_mut().iter_mut().for_each(|a| *a *= expected);
            assert!(h.max_abs_diff(&want) < 1e-15);
        }
    }

    #[test]
    fn matches_dense_matrix_at_ten_sites() {
        let spec = ChainSpec::isotropic(10).unwrap();
        let psi = StateVector::random(spec, Space::full(10), 3);
        let dense = oracle::dense_hamiltonian(&spec, &Space::full(10)).unwrap();
        let want = oracle::dense_matvec(&dense, psi.amplitudes());
        let got = apply_hamiltonian(&spec, &psi).unwrap();
        assert!(max_abs_diff(got.amplitudes(), &want) <= 1e-13);
    }

    #[test]
    fn sector_application_matches_full() {
        let spec = ChainSpec::new(10, 1.0, 0.7).unwrap();
        let sector = Space::sector(enumerate_sector(&spec, 0.0).unwrap());
        let psi = StateVector::random(spec, sector, 11);
        let h_sector = apply_hamiltonian(&spec, &psi).unwrap();
        let h_full = apply_hamiltonian(&spec, &psi.to_full()).unwrap();
        assert!(h_sector.max_abs_diff(&h_full) < 1e-14);
    }

    #[test]
    fn local_spin_actions() {
        let spec = ChainSpec::isotropic(4).unwrap();
        // |↑↓⟩ on sites 1, 2, remaining sites down
        let psi = StateVector::product(spec, BasisIndex(0b0001)).unwrap();
        let z = apply_local_spin(LocalSpinOp::new(1, Axis::Z), &psi).unwrap();
        assert_eq!(z.amplitude_of(BasisIndex(0b0001)), c(0.5));
        let x = apply_local_spin(LocalSpinOp::new(1, Axis::X), &psi).unwrap();
        assert_eq!(x.amplitude_of(BasisIndex(0b0000)), c(0.5));
        assert_eq!(x.norm_sqr(), 0.25);
        let y = apply_local_spin(LocalSpinOp::new(1, Axis::Y), &psi).unwrap();
        assert_eq!(y.amplitude_of(BasisIndex(0b0000)), Complex64::new(0.0, 0.5));
    }

    #[test]
    fn local_spin_rejects_bad_site() {
        let spec = ChainSpec::isotropic(4).unwrap();
        let psi = StateVector::product(spec, BasisIndex(0)).unwrap();
        assert!(apply_local_spin(LocalSpinOp::new(0, Axis::Z), &psi).is_err());
        assert!(apply_local_spin(LocalSpinOp::new(5, Axis::X), &psi).is_err());
    }

    #[test]
    fn spin_commutator_xy_is_iz() {
        let spec = ChainSpec::isotropic(6).unwrap();
        let psi = StateVector::random(spec, Space::full(6), 5);
        let op = |a, v: &StateVector| apply_local_spin(LocalSpinOp::new(2, a), v).unwrap();
        let xy = op(Axis::X, &op(Axis::Y, &psi));
        let yx = op(Axis::Y, &op(Axis::X, &psi));
        let z = op(Axis::Z, &psi);
        let diff: Vec<Complex64> = xy
            .amplitudes()
            .iter()
            .zip(yx.amplitudes())
            .map(|(a, b)| a - b)
            .collect();
        let iz: Vec<Complex64> = z.amplitudes().iter().map(|a| a * Complex64::i()).collect();
        assert!(max_abs_diff(&diff, &iz) < 1e-15);
    }

    #[test]
    fn bounds_contain_small_spectrum() {
        let spec = ChainSpec::isotropic(4).unwrap();
        let (lo, hi) = spectral_bounds(&spec);
        assert!(lo <= -2.0 && hi >= 1.0, "({lo}, {hi})");
        assert!(lo >= -certified_norm_bound(&spec) && hi <= certified_norm_bound(&spec));
    }

    #[test]
    fn bounds_contain_dense_spectrum() {
        for delta in [-1.5, -0.1, 0.0, 0.3, 2.0] {
            let spec = ChainSpec::new(8, 1.0, delta).unwrap();
            let full = Space::full(8);
            let eig = oracle::dense_spectrum(&spec, &full).unwrap();
            let (lo, hi) = spectral_bounds(&spec);
            assert!(lo <= eig[0] && hi >= *eig.last().unwrap(), "Δ={delta}: ({lo},{hi}) vs {eig:?}");
        }
    }

    #[test]
    fn polarized_sector_bounds_are_nondegenerate() {
        let spec = ChainSpec::isotropic(6).unwrap();
        let space = Space::sector(enumerate_sector(&spec, 3.0).unwrap());
        let (lo, hi) = spectral_bounds_in(&spec, &space);
        assert!(lo < 1.5 && hi > 1.5);
    }

    fn cyclic_shift(psi: &StateVector) -> StateVector {
        let n = psi.spec().n_sites;
        let mut out = StateVector::zeros(*psi.spec(), psi.space().clone());
        for (i, &a) in psi.amplitudes().iter().enumerate() {
            let code = psi.space().code(i);
            let shifted = ((code << 1) | (code >> (n - 1))) & psi.spec().full_mask();
            let j = psi.space().index_of(shifted).unwrap();
            out.amplitudes_mut()[j] = a;
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn hermitian(seed in any::<u64>(), delta in -2.0f64..2.0) {
            let spec = ChainSpec::new(8, 1.0, delta).unwrap();
            let phi = StateVector::random(spec, Space::full(8), seed);
            let psi = StateVector::random(spec, Space::full(8), seed.wrapping_add(1));
            let a = phi.inner(&apply_hamiltonian(&spec, &psi).unwrap());
            let b = psi.inner(&apply_hamiltonian(&spec, &phi).unwrap()).conj();
            prop_assert!((a - b).norm() < 1e-12);
        }

        #[test]
        fn conserves_total_sz(seed in any::<u64>(), k in 0usize..=8) {
            let spec = ChainSpec::new(8, 1.0, 0.4).unwrap();
            let sector = enumerate_sector(&spec, k as f64 - 4.0).unwrap();
            let psi = StateVector::random(spec, Space::sector(sector.clone()), seed).to_full();
            let h = apply_hamiltonian(&spec, &psi).unwrap();
            for (code, a) in h.amplitudes().iter().enumerate() {
                if !sector.contains(code as u64) {
                    prop_assert_eq!(*a, Complex64::new(0.0, 0.0));
                }
            }
        }

        #[test]
        fn commutes_with_translation(seed in any::<u64>(), delta in -2.0f64..2.0) {
            let spec = ChainSpec::new(10, 1.0, delta).unwrap();
            let psi = StateVector::random(spec, Space::full(10), seed);
            let a = cyclic_shift(&apply_hamiltonian(&spec, &psi).unwrap());
            let b = apply_hamiltonian(&spec, &cyclic_shift(&psi)).unwrap();
            prop_assert!(a.max_abs_diff(&b) <= 1e-13);
        }

        #[test]
        fn invariant_under_global_spin_flip(row in 0u64..256, col in 0u64..256, delta in -2.0f64..2.0) {
            let spec = ChainSpec::new(8, 1.0, delta).unwrap();
            let element = |r: u64, c: u64| {
                let psi = StateVector::product(spec, BasisIndex(c)).unwrap();
                apply_hamiltonian(&spec, &psi).unwrap().amplitude_of(BasisIndex(r))
            };
            let mask = spec.full_mask();
            prop_assert_eq!(element(row, col), element(row ^ mask, col ^ mask));
        }

        #[test]
        fn sx_squared_is_quarter(seed in any::<u64>(), site in 1usize..=6) {
            let spec = ChainSpec::isotropic(6).unwrap();
            let psi = StateVector::random(spec, Space::full(6), seed);
            let op = LocalSpinOp::new(site, Axis::X);
            let twice = apply_local_spin(op, &apply_local_spin(op, &psi).unwrap()).unwrap();
            let quarter: Vec<Complex64> = psi.amplitudes().iter().map(|a| a * 0.25).collect();
            prop_assert!(max_abs_diff(twice.amplitudes(), &quarter) < 1e-15);
        }
    }
}
