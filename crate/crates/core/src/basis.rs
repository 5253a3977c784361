//! Product basis of a spin-1/2 ring.
//!
//! Basis states are bitstrings: bit `b` of a code is the spin at site `b + 1`
//! (1 = up, 0 = down). Every module uses this convention. Total S^z of a code
//! is `popcount(code) - N/2`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest ring length accepted. Codes are `u64` and 2^40 amplitudes is
/// already far beyond any machine this runs on.
pub const MAX_SITES: usize = 40;

/// Physical model: periodic XXZ ring with `H = J Σ S_i·S_{i+1} + Δ Σ S^z_i S^z_{i+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub n_sites: usize,
    #[serde(default = "unit_exchange")]
    pub exchange_j: f64,
    #[serde(default)]
    pub anisotropy_delta: f64,
}

fn unit_exchange() -> f64 {
    1.0
}

impl ChainSpec {
    pub fn new(n_sites: usize, exchange_j: f64, anisotropy_delta: f64) -> Result<Self> {
        let spec = ChainSpec {
            n_sites,
            exchange_j,
            anisotropy_delta,
        };
        let violations = spec.violations();
        if violations.is_empty() {
            Ok(spec)
        } else {
            Err(Error::Domain(violations.join("; ")))
        }
    }

    /// Isotropic chain with J = 1.
    pub fn isotropic(n_sites: usize) -> Result<Self> {
        Self::new(n_sites, 1.0, 0.0)
    }

    /// Every broken invariant, as human-readable messages.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_sites < 4 {
            out.push(format!("n_sites = {} but at least 4 sites are required", self.n_sites));
        }
        if self.n_sites % 2 != 0 {
            out.push(format!("n_sites = {} must be even", self.n_sites));
        }
        if self.n_sites > MAX_SITES {
            out.push(format!("n_sites = {} exceeds the limit of {MAX_SITES}", self.n_sites));
        }
        if !(self.exchange_j.is_finite() && self.exchange_j > 0.0) {
            out.push(format!(
                "exchange_j = {} must be positive (antiferromagnetic)",
                self.exchange_j
            ));
        }
        if !self.anisotropy_delta.is_finite() {
            out.push(format!("anisotropy_delta = {} is not finite", self.anisotropy_delta));
        }
        out
    }

    /// Dimension of the full product space, 2^N.
    pub fn dimension(&self) -> usize {
        1usize << self.n_sites
    }

    /// Bitmask with all N site bits set.
    pub fn full_mask(&self) -> u64 {
        if self.n_sites == 64 {
            u64::MAX
        } else {
            (1u64 << self.n_sites) - 1
        }
    }

    /// Bitmasks of the N nearest-neighbour bonds `(i, i+1 mod N)`, each once.
    pub fn bond_masks(&self) -> Vec<u64> {
        let n = self.n_sites;
        (0..n).map(|b| (1u64 << b) | (1u64 << ((b + 1) % n))).collect()
    }
}

/// A product basis state, see the module docs for the bit convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BasisIndex(pub u64);

impl BasisIndex {
    /// Parse a product-state pattern such as `"udud"` or `"↑↓↑↓"`, site 1 first.
    pub fn from_pattern(pattern: &str) -> Result<Self> {
        let mut code = 0u64;
        let mut n = 0;
        for ch in pattern.chars() {
            match ch {
                'u' | 'U' | '1' | '+' | '↑' => code |= 1 << n,
                'd' | 'D' | '0' | '-' | '↓' => {}
                c if c.is_whitespace() || c == '_' => continue,
                c => return Err(Error::Domain(format!("unexpected character {c:?} in state pattern"))),
            }
            n += 1;
            if n > MAX_SITES {
                return Err(Error::Domain("state pattern too long".into()));
            }
        }
        Ok(BasisIndex(code))
    }

    /// Néel state with site 1 up: `↑↓↑↓…`.
    pub fn neel(n_sites: usize) -> Self {
        BasisIndex((0..n_sites).step_by(2).fold(0, |c, b| c | (1 << b)))
    }

    pub fn is_up(self, site: usize) -> bool {
        self.0 >> (site - 1) & 1 == 1
    }

    pub fn total_sz(self, n_sites: usize) -> f64 {
        self.0.count_ones() as f64 - n_sites as f64 / 2.0
    }
}

impl fmt::Display for BasisIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#b}", self.0)
    }
}

/// All basis codes with a fixed number of up spins, ascending.
///
/// Ranking uses two lookup tables over the low and high halves of the code,
/// so `rank` is O(1) and needs O(2^(N/2)) memory.
#[derive(Clone)]
pub struct SzSector {
    n_sites: usize,
    n_up: usize,
    members: Vec<u64>,
    low_bits: usize,
    low_rank: Vec<u32>,
    high_offset: Vec<u64>,
}

impl fmt::Debug for SzSector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SzSector")
            .field("n_sites", &self.n_sites)
            .field("total_sz", &self.total_sz())
            .field("len", &self.members.len())
            .finish()
    }
}

impl PartialEq for SzSector {
    fn eq(&self, other: &Self) -> bool {
        self.n_sites == other.n_sites && self.n_up == other.n_up
    }
}

/// Enumerate the sector with the given total S^z (a half-integer when N is odd,
/// an integer here since N is even).
pub fn enumerate_sector(spec: &ChainSpec, total_sz: f64) -> Result<SzSector> {
    let n = spec.n_sites;
    let n_up = total_sz + n as f64 / 2.0;
    if !(n_up >= 0.0 && n_up <= n as f64 && n_up.fract() == 0.0) {
        return Err(Error::Domain(format!(
            "total S^z = {total_sz} is not a valid sector for N = {n}"
        )));
    }
    Ok(SzSector::with_up_count(n, n_up as usize))
}

impl SzSector {
    pub fn with_up_count(n_sites: usize, n_up: usize) -> Self {
        assert!(n_up <= n_sites && n_sites <= MAX_SITES);
        let low_bits = n_sites / 2;
        let high_bits = n_sites - low_bits;

        let mut low_rank = vec![0u32; 1 << low_bits];
        let mut seen = vec![0u32; low_bits + 1];
        for (l, slot) in low_rank.iter_mut().enumerate() {
            let pc = l.count_ones() as usize;
            *slot = seen[pc];
            seen[pc] += 1;
        }

        let mut high_offset = vec![0u64; 1 << high_bits];
        let mut acc = 0u64;
        for (h, slot) in high_offset.iter_mut().enumerate() {
            *slot = acc;
            let pc = h.count_ones() as usize;
            if pc <= n_up && n_up - pc <= low_bits {
                acc += binomial(low_bits, n_up - pc);
            }
        }

        let mut members = Vec::with_capacity(acc as usize);
        if n_up == 0 {
            members.push(0);
        } else {
            // Gosper's hack walks same-popcount integers in ascending order.
            let limit = 1u64 << n_sites;
            let mut c = (1u64 << n_up) - 1;
            while c < limit {
                members.push(c);
                let lowest = c & c.wrapping_neg();
                let ripple = c + lowest;
                c = (((ripple ^ c) >> 2) / lowest) | ripple;
            }
        }
        debug_assert_eq!(members.len() as u64, acc);

        SzSector {
            n_sites,
            n_up,
            members,
            low_bits,
            low_rank,
            high_offset,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_up(&self) -> usize {
        self.n_up
    }

    pub fn total_sz(&self) -> f64 {
        self.n_up as f64 - self.n_sites as f64 / 2.0
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member_codes(&self) -> &[u64] {
        &self.members
    }

    pub fn contains(&self, code: u64) -> bool {
        code >> self.n_sites == 0 && code.count_ones() as usize == self.n_up
    }

    /// Position of `code` in the canonical order. Caller guarantees membership.
    #[inline]
    pub fn rank_unchecked(&self, code: u64) -> usize {
        let low = (code & ((1u64 << self.low_bits) - 1)) as usize;
        let high = (code >> self.low_bits) as usize;
        (self.high_offset[high] + self.low_rank[low] as u64) as usize
    }

    /// Position of `code` in the canonical order.
    pub fn rank(&self, code: BasisIndex) -> Result<usize> {
        if self.contains(code.0) {
            Ok(self.rank_unchecked(code.0))
        } else {
            Err(Error::NotInSector {
                code: code.0,
                total_sz: self.total_sz(),
            })
        }
    }
}

/// Free-function form of [`SzSector::rank`].
pub fn sector_rank(sector: &SzSector, code: BasisIndex) -> Result<usize> {
    sector.rank(code)
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// The vector space a state lives in: all 2^N codes or a single S^z sector.
#[derive(Debug, Clone)]
pub enum Space {
    Full { n_sites: usize },
    Sector(Arc<SzSector>),
}

impl PartialEq for Space {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Space::Full { n_sites: a }, Space::Full { n_sites: b }) => a == b,
            (Space::Sector(a), Space::Sector(b)) => a == b,
            _ => false,
        }
    }
}

impl Space {
    pub fn full(n_sites: usize) -> Self {
        Space::Full { n_sites }
    }

    pub fn sector(sector: SzSector) -> Self {
        Space::Sector(Arc::new(sector))
    }

    pub fn n_sites(&self) -> usize {
        match self {
            Space::Full { n_sites } => *n_sites,
            Space::Sector(s) => s.n_sites(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Space::Full { n_sites } => 1 << n_sites,
            Space::Sector(s) => s.len(),
        }
    }

    pub fn is_full(&self) -> bool {
        matches!(self, Space::Full { .. })
    }

    pub fn as_sector(&self) -> Option<&SzSector> {
        match self {
            Space::Sector(s) => Some(s),
            Space::Full { .. } => None,
        }
    }

    #[inline]
    pub fn code(&self, index: usize) -> u64 {
        match self {
            Space::Full { .. } => index as u64,
            Space::Sector(s) => s.members[index],
        }
    }

    /// Index of `code`, or `None` if the space does not contain it.
    #[inline]
    pub fn index_of(&self, code: u64) -> Option<usize> {
        match self {
            Space::Full { n_sites } => (code >> n_sites == 0).then_some(code as usize),
            Space::Sector(s) => s.contains(code).then(|| s.rank_unchecked(code)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(n: usize) -> ChainSpec {
        ChainSpec::isotropic(n).unwrap()
    }

    #[test]
    fn polarized_sector_has_one_state() {
        let s = enumerate_sector(&spec(4), 2.0).unwrap();
        assert_eq!(s.member_codes(), &[0b1111]);
    }

    #[test]
    fn zero_sector_of_four_sites() {
        let s = enumerate_sector(&spec(4), 0.0).unwrap();
        assert_eq!(s.member_codes(), &[0b0011, 0b0101, 0b0110, 0b1001, 0b1010, 0b1100]);
        assert_eq!(sector_rank(&s, BasisIndex(0b0011)).unwrap(), 0);
        assert_eq!(sector_rank(&s, BasisIndex(0b1100)).unwrap(), 5);
    }

    #[test]
    fn ten_site_zero_sector_size() {
        assert_eq!(enumerate_sector(&spec(10), 0.0).unwrap().len(), 252);
    }

    #[test]
    fn bad_sectors_rejected() {
        assert!(enumerate_sector(&spec(4), 3.0).is_err());
        assert!(enumerate_sector(&spec(4), -2.5).is_err());
        assert!(enumerate_sector(&spec(4), 0.5).is_err());
    }

    #[test]
    fn rank_rejects_non_members() {
        let s = enumerate_sector(&spec(4), 0.0).unwrap();
        assert!(matches!(
            s.rank(BasisIndex(0b0111)),
            Err(Error::NotInSector { .. })
        ));
    }

    #[test]
    fn chain_spec_validation() {
        assert!(ChainSpec::new(5, 1.0, 0.0).is_err());
        assert!(ChainSpec::new(2, 1.0, 0.0).is_err());
        assert!(ChainSpec::new(4, -1.0, 0.0).is_err());
        assert!(ChainSpec::new(4, 1.0, f64::NAN).is_err());
        assert!(ChainSpec::new(4, 1.0, -3.0).is_ok());
    }

    #[test]
    fn bonds_are_counted_once() {
        let masks = spec(4).bond_masks();
        assert_eq!(masks, vec![0b0011, 0b0110, 0b1100, 0b1001]);
    }

    #[test]
    fn patterns() {
        assert_eq!(BasisIndex::from_pattern("udud").unwrap(), BasisIndex(0b0101));
        assert_eq!(BasisIndex::from_pattern("↑↓↑↓").unwrap(), BasisIndex::neel(4));
        assert!(BasisIndex::from_pattern("uxd").is_err());
    }

    #[test]
    fn sector_sizes_sum_to_full_dimension() {
        for n in [4usize, 6, 8, 10, 12] {
            let total: usize = (0..=n).map(|k| SzSector::with_up_count(n, k).len()).sum();
            assert_eq!(total, 1 << n);
        }
    }

    proptest! {
        #[test]
        fn rank_inverts_enumeration(half in 2usize..7, k_frac in 0.0f64..1.0) {
            let n = 2 * half;
            let k = (k_frac * n as f64).round() as usize;
            let s = SzSector::with_up_count(n, k);
            prop_assert_eq!(s.len() as u64, binomial(n, k));
            for (i, &c) in s.member_codes().iter().enumerate() {
                prop_assert_eq!(s.rank(BasisIndex(c)).unwrap(), i);
            }
            prop_assert!(s.member_codes().windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn antiparallel_flips_stay_in_sector(code in 0u64..(1 << 12), i in 0usize..12, j in 0usize..12) {
            let s = SzSector::with_up_count(12, code.count_ones() as usize);
            if (code >> i & 1) != (code >> j & 1) {
                let flipped = code ^ (1 << i) ^ (1 << j);
                prop_assert!(s.contains(flipped));
            }
        }
    }
}
