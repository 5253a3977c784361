//! Binary state files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset  size  field
//!      0     8  magic  b"SPNMEAS\0"
//!      8     4  format version (u32, currently 1)
//!     12     4  n_sites (u32)
//!     16     8  J (f64)
//!     24     8  Δ (f64)
//!     32     4  sector: number of up spins (i32), -1 for the full space
//!     36     1  phase convention (u8)
//!     37     3  reserved, zero
//!     40     8  dimension (u64)
//!     48  16·d  amplitudes as (re, im) f64 pairs
//! ```
//!
//! Amplitudes are stored as raw IEEE-754 bits, so a round trip is exact.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{ChainSpec, Space, SzSector};
use crate::error::{Error, Result};
use crate::operators::StateVector;

pub const MAGIC: &[u8; 8] = b"SPNMEAS\0";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 48;

/// How the global phase of the stored state was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseConvention {
    /// Phase left as produced.
    Unfixed,
    /// Largest-magnitude amplitude (lowest index among ties) real and positive.
    LargestRealPositive,
}

impl PhaseConvention {
    fn code(self) -> u8 {
        match self {
            PhaseConvention::Unfixed => 0,
            PhaseConvention::LargestRealPositive => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(PhaseConvention::Unfixed),
            1 => Ok(PhaseConvention::LargestRealPositive),
            other => Err(Error::Format(format!("unknown phase convention {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateFileHeader {
    pub version: u32,
    pub spec: ChainSpec,
    /// Up-spin count of the sector, `None` for the full space.
    pub sector_n_up: Option<usize>,
    pub phase: PhaseConvention,
    pub dimension: u64,
}

/// Serialize a state to bytes.
pub fn encode(psi: &StateVector, phase: PhaseConvention) -> Vec<u8> {
    let spec = psi.spec();
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * psi.dim());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(spec.n_sites as u32).to_le_bytes());
    out.extend_from_slice(&spec.exchange_j.to_le_bytes());
    out.extend_from_slice(&spec.anisotropy_delta.to_le_bytes());
    let sector = psi.space().as_sector().map_or(-1, |s| s.n_up() as i32);
    out.extend_from_slice(&sector.to_le_bytes());
    out.push(phase.code());
    out.extend_from_slice(&[0u8; 3]);
    out.extend_from_slice(&(psi.dim() as u64).to_le_bytes());
    for a in psi.amplitudes() {
        out.extend_from_slice(&a.re.to_le_bytes());
        out.extend_from_slice(&a.im.to_le_bytes());
    }
    out
}

fn take<const K: usize>(bytes: &[u8], at: usize) -> [u8; K] {
    bytes[at..at + K].try_into().unwrap()
}

/// Parse only the header.
pub fn decode_header(bytes: &[u8]) -> Result<StateFileHeader> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("state file truncated: {} bytes", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Format("not a state file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(bytes, 8));
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported state-file version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let n_sites = u32::from_le_bytes(take(bytes, 12)) as usize;
    let j = f64::from_le_bytes(take(bytes, 16));
    let delta = f64::from_le_bytes(take(bytes, 24));
    let spec = ChainSpec::new(n_sites, j, delta)?;
    let sector = i32::from_le_bytes(take(bytes, 32));
    let sector_n_up = match sector {
        -1 => None,
        s if s >= 0 && s as usize <= n_sites => Some(s as usize),
        s => return Err(Error::Format(format!("invalid sector tag {s}"))),
    };
    let phase = PhaseConvention::from_code(bytes[36])?;
    let dimension = u64::from_le_bytes(take(bytes, 40));
    Ok(StateFileHeader {
        version,
        spec,
        sector_n_up,
        phase,
        dimension,
    })
}

/// Parse a full state. The amplitudes must be normalized.
pub fn decode(bytes: &[u8]) -> Result<(StateFileHeader, StateVector)> {
    let header = decode_header(bytes)?;
    let n = header.spec.n_sites;
    let space = match header.sector_n_up {
        None => Space::full(n),
        Some(n_up) => Space::sector(SzSector::with_up_count(n, n_up)),
    };
    if header.dimension != space.dim() as u64 {
        return Err(Error::Format(format!(
            "header dimension {} does not match space dimension {}",
            header.dimension,
            space.dim()
        )));
    }
    let body = &bytes[HEADER_LEN..];
    if body.len() != 16 * space.dim() {
        return Err(Error::Format(format!(
            "expected {} amplitude bytes, found {}",
            16 * space.dim(),
            body.len()
        )));
    }
    let amplitudes = body
        .chunks_exact(16)
        .map(|c| Complex64::new(f64::from_le_bytes(take(c, 0)), f64::from_le_bytes(take(c, 8))))
        .collect();
    let psi = StateVector::new(header.spec, space, amplitudes)?;
    psi.ensure_normalized()?;
    Ok((header, psi))
}

pub fn write_state(path: &Path, psi: &StateVector, phase: PhaseConvention) -> Result<()> {
    let bytes = encode(psi, phase);
    // Write to a sibling and rename so an interrupted write never leaves a
    // half-written file under the final name.
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Reads only the first 48 bytes.
pub fn read_state_header(path: &Path) -> Result<StateFileHeader> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::with_capacity(HEADER_LEN);
    f.take(HEADER_LEN as u64)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode_header(&bytes)
}

pub fn read_state(path: &Path) -> Result<(StateFileHeader, StateVector)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
