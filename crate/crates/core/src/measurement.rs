//! Instantaneous local projective measurements.
//!
//! `P^{±α}_m = (1 ± 2 S^α_m) / 2`. States are kept pure: a selective
//! measurement returns the renormalized branch and its probability, a
//! non-selective one the list of weighted branches. Expectation values in a
//! branch equal `Tr[O P ρ P] / Tr[P ρ P]` for `ρ = |ψ⟩⟨ψ|`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{apply_local_spin, check_site, Axis, LocalSpinOp, StateVector};
use crate::propagate::Propagator;

/// Outcomes with smaller probability are treated as impossible.
pub const PROBABILITY_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        })
    }
}

impl FromStr for Sign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "+" | "plus" | "up" => Ok(Sign::Plus),
            "-" | "minus" | "down" => Ok(Sign::Minus),
            other => Err(Error::Domain(format!("unknown projection sign {other:?}"))),
        }
    }
}

/// `P^{sign·axis}_site`, site 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProjectorSpec {
    pub site: usize,
    pub axis: Axis,
    pub sign: Sign,
}

impl ProjectorSpec {
    pub fn new(site: usize, axis: Axis, sign: Sign) -> Self {
        ProjectorSpec { site, axis, sign }
    }
}

impl fmt::Display for ProjectorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P^{{{}{}}}_{}", self.sign, self.axis, self.site)
    }
}

#[derive(Debug, Clone)]
pub struct MeasurementOutcome {
    /// Normalized post-measurement state.
    pub state: StateVector,
    /// `‖P ψ‖²`
    pub probability: f64,
    pub projector: ProjectorSpec,
}

/// `P ψ` without renormalization. z projections stay in the state's space;
/// x and y projections land in the full space.
pub fn apply_projector(psi: &StateVector, p: ProjectorSpec) -> Result<StateVector> {
    check_site(p.site, psi.spec().n_sites)?;
    match p.axis {
        Axis::Z => {
            let bit = 1u64 << (p.site - 1);
            let keep_up = p.sign == Sign::Plus;
            let space = psi.space();
            let out = psi
                .amplitudes()
                .iter()
                .enumerate()
                .map(|(i, &a)| {
                    if (space.code(i) & bit != 0) == keep_up {
                        a
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
                .collect();
            psi.with_amplitudes(out)
        }
        Axis::X | Axis::Y => {
            let s = apply_local_spin(LocalSpinOp::new(p.site, p.axis), psi)?;
            let full = psi.to_full();
            let sign = p.sign.value();
            let out = full
                .amplitudes()
                .iter()
                .zip(s.amplitudes())
                .map(|(a, b)| (a + b * (2.0 * sign)) * 0.5)
                .collect();
            full.with_amplitudes(out)
        }
    }
}

/// Selective measurement: project, record the probability, renormalize.
pub fn project(psi: &StateVector, p: ProjectorSpec) -> Result<MeasurementOutcome> {
    psi.ensure_normalized()?;
    let mut state = apply_projector(psi, p)?;
    let probability = state.norm_sqr();
    if probability < PROBABILITY_FLOOR {
        return Err(Error::ImpossibleOutcome {
            projector: p,
            probability,
        });
    }
    state.normalize();
    Ok(MeasurementOutcome {
        state,
        probability,
        projector: p,
    })
}

/// One outcome of a non-selective measurement. `state` is `None` when the
/// outcome probability is below [`PROBABILITY_FLOOR`].
#[derive(Debug, Clone)]
pub struct Branch {
    pub projector: ProjectorSpec,
    pub probability: f64,
    pub state: Option<StateVector>,
}

/// Both outcomes `+` and `-` of measuring `S^axis_site`.
pub fn measure_nonselective(psi: &StateVector, site: usize, axis: Axis) -> Result<Vec<Branch>> {
    psi.ensure_normalized()?;
    [Sign::Plus, Sign::Minus]
        .into_iter()
        .map(|sign| {
            let projector = ProjectorSpec::new(site, axis, sign);
            let mut state = apply_projector(psi, projector)?;
            let probability = state.norm_sqr();
            let state = if probability < PROBABILITY_FLOOR {
                None
            } else {
                state.normalize();
                Some(state)
            };
            Ok(Branch {
                projector,
                probability,
                state,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ZenoEvent {
    pub time: f64,
    pub outcome: MeasurementOutcome,
}

/// Repeated selective measurement of the same projector: starting from `psi0`
/// at t = 0, evolve to each of `times` and project.
pub fn zeno_sequence(
    psi0: &StateVector,
    p: ProjectorSpec,
    times: &[f64],
    propagator: &mut Propagator,
) -> Result<Vec<ZenoEvent>> {
    if times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Domain("measurement times must be strictly increasing".into()));
    }
    if times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::Domain("measurement times must be non-negative".into()));
    }
    let mut events = Vec::with_capacity(times.len());
    let mut state = psi0.clone();
    let mut now = 0.0;
    for (index, &time) in times.iter().enumerate() {
        let at_event = |e: Error| Error::AtEvent {
            index,
            time,
            source: Box::new(e),
        };
        let evolved = propagator.evolve(&state, time - now).map_err(at_event)?;
        let outcome = project(&evolved, p).map_err(at_event)?;
        state = outcome.state.clone();
        now = time;
        events.push(ZenoEvent { time, outcome });
    }
    Ok(events)
}
