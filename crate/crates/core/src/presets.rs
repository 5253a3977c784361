//! Scenario files for every figure-level dataset, embedded at build time.

use crate::error::{Error, Result};
use crate::scenario::{parse_scenarios, Scenario};

#[derive(Debug, Clone, Copy)]
pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub source: &'static str,
}

impl Preset {
    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        parse_scenarios(self.source, None)
    }
}

macro_rules! preset {
    ($name:literal, $summary:literal) => {
        Preset {
            name: $name,
            summary: $summary,
            source: include_str!(concat!("../presets/", $name, ".toml")),
        }
    };
}

pub const PRESETS: &[Preset] = &[
    preset!("fig2", "ground-state energy for N = 10..20"),
    preset!("fig3", "decoherence waves after one z+ projection, N = 10, 20, 28"),
    preset!("fig4", "small anisotropy at N = 20, z or x projection"),
    preset!("fig5", "spectra of the spin-1 trace, N = 10, 20, 28 and delta = 1, 2, 3"),
    preset!("fig6", "two projections at t = 1 and 500, N = 20, delta = 2"),
    preset!("fig7", "four projections at t = 1 + 7.5 m, isotropic"),
    preset!("fig8", "zz and xx correlations around one projection"),
    preset!("fig9", "Ising-like regime, projection at t = 100"),
    preset!("fig10", "Ising-like regime, two projections, all sites"),
    preset!("fig11", "symmetry sweep over delta, odd sites, N = 10, 20, 28"),
];

pub fn preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

/// A preset file by name, or a single scenario out of one (`fig3-n20`).
pub fn preset_scenarios(name: &str) -> Result<Vec<Scenario>> {
    if let Some(p) = preset(name) {
        return p.scenarios();
    }
    for p in PRESETS {
        if let Some(s) = p.scenarios()?.into_iter().find(|s| s.name == name) {
            return Ok(vec![s]);
        }
    }
    Err(Error::Validation(vec![format!("no preset or preset scenario named {name:?}")]))
}
