//! Declarative measurement experiments.
//!
//! A scenario file is TOML with one `[[scenario]]` table per run:
//!
//! ```toml
//! [[scenario]]
//! name = "single-z"
//! chain = { n_sites = 10, anisotropy_delta = 0.0 }
//! initial_state = { kind = "ground_state" }
//! events = [{ time = 5.0, site = 1, axis = "z", outcome = "+" }]
//!
//! [scenario.sampling]
//! t_end = 50.0
//! dt = 0.1
//! observables = [{ kind = "magnetization", axis = "z", sites = "all" }]
//! ```
//!
//! The initial state is placed at t = 0. Events snap to the sampling grid; at
//! an event both the pre- and post-projection values are recorded with the
//! same time stamp. Non-selective events split the state into weighted
//! branches whose observables are averaged.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{binomial, BasisIndex, ChainSpec, Space, SzSector};
use crate::eigensolve::{lanczos_ground_state, LanczosConfig};
use crate::error::{Error, Result};
use crate::measurement::{apply_projector, measure_nonselective, ProjectorSpec, Sign, PROBABILITY_FLOOR};
use crate::observables::{
    fourier_spectrum, site_magnetizations, staggered_from_site_values, ObservableId, Spectrum,
    TimeSeriesRecord, Window,
};
use crate::operators::{Axis, StateVector};
use crate::propagate::{Propagator, PropagatorConfig, TimeGrid};
use crate::statefile::{read_state, read_state_header, write_state, PhaseConvention};
use crate::table::{
    series_to_csv, series_to_json, spectrum_to_csv, spectrum_to_json, write_file, TableFormat,
};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_DT: f64 = 0.1;
/// Default `--max-memory`: 4 GiB.
pub const DEFAULT_MAX_MEMORY: u64 = 4 << 30;
const MAX_GRID_POINTS: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub chain: ChainSpec,
    #[serde(default)]
    pub initial_state: InitialState,
    #[serde(default)]
    pub events: Vec<EventSpec>,
    pub sampling: SamplingSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<SpectrumSpec>,
    /// Directory that relative state-file paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    #[default]
    GroundState,
    /// Product state such as `"udud…"` or `"neel"`.
    Product { pattern: String },
    File { path: PathBuf },
}

/// Outcome of a measurement event: a selected sign, or both (non-selective).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EventOutcome {
    Selective(Sign),
    Nonselective,
}

impl Default for EventOutcome {
    fn default() -> Self {
        EventOutcome::Selective(Sign::Plus)
    }
}

impl TryFrom<String> for EventOutcome {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        match s.trim() {
            "nonselective" | "non-selective" | "both" => Ok(EventOutcome::Nonselective),
            other => Sign::from_str(other)
                .map(EventOutcome::Selective)
                .map_err(|_| format!("outcome must be \"+\", \"-\" or \"nonselective\", got {other:?}")),
        }
    }
}

impl From<EventOutcome> for String {
    fn from(o: EventOutcome) -> String {
        match o {
            EventOutcome::Selective(s) => s.to_string(),
            EventOutcome::Nonselective => "nonselective".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub time: f64,
    pub site: usize,
    pub axis: Axis,
    #[serde(default)]
    pub outcome: EventOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSpec {
    #[serde(default)]
    pub t_start: f64,
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub observables: Vec<ObservableSpec>,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    Magnetization,
    Correlation,
    Energy,
    Staggered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteSet {
    All,
    Odd,
    Even,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SiteSelection {
    Named(SiteSet),
    List(Vec<usize>),
}

impl Default for SiteSelection {
    fn default() -> Self {
        SiteSelection::Named(SiteSet::All)
    }
}

impl SiteSelection {
    pub fn sites(&self, n_sites: usize) -> Vec<usize> {
        match self {
            SiteSelection::Named(SiteSet::All) => (1..=n_sites).collect(),
            SiteSelection::Named(SiteSet::Odd) => (1..=n_sites).step_by(2).collect(),
            SiteSelection::Named(SiteSet::Even) => (2..=n_sites).step_by(2).collect(),
            SiteSelection::List(v) => v.clone(),
        }
    }
}

/// One line of the observable list; magnetizations and correlations expand
/// over `sites`. Axis defaults to z, the correlation anchor to site 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    pub kind: ObservableKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<Axis>,
    #[serde(default)]
    pub sites: SiteSelection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<usize>,
}

impl ObservableSpec {
    pub fn expand(&self, n_sites: usize) -> std::result::Result<Vec<ObservableId>, String> {
        let axis = self.axis.unwrap_or(Axis::Z);
        let sites = self.sites.sites(n_sites);
        if let Some(&bad) = sites.iter().find(|&&s| s == 0 || s > n_sites) {
            return Err(format!("observable site {bad} outside 1..={n_sites}"));
        }
        Ok(match self.kind {
            ObservableKind::Magnetization => sites
                .into_iter()
                .map(|site| ObservableId::Magnetization { site, axis })
                .collect(),
            ObservableKind::Correlation => {
                let anchor = self.anchor.unwrap_or(1);
                if anchor == 0 || anchor > n_sites {
                    return Err(format!("correlation anchor {anchor} outside 1..={n_sites}"));
                }
                sites
                    .into_iter()
                    .map(|site| ObservableId::Correlation { anchor, site, axis })
                    .collect()
            }
            ObservableKind::Energy => vec![ObservableId::Energy],
            ObservableKind::Staggered => vec![ObservableId::Staggered],
        })
    }
}

/// Fourier analysis of one sampled magnetization, from `from` (default: the
/// last event, or `t_start` without events) to the end of the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSpec {
    #[serde(default = "first_site")]
    pub site: usize,
    #[serde(default = "z_axis")]
    pub axis: Axis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<f64>,
    #[serde(default = "rectangular")]
    pub window: Window,
    #[serde(default = "enabled")]
    pub detrend: bool,
}

fn first_site() -> usize {
    1
}
fn z_axis() -> Axis {
    Axis::Z
}
fn rectangular() -> Window {
    Window::Rectangular
}
fn enabled() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    scenario: Vec<Scenario>,
}

/// Parse a scenario document. Syntax and schema errors are reported as
/// validation failures.
pub fn parse_scenarios(text: &str, base_dir: Option<&Path>) -> Result<Vec<Scenario>> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Validation(vec![e.to_string()]))?;
    Ok(file
        .scenario
        .into_iter()
        .map(|mut s| {
            s.base_dir = base_dir.map(Path::to_path_buf);
            s
        })
        .collect())
}

pub fn load_scenarios(path: &Path) -> Result<Vec<Scenario>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenarios(&text, path.parent())
}

/// Settings that are not part of the physics of a scenario.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub lanczos: LanczosConfig,
    pub propagator: PropagatorConfig,
    /// Overrides the sampling step of every scenario.
    pub dt: Option<f64>,
    /// Where `<name>/series.*`, `<name>/spectrum.*` and `<name>/manifest.json`
    /// go; nothing is written when absent.
    pub out_dir: Option<PathBuf>,
    pub format: TableFormat,
    /// Runs whose memory estimate exceeds this many bytes are refused.
    pub max_memory: u64,
    /// Persist branch states and progress after every event.
    pub checkpoint: bool,
    /// Continue from a checkpoint in the output directory when present.
    pub resume: bool,
    /// Stop (incomplete) right after the event with this index has been
    /// applied and checkpointed.
    pub stop_after_event: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            lanczos: LanczosConfig::default(),
            propagator: PropagatorConfig::default(),
            dt: None,
            out_dir: None,
            format: TableFormat::Csv,
            max_memory: DEFAULT_MAX_MEMORY,
            checkpoint: false,
            resume: false,
            stop_after_event: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
    pub memory_estimate_bytes: u64,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn effective_dt(s: &Scenario, opts: &RunOptions) -> f64 {
    opts.dt.unwrap_or(s.sampling.dt)
}

fn pattern_code(pattern: &str, n_sites: usize) -> std::result::Result<BasisIndex, String> {
    if pattern.trim().eq_ignore_ascii_case("neel") {
        return Ok(BasisIndex::neel(n_sites));
    }
    let len = pattern.chars().filter(|c| !c.is_whitespace() && *c != '_').count();
    if len != n_sites {
        return Err(format!("product pattern {pattern:?} has {len} sites, chain has {n_sites}"));
    }
    BasisIndex::from_pattern(pattern).map_err(|e| e.to_string())
}

fn resolve_path(s: &Scenario, path: &Path) -> PathBuf {
    match &s.base_dir {
        Some(base) if path.is_relative() => base.join(path),
        _ => path.to_path_buf(),
    }
}

/// Bytes needed by the largest simultaneously live set of vectors: the
/// Lanczos basis (real) during preparation, or during evolution
/// `batch + 4` complex vectors per branch.
pub fn memory_estimate(s: &Scenario, opts: &RunOptions) -> u64 {
    let n = s.chain.n_sites.min(63);
    let full = 1u64 << n;
    let sector = opts.lanczos.use_sector;
    let mut state_dim = match &s.initial_state {
        InitialState::GroundState if sector => binomial(n, n / 2),
        InitialState::Product { pattern } if sector => pattern_code(pattern, n)
            .map(|c| binomial(n, c.0.count_ones() as usize))
            .unwrap_or(full),
        _ => full,
    };
    if s.events.iter().any(|e| e.axis != Axis::Z) {
        state_dim = full;
    }
    let lanczos = match s.initial_state {
        InitialState::GroundState => {
            let solve_dim = if sector { binomial(n, n / 2) } else { full };
            let basis = (opts.lanczos.max_krylov_dim as u64).min(solve_dim) + 3;
            solve_dim.saturating_mul(basis).saturating_mul(8) + solve_dim.saturating_mul(16)
        }
        _ => 0,
    };
    let nonselective = s.events.iter().filter(|e| e.outcome == EventOutcome::Nonselective).count();
    let branches = 1u64.checked_shl(nonselective as u32).unwrap_or(u64::MAX);
    let per_branch = state_dim.saturating_mul(16).saturating_mul(opts.propagator.batch as u64 + 4);
    lanczos.max(branches.saturating_mul(per_branch))
}

pub fn validate_scenario(s: &Scenario, opts: &RunOptions) -> ValidationReport {
    let mut v = Vec::new();
    let mut warnings = Vec::new();
    let n = s.chain.n_sites;

    if s.name.is_empty()
        || !s.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        || s.name.starts_with('.')
    {
        v.push(format!(
            "scenario name {:?} must be non-empty and use only letters, digits, '-', '_' or '.'",
            s.name
        ));
    }
    v.extend(s.chain.violations());
    let chain_ok = s.chain.violations().is_empty();

    let dt = effective_dt(s, opts);
    let grid = TimeGrid {
        t_start: s.sampling.t_start,
        t_end: s.sampling.t_end,
        dt,
    };
    let grid_violations = grid.violations();
    let grid_ok = grid_violations.is_empty() && s.sampling.t_start.is_finite() && s.sampling.t_end.is_finite();
    v.extend(grid_violations);
    if !(s.sampling.t_start >= 0.0) {
        v.push(format!("t_start = {} must be non-negative", s.sampling.t_start));
    }
    if grid_ok && grid.len() > MAX_GRID_POINTS {
        v.push(format!("{} sample times exceed the limit of {MAX_GRID_POINTS}", grid.len()));
    }
    if let Err(e) = opts.lanczos.validate() {
        v.push(e.to_string());
    }
    if let Err(e) = opts.propagator.validate() {
        v.push(e.to_string());
    }

    if s.sampling.observables.is_empty() {
        v.push("observable list is empty".into());
    }
    let mut ids = Vec::new();
    if chain_ok {
        for o in &s.sampling.observables {
            match o.expand(n) {
                Ok(list) => ids.extend(list),
                Err(e) => v.push(e),
            }
        }
    }

    match &s.initial_state {
        InitialState::GroundState => {}
        InitialState::Product { pattern } => {
            if chain_ok {
                if let Err(e) = pattern_code(pattern, n) {
                    v.push(e);
                }
            }
        }
        InitialState::File { path } => {
            let path = resolve_path(s, path);
            if !path.is_file() {
                v.push(format!("initial state file {} does not exist", path.display()));
            } else {
                match read_state_header(&path) {
                    Ok(h) if h.spec.n_sites != n => v.push(format!(
                        "initial state file {} holds an N = {} state, chain has N = {n}",
                        path.display(),
                        h.spec.n_sites
                    )),
                    Ok(_) => {}
                    Err(e) => v.push(format!("initial state file: {e}")),
                }
            }
        }
    }

    let mut last_index: Option<usize> = None;
    for (k, e) in s.events.iter().enumerate() {
        if e.site == 0 || e.site > n {
            v.push(format!("event {k}: site {} outside 1..={n}", e.site));
        }
        if k > 0 && !(e.time > s.events[k - 1].time) {
            v.push(format!("event {k}: time {} not after the previous event", e.time));
        }
        if !grid_ok {
            continue;
        }
        if !(e.time >= s.sampling.t_start && e.time <= s.sampling.t_end) {
            v.push(format!(
                "event {k}: time {} outside the sampling window [{}, {}]",
                e.time, s.sampling.t_start, s.sampling.t_end
            ));
            continue;
        }
        match grid.snap(e.time, dt / 100.0) {
            None => v.push(format!(
                "event {k}: time {} is more than dt/100 away from a sample time (dt = {dt})",
                e.time
            )),
            Some(i) => {
                if last_index.is_some_and(|j| j >= i) {
                    v.push(format!("event {k}: snaps onto the same sample as the previous event"));
                }
                last_index = Some(i);
            }
        }
    }

    if let Some(sp) = &s.spectrum {
        let wanted = ObservableId::Magnetization {
            site: sp.site,
            axis: sp.axis,
        };
        if chain_ok && !ids.contains(&wanted) {
            v.push(format!("spectrum source {wanted} is not among the sampled observables"));
        }
        let from = spectrum_start(s, sp);
        if grid_ok && !(from >= s.sampling.t_start && s.sampling.t_end - from >= dt) {
            v.push(format!("spectrum needs at least two samples after t = {from}"));
        }
    }

    let memory_estimate_bytes = if chain_ok { memory_estimate(s, opts) } else { 0 };
    if memory_estimate_bytes > opts.max_memory {
        warnings.push(format!(
            "memory estimate {} exceeds the cap of {}",
            human_bytes(memory_estimate_bytes),
            human_bytes(opts.max_memory)
        ));
    }
    ValidationReport {
        violations: v,
        warnings,
        memory_estimate_bytes,
    }
}

pub fn human_bytes(b: u64) -> String {
    const UNITS: [&str; 5] = ["B", "KiB", "MiB", "GiB", "TiB"];
    let mut x = b as f64;
    let mut u = 0;
    while x >= 1024.0 && u + 1 < UNITS.len() {
        x /= 1024.0;
        u += 1;
    }
    format!("{x:.1} {}", UNITS[u])
}

fn spectrum_start(s: &Scenario, sp: &SpectrumSpec) -> f64 {
    sp.from
        .unwrap_or_else(|| s.events.last().map_or(s.sampling.t_start, |e| e.time))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundStateInfo {
    pub energy: f64,
    pub residual: f64,
    pub iterations: usize,
    pub sector_total_sz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeProbability {
    pub sign: Sign,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub index: usize,
    pub requested_time: f64,
    /// Grid time the event was applied at.
    pub time: f64,
    pub site: usize,
    pub axis: Axis,
    pub outcome: EventOutcome,
    /// Total probability of each computed outcome over all branches.
    pub probabilities: Vec<OutcomeProbability>,
    pub branches_after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputChecksum {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSettings {
    pub site: usize,
    pub axis: Axis,
    pub from: f64,
    pub window: Window,
    pub detrend: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub scenario: Scenario,
    pub lanczos: LanczosConfig,
    pub propagator: PropagatorConfig,
    pub sampling_dt: f64,
    pub spectrum: Option<SpectrumSettings>,
    pub code_version: String,
    pub wall_clock_seconds: f64,
    pub memory_estimate_bytes: u64,
    pub ground_state: Option<GroundStateInfo>,
    pub events: Vec<EventLog>,
    /// Product of the probabilities of all selective events.
    pub selective_probability_product: f64,
    pub dominant_frequency: Option<f64>,
    pub resumed: bool,
    pub outputs: Vec<OutputChecksum>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub records: Vec<TimeSeriesRecord>,
    pub spectrum: Option<Spectrum>,
    /// Final weighted branches; empty when the run stopped early.
    pub branches: Vec<(f64, StateVector)>,
    /// False when `stop_after_event` cut the run short.
    pub completed: bool,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
struct Trajectory {
    weight: f64,
    state: StateVector,
}

#[derive(Debug, Serialize, Deserialize)]
struct Progress {
    scenario: Scenario,
    sampling_dt: f64,
    next_event: usize,
    grid_index: usize,
    weights: Vec<f64>,
    records: Vec<TimeSeriesRecord>,
    events: Vec<EventLog>,
    ground_state: Option<GroundStateInfo>,
}

const PROGRESS_FILE: &str = "progress.json";

fn checkpoint_dir(run_dir: &Path) -> PathBuf {
    run_dir.join("checkpoint")
}

fn save_checkpoint(dir: &Path, progress: &Progress, branches: &[Trajectory]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (k, b) in branches.iter().enumerate() {
        write_state(&dir.join(format!("branch_{k}.state")), &b.state, PhaseConvention::Unfixed)?;
    }
    let json = serde_json::to_vec_pretty(progress).map_err(|e| Error::Format(e.to_string()))?;
    // Progress goes last: its presence marks a complete checkpoint.
    let tmp = dir.join("progress.json.tmp");
    write_file(&tmp, &json)?;
    let path = dir.join(PROGRESS_FILE);
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
}

fn load_checkpoint(dir: &Path, s: &Scenario) -> Result<Option<(Progress, Vec<Trajectory>)>> {
    let path = dir.join(PROGRESS_FILE);
    if !path.is_file() {
        return Ok(None);
    }
    let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let progress: Progress =
        serde_json::from_slice(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    if progress.scenario != *s {
        return Err(Error::Validation(vec![format!(
            "checkpoint in {} belongs to a different scenario definition",
            dir.display()
        )]));
    }
    let mut branches = Vec::with_capacity(progress.weights.len());
    for (k, &weight) in progress.weights.iter().enumerate() {
        let (_, psi) = read_state(&dir.join(format!("branch_{k}.state")))?;
        let state = StateVector::new(s.chain, psi.space().clone(), psi.into_amplitudes())?;
        branches.push(Trajectory { weight, state });
    }
    Ok(Some((progress, branches)))
}

fn evaluate_all(ids: &[ObservableId], psi: &StateVector) -> Result<Vec<f64>> {
    let needs_z = ids.iter().any(|id| {
        matches!(
            id,
            ObservableId::Magnetization { axis: Axis::Z, .. } | ObservableId::Staggered
        )
    });
    let z = if needs_z {
        site_magnetizations(psi, Axis::Z)?
    } else {
        Vec::new()
    };
    ids.iter()
        .map(|id| match *id {
            ObservableId::Magnetization { site, axis: Axis::Z } => Ok(z[site - 1]),
            ObservableId::Staggered => Ok(staggered_from_site_values(&z)),
            other => other.evaluate(psi),
        })
        .collect()
}

fn weighted_sample(ids: &[ObservableId], branches: &[Trajectory]) -> Result<Vec<f64>> {
    let mut total = vec![0.0; ids.len()];
    for b in branches {
        for (acc, v) in total.iter_mut().zip(evaluate_all(ids, &b.state)?) {
            *acc += b.weight * v;
        }
    }
    Ok(total)
}

fn record_sample(records: &mut [TimeSeriesRecord], t: f64, values: &[f64]) {
    for (r, &v) in records.iter_mut().zip(values) {
        r.push(t, v);
    }
}

/// Evolve every branch from grid index `from` to `to`, recording the samples
/// strictly after `from`.
fn advance(
    branches: &mut [Trajectory],
    propagator: &mut Propagator,
    grid: &TimeGrid,
    from: usize,
    to: usize,
    ids: &[ObservableId],
    records: &mut [TimeSeriesRecord],
) -> Result<()> {
    if to == from {
        return Ok(());
    }
    let segment = TimeGrid {
        t_start: grid.time(from),
        t_end: grid.time(to),
        dt: grid.dt,
    };
    debug_assert_eq!(segment.steps(), to - from);
    let mut totals = vec![vec![0.0; ids.len()]; to - from];
    for b in branches.iter_mut() {
        let mut first = true;
        let (samples, last) = propagator.evolve_through_grid(&b.state, &segment, |_, psi| {
            if std::mem::take(&mut first) {
                return Ok(Vec::new());
            }
            evaluate_all(ids, psi)
        })?;
        for (acc, values) in totals.iter_mut().zip(samples.into_iter().skip(1)) {
            for (a, v) in acc.iter_mut().zip(values) {
                *a += b.weight * v;
            }
        }
        b.state = last;
    }
    for (k, values) in totals.iter().enumerate() {
        record_sample(records, grid.time(from + k + 1), values);
    }
    Ok(())
}

fn apply_event(
    branches: Vec<Trajectory>,
    e: &EventSpec,
    index: usize,
    time: f64,
) -> Result<(Vec<Trajectory>, EventLog)> {
    let mut out = Vec::new();
    let probabilities = match e.outcome {
        EventOutcome::Selective(sign) => {
            let p = ProjectorSpec::new(e.site, e.axis, sign);
            let mut total = 0.0;
            for b in branches {
                let mut v = apply_projector(&b.state, p)?;
                let prob = v.norm_sqr();
                total += b.weight * prob;
                if prob >= PROBABILITY_FLOOR {
                    v.normalize();
                    out.push(Trajectory {
                        weight: b.weight * prob,
                        state: v,
                    });
                }
            }
            if total < PROBABILITY_FLOOR {
                return Err(Error::ImpossibleOutcome {
                    projector: p,
                    probability: total,
                });
            }
            out.iter_mut().for_each(|b| b.weight /= total);
            vec![OutcomeProbability { sign, probability: total }]
        }
        EventOutcome::Nonselective => {
            let (mut plus, mut minus) = (0.0, 0.0);
            for b in branches {
                for branch in measure_nonselective(&b.state, e.site, e.axis)? {
                    let w = b.weight * branch.probability;
                    match branch.projector.sign {
                        Sign::Plus => plus += w,
                        Sign::Minus => minus += w,
                    }
                    if let Some(state) = branch.state {
                        out.push(Trajectory { weight: w, state });
                    }
                }
            }
            let total = plus + minus;
            out.iter_mut().for_each(|b| b.weight /= total);
            vec![
                OutcomeProbability {
                    sign: Sign::Plus,
                    probability: plus,
                },
                OutcomeProbability {
                    sign: Sign::Minus,
                    probability: minus,
                },
            ]
        }
    };
    let log = EventLog {
        index,
        requested_time: e.time,
        time,
        site: e.site,
        axis: e.axis,
        outcome: e.outcome,
        probabilities,
        branches_after: out.len(),
    };
    Ok((out, log))
}

fn prepare_initial(
    s: &Scenario,
    opts: &RunOptions,
) -> Result<(StateVector, Option<GroundStateInfo>)> {
    let n = s.chain.n_sites;
    match &s.initial_state {
        InitialState::GroundState => {
            let gs = lanczos_ground_state(&s.chain, &opts.lanczos)?;
            let info = GroundStateInfo {
                energy: gs.energy,
                residual: gs.residual,
                iterations: gs.iterations,
                sector_total_sz: gs.sector_used,
            };
            Ok((gs.state, Some(info)))
        }
        InitialState::Product { pattern } => {
            let code = pattern_code(pattern, n).map_err(Error::Domain)?;
            let space = if opts.lanczos.use_sector {
                Space::sector(SzSector::with_up_count(n, code.0.count_ones() as usize))
            } else {
                Space::full(n)
            };
            Ok((StateVector::product_in(s.chain, space, code)?, None))
        }
        InitialState::File { path } => {
            let path = resolve_path(s, path);
            let (header, psi) = read_state(&path)?;
            if header.spec.n_sites != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: header.spec.n_sites,
                });
            }
            let state = StateVector::new(s.chain, psi.space().clone(), psi.into_amplitudes())?;
            Ok((state, None))
        }
    }
}

/// Execute one scenario: prepare, then alternate evolution/sampling with the
/// scheduled events, and finally write tables and the manifest if an output
/// directory is configured.
pub fn run_scenario(s: &Scenario, opts: &RunOptions) -> Result<RunOutput> {
    let clock = Instant::now();
    let report = validate_scenario(s, opts);
    if !report.is_ok() {
        return Err(Error::Validation(report.violations));
    }
    if report.memory_estimate_bytes > opts.max_memory {
        return Err(Error::Validation(vec![format!(
            "memory estimate {} exceeds the limit of {}; raise --max-memory to run anyway",
            human_bytes(report.memory_estimate_bytes),
            human_bytes(opts.max_memory)
        )]));
    }

    let dt = effective_dt(s, opts);
    let grid = TimeGrid::new(s.sampling.t_start, s.sampling.t_end, dt)?;
    let ids: Vec<ObservableId> = s
        .sampling
        .observables
        .iter()
        .flat_map(|o| o.expand(s.chain.n_sites).expect("validated"))
        .collect();
    let event_index: Vec<usize> = s
        .events
        .iter()
        .map(|e| grid.snap(e.time, dt / 100.0).expect("validated"))
        .collect();
    let run_dir = opts.out_dir.as_ref().map(|d| d.join(&s.name));
    let mut propagator = Propagator::new(s.chain, opts.propagator)?;

    let resumed = match (&run_dir, opts.resume) {
        (Some(dir), true) => load_checkpoint(&checkpoint_dir(dir), s)?,
        _ => None,
    };
    let was_resumed = resumed.is_some();
    let (mut branches, mut records, mut logs, ground_state, mut cursor, first_event) = match resumed {
        Some((p, branches)) => {
            if p.sampling_dt != dt {
                return Err(Error::Validation(vec![format!(
                    "checkpoint was written with dt = {}, this run uses dt = {dt}",
                    p.sampling_dt
                )]));
            }
            log::info!("{}: resuming before event {}", s.name, p.next_event);
            (branches, p.records, p.events, p.ground_state, p.grid_index, p.next_event)
        }
        None => {
            let (psi, gs) = prepare_initial(s, opts)?;
            if let Some(g) = &gs {
                log::info!("{}: ground state E0 = {} (residual {:.2e})", s.name, g.energy, g.residual);
            }
            let psi = if grid.t_start > 0.0 {
                propagator.evolve(&psi, grid.t_start)?
            } else {
                psi
            };
            let branches = vec![Trajectory { weight: 1.0, state: psi }];
            let mut records: Vec<TimeSeriesRecord> = ids.iter().map(|&id| TimeSeriesRecord::new(id)).collect();
            record_sample(&mut records, grid.time(0), &weighted_sample(&ids, &branches)?);
            (branches, records, Vec::new(), gs, 0, 0)
        }
    };

    for (index, e) in s.events.iter().enumerate().skip(first_event) {
        let target = event_index[index];
        let time = grid.time(target);
        let at_event = |err: Error| Error::AtEvent {
            index,
            time,
            source: Box::new(err),
        };
        advance(&mut branches, &mut propagator, &grid, cursor, target, &ids, &mut records).map_err(at_event)?;
        let (next, log) = apply_event(branches, e, index, time).map_err(at_event)?;
        log::info!(
            "{}: event {index} ({} {} at t = {time}) probabilities {:?}, {} branch(es)",
            s.name,
            e.axis,
            String::from(e.outcome),
            log.probabilities.iter().map(|p| p.probability).collect::<Vec<_>>(),
            next.len()
        );
        branches = next;
        logs.push(log);
        record_sample(&mut records, time, &weighted_sample(&ids, &branches).map_err(at_event)?);
        cursor = target;

        if let (Some(dir), true) = (&run_dir, opts.checkpoint) {
            let progress = Progress {
                scenario: s.clone(),
                sampling_dt: dt,
                next_event: index + 1,
                grid_index: cursor,
                weights: branches.iter().map(|b| b.weight).collect(),
                records: records.clone(),
                events: logs.clone(),
                ground_state: ground_state.clone(),
            };
            save_checkpoint(&checkpoint_dir(dir), &progress, &branches)?;
        }
        if opts.stop_after_event == Some(index) {
            let manifest = build_manifest(s, opts, dt, &report, ground_state, logs, None, None, was_resumed, clock, Vec::new());
            return Ok(RunOutput {
                manifest,
                records,
                spectrum: None,
                branches: Vec::new(),
                completed: false,
                output_dir: run_dir,
            });
        }
    }
    advance(&mut branches, &mut propagator, &grid, cursor, grid.steps(), &ids, &mut records)?;

    let mut settings = None;
    let spectrum = match &s.spectrum {
        Some(sp) => {
            let from = spectrum_start(s, sp);
            let id = ObservableId::Magnetization {
                site: sp.site,
                axis: sp.axis,
            };
            let record = records.iter().find(|r| r.id == id).expect("validated");
            settings = Some(SpectrumSettings {
                site: sp.site,
                axis: sp.axis,
                from,
                window: sp.window,
                detrend: sp.detrend,
            });
            Some(fourier_spectrum(&record.post_event_view(from - 1e-9 * dt), sp.window, sp.detrend)?)
        }
        None => None,
    };

    let mut outputs = Vec::new();
    if let Some(dir) = &run_dir {
        let ext = opts.format.extension();
        let series = match opts.format {
            TableFormat::Csv => series_to_csv(&records),
            TableFormat::Json => series_to_json(&records),
        };
        outputs.push(write_output(dir, &format!("series.{ext}"), series.as_bytes())?);
        if let Some(sp) = &spectrum {
            let text = match opts.format {
                TableFormat::Csv => spectrum_to_csv(sp),
                TableFormat::Json => spectrum_to_json(sp),
            };
            outputs.push(write_output(dir, &format!("spectrum.{ext}"), text.as_bytes())?);
        }
    }
    let dominant = spectrum.as_ref().and_then(Spectrum::dominant_frequency);
    let manifest = build_manifest(
        s,
        opts,
        dt,
        &report,
        ground_state,
        logs,
        settings,
        dominant,
        was_resumed,
        clock,
        outputs,
    );
    if let Some(dir) = &run_dir {
        let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
        write_file(&dir.join("manifest.json"), &json)?;
        let ckpt = checkpoint_dir(dir);
        if ckpt.exists() {
            fs::remove_dir_all(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
        }
    }
    Ok(RunOutput {
        manifest,
        records,
        spectrum,
        branches: branches.into_iter().map(|b| (b.weight, b.state)).collect(),
        completed: true,
        output_dir: run_dir,
    })
}

fn write_output(dir: &Path, name: &str, bytes: &[u8]) -> Result<OutputChecksum> {
    write_file(&dir.join(name), bytes)?;
    Ok(OutputChecksum {
        file: name.into(),
        sha256: hex::encode(Sha256::digest(bytes)),
    })
}

#[allow(clippy::too_many_arguments)]
fn build_manifest(
    s: &Scenario,
    opts: &RunOptions,
    dt: f64,
    report: &ValidationReport,
    ground_state: Option<GroundStateInfo>,
    events: Vec<EventLog>,
    spectrum: Option<SpectrumSettings>,
    dominant_frequency: Option<f64>,
    resumed: bool,
    clock: Instant,
    outputs: Vec<OutputChecksum>,
) -> RunManifest {
    let selective_probability_product = events
        .iter()
        .filter(|e| matches!(e.outcome, EventOutcome::Selective(_)))
        .map(|e| e.probabilities[0].probability)
        .product();
    RunManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        scenario: s.clone(),
        lanczos: opts.lanczos,
        propagator: opts.propagator,
        sampling_dt: dt,
        spectrum,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        memory_estimate_bytes: report.memory_estimate_bytes,
        ground_state,
        events,
        selective_probability_product,
        dominant_frequency,
        resumed,
        outputs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolve::dense_ground_state;
    use crate::measurement::project;
    use crate::observables::magnetization;
    use crate::oracle;

    fn basic(n: usize) -> Scenario {
        let text = format!(
            r#"
            [[scenario]]
            name = "basic"
            chain = {{ n_sites = {n} }}
            events = [{{ time = 0.5, site = 1, axis = "z" }}]
            [scenario.sampling]
            t_end = 2.0
            dt = 0.25
            observables = [
              {{ kind = "magnetization", sites = "all" }},
              {{ kind = "energy" }},
            ]
            "#
        );
        parse_scenarios(&text, None).unwrap().remove(0)
    }

    #[test]
    fn parses_defaults() {
        let s = basic(6);
        assert_eq!(s.chain.exchange_j, 1.0);
        assert_eq!(s.initial_state, InitialState::GroundState);
        assert_eq!(s.events[0].outcome, EventOutcome::Selective(Sign::Plus));
        assert_eq!(s.sampling.t_start, 0.0);
        assert_eq!(s.sampling.observables[0].expand(6).unwrap().len(), 6);
    }

    #[test]
    fn unknown_keys_are_validation_errors() {
        let text = "[[scenario]]\nname = \"x\"\nchains = 3\n";
        assert!(matches!(parse_scenarios(text, None), Err(Error::Validation(_))));
    }

    #[test]
    fn site_selections() {
        assert_eq!(SiteSelection::Named(SiteSet::Odd).sites(6), vec![1, 3, 5]);
        assert_eq!(SiteSelection::Named(SiteSet::Even).sites(6), vec![2, 4, 6]);
        assert_eq!(SiteSelection::List(vec![2, 5]).sites(6), vec![2, 5]);
    }

    #[test]
    fn validation_catches_violations() {
        let opts = RunOptions::default();
        assert!(validate_scenario(&basic(6), &opts).is_ok());

        let mut s = basic(6);
        s.chain.n_sites = 7;
        let r = validate_scenario(&s, &opts);
        assert!(r.violations.iter().any(|v| v.contains("even")));

        let mut s = basic(6);
        s.events[0].time = 3.0;
        let r = validate_scenario(&s, &opts);
        assert!(r.violations.iter().any(|v| v.contains("outside the sampling window")));

        let mut s = basic(6);
        s.events[0].time = 0.6;
        assert!(!validate_scenario(&s, &opts).is_ok());
        s.events[0].time = 0.5 + 0.0025 * 0.5;
        assert!(validate_scenario(&s, &opts).is_ok());

        let mut s = basic(6);
        s.sampling.observables.clear();
        assert!(!validate_scenario(&s, &opts).is_ok());

        let mut s = basic(6);
        s.initial_state = InitialState::Product { pattern: "udu".into() };
        assert!(!validate_scenario(&s, &opts).is_ok());

        let mut s = basic(6);
        s.spectrum = Some(SpectrumSpec {
            site: 2,
            axis: Axis::X,
            from: None,
            window: Window::Rectangular,
            detrend: true,
        });
        assert!(!validate_scenario(&s, &opts).is_ok());
    }

    #[test]
    fn memory_estimate_gates_large_runs() {
        let mut s = basic(28);
        s.events[0].axis = Axis::X;
        let opts = RunOptions::default();
        let r = validate_scenario(&s, &opts);
        assert!(r.memory_estimate_bytes >= 2 * (1u64 << 28) * 16);
        assert!(!r.warnings.is_empty());
        assert!(matches!(run_scenario(&s, &opts), Err(Error::Validation(_))));
    }

    #[test]
    fn run_matches_direct_computation() {
        let s = basic(8);
        let out = run_scenario(&s, &RunOptions::default()).unwrap();
        assert!(out.completed);
        let m1 = &out.records[0];
        // 9 grid points plus one post-event duplicate at t = 0.5.
        assert_eq!(m1.len(), 10);
        assert_eq!(m1.times[2], 0.5);
        assert_eq!(m1.times[3], 0.5);
        assert!(m1.values[2].abs() < 1e-9);
        assert!((m1.values[3] - 0.5).abs() < 1e-12);

        let gs = dense_ground_state(&s.chain).unwrap();
        let before = oracle::dense_evolve(&gs.state, 0.5).unwrap();
        let after = project(&before, ProjectorSpec::new(1, Axis::Z, Sign::Plus)).unwrap();
        let end = oracle::dense_evolve(&after.state, 1.5).unwrap();
        let expected = magnetization(&end, 3, Axis::Z).unwrap();
        let got = *out.records[2].values.last().unwrap();
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
        assert!((out.manifest.selective_probability_product - after.probability).abs() < 1e-9);
    }

    #[test]
    fn nonselective_average_is_stationary_for_ground_state_z() {
        // Averaging both z outcomes of the ground state leaves ⟨S^z⟩ = 0.
        let mut s = basic(8);
        s.events[0].outcome = EventOutcome::Nonselective;
        let out = run_scenario(&s, &RunOptions::default()).unwrap();
        assert_eq!(out.manifest.events[0].branches_after, 2);
        let p = &out.manifest.events[0].probabilities;
        assert!((p[0].probability - 0.5).abs() < 1e-9);
        assert!((p[0].probability + p[1].probability - 1.0).abs() < 1e-12);
        for r in &out.records[..8] {
            assert!(r.values.iter().all(|v| v.abs() < 1e-9));
        }
        assert_eq!(out.manifest.selective_probability_product, 1.0);
    }

    #[test]
    fn impossible_outcome_is_tagged_with_event() {
        let mut s = basic(6);
        s.initial_state = InitialState::Product { pattern: "uuuddd".into() };
        s.events[0].outcome = EventOutcome::Selective(Sign::Minus);
        s.events[0].time = 0.0;
        let err = run_scenario(&s, &RunOptions::default()).unwrap_err();
        assert!(matches!(err, Error::AtEvent { index: 0, .. }));
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn writes_outputs_with_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions {
            out_dir: Some(dir.path().to_path_buf()),
            ..RunOptions::default()
        };
        let out = run_scenario(&basic(6), &opts).unwrap();
        let run_dir = dir.path().join("basic");
        let series = fs::read(run_dir.join("series.csv")).unwrap();
        assert_eq!(out.manifest.outputs[0].sha256, hex::encode(Sha256::digest(&series)));
        let manifest: RunManifest =
            serde_json::from_slice(&fs::read(run_dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest.events.len(), 1);
        assert!(manifest.ground_state.is_some());
    }
}
