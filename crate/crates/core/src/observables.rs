//! Expectation values, time series and their Fourier spectra.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::basis::{ChainSpec, Space};
use crate::error::{Error, Result};
use crate::operators::{apply_hamiltonian, apply_local_spin, check_site, Axis, LocalSpinOp, StateVector};

/// `⟨ψ|S^axis_site|ψ⟩`.
pub fn magnetization(psi: &StateVector, site: usize, axis: Axis) -> Result<f64> {
    let n = psi.spec().n_sites;
    check_site(site, n)?;
    let bit = 1u64 << (site - 1);
    let space = psi.space();
    let amps = psi.amplitudes();
    match (axis, space) {
        (Axis::Z, _) => Ok(amps
            .iter()
            .enumerate()
            .map(|(i, a)| if space.code(i) & bit != 0 { 0.5 } else { -0.5 } * a.norm_sqr())
            .sum()),
        // S^x and S^y connect different S^z sectors.
        (_, Space::Sector(_)) => Ok(0.0),
        (_, Space::Full { .. }) => {
            let b = bit as usize;
            let value: Complex64 = amps
                .iter()
                .enumerate()
                .map(|(c, a)| a.conj() * amps[c ^ b] * spin_flip_factor(axis, c as u64 & bit != 0))
                .sum();
            debug_assert!(value.im.abs() < 1e-10, "non-real ⟨S⟩: {value}");
            Ok(value.re)
        }
    }
}

/// Matrix element `⟨c|S^axis|c with the bit flipped⟩` for a transverse axis,
/// given whether the site is up in `c`.
fn spin_flip_factor(axis: Axis, up: bool) -> Complex64 {
    match axis {
        Axis::X => Complex64::new(0.5, 0.0),
        Axis::Y if up => Complex64::new(0.0, -0.5),
        Axis::Y => Complex64::new(0.0, 0.5),
        Axis::Z => unreachable!(),
    }
}

/// `⟨S^axis_m⟩` for m = 1..=N.
pub fn site_magnetizations(psi: &StateVector, axis: Axis) -> Result<Vec<f64>> {
    let n = psi.spec().n_sites;
    if axis != Axis::Z {
        return (1..=n).map(|m| magnetization(psi, m, axis)).collect();
    }
    let mut out = vec![0.0; n];
    for (i, a) in psi.amplitudes().iter().enumerate() {
        let code = psi.space().code(i);
        let w = 0.5 * a.norm_sqr();
        for (b, slot) in out.iter_mut().enumerate() {
            *slot += if code >> b & 1 == 1 { w } else { -w };
        }
    }
    Ok(out)
}

pub fn total_magnetization(psi: &StateVector, axis: Axis) -> Result<f64> {
    Ok(site_magnetizations(psi, axis)?.iter().sum())
}

/// `(1/N) Σ_m (-1)^(m-1) ⟨S^z_m⟩`.
pub fn staggered_magnetization(psi: &StateVector) -> Result<f64> {
    Ok(staggered_from_site_values(&site_magnetizations(psi, Axis::Z)?))
}

/// Staggered average of per-site values `m[0] = ⟨S^z_1⟩, …`.
pub fn staggered_from_site_values(m: &[f64]) -> f64 {
    m.iter()
        .enumerate()
        .map(|(i, v)| if i % 2 == 0 { *v } else { -*v })
        .sum::<f64>()
        / m.len() as f64
}

/// Equal-time correlation `⟨S^axis_a S^axis_b⟩`.
pub fn correlation(psi: &StateVector, site_a: usize, site_b: usize, axis: Axis) -> Result<f64> {
    let n = psi.spec().n_sites;
    check_site(site_a, n)?;
    check_site(site_b, n)?;
    if site_a == site_b {
        return Ok(0.25 * psi.norm_sqr());
    }
    let ma = 1u64 << (site_a - 1);
    let mb = 1u64 << (site_b - 1);
    let space = psi.space();
    let amps = psi.amplitudes();
    let value: f64 = match axis {
        Axis::Z => amps
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let code = space.code(i);
                let same = (code & ma != 0) == (code & mb != 0);
                (if same { 0.25 } else { -0.25 }) * a.norm_sqr()
            })
            .sum(),
        Axis::X | Axis::Y => {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, a) in amps.iter().enumerate() {
                let code = space.code(i);
                let Some(j) = space.index_of(code ^ ma ^ mb) else {
                    continue;
                };
                let same = (code & ma != 0) == (code & mb != 0);
                // S^y_a S^y_b carries -σ_a σ_b / 4 with σ = ±1.
                let w = match (axis, same) {
                    (Axis::X, _) => 0.25,
                    (_, true) => -0.25,
                    (_, false) => 0.25,
                };
                acc += a.conj() * amps[j] * w;
            }
            debug_assert!(acc.im.abs() < 1e-10);
            acc.re
        }
    };
    Ok(value)
}

/// `⟨ψ|H|ψ⟩`.
pub fn energy(psi: &StateVector, spec: &ChainSpec) -> Result<f64> {
    let h = apply_hamiltonian(spec, psi)?;
    Ok(psi.inner(&h).re)
}

/// `⟨S_tot²⟩ = Σ_α ‖S^α_tot ψ‖²`.
pub fn total_spin_squared(psi: &StateVector) -> Result<f64> {
    let n = psi.spec().n_sites;
    let full = psi.to_full();
    let mut total = 0.0;
    for axis in Axis::ALL {
        let mut acc = vec![Complex64::new(0.0, 0.0); full.dim()];
        for site in 1..=n {
            let s = apply_local_spin(LocalSpinOp::new(site, axis), &full)?;
            acc.iter_mut().zip(s.amplitudes()).for_each(|(x, y)| *x += y);
        }
        total += acc.iter().map(|a| a.norm_sqr()).sum::<f64>();
    }
    Ok(total)
}

/// What a time series measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableId {
    /// `⟨S^axis_site⟩`
    Magnetization { site: usize, axis: Axis },
    /// `⟨S^axis_anchor S^axis_site⟩`
    Correlation { anchor: usize, site: usize, axis: Axis },
    Energy,
    Staggered,
}

impl ObservableId {
    /// Value of the `site` column in tabular output (0 for global quantities).
    pub fn site(&self) -> usize {
        match *self {
            ObservableId::Magnetization { site, .. } | ObservableId::Correlation { site, .. } => site,
            ObservableId::Energy | ObservableId::Staggered => 0,
        }
    }

    /// Value of the `axis` column: `x|y|z` for magnetizations, `zz@A` for
    /// correlations with anchor site A, `energy` and `staggered` otherwise.
    pub fn axis_label(&self) -> String {
        match *self {
            ObservableId::Magnetization { axis, .. } => axis.to_string(),
            ObservableId::Correlation { anchor, axis, .. } => format!("{axis}{axis}@{anchor}"),
            ObservableId::Energy => "energy".into(),
            ObservableId::Staggered => "staggered".into(),
        }
    }

    pub fn from_columns(site: usize, label: &str) -> Result<Self> {
        match label {
            "energy" => Ok(ObservableId::Energy),
            "staggered" => Ok(ObservableId::Staggered),
            l if l.contains('@') => {
                let (axes, anchor) = l.split_once('@').unwrap();
                let mut chars = axes.chars();
                let (Some(a), Some(b), None) = (chars.next(), chars.next(), chars.next()) else {
                    return Err(Error::Format(format!("bad correlation label {l:?}")));
                };
                if a != b {
                    return Err(Error::Format(format!("bad correlation label {l:?}")));
                }
                Ok(ObservableId::Correlation {
                    anchor: anchor
                        .parse()
                        .map_err(|_| Error::Format(format!("bad anchor in {l:?}")))?,
                    site,
                    axis: Axis::from_str(&a.to_string())?,
                })
            }
            l => Ok(ObservableId::Magnetization {
                site,
                axis: Axis::from_str(l).map_err(|_| Error::Format(format!("unknown axis label {l:?}")))?,
            }),
        }
    }

    pub fn evaluate(&self, psi: &StateVector) -> Result<f64> {
        match *self {
            ObservableId::Magnetization { site, axis } => magnetization(psi, site, axis),
            ObservableId::Correlation { anchor, site, axis } => correlation(psi, anchor, site, axis),
            ObservableId::Energy => energy(psi, psi.spec()),
            ObservableId::Staggered => staggered_magnetization(psi),
        }
    }
}

impl fmt::Display for ObservableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.axis_label(), self.site())
    }
}

/// Samples of one observable. At a measurement instant two samples share the
/// same time: the pre-projection value first, then the post-projection value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesRecord {
    pub id: ObservableId,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeSeriesRecord {
    pub fn new(id: ObservableId) -> Self {
        TimeSeriesRecord {
            id,
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, value: f64) {
        self.times.push(t);
        self.values.push(value);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        if self.times.len() != self.values.len() {
            return Err(Error::Format(format!(
                "{}: {} times but {} values",
                self.id,
                self.times.len(),
                self.values.len()
            )));
        }
        if self.times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Format(format!("{}: times not ascending", self.id)));
        }
        Ok(())
    }

    /// Keep only the last sample at each repeated time (post-event values),
    /// optionally restricted to `t >= from`.
    pub fn post_event_view(&self, from: f64) -> TimeSeriesRecord {
        let mut out = TimeSeriesRecord::new(self.id);
        for (&t, &v) in self.times.iter().zip(&self.values) {
            if t < from {
                continue;
            }
            if out.times.last() == Some(&t) {
                *out.values.last_mut().unwrap() = v;
            } else {
                out.push(t, v);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Rectangular,
    Hann,
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rectangular" | "rect" => Ok(Window::Rectangular),
            "hann" => Ok(Window::Hann),
            other => Err(Error::Domain(format!("unknown window {other:?}"))),
        }
    }
}

impl Window {
    fn weights(self, m: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; m],
            Window::Hann if m < 2 => vec![1.0; m],
            Window::Hann => (0..m)
                .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / (m - 1) as f64).cos()))
                .collect(),
        }
    }
}

/// One-sided magnitude spectrum `I(ω_k) = dt·|Σ_n w_n x_n e^{-2πikn/M}|` at
/// angular frequencies `ω_k = 2πk/(M·dt)`, k = 0..=M/2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub omegas: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub window: Window,
    pub detrend: bool,
    pub dt: f64,
    pub n_samples: usize,
}

impl Spectrum {
    /// Frequency of the largest magnitude over ω > 0; ties within 1e-12 go to
    /// the smallest ω.
    pub fn dominant_frequency(&self) -> Option<f64> {
        let max = self.magnitudes.iter().skip(1).copied().fold(f64::NEG_INFINITY, f64::max);
        self.omegas
            .iter()
            .zip(&self.magnitudes)
            .skip(1)
            .find(|(_, &m)| m >= max - 1e-12)
            .map(|(&w, _)| w)
    }

    /// `Σ_k |X_k|²` over the full two-sided DFT, rebuilt from the one-sided
    /// magnitudes and divided by `M·dt²`; equals `Σ_n (w_n x_n)²` by Parseval.
    pub fn parseval_power(&self) -> f64 {
        let m = self.n_samples;
        let mut total = 0.0;
        for (k, &mag) in self.magnitudes.iter().enumerate() {
            let both_sides = k != 0 && !(m % 2 == 0 && k == m / 2);
            total += mag * mag * if both_sides { 2.0 } else { 1.0 };
        }
        total / (m as f64 * self.dt * self.dt)
    }
}

/// Windowed (and optionally mean-subtracted) sample values as fed to the FFT.
pub fn prepared_signal(series: &TimeSeriesRecord, window: Window, detrend: bool) -> Vec<f64> {
    let m = series.values.len();
    let mean = if detrend {
        series.values.iter().sum::<f64>() / m as f64
    } else {
        0.0
    };
    window
        .weights(m)
        .iter()
        .zip(&series.values)
        .map(|(w, v)| w * (v - mean))
        .collect()
}

fn uniform_step(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::Domain("spectrum needs at least two samples".into()));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::Domain("time grid has zero span".into()));
    }
    for (k, &t) in times.iter().enumerate() {
        if (t - (times[0] + k as f64 * dt)).abs() > 1e-6 * dt {
            return Err(Error::Domain(format!("time grid is not uniform near t = {t}")));
        }
    }
    Ok(dt)
}

pub fn fourier_spectrum(series: &TimeSeriesRecord, window: Window, detrend: bool) -> Result<Spectrum> {
    series.check()?;
    let dt = uniform_step(&series.times)?;
    let m = series.values.len();
    let mut buf: Vec<Complex64> = prepared_signal(series, window, detrend)
        .into_iter()
        .map(|x| Complex64::new(x, 0.0))
        .collect();
    FftPlanner::<f64>::new().plan_fft_forward(m).process(&mut buf);
    let half = m / 2;
    let omegas = (0..=half)
        .map(|k| 2.0 * std::f64::consts::PI * k as f64 / (m as f64 * dt))
        .collect();
    let magnitudes = buf[..=half].iter().map(|x| x.norm() * dt).collect();
    Ok(Spectrum {
        omegas,
        magnitudes,
        window,
        detrend,
        dt,
        n_samples: m,
    })
}
