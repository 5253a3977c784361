//! Chebyshev expansion of `exp(-iHt)`.
//!
//! With `H = a·H̃ + b`, `a = (E_max - E_min)/2`, `b = (E_max + E_min)/2`,
//!
//! ```text
//! exp(-iHt) = exp(-ibt) · Σ_k (2 - δ_k0) (-i)^k J_k(a·t) T_k(H̃)
//! ```
//!
//! where `J_k` are Bessel functions of the first kind. The series is cut at the
//! first order past `a·|t|` whose coefficient drops below the cutoff.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{ChainSpec, Space};
use crate::error::{Error, Result};
use crate::operators::{hamiltonian_affine, spectral_bounds_in, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatorConfig {
    /// Expansion terms with |coefficient| below this are dropped.
    pub coefficient_cutoff: f64,
    /// Spectral interval of H; estimated per space when absent.
    pub bounds: Option<(f64, f64)>,
    /// Hard cap on the expansion order; `10·(a·|t| + 50)` when absent.
    pub max_order: Option<usize>,
    /// Sample times sharing one Chebyshev recursion in
    /// [`Propagator::evolve_through_grid`].
    pub batch: usize,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        PropagatorConfig {
            coefficient_cutoff: 1e-16,
            bounds: None,
            max_order: None,
            batch: 10,
        }
    }
}

impl PropagatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.coefficient_cutoff > 0.0 && self.coefficient_cutoff <= 1e-8) {
            return Err(Error::Domain(format!(
                "coefficient cutoff {} outside (0, 1e-8]",
                self.coefficient_cutoff
            )));
        }
        if let Some((lo, hi)) = self.bounds {
            if !(lo < hi) {
                return Err(Error::Domain(format!("spectral bounds ({lo}, {hi}) are empty")));
            }
        }
        if self.batch == 0 {
            return Err(Error::Domain("batch must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sampling times `t_start + k·dt`, k = 0..=n with `n = round((t_end - t_start)/dt)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, dt: f64) -> Result<Self> {
        let grid = TimeGrid { t_start, t_end, dt };
        let v = grid.violations();
        if v.is_empty() {
            Ok(grid)
        } else {
            Err(Error::Domain(v.join("; ")))
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            out.push(format!("dt = {} must be positive", self.dt));
        }
        if !(self.t_end >= self.t_start) {
            out.push(format!("t_end = {} precedes t_start = {}", self.t_end, self.t_start));
        }
        out
    }

    pub fn steps(&self) -> usize {
        ((self.t_end - self.t_start) / self.dt).round() as usize
    }

    pub fn len(&self) -> usize {
        self.steps() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }

    pub fn sample_times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    /// Grid index nearest to `t`, if within `tolerance`.
    pub fn snap(&self, t: f64, tolerance: f64) -> Option<usize> {
        let k = ((t - self.t_start) / self.dt).round();
        if k < 0.0 || k as usize >= self.len() {
            return None;
        }
        let k = k as usize;
        ((self.time(k) - t).abs() <= tolerance).then_some(k)
    }
}

/// `J_0(x) … J_{order}(x)` by Miller's backward recurrence, normalized with
/// `J_0 + 2 Σ J_{2k} = 1`.
pub fn bessel_j_sequence(x: f64, order: usize) -> Vec<f64> {
    let ax = x.abs();
    if ax == 0.0 {
        let mut out = vec![0.0; order + 1];
        out[0] = 1.0;
        return out;
    }
    let start = order.max(ax.ceil() as usize) + 20 + (12.0 * ax.cbrt()).ceil() as usize + 40;
    let start = start + start % 2;
    let mut values = vec![0.0f64; start + 2];
    values[start] = 1e-300;
    for k in (1..=start).rev() {
        values[k - 1] = (2.0 * k as f64 / ax) * values[k] - values[k + 1];
        if values[k - 1].abs() > 1e250 {
            values[k - 1..].iter_mut().for_each(|v| *v *= 1e-250);
        }
    }
    let sum: f64 = values[0] + 2.0 * values[2..=start].iter().step_by(2).sum::<f64>();
    values.truncate(order + 1);
    for (k, v) in values.iter_mut().enumerate() {
        *v /= sum;
        if x < 0.0 && k % 2 == 1 {
            *v = -*v;
        }
    }
    values
}

/// Expansion coefficients `(2 - δ_k0)(-i)^k J_k(x)`, truncated at the first
/// order beyond |x| whose magnitude is below `cutoff`.
fn chebyshev_coefficients(x: f64, cutoff: f64, max_order: usize) -> Result<Vec<Complex64>> {
    let ax = x.abs();
    let mut guess = (ax + 12.0 * ax.cbrt() + 30.0).ceil() as usize;
    loop {
        let order = guess.min(max_order);
        let j = bessel_j_sequence(x, order);
        let cut = (0..=order).find(|&k| k as f64 > ax && 2.0 * j[k].abs() < cutoff);
        match cut {
            Some(k) => {
                return Ok((0..k)
                    .map(|n| {
                        let weight = if n == 0 { 1.0 } else { 2.0 } * j[n];
                        match n % 4 {
                            0 => Complex64::new(weight, 0.0),
                            1 => Complex64::new(0.0, -weight),
                            2 => Complex64::new(-weight, 0.0),
                            _ => Complex64::new(0.0, weight),
                        }
                    })
                    .collect())
            }
            None if order >= max_order => {
                return Err(Error::Precision {
                    order: max_order,
                    achieved: 2.0 * j[order].abs(),
                })
            }
            None => guess *= 2,
        }
    }
}

/// Chebyshev time evolution for one chain. Spectral bounds are estimated once
/// per space and cached.
#[derive(Debug, Clone)]
pub struct Propagator {
    spec: ChainSpec,
    cfg: PropagatorConfig,
    bounds: HashMap<Option<usize>, (f64, f64)>,
}

impl Propagator {
    pub fn new(spec: ChainSpec, cfg: PropagatorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Propagator {
            spec,
            cfg,
            bounds: HashMap::new(),
        })
    }

    pub fn config(&self) -> &PropagatorConfig {
        &self.cfg
    }

    pub fn spec(&self) -> &ChainSpec {
        &self.spec
    }

    /// Spectral interval used for states in `space`.
    pub fn bounds_for(&mut self, space: &Space) -> (f64, f64) {
        if let Some(b) = self.cfg.bounds {
            return b;
        }
        let key = space.as_sector().map(|s| s.n_up());
        let spec = self.spec;
        *self
            .bounds
            .entry(key)
            .or_insert_with(|| spectral_bounds_in(&spec, space))
    }

    fn max_order(&self, half_width: f64, dt: f64) -> usize {
        self.cfg
            .max_order
            .unwrap_or_else(|| (10.0 * (half_width * dt.abs() + 50.0)).ceil() as usize)
    }

    /// `exp(-iH·delta_t)·psi`.
    pub fn evolve(&mut self, psi: &StateVector, delta_t: f64) -> Result<StateVector> {
        Ok(self.evolve_many(psi, &[delta_t])?.pop().unwrap())
    }

    /// `exp(-iH·t)·psi` for each `t` in `offsets`, sharing one Chebyshev recursion.
    pub fn evolve_many(&mut self, psi: &StateVector, offsets: &[f64]) -> Result<Vec<StateVector>> {
        if psi.spec().n_sites != self.spec.n_sites {
            return Err(Error::DimensionMismatch {
                expected: self.spec.dimension(),
                found: psi.dim(),
            });
        }
        psi.ensure_normalized()?;
        let (e_min, e_max) = self.bounds_for(psi.space());
        let a = 0.5 * (e_max - e_min);
        let b = 0.5 * (e_max + e_min);

        let mut series = Vec::with_capacity(offsets.len());
        for &t in offsets {
            if !t.is_finite() {
                return Err(Error::Domain(format!("time step {t} is not finite")));
            }
            if t == 0.0 {
                series.push(Vec::new());
            } else {
                let coeffs = chebyshev_coefficients(a * t, self.cfg.coefficient_cutoff, self.max_order(a, t))?;
                series.push(coeffs);
            }
        }
        let order = series.iter().map(Vec::len).max().unwrap_or(0);

        let dim = psi.dim();
        let zero = Complex64::new(0.0, 0.0);
        let mut acc: Vec<Vec<Complex64>> = series
            .iter()
            .map(|c| if c.is_empty() { psi.amplitudes().to_vec() } else { vec![zero; dim] })
            .collect();

        let mut prev = psi.amplitudes().to_vec();
        let mut cur = vec![zero; dim];
        for k in 0..order {
            match k {
                0 => {}
                1 => hamiltonian_affine(&self.spec, psi.space(), &prev, 1.0 / a, -b / a, 0.0, &mut cur),
                _ => {
                    // T_{k} = 2H̃T_{k-1} - T_{k-2}, written over the T_{k-2} buffer.
                    hamiltonian_affine(&self.spec, psi.space(), &cur, 2.0 / a, -2.0 * b / a, -1.0, &mut prev);
                    std::mem::swap(&mut prev, &mut cur);
                }
            }
            let tk = if k == 0 { &prev } else { &cur };
            for (coeffs, out) in series.iter().zip(acc.iter_mut()) {
                if let Some(&c) = coeffs.get(k) {
                    out.iter_mut().zip(tk).for_each(|(o, v)| *o += c * v);
                }
            }
        }

        offsets
            .iter()
            .zip(acc)
            .zip(&series)
            .map(|((&t, mut amps), coeffs)| {
                if !coeffs.is_empty() {
                    let phase = Complex64::from_polar(1.0, -b * t);
                    amps.iter_mut().for_each(|x| *x *= phase);
                }
                psi.with_amplitudes(amps)
            })
            .collect()
    }

    /// Advance `psi` across `grid` in steps of `dt`, calling `sampler` at every
    /// sample time (including `t_start`, where the state is `psi` itself).
    ///
    /// Up to `batch` consecutive samples are produced from one recursion
    /// started at the last emitted state, each with its own exact expansion.
    pub fn evolve_through_grid<S, F>(
        &mut self,
        psi: &StateVector,
        grid: &TimeGrid,
        mut sampler: F,
    ) -> Result<(Vec<S>, StateVector)>
    where
        F: FnMut(f64, &StateVector) -> Result<S>,
    {
        let v = grid.violations();
        if !v.is_empty() {
            return Err(Error::Domain(v.join("; ")));
        }
        let steps = grid.steps();
        let mut samples = Vec::with_capacity(steps + 1);
        samples.push(sampler(grid.time(0), psi)?);
        let mut base = psi.clone();
        let mut done = 0;
        while done < steps {
            let count = self.cfg.batch.min(steps - done);
            let offsets: Vec<f64> = (1..=count).map(|j| j as f64 * grid.dt).collect();
            let states = self.evolve_many(&base, &offsets)?;
            for (j, state) in states.iter().enumerate() {
                samples.push(sampler(grid.time(done + j + 1), state)?);
            }
            base = states.into_iter().last().unwrap();
            done += count;
        }
        Ok((samples, base))
    }
}

/// One-shot `exp(-iH·delta_t)·psi`; estimates spectral bounds if the config
/// does not carry them.
pub fn evolve(psi: &StateVector, spec: &ChainSpec, delta_t: f64, cfg: &PropagatorConfig) -> Result<StateVector> {
    Propagator::new(*spec, *cfg)?.evolve(psi, delta_t)
}

/// Free-function form of [`Propagator::evolve_through_grid`] returning only
/// the samples.
pub fn evolve_through_grid<S, F>(
    psi: &StateVector,
    spec: &ChainSpec,
    grid: &TimeGrid,
    cfg: &PropagatorConfig,
    sampler: F,
) -> Result<Vec<S>>
where
    F: FnMut(f64, &StateVector) -> Result<S>,
{
    Ok(Propagator::new(*spec, *cfg)?.evolve_through_grid(psi, grid, sampler)?.0)
}
