//! Moment bounds along the grid and the gap between the two interpolants.

use rayon::prelude::*;
use serde::Serialize;

use super::mean_stderr;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ModelSpec;
use crate::noise::{grid_ratio, NoiseBundle, NoiseKey};
use crate::scheme::{integrate_increments, interp_continuous, SchemeKind, StepSize};
use crate::truncation::TruncationConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSetup {
    pub delta: f64,
    pub horizon: f64,
    pub q: f64,
    pub paths: usize,
    pub seed: u64,
}

impl MomentSetup {
    fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::InvalidParam(format!("q={} must be positive", self.q)));
        }
        if self.paths == 0 {
            return Err(Error::InvalidParam("paths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub scheme: SchemeKind,
    pub q: f64,
    pub delta: f64,
    /// `max_k` of the sample mean of `|X(t_k)|^q` over `t_k ∈ [0, T]`.
    pub estimate: f64,
    pub stderr: f64,
    pub argmax_time: f64,
    pub overflow_fraction: f64,
    pub paths: usize,
    pub seed: u64,
}

/// Noise for path `i` on the grid `base_dt`.
fn bundle(model: &ModelSpec, setup: &MomentSetup, base_dt: f64, i: u64) -> Result<NoiseBundle> {
    NoiseBundle::generate(
        NoiseKey::new(setup.seed, i),
        setup.horizon,
        base_dt,
        model.brownian_dim(),
        model.jump_intensity(),
    )
}

/// Estimates `sup_k E|X(t_k)|^q`. Overflowed plain-EM paths count as `+∞`.
pub fn moment_estimate(
    model: &ModelSpec,
    trunc: Option<&TruncationConfig>,
    scheme: SchemeKind,
    setup: &MomentSetup,
) -> Result<MomentReport> {
    setup.validate()?;
    let step = StepSize::from_delta(model.delay(), setup.delta, setup.horizon)?;
    let per_path: Vec<(Vec<f64>, bool)> = (0..setup.paths as u64)
        .into_par_iter()
        .map(|i| {
            let noise = bundle(model, setup, setup.delta, i)?;
            let path = integrate_increments(scheme, model, trunc, &step, noise.fine())?;
            let row = (0..=step.steps() as isize)
                .map(|k| {
                    let v = linalg::norm(path.state(k)).powf(setup.q);
                    if v.is_finite() {
                        v
                    } else {
                        f64::INFINITY
                    }
                })
                .collect();
            Ok((row, path.overflow()))
        })
        .collect::<Result<Vec<_>>>()?;

    let overflowed = per_path.iter().filter(|(_, o)| *o).count();
    let mut best = (f64::NEG_INFINITY, 0.0, 0usize);
    for k in 0..=step.steps() {
        let column: Vec<f64> = per_path.iter().map(|(r, _)| r[k]).collect();
        let (m, s) = mean_stderr(&column);
        if m > best.0 {
            best = (m, s, k);
        }
    }
    Ok(MomentReport {
        scheme,
        q: setup.q,
        delta: setup.delta,
        estimate: best.0,
        stderr: best.1,
        argmax_time: best.2 as f64 * setup.delta,
        overflow_fraction: overflowed as f64 / setup.paths as f64,
        paths: setup.paths,
        seed: setup.seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapEstimate {
    pub t: f64,
    /// Sample mean of `|x_Δ(t) − x̄_Δ(t)|^q`.
    pub mean: f64,
    pub stderr: f64,
}

/// `E|x_Δ(t) − x̄_Δ(t)|^q` at each `t` in `times`, which must lie on the
/// noise grid `base_dt` (a divisor of `setup.delta`).
pub fn interpolation_gap(
    model: &ModelSpec,
    trunc: Option<&TruncationConfig>,
    scheme: SchemeKind,
    setup: &MomentSetup,
    base_dt: f64,
    times: &[f64],
) -> Result<Vec<GapEstimate>> {
    setup.validate()?;
    grid_ratio(setup.delta, base_dt, "delta vs base_dt")?;
    let step = StepSize::from_delta(model.delay(), setup.delta, setup.horizon)?;
    let per_path: Vec<Vec<f64>> = (0..setup.paths as u64)
        .into_par_iter()
        .map(|i| {
            let noise = bundle(model, setup, base_dt, i)?;
            let incr = noise.aggregate(setup.delta)?;
            let path = integrate_increments(scheme, model, trunc, &step, &incr)?;
            times
                .iter()
                .map(|&t| {
                    let cont = interp_continuous(&path, model, trunc, &noise, t)?;
                    let pc = path.interp_pc(t)?;
                    Ok(linalg::dist(&cont, pc).powf(setup.q))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(times
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let column: Vec<f64> = per_path.iter().map(|r| r[j]).collect();
            let (mean, stderr) = mean_stderr(&column);
            GapEstimate { t, mean, stderr }
        })
        .collect())
}
