//! Strong `L^p` errors at the terminal time on coupled noise.
//!
//! One bundle per path is generated at `ref_delta`. The reference is the
//! closed form when the model has one (using `B(T)`, `N(T)` of that bundle),
//! otherwise the same scheme run at `ref_delta`. Each coarse solution is driven
//! by the exact aggregate of the same fine increments.

use rayon::prelude::*;
use serde::Serialize;

use super::mean_stderr;
use super::regression::fit_loglog;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ModelSpec;
use crate::noise::{grid_ratio, NoiseBundle, NoiseKey};
use crate::scheme::{integrate_terminal, SchemeKind, StepSize};
use crate::truncation::TruncationConfig;

/// Finest level divided by this factor is the default surrogate reference.
pub const SURROGATE_REFINEMENT: f64 = 128.0;

#[derive(Debug, Clone, PartialEq)]
pub struct StrongErrorSetup {
    /// Strictly decreasing step sizes.
    pub deltas: Vec<f64>,
    /// Base grid of the noise. Defaults to `min(deltas)` with a closed form
    /// and `min(deltas)/128` otherwise.
    pub ref_delta: Option<f64>,
    pub horizon: f64,
    pub p: f64,
    pub paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    Exact,
    Surrogate,
}

/// Per-level error moments before any fitting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorEstimates {
    pub p: f64,
    pub deltas: Vec<f64>,
    pub ref_delta: f64,
    pub reference: Reference,
    /// Sample mean of `|x_ref(T) − x_Δ(T)|^p`; `+∞` if a path overflowed.
    pub errors: Vec<f64>,
    pub stderrs: Vec<f64>,
    /// Paths whose plain-EM solution (or reference) overflowed, per level.
    pub overflow_paths: Vec<usize>,
    pub paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub p: f64,
    pub deltas: Vec<f64>,
    /// Raw `p`-th moments of the terminal error, not their roots.
    pub errors: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub slope: f64,
    pub slope_ci: f64,
    pub intercept: f64,
    pub theoretical_exponent: Option<f64>,
    pub paths: usize,
    pub seed: u64,
    pub ref_delta: f64,
    pub reference: Reference,
}

impl RateReport {
    /// Fits the slope. Fails with `NonFinite` on overflowed levels and with
    /// `InsufficientData` on zero errors or fewer than three levels.
    pub fn from_estimates(est: &ErrorEstimates) -> Result<Self> {
        if let Some(i) = est.errors.iter().position(|e| !e.is_finite()) {
            return Err(Error::NonFinite(format!(
                "strong error at Δ={} is {} ({} overflowed paths)",
                est.deltas[i], est.errors[i], est.overflow_paths[i]
            )));
        }
        let fit = fit_loglog(&est.deltas, &est.errors)?;
        Ok(RateReport {
            p: est.p,
            deltas: est.deltas.clone(),
            errors: est.errors.clone(),
            stderrs: est.stderrs.clone(),
            slope: fit.slope,
            slope_ci: fit.slope_ci,
            intercept: fit.intercept,
            theoretical_exponent: None,
            paths: est.paths,
            seed: est.seed,
            ref_delta: est.ref_delta,
            reference: est.reference,
        })
    }

    pub fn with_theory(mut self, exponent: f64) -> Self {
        self.theoretical_exponent = Some(exponent);
        self
    }
}

struct Plan {
    ref_delta: f64,
    reference: Reference,
    ref_step: Option<StepSize>,
    steps: Vec<StepSize>,
}

fn plan(model: &ModelSpec, setup: &StrongErrorSetup) -> Result<Plan> {
    if setup.deltas.is_empty() {
        return Err(Error::InsufficientData("no step sizes given".into()));
    }
    if !(setup.p > 0.0 && setup.p.is_finite()) {
        return Err(Error::InvalidParam(format!("p={} must be positive", setup.p)));
    }
    if setup.paths == 0 {
        return Err(Error::InvalidParam("paths must be positive".into()));
    }
    if setup.deltas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidParam("step sizes must be strictly decreasing".into()));
    }
    let finest = *setup.deltas.last().unwrap();
    let reference = if model.has_exact_solution() {
        Reference::Exact
    } else {
        Reference::Surrogate
    };
    let ref_delta = setup.ref_delta.unwrap_or(match reference {
        Reference::Exact => finest,
        Reference::Surrogate => finest / SURROGATE_REFINEMENT,
    });
    let mut steps = Vec::with_capacity(setup.deltas.len());
    for &d in &setup.deltas {
        grid_ratio(d, ref_delta, "step size vs ref_delta")?;
        steps.push(StepSize::from_delta(model.delay(), d, setup.horizon)?);
    }
    let ref_step = match reference {
        Reference::Exact => None,
        Reference::Surrogate => Some(StepSize::from_delta(model.delay(), ref_delta, setup.horizon)?),
    };
    Ok(Plan {
        ref_delta,
        reference,
        ref_step,
        steps,
    })
}

/// Per-level error moments on coupled noise, with standard errors.
pub fn estimate_errors(
    model: &ModelSpec,
    trunc: Option<&TruncationConfig>,
    scheme: SchemeKind,
    setup: &StrongErrorSetup,
) -> Result<ErrorEstimates> {
    let plan = plan(model, setup)?;
    let levels = plan.steps.len();
    let per_path: Vec<Vec<f64>> = (0..setup.paths as u64)
        .into_par_iter()
        .map(|i| {
            let noise = NoiseBundle::generate(
                NoiseKey::new(setup.seed, i),
                setup.horizon,
                plan.ref_delta,
                model.brownian_dim(),
                model.jump_intensity(),
            )?;
            let reference = match &plan.ref_step {
                None => {
                    let (b, n) = noise.terminal_values();
                    model
                        .exact_solution(setup.horizon, &b, n)
                        .ok_or_else(|| Error::InvalidParam("model lost its exact solution".into()))?
                }
                Some(step) => {
                    let t = integrate_terminal(scheme, model, trunc, step, noise.fine())?;
                    if t.overflow {
                        vec![f64::INFINITY; model.dim()]
                    } else {
                        t.state
                    }
                }
            };
            let mut errs = Vec::with_capacity(levels);
            for step in &plan.steps {
                let incr = noise.aggregate(step.delta())?;
                let t = integrate_terminal(scheme, model, trunc, step, &incr)?;
                let e = if t.overflow || !reference.iter().all(|v| v.is_finite()) {
                    f64::INFINITY
                } else {
                    linalg::dist(&reference, &t.state).powf(setup.p)
                };
                errs.push(e);
            }
            Ok(errs)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut errors = Vec::with_capacity(levels);
    let mut stderrs = Vec::with_capacity(levels);
    let mut overflow_paths = Vec::with_capacity(levels);
    for l in 0..levels {
        let column: Vec<f64> = per_path.iter().map(|e| e[l]).collect();
        overflow_paths.push(column.iter().filter(|e| e.is_infinite()).count());
        let (m, s) = mean_stderr(&column);
        errors.push(m);
        stderrs.push(s);
    }
    Ok(ErrorEstimates {
        p: setup.p,
        deltas: setup.deltas.clone(),
        ref_delta: plan.ref_delta,
        reference: plan.reference,
        errors,
        stderrs,
        overflow_paths,
        paths: setup.paths,
        seed: setup.seed,
    })
}

/// Error moments plus the fitted log–log slope.
pub fn strong_error(
    model: &ModelSpec,
    trunc: Option<&TruncationConfig>,
    scheme: SchemeKind,
    setup: &StrongErrorSetup,
) -> Result<RateReport> {
    RateReport::from_estimates(&estimate_errors(model, trunc, scheme, setup)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{geometric_jump_diffusion, GjdParams};
    use crate::truncation::{Phi, Regime};

    fn gjd(a: f64, b: f64, c: f64) -> ModelSpec {
        geometric_jump_diffusion(GjdParams {
            a,
            b,
            c,
            ..GjdParams::default()
        })
        .unwrap()
    }

    fn setup(deltas: Vec<f64>, paths: usize) -> StrongErrorSetup {
        StrongErrorSetup {
            deltas,
            ref_delta: None,
            horizon: 1.0,
            p: 2.0,
            paths,
            seed: 17,
        }
    }

    #[test]
    fn zero_model_has_zero_error_and_no_fit() {
        let m = gjd(0.0, 0.0, 0.0);
        let s = setup(vec![0.25, 0.125, 0.0625], 16);
        let est = estimate_errors(&m, None, SchemeKind::PlainEm, &s).unwrap();
        assert_eq!(est.errors, vec![0.0; 3]);
        assert_eq!(est.reference, Reference::Exact);
        assert!(matches!(
            strong_error(&m, None, SchemeKind::PlainEm, &s),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn single_level_matches_direct_discrepancy() {
        let m = gjd(0.05, 0.2, -0.1);
        let s = setup(vec![0.0625], 8);
        let est = estimate_errors(&m, None, SchemeKind::PlainEm, &s).unwrap();
        let mut direct = Vec::new();
        for i in 0..8 {
            let noise = NoiseBundle::generate(NoiseKey::new(17, i), 1.0, 0.0625, 1, 1.0).unwrap();
            let (b, n) = noise.terminal_values();
            let exact = m.exact_solution(1.0, &b, n).unwrap()[0];
            let step = StepSize::from_delta(1.0, 0.0625, 1.0).unwrap();
            let x = integrate_terminal(SchemeKind::PlainEm, &m, None, &step, noise.fine()).unwrap();
            direct.push((exact - x.state[0]).powi(2));
        }
        assert_eq!(est.errors[0], mean_stderr(&direct).0);
        assert!(est.errors[0] > 0.0);
    }

    #[test]
    fn surrogate_reference_defaults_to_refined_grid() {
        let mut m = gjd(0.05, 0.2, -0.1);
        m = ModelSpec::new(
            "no-exact",
            1,
            1,
            std::sync::Arc::new(|x: &[f64], _: &[f64], o: &mut [f64]| o[0] = 0.05 * x[0]),
            std::sync::Arc::new(|x: &[f64], _: &[f64], o: &mut [f64]| o[0] = 0.2 * x[0]),
            std::sync::Arc::new(|x: &[f64], _: &[f64], o: &mut [f64]| o[0] = -0.1 * x[0]),
            m.delay(),
            1.0,
            m.initial_segment().clone(),
        )
        .unwrap();
        let trunc = TruncationConfig::new(Phi::power(1.0, 1.0).unwrap(), None, 0.125, Regime::TruncateFG).unwrap();
        let s = setup(vec![0.25, 0.125, 0.0625], 4);
        let est = estimate_errors(&m, Some(&trunc), SchemeKind::TruncatedFg, &s).unwrap();
        assert_eq!(est.reference, Reference::Surrogate);
        assert_eq!(est.ref_delta, 0.0625 / 128.0);
    }

    #[test]
    fn rejects_bad_grids() {
        let m = gjd(0.05, 0.2, -0.1);
        let mut s = setup(vec![0.25, 0.1], 4);
        assert!(matches!(estimate_errors(&m, None, SchemeKind::PlainEm, &s), Err(Error::Grid(_))));
        s.deltas = vec![0.125, 0.25];
        assert!(estimate_errors(&m, None, SchemeKind::PlainEm, &s).is_err());
        s.deltas = vec![0.25, 0.125];
        s.ref_delta = Some(0.1);
        assert!(matches!(estimate_errors(&m, None, SchemeKind::PlainEm, &s), Err(Error::Grid(_))));
    }
}
