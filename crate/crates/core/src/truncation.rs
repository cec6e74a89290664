//! Growth envelope φ, step-size cap α(Δ) = K0·Δ^{-ε}, the radial projection
//! π_Δ onto the ball of radius φ⁻¹(α(Δ)), and truncated coefficients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Coefficients, ModelSpec};

/// Which coefficients are evaluated at projected arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// Drift and diffusion only; the jump coefficient is used as is.
    #[serde(rename = "fg")]
    TruncateFG,
    /// Drift, diffusion and jump.
    #[serde(rename = "fgh")]
    TruncateFGH,
}

/// Strictly increasing continuous envelope dominating the coefficient sup on
/// balls of radius `r ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum Phi {
    /// `φ(r) = c·r^k`.
    Power { c: f64, k: f64 },
    /// Sampled envelope, see [`SampledEnvelope`].
    Sampled(SampledEnvelope),
}

impl Phi {
    pub fn power(c: f64, k: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) || !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "power envelope needs c > 0 and k > 0, got c={c}, k={k}"
            )));
        }
        Ok(Phi::Power { c, k })
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Phi::Power { c, k } => c * r.powf(*k),
            Phi::Sampled(s) => s.eval(r),
        }
    }

    /// `φ⁻¹(v)` on `[φ(1), ∞)`, rounded down so that `φ(r) ≤ v` holds in
    /// floating point.
    pub fn inverse(&self, v: f64) -> Result<f64> {
        let floor = self.eval(1.0);
        if !(v >= floor) {
            return Err(Error::Domain(format!(
                "φ⁻¹ is defined on [φ(1), ∞) = [{floor}, ∞); got {v}"
            )));
        }
        Ok(match self {
            Phi::Power { c, k } => {
                let mut r = if *k == 3.0 {
                    (v / c).cbrt()
                } else {
                    (v / c).powf(1.0 / k)
                };
                while r > 1.0 && self.eval(r) > v {
                    r = r.next_down();
                }
                r
            }
            Phi::Sampled(s) => s.inverse(v),
        })
    }
}

/// Envelope built from sampled coefficient magnitudes on dyadic shells
/// `r_i = 2^i`. Knot `i` carries the running maximum over the next larger
/// ball (so the piecewise-linear interpolant dominates the sampled sup on
/// every intermediate radius), inflated by 1% and forced strictly increasing.
/// Beyond the last knot the envelope is extrapolated as a power law.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledEnvelope {
    knots: Vec<f64>,
    values: Vec<f64>,
    tail_exponent: f64,
}

const SHELL_SAMPLES: usize = 256;

impl SampledEnvelope {
    pub fn from_model(model: &ModelSpec, regime: Regime, shells: usize, seed: u64) -> Result<Self> {
        if shells < 1 {
            return Err(Error::InvalidParam("auto envelope needs at least one shell".into()));
        }
        let n = model.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut buf = Coefficients::zeros(n, model.brownian_dim());
        let mut magnitude = |x: &[f64], y: &[f64]| -> Result<f64> {
            model.eval_into(x, y, &mut buf);
            if !buf.is_finite() {
                return Err(Error::NonFinite("coefficients blow up while sampling envelope".into()));
            }
            let mut m = linalg::norm(&buf.drift).max(linalg::norm(&buf.diffusion));
            if regime == Regime::TruncateFGH {
                m = m.max(linalg::norm(&buf.jump));
            }
            Ok(m)
        };

        let mut sup = Vec::with_capacity(shells + 2);
        let mut running = 0.0f64;
        for i in 0..=shells + 1 {
            let r = (2.0f64).powi(i as i32);
            let mut best = 0.0f64;
            // axis probes
            let probes = [-r, 0.0, r];
            for j in 0..n {
                for &a in &probes {
                    for &b in &probes {
                        let mut x = vec![0.0; n];
                        let mut y = vec![0.0; n];
                        x[j] = a;
                        y[j] = b;
                        best = best.max(magnitude(&x, &y)?);
                    }
                }
            }
            for s in 0..SHELL_SAMPLES {
                // half of the samples on the sphere, half inside the ball
                let on_sphere = s % 2 == 0;
                let x = sample_ball(&mut rng, n, r, on_sphere);
                let y = sample_ball(&mut rng, n, r, on_sphere);
                best = best.max(magnitude(&x, &y)?);
            }
            running = running.max(best);
            sup.push(running);
        }

        let knots: Vec<f64> = (0..=shells).map(|i| (2.0f64).powi(i as i32)).collect();
        let mut values = Vec::with_capacity(knots.len());
        for i in 0..=shells {
            let mut v = (sup[i + 1] * 1.01).max(f64::MIN_POSITIVE.sqrt());
            if let Some(&prev) = values.last() {
                let prev: f64 = prev;
                v = v.max(prev * (1.0 + 1e-9) + 1e-12);
            }
            values.push(v);
        }
        let last = values.len() - 1;
        let tail_exponent = if last == 0 {
            1.0
        } else {
            (values[last] / values[last - 1]).log2().max(1.0)
        };
        Ok(SampledEnvelope {
            knots,
            values,
            tail_exponent,
        })
    }

    fn eval(&self, r: f64) -> f64 {
        let last = self.knots.len() - 1;
        if r <= 1.0 {
            return self.values[0] * r.max(0.0);
        }
        if r >= self.knots[last] {
            return self.values[last] * (r / self.knots[last]).powf(self.tail_exponent);
        }
        let i = self.knots.partition_point(|&k| k <= r) - 1;
        let (r0, r1) = (self.knots[i], self.knots[i + 1]);
        let (v0, v1) = (self.values[i], self.values[i + 1]);
        v0 + (v1 - v0) * (r - r0) / (r1 - r0)
    }

    fn inverse(&self, v: f64) -> f64 {
        let mut lo = 1.0f64;
        let mut hi = 2.0f64;
        while self.eval(hi) < v {
            lo = hi;
            hi *= 2.0;
        }
        while hi - lo > 1e-12 * hi {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid) < v {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

pub(crate) fn sample_ball<R: Rng>(rng: &mut R, n: usize, r: f64, on_sphere: bool) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = linalg::norm(&v);
        if norm == 0.0 {
            continue;
        }
        let radius = if on_sphere {
            r
        } else {
            r * rng.random::<f64>().powf(1.0 / n as f64)
        };
        v.iter_mut().for_each(|c| *c *= radius / norm);
        return v;
    }
}

/// φ, K0, ε and the regime. Immutable; safe to share across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationConfig {
    phi: Phi,
    k0: f64,
    epsilon: f64,
    regime: Regime,
}

impl TruncationConfig {
    /// `k0 = None` selects `max(1, φ(1))`. An explicit `k0 < φ(1)` is
    /// accepted, but then [`Self::truncation_radius`] errors for every Δ with
    /// `α(Δ) < φ(1)`.
    pub fn new(phi: Phi, k0: Option<f64>, epsilon: f64, regime: Regime) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 0.25) {
            return Err(Error::InvalidParam(format!("epsilon={epsilon} not in (0, 1/4]")));
        }
        let k0 = k0.unwrap_or_else(|| phi.eval(1.0).max(1.0));
        if !(k0 >= 1.0) || !k0.is_finite() {
            return Err(Error::InvalidParam(format!("k0={k0} must be at least 1")));
        }
        Ok(TruncationConfig {
            phi,
            k0,
            epsilon,
            regime,
        })
    }

    pub fn with_regime(&self, regime: Regime) -> Self {
        TruncationConfig {
            regime,
            ..self.clone()
        }
    }

    pub fn phi(&self) -> &Phi {
        &self.phi
    }
    pub fn k0(&self) -> f64 {
        self.k0
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// `α(Δ) = K0·Δ^{-ε}` for `Δ ∈ (0, 1]`.
    pub fn alpha(&self, delta: f64) -> Result<f64> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::Domain(format!("step size {delta} not in (0, 1]")));
        }
        Ok(self.k0 * delta.powf(-self.epsilon))
    }

    /// `R(Δ) = φ⁻¹(α(Δ))`.
    pub fn truncation_radius(&self, delta: f64) -> Result<f64> {
        let alpha = self.alpha(delta)?;
        self.phi.inverse(alpha).map_err(|_| {
            Error::Domain(format!(
                "α({delta}) = {alpha} is below φ(1) = {}; step size too large for this envelope",
                self.phi.eval(1.0)
            ))
        })
    }

    pub fn at(&self, delta: f64) -> Result<TruncationLevel> {
        let alpha = self.alpha(delta)?;
        let radius = self.truncation_radius(delta)?;
        Ok(TruncationLevel {
            delta,
            alpha,
            radius,
            regime: self.regime,
        })
    }

    /// `π_Δ(x)`.
    pub fn pi_delta(&self, delta: f64, x: &[f64]) -> Result<Vec<f64>> {
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("π_Δ applied to a non-finite vector".into()));
        }
        let level = self.at(delta)?;
        let mut out = vec![0.0; x.len()];
        level.project(x, &mut out);
        Ok(out)
    }

    /// `(f_Δ, g_Δ, h or h_Δ)` depending on the regime.
    pub fn truncated_coefficients(
        &self,
        model: &ModelSpec,
        delta: f64,
        x: &[f64],
        y: &[f64],
    ) -> Result<Coefficients> {
        model.check_point(x, y)?;
        let level = self.at(delta)?;
        let mut scratch = Scratch::new(model.dim());
        let mut out = Coefficients::zeros(model.dim(), model.brownian_dim());
        level.coefficients_into(model, x, y, &mut scratch, &mut out);
        if !out.is_finite() {
            return Err(Error::NonFinite(format!(
                "truncated coefficients blow up at x={x:?}, y={y:?}"
            )));
        }
        Ok(out)
    }
}

/// Projected-argument buffers reused across steps.
#[derive(Debug, Clone)]
pub struct Scratch {
    px: Vec<f64>,
    py: Vec<f64>,
}

impl Scratch {
    pub fn new(dim: usize) -> Self {
        Scratch {
            px: vec![0.0; dim],
            py: vec![0.0; dim],
        }
    }
}

/// A [`TruncationConfig`] resolved at one step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationLevel {
    pub delta: f64,
    pub alpha: f64,
    pub radius: f64,
    pub regime: Regime,
}

impl TruncationLevel {
    /// `(|x| ∧ R)·x/|x|`, with `0 ↦ 0`. Ties `|x| = R` return `x`.
    #[inline]
    pub fn project(&self, x: &[f64], out: &mut [f64]) {
        let n = linalg::norm(x);
        if n <= self.radius {
            out.copy_from_slice(x);
        } else if x.len() == 1 {
            out[0] = self.radius.copysign(x[0]);
        } else {
            // shrink the scale until |π(x)| ≤ R survives rounding
            let mut s = self.radius / n;
            loop {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = v * s;
                }
                if linalg::norm(out) <= self.radius {
                    break;
                }
                s = s.next_down();
            }
        }
    }

    #[inline]
    pub fn coefficients_into(
        &self,
        model: &ModelSpec,
        x: &[f64],
        y: &[f64],
        scratch: &mut Scratch,
        out: &mut Coefficients,
    ) {
        self.project(x, &mut scratch.px);
        self.project(y, &mut scratch.py);
        model.eval_into(&scratch.px, &scratch.py, out);
        if self.regime == Regime::TruncateFG {
            model.jump_into(x, y, &mut out.jump);
        }
    }
}
