//! Truncated Euler–Maruyama (both regimes), plain EM, and the two
//! continuous-time extensions of the discrete chain.
//!
//! With `Δ = τ/M` and `t_k = kΔ`, the chain starts from `X(t_k) = ξ(t_k)` for
//! `k = −M..=0` and steps
//!
//! ```text
//! X(t_{k+1}) = X(t_k) + f_Δ(X(t_k), X(t_{k−M}))Δ + g_Δ(X(t_k), X(t_{k−M}))ΔB_k
//!            + h(X(t_k), X(t_{k−M}))ΔN_k
//! ```
//!
//! The delayed argument is always a stored grid value, so no interpolation is
//! needed. Jumps are applied at cell ends: `X(t_k⁻)` is identified with
//! `X(t_k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Coefficients, ModelSpec};
use crate::noise::{grid_ratio, Increments, NoiseBundle};
use crate::truncation::{Regime, Scratch, TruncationConfig, TruncationLevel};

/// Plain-EM states beyond this norm stop the integration.
pub const OVERFLOW_THRESHOLD: f64 = 1e150;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeKind {
    #[serde(rename = "tem-fg")]
    TruncatedFg,
    #[serde(rename = "tem-fgh")]
    TruncatedFgh,
    #[serde(rename = "em")]
    PlainEm,
}

impl SchemeKind {
    pub fn regime(self) -> Option<Regime> {
        match self {
            SchemeKind::TruncatedFg => Some(Regime::TruncateFG),
            SchemeKind::TruncatedFgh => Some(Regime::TruncateFGH),
            SchemeKind::PlainEm => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SchemeKind::TruncatedFg => "tem-fg",
            SchemeKind::TruncatedFgh => "tem-fgh",
            SchemeKind::PlainEm => "em",
        }
    }
}

/// `Δ = τ/M` on `[0, T]` with `T` a multiple of `Δ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSize {
    delay_steps: usize,
    delta: f64,
    horizon: f64,
    steps: usize,
}

impl StepSize {
    pub fn new(tau: f64, delay_steps: usize, horizon: f64) -> Result<Self> {
        if delay_steps == 0 {
            return Err(Error::InvalidParam("M must be a positive integer".into()));
        }
        if !(tau > 0.0) {
            return Err(Error::InvalidParam(format!("delay {tau} must be > 0")));
        }
        let delta = tau / delay_steps as f64;
        if !(delta <= 1.0) {
            return Err(Error::Domain(format!("step size τ/M = {delta} exceeds 1")));
        }
        let steps = grid_ratio(horizon, delta, "horizon vs step size")?;
        Ok(StepSize {
            delay_steps,
            delta,
            horizon,
            steps,
        })
    }

    /// Resolves `M = τ/Δ`, which must be integral.
    pub fn from_delta(tau: f64, delta: f64, horizon: f64) -> Result<Self> {
        let m = grid_ratio(tau, delta, "delay vs step size")?;
        Self::new(tau, m, horizon)
    }

    /// `M`, the number of steps per delay.
    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    /// `K = T/Δ`.
    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// `k` snapped to an integer when `t/Δ` is within rounding of one.
fn grid_index(t: f64, delta: f64) -> isize {
    let r = t / delta;
    let n = r.round();
    if (r - n).abs() <= 1e-9 * n.abs().max(1.0) {
        n as isize
    } else {
        r.floor() as isize
    }
}

/// Discrete states on `[−τ, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPath {
    scheme: SchemeKind,
    delta: f64,
    delay_steps: usize,
    steps: usize,
    dim: usize,
    states: Vec<f64>,
    overflow: bool,
}

impl SolutionPath {
    pub fn scheme(&self) -> SchemeKind {
        self.scheme
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }
    pub fn steps(&self) -> usize {
        self.steps
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn overflow(&self) -> bool {
        self.overflow
    }
    pub fn horizon(&self) -> f64 {
        self.steps as f64 * self.delta
    }

    /// `t_k = kΔ`.
    pub fn time(&self, k: isize) -> f64 {
        k as f64 * self.delta
    }

    /// Grid indices `−M..=K`.
    pub fn indices(&self) -> std::ops::RangeInclusive<isize> {
        -(self.delay_steps as isize)..=self.steps as isize
    }

    /// `X(t_k)` for `k ∈ −M..=K`.
    pub fn state(&self, k: isize) -> &[f64] {
        let i = (k + self.delay_steps as isize) as usize;
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.steps as isize)
    }

    /// All states, row-major with row 0 at `t_{−M}`.
    pub fn states(&self) -> &[f64] {
        &self.states
    }

    /// Piecewise-constant extension `x̄_Δ(t) = X(t_⌊t/Δ⌋)`, including `t = T`.
    pub fn interp_pc(&self, t: f64) -> Result<&[f64]> {
        let tau = self.delay_steps as f64 * self.delta;
        let horizon = self.horizon();
        let slack = 1e-12 * horizon.max(tau);
        if !(t >= -tau - slack && t <= horizon + slack) {
            return Err(Error::Domain(format!("t={t} outside [-{tau}, {horizon}]")));
        }
        let k = grid_index(t, self.delta).clamp(-(self.delay_steps as isize), self.steps as isize);
        Ok(self.state(k))
    }
}

/// Coefficient evaluation for one scheme at one step size.
enum Evaluator {
    Truncated(TruncationLevel, Scratch),
    Plain,
}

impl Evaluator {
    fn new(kind: SchemeKind, trunc: Option<&TruncationConfig>, delta: f64, dim: usize) -> Result<Self> {
        match kind.regime() {
            Some(regime) => {
                let cfg = trunc.ok_or_else(|| {
                    Error::InvalidParam(format!("scheme {} needs a truncation config", kind.label()))
                })?;
                let level = cfg.with_regime(regime).at(delta)?;
                Ok(Evaluator::Truncated(level, Scratch::new(dim)))
            }
            None => Ok(Evaluator::Plain),
        }
    }

    #[inline]
    fn eval(&mut self, model: &ModelSpec, x: &[f64], y: &[f64], out: &mut Coefficients) {
        match self {
            Evaluator::Truncated(level, scratch) => level.coefficients_into(model, x, y, scratch, out),
            Evaluator::Plain => model.eval_into(x, y, out),
        }
    }
}

/// `out = x + fΔ + g·ΔB + h·ΔN`.
#[inline]
fn euler_step(c: &Coefficients, x: &[f64], dt: f64, db: &[f64], dn: f64, out: &mut [f64]) {
    let m = db.len();
    for i in 0..x.len() {
        let mut incr = c.drift[i] * dt + c.jump[i] * dn;
        let row = &c.diffusion[i * m..(i + 1) * m];
        for (g, b) in row.iter().zip(db) {
            incr += g * b;
        }
        out[i] = if incr != 0.0 { x[i] + incr } else { x[i] };
    }
}

fn initial_states(model: &ModelSpec, step: &StepSize, out: &mut [f64]) -> Result<()> {
    let n = model.dim();
    let m = step.delay_steps as isize;
    let tau = model.delay();
    for k in -m..=0 {
        let theta = if k == -m { -tau } else { (k as f64 * step.delta).max(-tau) };
        let i = (k + m) as usize;
        model.initial_value_into(theta, &mut out[i * n..(i + 1) * n])?;
    }
    Ok(())
}

fn check_compat(model: &ModelSpec, step: &StepSize, incr: &Increments) -> Result<()> {
    if (model.delay() - step.delay_steps as f64 * step.delta).abs() > 1e-12 * model.delay() {
        return Err(Error::Grid(format!(
            "step size τ/M with M={} does not match the model delay {}",
            step.delay_steps,
            model.delay()
        )));
    }
    if incr.brownian_dim != model.brownian_dim() {
        return Err(Error::InvalidParam(format!(
            "noise has {} Brownian components, model needs {}",
            incr.brownian_dim,
            model.brownian_dim()
        )));
    }
    if incr.steps() != step.steps {
        return Err(Error::Grid(format!(
            "noise covers {} steps of {}, scheme needs {}",
            incr.steps(),
            incr.dt,
            step.steps
        )));
    }
    if (incr.dt - step.delta).abs() > 1e-9 * step.delta {
        return Err(Error::Grid(format!("increments have dt={}, scheme has Δ={}", incr.dt, step.delta)));
    }
    Ok(())
}

fn exceeds(state: &[f64]) -> bool {
    !state.iter().all(|v| v.is_finite()) || linalg::norm(state) > OVERFLOW_THRESHOLD
}

/// Integrates on increments already aggregated to `step.delta()`.
pub fn integrate_increments(
    kind: SchemeKind,
    model: &ModelSpec,
    trunc: Option<&TruncationConfig>,
    step: &StepSize,
    incr: &Increments,
) -> Result<SolutionPath> {
    check_compat(model, step, incr)?;
    let n = model.dim();
    let m = step.delay_steps;
    let total = m + step.steps + 1;
    let mut states = vec![0.0; total * n];
    initial_states(model, step, &mut states)?;
    let mut eval = Evaluator::new(kind, trunc, step.delta, n)?;
    let mut coeffs = Coefficients::zeros(n, model.brownian_dim());
    let mut next = vec![0.0; n];
    let mut overflow = false;

    for k in 0..step.steps {
        // row of X(t_k) is k + M, of X(t_{k−M}) is k
        let (head, tail) = states.split_at_mut((k + m + 1) * n);
        let x = &head[(k + m) * n..];
        let y = &head[k * n..(k + 1) * n];
        eval.eval(model, x, y, &mut coeffs);
        euler_step(&coeffs, x, step.delta, incr.db_at(k), incr.dn[k] as f64, &mut next);
        tail[..n].copy_from_slice(&next);
        if exceeds(&next) {
            if kind == SchemeKind::PlainEm {
                overflow = true;
                tail[n..].fill(f64::NAN);
                break;
            }
            return Err(Error::NonFinite(format!(
                "{} state left the finite range at step {}",
                kind.label(),
                k + 1
            )));
        }
    }
    Ok(SolutionPath {
        scheme: kind,
        delta: step.delta,
        delay_steps: m,
        steps: step.steps,
        dim: n,
        states,
        overflow,
    })
}

/// Terminal state only, keeping `M + 1` states in a ring buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Terminal {
    pub state: Vec<f64>,
    pub overflow: bool,
}

pub fn integrate_terminal(
    kind: SchemeKind,
    model: &ModelSpec,
    trunc: Option<&TruncationConfig>,
    step: &StepSize,
    incr: &Increments,
) -> Result<Terminal> {
    check_compat(model, step, incr)?;
    let n = model.dim();
    let m = step.delay_steps;
    let slots = m + 1;
    let mut ring = vec![0.0; slots * n];
    // X(t_k) lives in slot (k + M) mod (M + 1)
    initial_states(model, step, &mut ring)?;
    let mut eval = Evaluator::new(kind, trunc, step.delta, n)?;
    let mut coeffs = Coefficients::zeros(n, model.brownian_dim());
    let mut next = vec![0.0; n];

    for k in 0..step.steps {
        let cur = (k + m) % slots;
        let del = k % slots;
        {
            let x = &ring[cur * n..(cur + 1) * n];
            let y = &ring[del * n..(del + 1) * n];
            eval.eval(model, x, y, &mut coeffs);
            euler_step(&coeffs, x, step.delta, incr.db_at(k), incr.dn[k] as f64, &mut next);
        }
        if exceeds(&next) {
            if kind == SchemeKind::PlainEm {
                return Ok(Terminal {
                    state: vec![f64::NAN; n],
                    overflow: true,
                });
            }
            return Err(Error::NonFinite(format!(
                "{} state left the finite range at step {}",
                kind.label(),
                k + 1
            )));
        }
        // X(t_{k+1}) reuses the slot of X(t_{k−M})
        ring[del * n..(del + 1) * n].copy_from_slice(&next);
    }
    let last = (step.steps + m) % slots;
    Ok(Terminal {
        state: ring[last * n..(last + 1) * n].to_vec(),
        overflow: false,
    })
}

/// Scheme dispatch on a noise bundle.
pub fn integrate_with(
    kind: SchemeKind,
    model: &ModelSpec,
    trunc: Option<&TruncationConfig>,
    step: &StepSize,
    noise: &NoiseBundle,
) -> Result<SolutionPath> {
    check_horizon(step, noise)?;
    let incr = noise.aggregate(step.delta)?;
    integrate_increments(kind, model, trunc, step, &incr)
}

fn check_horizon(step: &StepSize, noise: &NoiseBundle) -> Result<()> {
    if (noise.horizon() - step.horizon).abs() > 1e-9 * step.horizon {
        return Err(Error::Grid(format!(
            "noise horizon {} differs from scheme horizon {}",
            noise.horizon(),
            step.horizon
        )));
    }
    Ok(())
}

/// Truncated EM in the regime carried by `trunc`.
pub fn integrate(
    model: &ModelSpec,
    trunc: &TruncationConfig,
    step: &StepSize,
    noise: &NoiseBundle,
) -> Result<SolutionPath> {
    let kind = match trunc.regime() {
        Regime::TruncateFG => SchemeKind::TruncatedFg,
        Regime::TruncateFGH => SchemeKind::TruncatedFgh,
    };
    integrate_with(kind, model, Some(trunc), step, noise)
}

/// Euler–Maruyama with untruncated coefficients. Overflow past
/// [`OVERFLOW_THRESHOLD`] is recorded in the path, not raised.
pub fn integrate_plain_em(model: &ModelSpec, step: &StepSize, noise: &NoiseBundle) -> Result<SolutionPath> {
    integrate_with(SchemeKind::PlainEm, model, None, step, noise)
}

/// Continuous extension
///
/// ```text
/// x_Δ(t) = X(κ(t)) + f_Δ(·)(t − κ(t)) + g_Δ(·)(B(t) − B(κ(t))) + h(·)(N(t) − N(κ(t)))
/// ```
///
/// with arguments frozen at `(X(κ(t)), X(κ(t) − τ))`, `κ(t) = ⌊t/Δ⌋Δ`. Only
/// times on the noise base grid are supported.
pub fn interp_continuous(
    path: &SolutionPath,
    model: &ModelSpec,
    trunc: Option<&TruncationConfig>,
    noise: &NoiseBundle,
    t: f64,
) -> Result<Vec<f64>> {
    let horizon = path.horizon();
    if !(t >= 0.0 && t <= horizon * (1.0 + 1e-12)) {
        return Err(Error::Domain(format!("t={t} outside [0, {horizon}]")));
    }
    let base = noise.base_dt();
    let j = grid_index(t, base);
    if j < 0 || ((j as f64) * base - t).abs() > 1e-9 * base {
        return Err(Error::Grid(format!("t={t} is not on the noise base grid (spacing {base})")));
    }
    let j = j as usize;
    let r = grid_ratio(path.delta, base, "scheme step vs base_dt")?;
    if path.steps * r != noise.steps() {
        return Err(Error::Grid("noise bundle does not cover the path horizon".into()));
    }
    let k = j / r;
    if k >= path.steps {
        return Ok(path.terminal().to_vec());
    }
    let x = path.state(k as isize);
    let y = path.state(k as isize - path.delay_steps as isize);
    let mut eval = Evaluator::new(path.scheme, trunc, path.delta, path.dim)?;
    let mut coeffs = Coefficients::zeros(path.dim, model.brownian_dim());
    eval.eval(model, x, y, &mut coeffs);
    let offset = j - k * r;
    let db = noise.brownian_increment(k * r, j);
    let dn = noise.jump_count(k * r, j) as f64;
    let mut out = vec![0.0; path.dim];
    euler_step(&coeffs, x, offset as f64 * base, &db, dn, &mut out);
    Ok(out)
}
