//! Problem instances: coefficient triples, delay, jump intensity, initial
//! segment, and the structural constants a model claims to satisfy.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg;
use crate::truncation::{Phi, Regime};

/// `(x, y, out)`: writes a coefficient evaluated at the current state `x`
/// and the delayed state `y` into `out`.
pub type CoefficientFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

/// `(t, B(t), N(t), out)`: closed-form solution driven by a realized
/// Brownian value and Poisson count.
pub type ExactSolutionFn = Arc<dyn Fn(f64, &[f64], u64, &mut [f64]) + Send + Sync>;

/// Nonnegative gap function `U(x, x̄)` of the monotonicity conditions.
pub type GapFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// `θ ↦ ξ(θ)` written into the output slice.
pub type SegmentFn = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;

/// Initial data on `[-τ, 0]`.
#[derive(Clone)]
pub enum InitialSegment {
    /// `ξ(θ) = c`. Hölder with any exponent and constant 0.
    Constant(Vec<f64>),
    /// `ξ(θ) = base + kbar·|θ|^γ·direction`, `direction` a unit vector.
    Holder {
        base: Vec<f64>,
        kbar: f64,
        gamma: f64,
        direction: Vec<f64>,
    },
    /// Arbitrary segment with caller-declared Hölder data.
    Custom {
        dim: usize,
        gamma: f64,
        kbar: f64,
        f: SegmentFn,
    },
}

impl InitialSegment {
    pub fn constant(value: Vec<f64>) -> Self {
        InitialSegment::Constant(value)
    }

    /// Rough segment `base + kbar·|θ|^γ·v`; `direction` is normalized here.
    pub fn holder(base: Vec<f64>, kbar: f64, gamma: f64, direction: Vec<f64>) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidParam(format!("holder exponent {gamma} not in (0, 1]")));
        }
        if !(kbar >= 0.0) || !kbar.is_finite() {
            return Err(Error::InvalidParam(format!("holder constant {kbar} must be >= 0")));
        }
        if base.len() != direction.len() {
            return Err(Error::InvalidParam("base and direction lengths differ".into()));
        }
        let n = linalg::norm(&direction);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidParam("direction must be a nonzero vector".into()));
        }
        let direction = direction.into_iter().map(|v| v / n).collect();
        Ok(InitialSegment::Holder {
            base,
            kbar,
            gamma,
            direction,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            InitialSegment::Constant(c) => c.len(),
            InitialSegment::Holder { base, .. } => base.len(),
            InitialSegment::Custom { dim, .. } => *dim,
        }
    }

    /// Declared `(γ, K̄)`.
    pub fn holder_data(&self) -> (f64, f64) {
        match self {
            InitialSegment::Constant(_) => (1.0, 0.0),
            InitialSegment::Holder { kbar, gamma, .. } => (*gamma, *kbar),
            InitialSegment::Custom { gamma, kbar, .. } => (*gamma, *kbar),
        }
    }

    fn eval_into(&self, theta: f64, out: &mut [f64]) {
        match self {
            InitialSegment::Constant(c) => out.copy_from_slice(c),
            InitialSegment::Holder {
                base,
                kbar,
                gamma,
                direction,
            } => {
                let s = kbar * theta.abs().powf(*gamma);
                for ((o, b), d) in out.iter_mut().zip(base).zip(direction) {
                    *o = b + s * d;
                }
            }
            InitialSegment::Custom { f, .. } => f(theta, out),
        }
    }
}

impl fmt::Debug for InitialSegment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialSegment::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            InitialSegment::Holder {
                base,
                kbar,
                gamma,
                direction,
            } => f
                .debug_struct("Holder")
                .field("base", base)
                .field("kbar", kbar)
                .field("gamma", gamma)
                .field("direction", direction)
                .finish(),
            InitialSegment::Custom { dim, gamma, kbar, .. } => f
                .debug_struct("Custom")
                .field("dim", dim)
                .field("gamma", gamma)
                .field("kbar", kbar)
                .finish_non_exhaustive(),
        }
    }
}

/// Point evaluation of `(f, g, h)`. `diffusion` is `dim × brownian_dim`,
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub drift: Vec<f64>,
    pub diffusion: Vec<f64>,
    pub jump: Vec<f64>,
}

impl Coefficients {
    pub fn zeros(dim: usize, brownian_dim: usize) -> Self {
        Coefficients {
            drift: vec![0.0; dim],
            diffusion: vec![0.0; dim * brownian_dim],
            jump: vec![0.0; dim],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.drift
            .iter()
            .chain(&self.diffusion)
            .chain(&self.jump)
            .all(|v| v.is_finite())
    }
}

/// A stochastic delay equation with Poisson jumps. Immutable once built and
/// cheap to clone; coefficient callbacks must be pure.
#[derive(Clone)]
pub struct ModelSpec {
    name: String,
    dim: usize,
    brownian_dim: usize,
    drift: CoefficientFn,
    diffusion: CoefficientFn,
    jump: CoefficientFn,
    delay: f64,
    jump_intensity: f64,
    initial: InitialSegment,
    exact: Option<ExactSolutionFn>,
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("brownian_dim", &self.brownian_dim)
            .field("delay", &self.delay)
            .field("jump_intensity", &self.jump_intensity)
            .field("initial", &self.initial)
            .field("exact", &self.exact.is_some())
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        brownian_dim: usize,
        drift: CoefficientFn,
        diffusion: CoefficientFn,
        jump: CoefficientFn,
        delay: f64,
        jump_intensity: f64,
        initial: InitialSegment,
    ) -> Result<Self> {
        if dim == 0 || brownian_dim == 0 {
            return Err(Error::InvalidParam("dim and brownian_dim must be >= 1".into()));
        }
        if !(delay > 0.0) || !delay.is_finite() {
            return Err(Error::InvalidParam(format!("delay {delay} must be > 0")));
        }
        if !(jump_intensity > 0.0) || !jump_intensity.is_finite() {
            return Err(Error::InvalidParam(format!(
                "jump intensity {jump_intensity} must be > 0"
            )));
        }
        if initial.dim() != dim {
            return Err(Error::InvalidParam(format!(
                "initial segment has dimension {}, model has {dim}",
                initial.dim()
            )));
        }
        let (gamma, kbar) = initial.holder_data();
        if !(gamma > 0.0 && gamma <= 1.0) || !(kbar >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "holder data (γ={gamma}, K̄={kbar}) out of range"
            )));
        }
        Ok(ModelSpec {
            name: name.into(),
            dim,
            brownian_dim,
            drift,
            diffusion,
            jump,
            delay,
            jump_intensity,
            initial,
            exact: None,
        })
    }

    pub fn with_exact_solution(mut self, exact: ExactSolutionFn) -> Self {
        self.exact = Some(exact);
        self
    }

    pub fn with_initial_segment(mut self, initial: InitialSegment) -> Result<Self> {
        if initial.dim() != self.dim {
            return Err(Error::InvalidParam("initial segment dimension mismatch".into()));
        }
        self.initial = initial;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn brownian_dim(&self) -> usize {
        self.brownian_dim
    }
    pub fn delay(&self) -> f64 {
        self.delay
    }
    pub fn jump_intensity(&self) -> f64 {
        self.jump_intensity
    }
    pub fn initial_segment(&self) -> &InitialSegment {
        &self.initial
    }
    pub fn holder_exponent(&self) -> f64 {
        self.initial.holder_data().0
    }
    pub fn holder_constant(&self) -> f64 {
        self.initial.holder_data().1
    }
    pub fn has_exact_solution(&self) -> bool {
        self.exact.is_some()
    }

    /// `ξ(θ)`; errors outside `[-τ, 0]`.
    pub fn initial_value(&self, theta: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.initial_value_into(theta, &mut out)?;
        Ok(out)
    }

    pub fn initial_value_into(&self, theta: f64, out: &mut [f64]) -> Result<()> {
        if !(theta >= -self.delay && theta <= 0.0) {
            return Err(Error::Domain(format!(
                "initial segment evaluated at θ={theta} outside [-{}, 0]",
                self.delay
            )));
        }
        self.initial.eval_into(theta, out);
        Ok(())
    }

    /// Unchecked evaluation into preallocated buffers.
    #[inline]
    pub fn eval_into(&self, x: &[f64], y: &[f64], out: &mut Coefficients) {
        (self.drift)(x, y, &mut out.drift);
        (self.diffusion)(x, y, &mut out.diffusion);
        (self.jump)(x, y, &mut out.jump);
    }

    #[inline]
    pub fn jump_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        (self.jump)(x, y, out);
    }

    /// `(f(x,y), g(x,y), h(x,y))`, rejecting non-finite inputs or outputs.
    pub fn eval_coefficients(&self, x: &[f64], y: &[f64]) -> Result<Coefficients> {
        self.check_point(x, y)?;
        let mut out = Coefficients::zeros(self.dim, self.brownian_dim);
        self.eval_into(x, y, &mut out);
        if !out.is_finite() {
            return Err(Error::NonFinite(format!(
                "coefficients of `{}` blow up at x={x:?}, y={y:?}",
                self.name
            )));
        }
        Ok(out)
    }

    pub(crate) fn check_point(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.dim || y.len() != self.dim {
            return Err(Error::InvalidParam(format!(
                "expected vectors of length {}, got {} and {}",
                self.dim,
                x.len(),
                y.len()
            )));
        }
        if !x.iter().chain(y).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("query point has non-finite entries".into()));
        }
        Ok(())
    }

    /// Closed-form `x(t)` given `B(t)` and `N(t)`, if the model has one.
    pub fn exact_solution(&self, t: f64, brownian: &[f64], jumps: u64) -> Option<Vec<f64>> {
        self.exact.as_ref().map(|exact| {
            let mut out = vec![0.0; self.dim];
            exact(t, brownian, jumps, &mut out);
            out
        })
    }
}

/// Structural constants a model is claimed to satisfy. Unset fields make the
/// corresponding checks fail with [`Error::MissingConstant`].
#[derive(Clone, Default)]
pub struct AssumptionConstants {
    /// Polynomial local-Lipschitz bound (with `beta`).
    pub k1: Option<f64>,
    pub beta: Option<f64>,
    /// One-sided monotonicity bound (with `eta_bar`, optional gap `u`).
    pub k2: Option<f64>,
    pub eta_bar: Option<f64>,
    pub u: Option<GapFn>,
    /// Khasminskii bound (with `p_bar`).
    pub k3: Option<f64>,
    pub p_bar: Option<f64>,
    /// Jump Khasminskii bound.
    pub k5: Option<f64>,
    pub k6: Option<f64>,
    pub sigma: Option<f64>,
    /// Jump monotonicity bound with its own gap function `u_jump`.
    pub k7: Option<f64>,
    pub u_jump: Option<GapFn>,
    /// Stored for reference; no scheme uses them.
    pub k8: Option<f64>,
    pub beta_bar: Option<f64>,
}

impl fmt::Debug for AssumptionConstants {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AssumptionConstants")
            .field("k1", &self.k1)
            .field("beta", &self.beta)
            .field("k2", &self.k2)
            .field("eta_bar", &self.eta_bar)
            .field("u", &self.u.is_some())
            .field("k3", &self.k3)
            .field("p_bar", &self.p_bar)
            .field("k5", &self.k5)
            .field("k6", &self.k6)
            .field("sigma", &self.sigma)
            .field("k7", &self.k7)
            .field("u_jump", &self.u_jump.is_some())
            .field("k8", &self.k8)
            .field("beta_bar", &self.beta_bar)
            .finish()
    }
}

impl AssumptionConstants {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("k5", self.k5),
            ("k7", self.k7),
        ];
        for (name, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(Error::InvalidParam(format!("{name}={v} must be > 0")));
                }
            }
        }
        if let Some(b) = self.beta {
            if !(b >= 0.0) {
                return Err(Error::InvalidParam(format!("beta={b} must be >= 0")));
            }
        }
        if let Some(k6) = self.k6 {
            if !(k6 >= 0.0) {
                return Err(Error::InvalidParam(format!("k6={k6} must be >= 0")));
            }
        }
        if let Some(eta) = self.eta_bar {
            if !(eta > 2.0) {
                return Err(Error::InvalidParam(format!("eta_bar={eta} must be > 2")));
            }
        }
        if let (Some(p), Some(eta)) = (self.p_bar, self.eta_bar) {
            if !(p > eta) {
                return Err(Error::InvalidParam(format!("p_bar={p} must exceed eta_bar={eta}")));
            }
        }
        if let Some(s) = self.sigma {
            if !(s > 2.0) {
                return Err(Error::InvalidParam(format!("sigma={s} must be > 2")));
            }
        }
        Ok(())
    }
}

fn scalar(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> CoefficientFn {
    Arc::new(move |x: &[f64], y: &[f64], out: &mut [f64]| out[0] = f(x[0], y[0]))
}

/// `|x − x̄|²(|x|² + |x̄|²)` scaled by `weight`.
pub fn quartic_gap(weight: f64) -> GapFn {
    Arc::new(move |x: &[f64], xb: &[f64]| {
        weight * linalg::dist_sq(x, xb) * (linalg::norm_sq(x) + linalg::norm_sq(xb))
    })
}

/// The super-linear scalar benchmark
///
/// ```text
/// f(x, y) = −5x³ + |y|^{5/4}/8 + 2x
/// g(x, y) = |x|^{3/2}/2 + y
/// h(x, y) = x + y,        λ = 0.2
/// ```
///
/// with its structural constants. Delay and initial segment are supplied by
/// the caller.
pub fn superlinear_scalar(delay: f64, initial: InitialSegment) -> Result<(ModelSpec, AssumptionConstants)> {
    let model = ModelSpec::new(
        "section5",
        1,
        1,
        scalar(|x, y| -5.0 * x * x * x + 0.125 * y.abs().powf(1.25) + 2.0 * x),
        scalar(|x, y| 0.5 * x.abs().powf(1.5) + y),
        scalar(|x, y| x + y),
        delay,
        0.2,
        initial,
    )?;
    let constants = AssumptionConstants {
        k1: Some(10.0),
        beta: Some(2.0),
        k2: Some(8.0),
        eta_bar: Some(3.0),
        u: Some(quartic_gap(0.25)),
        k3: Some(20.0),
        p_bar: Some(26.0),
        k5: Some(5.0),
        k6: Some(0.0),
        sigma: None,
        k7: Some(12.0),
        u_jump: Some(quartic_gap(2.75)),
        k8: None,
        beta_bar: None,
    };
    Ok((model, constants))
}

/// [`superlinear_scalar`] with `τ = 1` and `ξ ≡ 1`.
pub fn superlinear_scalar_default() -> (ModelSpec, AssumptionConstants) {
    superlinear_scalar(1.0, InitialSegment::constant(vec![1.0])).expect("valid defaults")
}

/// Parameters of the geometric jump-diffusion oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GjdParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub x0: f64,
    pub lambda: f64,
    pub tau: f64,
}

impl Default for GjdParams {
    fn default() -> Self {
        GjdParams {
            a: 0.05,
            b: 0.2,
            c: -0.1,
            x0: 1.0,
            lambda: 1.0,
            tau: 1.0,
        }
    }
}

/// Delay-free linear model `f = a·x`, `g = b·x`, `h = c·x` with exact solution
/// `x(t) = x0·exp((a − b²/2)t + b·B(t))·(1 + c)^{N(t)}`.
pub fn geometric_jump_diffusion(p: GjdParams) -> Result<ModelSpec> {
    if !(p.c > -1.0) {
        return Err(Error::InvalidParam(format!("c={} must exceed -1", p.c)));
    }
    if p.x0 == 0.0 || !p.x0.is_finite() {
        return Err(Error::InvalidParam("x0 must be finite and nonzero".into()));
    }
    let GjdParams { a, b, c, x0, .. } = p;
    let model = ModelSpec::new(
        "gjd",
        1,
        1,
        scalar(move |x, _| a * x),
        scalar(move |x, _| b * x),
        scalar(move |x, _| c * x),
        p.tau,
        p.lambda,
        InitialSegment::constant(vec![x0]),
    )?;
    Ok(model.with_exact_solution(Arc::new(move |t, bt: &[f64], nt, out: &mut [f64]| {
        out[0] = gjd_closed_form(a, b, c, x0, t, bt[0], nt);
    })))
}

/// `x0·exp((a − b²/2)t + b·B)·(1 + c)^N`.
pub fn gjd_closed_form(a: f64, b: f64, c: f64, x0: f64, t: f64, brownian: f64, jumps: u64) -> f64 {
    let growth = ((a - 0.5 * b * b) * t + b * brownian).exp();
    let jump_factor = if jumps == 0 {
        1.0
    } else {
        (1.0 + c).powi(jumps.min(i32::MAX as u64) as i32)
    };
    x0 * growth * jump_factor
}

/// A model addressable by string id, with its default growth envelopes.
#[derive(Debug, Clone)]
pub struct Builtin {
    pub model: ModelSpec,
    pub constants: Option<AssumptionConstants>,
    envelope_fg: Phi,
    envelope_fgh: Phi,
}

impl Builtin {
    pub fn default_envelope(&self, regime: Regime) -> &Phi {
        match regime {
            Regime::TruncateFG => &self.envelope_fg,
            Regime::TruncateFGH => &self.envelope_fgh,
        }
    }
}

pub const BUILTIN_IDS: &[(&str, &str)] = &[
    (
        "section5",
        "super-linear scalar delay model with jumps; params: tau, xi, gamma, kbar, lambda",
    ),
    (
        "gjd",
        "geometric jump diffusion with exact solution; params: a, b, c, x0, lambda, tau",
    ),
];

fn take(params: &BTreeMap<String, f64>, allowed: &[&str]) -> Result<()> {
    for key in params.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::InvalidParam(format!(
                "unknown model parameter `{key}` (allowed: {})",
                allowed.join(", ")
            )));
        }
    }
    Ok(())
}

/// Resolves a built-in model id with flat key–value parameters.
pub fn builtin(id: &str, params: &BTreeMap<String, f64>) -> Result<Builtin> {
    let get = |k: &str, d: f64| params.get(k).copied().unwrap_or(d);
    match id {
        "section5" => {
            take(params, &["tau", "xi", "gamma", "kbar", "lambda"])?;
            let tau = get("tau", 1.0);
            let xi = get("xi", 1.0);
            let kbar = get("kbar", 0.0);
            let initial = if kbar > 0.0 {
                InitialSegment::holder(vec![xi], kbar, get("gamma", 1.0), vec![1.0])?
            } else {
                InitialSegment::constant(vec![xi])
            };
            let (mut model, constants) = superlinear_scalar(tau, initial)?;
            if let Some(&lambda) = params.get("lambda") {
                if !(lambda > 0.0) {
                    return Err(Error::InvalidParam(format!("lambda={lambda} must be > 0")));
                }
                model.jump_intensity = lambda;
            }
            let envelope = Phi::power(5.0, 3.0)?;
            Ok(Builtin {
                model,
                constants: Some(constants),
                envelope_fg: envelope.clone(),
                envelope_fgh: envelope,
            })
        }
        "gjd" => {
            take(params, &["a", "b", "c", "x0", "lambda", "tau"])?;
            let d = GjdParams::default();
            let p = GjdParams {
                a: get("a", d.a),
                b: get("b", d.b),
                c: get("c", d.c),
                x0: get("x0", d.x0),
                lambda: get("lambda", d.lambda),
                tau: get("tau", d.tau),
            };
            let model = geometric_jump_diffusion(p)?;
            let lin = |c: f64| if c > 0.0 { c } else { 1.0 };
            let lip = p.a.abs().max(p.b.abs()).max(p.c.abs());
            let constants = AssumptionConstants {
                k1: Some(lin(lip)),
                beta: Some(0.0),
                ..Default::default()
            };
            Ok(Builtin {
                model,
                constants: Some(constants),
                envelope_fg: Phi::power(lin(p.a.abs().max(p.b.abs())), 1.0)?,
                envelope_fgh: Phi::power(lin(lip), 1.0)?,
            })
        }
        other => Err(Error::InvalidParam(format!(
            "unknown model id `{other}` (known: section5, gjd)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coeffs(model: &ModelSpec, x: f64, y: f64) -> (f64, f64, f64) {
        let c = model.eval_coefficients(&[x], &[y]).unwrap();
        (c.drift[0], c.diffusion[0], c.jump[0])
    }

    #[test]
    fn superlinear_coefficients_at_reference_points() {
        let (m, _) = superlinear_scalar_default();
        assert_eq!(coeffs(&m, 0.0, 0.0), (0.0, 0.0, 0.0));
        let (f, g, h) = coeffs(&m, 1.0, 1.0);
        assert_eq!(f, -2.875);
        assert_eq!(g, 1.5);
        assert_eq!(h, 2.0);
        let (f, g, h) = coeffs(&m, 2.0, 0.0);
        assert_eq!(f, -36.0);
        assert!((g - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(h, 2.0);
    }

    #[test]
    fn superlinear_registered_constants() {
        let (m, c) = superlinear_scalar_default();
        assert_eq!(m.jump_intensity(), 0.2);
        assert_eq!(c.beta, Some(2.0));
        assert_eq!(c.k1, Some(10.0));
        assert_eq!(c.k2, Some(8.0));
        assert_eq!(c.eta_bar, Some(3.0));
        assert_eq!(c.p_bar, Some(26.0));
        let u = c.u.as_ref().unwrap();
        assert_eq!(u(&[1.0], &[0.0]), 0.25);
        c.validate().unwrap();
    }

    #[test]
    fn non_finite_coefficients_are_rejected() {
        let (m, _) = superlinear_scalar_default();
        assert!(matches!(
            m.eval_coefficients(&[1e200], &[0.0]),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            m.eval_coefficients(&[f64::NAN], &[0.0]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn initial_segment_domain() {
        let (m, _) = superlinear_scalar(0.5, InitialSegment::constant(vec![3.0])).unwrap();
        assert_eq!(m.initial_value(-0.5).unwrap(), vec![3.0]);
        assert_eq!(m.initial_value(0.0).unwrap(), vec![3.0]);
        assert!(matches!(m.initial_value(0.1), Err(Error::Domain(_))));
        assert!(matches!(m.initial_value(-0.6), Err(Error::Domain(_))));
    }

    #[test]
    fn gjd_closed_form_values() {
        assert_eq!(gjd_closed_form(0.0, 0.0, 0.0, 1.7, 3.0, 0.4, 5), 1.7);
        assert!((gjd_closed_form(1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0) - std::f64::consts::E).abs() < 1e-15);
        // exp(0.03 + 0.06) * 0.81, evaluated by hand
        let v = gjd_closed_form(0.05, 0.2, -0.1, 1.0, 1.0, 0.3, 2);
        assert!((v - 0.886_281_170).abs() < 1e-8, "{v}");
        let m = geometric_jump_diffusion(GjdParams::default()).unwrap();
        assert_eq!(m.exact_solution(0.0, &[0.0], 0).unwrap(), vec![1.0]);
    }

    #[test]
    fn gjd_rejects_bad_jump_size() {
        let p = GjdParams {
            c: -1.0,
            ..Default::default()
        };
        assert!(matches!(geometric_jump_diffusion(p), Err(Error::InvalidParam(_))));
    }

    #[test]
    fn model_validation() {
        let z = scalar(|_, _| 0.0);
        let seg = InitialSegment::constant(vec![0.0]);
        assert!(ModelSpec::new("z", 1, 1, z.clone(), z.clone(), z.clone(), 0.0, 1.0, seg.clone()).is_err());
        assert!(ModelSpec::new("z", 1, 1, z.clone(), z.clone(), z.clone(), 1.0, 0.0, seg.clone()).is_err());
        assert!(ModelSpec::new("z", 0, 1, z.clone(), z.clone(), z.clone(), 1.0, 1.0, seg.clone()).is_err());
        assert!(ModelSpec::new("z", 2, 1, z.clone(), z.clone(), z, 1.0, 1.0, seg).is_err());
    }

    #[test]
    fn builtin_registry() {
        let mut params = BTreeMap::new();
        params.insert("tau".to_string(), 0.25);
        let b = builtin("section5", &params).unwrap();
        assert_eq!(b.model.delay(), 0.25);
        params.insert("bogus".to_string(), 1.0);
        assert!(builtin("section5", &params).is_err());
        assert!(builtin("nope", &BTreeMap::new()).is_err());
        let g = builtin("gjd", &BTreeMap::new()).unwrap();
        assert!(g.model.has_exact_solution());
    }
}
