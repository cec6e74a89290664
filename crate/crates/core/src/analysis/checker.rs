//! Sampled falsification of the structural conditions.
//!
//! Each check evaluates `margin = RHS − LHS` of one inequality at sampled
//! tuples `(x, y, x̄, ȳ)` (or `(s, t)` for the initial segment) and reports the
//! worst one. A clean report means no violation was found, not that the
//! condition holds.
//!
//! Sampling mixes three laws, cycling with the sample index: uniform on the
//! ball of the given radius for each argument; log-uniform magnitudes in
//! `[min(10⁻³, 10⁻³R), R]` with uniform directions; and near-diagonal pairs
//! `x̄ = x + d`, `ȳ = y + e` with log-uniform `|d|` and `|e|/|d|` log-uniform
//! in `[1/10, 10]`. A product of
//! deterministic probes (zero, `±R e_i`, `±R/2 e_i`, `±R/√n·𝟙`) is always
//! evaluated first.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{AssumptionConstants, Coefficients, GapFn, ModelSpec};
use crate::noise::{keyed_rng, Substream};
use crate::truncation::sample_ball;

const CHUNK: usize = 4096;
const MAX_PROBES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssumptionKind {
    /// `|ξ(t) − ξ(s)| ≤ K̄|t − s|^γ` on `[−τ, 0]`.
    #[serde(alias = "a31")]
    Holder,
    /// Polynomial local Lipschitz bound on `f`, `g`; global Lipschitz `h`.
    #[serde(alias = "a32")]
    LocalLipschitz,
    /// One-sided monotonicity of `(f, g)` with gap function `U`.
    #[serde(alias = "a33")]
    Monotone,
    /// `xᵀf + (p̄ − 1)/2·|g|² ≤ K3(1 + |x|² + |y|²)`.
    #[serde(alias = "a34")]
    Khasminskii,
    /// Khasminskii bound including the compensated jump term.
    #[serde(alias = "a42")]
    JumpKhasminskii,
    /// Monotonicity including the jump term, with gap function `U`.
    #[serde(alias = "a46")]
    JumpMonotone,
}

impl AssumptionKind {
    pub const ALL: [AssumptionKind; 6] = [
        AssumptionKind::Holder,
        AssumptionKind::LocalLipschitz,
        AssumptionKind::Monotone,
        AssumptionKind::Khasminskii,
        AssumptionKind::JumpKhasminskii,
        AssumptionKind::JumpMonotone,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AssumptionKind::Holder => "holder",
            AssumptionKind::LocalLipschitz => "local-lipschitz",
            AssumptionKind::Monotone => "monotone",
            AssumptionKind::Khasminskii => "khasminskii",
            AssumptionKind::JumpKhasminskii => "jump-khasminskii",
            AssumptionKind::JumpMonotone => "jump-monotone",
        }
    }

    /// Parses a label or its short alias (`a31`, ..., `a46`).
    pub fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase())).ok()
    }

    fn pairs(self) -> bool {
        matches!(
            self,
            AssumptionKind::LocalLipschitz | AssumptionKind::Monotone | AssumptionKind::JumpMonotone
        )
    }
}

/// One sampled tuple. For [`AssumptionKind::Holder`] only `s`, `t` are used;
/// for the Khasminskii kinds only `x`, `y`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub xbar: Vec<f64>,
    pub ybar: Vec<f64>,
    pub s: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub kind: AssumptionKind,
    pub model: String,
    pub radius: f64,
    /// Tuples evaluated, probes included.
    pub evaluated: usize,
    pub violations: usize,
    pub worst_margin: f64,
    pub witness: SamplePoint,
    pub seed: u64,
}

enum Resolved {
    Holder { gamma: f64, kbar: f64 },
    LocalLipschitz { k1: f64, beta: f64 },
    Monotone { k2: f64, coef: f64, u: Option<GapFn> },
    Khasminskii { k3: f64, coef: f64 },
    JumpKhasminskii { k5: f64, k6: f64, sigma: f64, lambda: f64 },
    JumpMonotone { k7: f64, lambda: f64, u: Option<GapFn> },
}

fn need(v: Option<f64>, name: &'static str) -> Result<f64> {
    v.ok_or(Error::MissingConstant(name))
}

fn resolve(kind: AssumptionKind, model: &ModelSpec, c: &AssumptionConstants) -> Result<Resolved> {
    Ok(match kind {
        AssumptionKind::Holder => {
            let (gamma, kbar) = model.initial_segment().holder_data();
            Resolved::Holder { gamma, kbar }
        }
        AssumptionKind::LocalLipschitz => Resolved::LocalLipschitz {
            k1: need(c.k1, "k1")?,
            beta: need(c.beta, "beta")?,
        },
        AssumptionKind::Monotone => Resolved::Monotone {
            k2: need(c.k2, "k2")?,
            coef: (need(c.eta_bar, "eta_bar")? - 1.0) / 2.0,
            u: c.u.clone(),
        },
        AssumptionKind::Khasminskii => Resolved::Khasminskii {
            k3: need(c.k3, "k3")?,
            coef: (need(c.p_bar, "p_bar")? - 1.0) / 2.0,
        },
        AssumptionKind::JumpKhasminskii => {
            let k6 = need(c.k6, "k6")?;
            let sigma = if k6 > 0.0 { need(c.sigma, "sigma")? } else { c.sigma.unwrap_or(2.0) };
            Resolved::JumpKhasminskii {
                k5: need(c.k5, "k5")?,
                k6,
                sigma,
                lambda: model.jump_intensity(),
            }
        }
        AssumptionKind::JumpMonotone => Resolved::JumpMonotone {
            k7: need(c.k7, "k7")?,
            lambda: model.jump_intensity(),
            u: c.u_jump.clone(),
        },
    })
}

struct Workspace {
    a: Coefficients,
    b: Coefficients,
    xi_s: Vec<f64>,
    xi_t: Vec<f64>,
}

impl Workspace {
    fn new(model: &ModelSpec) -> Self {
        Workspace {
            a: Coefficients::zeros(model.dim(), model.brownian_dim()),
            b: Coefficients::zeros(model.dim(), model.brownian_dim()),
            xi_s: vec![0.0; model.dim()],
            xi_t: vec![0.0; model.dim()],
        }
    }
}

fn diff_sq(a: &[f64], b: &[f64]) -> f64 {
    linalg::dist_sq(a, b)
}

fn diff_dot(dx: &[f64], a: &[f64], b: &[f64]) -> f64 {
    dx.iter().zip(a.iter().zip(b)).map(|(d, (p, q))| d * (p - q)).sum()
}

fn margin_with(r: &Resolved, model: &ModelSpec, pt: &SamplePoint, ws: &mut Workspace) -> Result<f64> {
    let (x, y, xb, yb) = (&pt.x[..], &pt.y[..], &pt.xbar[..], &pt.ybar[..]);
    let m = match r {
        Resolved::Holder { gamma, kbar } => {
            model.initial_value_into(pt.s, &mut ws.xi_s)?;
            model.initial_value_into(pt.t, &mut ws.xi_t)?;
            let lhs = linalg::dist(&ws.xi_t, &ws.xi_s);
            // equality is attained by power-type segments; allow for the
            // rounding of the two evaluations
            let slack = 4.0 * f64::EPSILON * (linalg::norm(&ws.xi_t) + linalg::norm(&ws.xi_s));
            kbar * (pt.t - pt.s).abs().powf(*gamma) - lhs + slack
        }
        Resolved::LocalLipschitz { k1, beta } => {
            model.eval_into(x, y, &mut ws.a);
            model.eval_into(xb, yb, &mut ws.b);
            let spread = linalg::dist(x, xb) + linalg::dist(y, yb);
            let poly = 1.0
                + linalg::norm(x).powf(*beta)
                + linalg::norm(y).powf(*beta)
                + linalg::norm(xb).powf(*beta)
                + linalg::norm(yb).powf(*beta);
            let df = linalg::dist(&ws.a.drift, &ws.b.drift);
            let dg = linalg::dist(&ws.a.diffusion, &ws.b.diffusion);
            let dh = linalg::dist(&ws.a.jump, &ws.b.jump);
            (k1 * poly * spread - df.max(dg)).min(k1 * spread - dh)
        }
        Resolved::Monotone { k2, coef, u } => {
            model.eval_into(x, y, &mut ws.a);
            model.eval_into(xb, yb, &mut ws.b);
            let dx = linalg::sub(x, xb);
            let lhs = diff_dot(&dx, &ws.a.drift, &ws.b.drift) + coef * diff_sq(&ws.a.diffusion, &ws.b.diffusion);
            let gap = u.as_ref().map_or(0.0, |u| u(y, yb) - u(x, xb));
            k2 * (diff_sq(x, xb) + diff_sq(y, yb)) + gap - lhs
        }
        Resolved::Khasminskii { k3, coef } => {
            model.eval_into(x, y, &mut ws.a);
            let lhs = linalg::dot(x, &ws.a.drift) + coef * linalg::norm_sq(&ws.a.diffusion);
            k3 * (1.0 + linalg::norm_sq(x) + linalg::norm_sq(y)) - lhs
        }
        Resolved::JumpKhasminskii { k5, k6, sigma, lambda } => {
            model.eval_into(x, y, &mut ws.a);
            let lhs = 2.0 * linalg::dot(x, &ws.a.drift)
                + linalg::norm_sq(&ws.a.diffusion)
                + lambda * (2.0 * linalg::dot(x, &ws.a.jump) + linalg::norm_sq(&ws.a.jump));
            let growth = if *k6 > 0.0 {
                k6 * (linalg::norm(y).powf(*sigma) - linalg::norm(x).powf(*sigma))
            } else {
                0.0
            };
            k5 * (1.0 + linalg::norm_sq(x) + linalg::norm_sq(y)) + growth - lhs
        }
        Resolved::JumpMonotone { k7, lambda, u } => {
            model.eval_into(x, y, &mut ws.a);
            model.eval_into(xb, yb, &mut ws.b);
            let dx = linalg::sub(x, xb);
            let lhs = 2.0 * diff_dot(&dx, &ws.a.drift, &ws.b.drift)
                + diff_sq(&ws.a.diffusion, &ws.b.diffusion)
                + 2.0 * lambda * diff_dot(&dx, &ws.a.jump, &ws.b.jump)
                + lambda * diff_sq(&ws.a.jump, &ws.b.jump);
            let gap = u.as_ref().map_or(0.0, |u| u(y, yb) - u(x, xb));
            k7 * (diff_sq(x, xb) + diff_sq(y, yb)) + gap - lhs
        }
    };
    if m.is_nan() {
        return Err(Error::NonFinite(format!("margin is NaN at {pt:?}")));
    }
    Ok(m)
}

/// `RHS − LHS` of the inequality `kind` at one tuple. Negative means violated.
pub fn assumption_margin(
    kind: AssumptionKind,
    model: &ModelSpec,
    constants: &AssumptionConstants,
    point: &SamplePoint,
) -> Result<f64> {
    let r = resolve(kind, model, constants)?;
    let n = model.dim();
    if kind != AssumptionKind::Holder {
        let used = if kind.pairs() {
            [&point.x, &point.y, &point.xbar, &point.ybar].to_vec()
        } else {
            [&point.x, &point.y].to_vec()
        };
        if used.iter().any(|v| v.len() != n) {
            return Err(Error::InvalidParam(format!("sample point arguments must have length {n}")));
        }
    }
    margin_with(&r, model, point, &mut Workspace::new(model))
}

fn probe_set(n: usize, radius: f64) -> Vec<Vec<f64>> {
    let mut set = vec![vec![0.0; n]];
    for i in 0..n {
        for s in [radius, -radius, 0.5 * radius, -0.5 * radius] {
            let mut v = vec![0.0; n];
            v[i] = s;
            set.push(v);
        }
    }
    if n > 1 {
        let c = radius / (n as f64).sqrt();
        set.push(vec![c; n]);
        set.push(vec![-c; n]);
    }
    set
}

fn probes(kind: AssumptionKind, n: usize, radius: f64, tau: f64) -> Vec<SamplePoint> {
    let empty = SamplePoint {
        x: vec![],
        y: vec![],
        xbar: vec![],
        ybar: vec![],
        s: 0.0,
        t: 0.0,
    };
    if kind == AssumptionKind::Holder {
        return [(-tau, 0.0), (-tau, -0.5 * tau), (0.0, 0.0), (-0.5 * tau, 0.0)]
            .into_iter()
            .map(|(s, t)| SamplePoint { s, t, ..empty.clone() })
            .collect();
    }
    let set = probe_set(n, radius);
    let k = set.len();
    let mut out = Vec::new();
    if kind.pairs() {
        'outer: for a in 0..k {
            for b in 0..k {
                for c in 0..k {
                    for d in 0..k {
                        if out.len() == MAX_PROBES {
                            break 'outer;
                        }
                        out.push(SamplePoint {
                            x: set[a].clone(),
                            y: set[b].clone(),
                            xbar: set[c].clone(),
                            ybar: set[d].clone(),
                            ..empty.clone()
                        });
                    }
                }
            }
        }
    } else {
        for a in 0..k {
            for b in 0..k {
                out.push(SamplePoint {
                    x: set[a].clone(),
                    y: set[b].clone(),
                    xbar: vec![0.0; n],
                    ybar: vec![0.0; n],
                    ..empty.clone()
                });
            }
        }
        out.truncate(MAX_PROBES);
    }
    out
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn draw<R: Rng>(rng: &mut R, mode: usize, n: usize, radius: f64, rmin: f64) -> Vec<f64> {
    if mode == 0 {
        sample_ball(rng, n, radius, false)
    } else {
        let r = log_uniform(rng, rmin, radius);
        sample_ball(rng, n, r, true)
    }
}

fn nearby<R: Rng>(rng: &mut R, base: &[f64], r: f64, radius: f64) -> Vec<f64> {
    let d = sample_ball(rng, base.len(), r, true);
    let mut v: Vec<f64> = base.iter().zip(&d).map(|(a, b)| a + b).collect();
    let norm = linalg::norm(&v);
    if norm > radius {
        v.iter_mut().for_each(|c| *c *= radius / norm);
    }
    v
}

fn sample<R: Rng>(rng: &mut R, kind: AssumptionKind, index: usize, n: usize, radius: f64, tau: f64) -> SamplePoint {
    let mode = index % 3;
    if kind == AssumptionKind::Holder {
        let s = -tau * rng.random::<f64>();
        let t = if mode == 2 {
            let gap = log_uniform(rng, 1e-9 * tau, tau);
            if rng.random::<bool>() {
                (s + gap).min(0.0)
            } else {
                (s - gap).max(-tau)
            }
        } else {
            -tau * rng.random::<f64>()
        };
        return SamplePoint {
            x: vec![],
            y: vec![],
            xbar: vec![],
            ybar: vec![],
            s,
            t,
        };
    }
    let rmin = 1e-3f64.min(1e-3 * radius);
    let x = draw(rng, mode.min(1), n, radius, rmin);
    let y = draw(rng, mode.min(1), n, radius, rmin);
    let (xbar, ybar) = if mode == 2 {
        let rx = log_uniform(rng, rmin, radius);
        let ry = (rx * log_uniform(rng, 0.1, 10.0)).clamp(rmin, radius);
        (nearby(rng, &x, rx, radius), nearby(rng, &y, ry, radius))
    } else {
        (draw(rng, mode, n, radius, rmin), draw(rng, mode, n, radius, rmin))
    };
    SamplePoint {
        x,
        y,
        xbar,
        ybar,
        s: 0.0,
        t: 0.0,
    }
}

struct Tally {
    violations: usize,
    worst: f64,
    witness: Option<SamplePoint>,
}

impl Tally {
    fn new() -> Self {
        Tally {
            violations: 0,
            worst: f64::INFINITY,
            witness: None,
        }
    }

    fn record(&mut self, margin: f64, pt: &SamplePoint) {
        if margin < 0.0 {
            self.violations += 1;
        }
        if margin < self.worst || self.witness.is_none() {
            self.worst = margin;
            self.witness = Some(pt.clone());
        }
    }

    /// In-order merge; earlier tallies win ties.
    fn merge(&mut self, other: Tally) {
        self.violations += other.violations;
        if let Some(w) = other.witness {
            if other.worst < self.worst || self.witness.is_none() {
                self.worst = other.worst;
                self.witness = Some(w);
            }
        }
    }
}

/// Evaluates the probes and `samples` random tuples within `radius`.
pub fn check_assumption(
    kind: AssumptionKind,
    model: &ModelSpec,
    constants: &AssumptionConstants,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<CheckReport> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidParam(format!("radius {radius} must be positive")));
    }
    let resolved = resolve(kind, model, constants)?;
    let n = model.dim();
    let tau = model.delay();

    let probe_pts = probes(kind, n, radius, tau);
    let mut tally = Tally::new();
    let mut ws = Workspace::new(model);
    for pt in &probe_pts {
        let m = margin_with(&resolved, model, pt, &mut ws)?;
        tally.record(m, pt);
    }

    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<Tally> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = keyed_rng(seed, c as u64, Substream::Sampler);
            let mut ws = Workspace::new(model);
            let mut t = Tally::new();
            let start = c * CHUNK;
            for i in start..(start + CHUNK).min(samples) {
                let pt = sample(&mut rng, kind, i, n, radius, tau);
                let m = margin_with(&resolved, model, &pt, &mut ws)?;
                t.record(m, &pt);
            }
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;
    for t in partial {
        tally.merge(t);
    }

    Ok(CheckReport {
        kind,
        model: model.name().to_string(),
        radius,
        evaluated: probe_pts.len() + samples,
        violations: tally.violations,
        worst_margin: tally.worst,
        witness: tally.witness.expect("probes are never empty"),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{superlinear_scalar, superlinear_scalar_default, InitialSegment};

    #[test]
    fn parse_labels_and_aliases() {
        assert_eq!(AssumptionKind::parse("a33"), Some(AssumptionKind::Monotone));
        assert_eq!(AssumptionKind::parse("jump-monotone"), Some(AssumptionKind::JumpMonotone));
        assert_eq!(AssumptionKind::parse("A42"), Some(AssumptionKind::JumpKhasminskii));
        assert_eq!(AssumptionKind::parse("nope"), None);
        for k in AssumptionKind::ALL {
            assert_eq!(AssumptionKind::parse(k.label()), Some(k));
        }
    }

    fn pt(x: f64, y: f64, xb: f64, yb: f64) -> SamplePoint {
        SamplePoint {
            x: vec![x],
            y: vec![y],
            xbar: vec![xb],
            ybar: vec![yb],
            s: 0.0,
            t: 0.0,
        }
    }

    #[test]
    fn margins_by_hand() {
        let (m, c) = superlinear_scalar_default();
        // x = 1, y = 0 against the origin: f = −3, g = 1/2, h = 1
        let p = pt(1.0, 0.0, 0.0, 0.0);
        // local Lipschitz: min(10·2·1 − 3, 10·1 − 1)
        assert_eq!(assumption_margin(AssumptionKind::LocalLipschitz, &m, &c, &p).unwrap(), 9.0);
        // monotone: 8·1 + (0 − 0.25·1·1) − (−3 + 1·0.25)
        let v = assumption_margin(AssumptionKind::Monotone, &m, &c, &p).unwrap();
        assert!((v - (8.0 - 0.25 + 2.75)).abs() < 1e-12);
        // Khasminskii: 20·2 − (−3 + 12.5·0.25)
        let v = assumption_margin(AssumptionKind::Khasminskii, &m, &c, &p).unwrap();
        assert!((v - (40.0 + 3.0 - 3.125)).abs() < 1e-12);
        // jump Khasminskii: 5·2 − (−6 + 0.25 + 0.2·(2 + 1))
        let v = assumption_margin(AssumptionKind::JumpKhasminskii, &m, &c, &p).unwrap();
        assert!((v - (10.0 + 6.0 - 0.25 - 0.6)).abs() < 1e-12);
    }

    #[test]
    fn missing_constants() {
        let (m, _) = superlinear_scalar_default();
        let empty = AssumptionConstants::default();
        let p = pt(1.0, 0.0, 0.0, 0.0);
        assert_eq!(
            assumption_margin(AssumptionKind::LocalLipschitz, &m, &empty, &p),
            Err(Error::MissingConstant("k1"))
        );
        assert_eq!(
            check_assumption(AssumptionKind::Khasminskii, &m, &empty, 1.0, 10, 0).unwrap_err(),
            Error::MissingConstant("k3")
        );
    }

    #[test]
    fn witnesses_reevaluate_exactly() {
        let (m, mut c) = superlinear_scalar_default();
        c.k3 = Some(1.0);
        let r = check_assumption(AssumptionKind::Khasminskii, &m, &c, 10.0, 5000, 1).unwrap();
        assert!(r.violations > 0);
        let again = assumption_margin(AssumptionKind::Khasminskii, &m, &c, &r.witness).unwrap();
        assert_eq!(again, r.worst_margin);
        assert!(again < 0.0);
    }

    #[test]
    fn holder_segments() {
        let seg = InitialSegment::holder(vec![1.0], 0.5, 0.5, vec![1.0]).unwrap();
        let (m, c) = superlinear_scalar(0.25, seg.clone()).unwrap();
        let r = check_assumption(AssumptionKind::Holder, &m, &c, 1.0, 20_000, 2).unwrap();
        assert_eq!(r.violations, 0);
        // a segment that is rougher than declared
        let rough = InitialSegment::Custom {
            dim: 1,
            gamma: 1.0,
            kbar: 0.5,
            f: std::sync::Arc::new(|t: f64, o: &mut [f64]| o[0] = (-t).sqrt()),
        };
        let (m, c) = superlinear_scalar(0.25, rough).unwrap();
        let r = check_assumption(AssumptionKind::Holder, &m, &c, 1.0, 20_000, 2).unwrap();
        assert!(r.violations > 0);
    }

    #[test]
    fn thread_count_does_not_change_reports() {
        let (m, c) = superlinear_scalar_default();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| check_assumption(AssumptionKind::Monotone, &m, &c, 10.0, 20_000, 5).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
