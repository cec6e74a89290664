//! JSON-configured batch experiments.
//!
//! A config is one flat JSON object naming an experiment, a built-in model
//! with parameters, truncation settings and Monte Carlo sizes. Omitted fields
//! take defaults; the fully resolved config is embedded in `summary.json`.
//! Each experiment writes `results.csv` and `summary.json` to the output
//! directory and carries a pass/fail predicate that decides the exit code.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{
    self, check_assumption, estimate_errors, l2_rate_exponent, lp_rate_condition, lp_rate_exponent,
    moment_estimate, AssumptionKind, MomentSetup, RateReport, StrongErrorSetup,
};
use crate::error::Error;
use crate::model::{self, Builtin};
use crate::noise::grid_ratio;
use crate::scheme::{SchemeKind, StepSize};
use crate::truncation::{Phi, Regime, SampledEnvelope, TruncationConfig};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Converge,
    Moments,
    DivergeDemo,
    Check,
    Ks5Probe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PhiConfig {
    Power { c: f64, k: f64 },
    Auto {
        #[serde(default = "default_shells")]
        shells: usize,
    },
}

fn default_shells() -> usize {
    12
}
fn default_model() -> String {
    "gjd".into()
}
fn default_epsilon() -> f64 {
    0.125
}
fn default_scheme() -> SchemeKind {
    SchemeKind::TruncatedFg
}
fn default_horizon() -> f64 {
    1.0
}
fn default_p() -> f64 {
    2.0
}
fn default_paths() -> usize {
    2000
}
fn default_radius() -> f64 {
    10.0
}
fn default_samples() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<PhiConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k0: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[serde(default = "default_scheme")]
    pub scheme: SchemeKind,
    /// Step sizes, coarsest first. Alternatives: `levels` (`Δ = 2^-l`) or
    /// `M` (`Δ = τ/M`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<i32>>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_delta: Option<f64>,
    #[serde(rename = "T", default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assumption: Option<AssumptionKind>,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub drop_u: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
}

/// Invalid config, located in the source text when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "config error at line {l}, column {c}: {}", self.message),
            (Some(l), None) => write!(f, "config error at line {l}: {}", self.message),
            _ => write!(f, "config error: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Failure of a run. Numeric failures still leave artifacts behind.
#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Io(std::io::Error),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => e.fmt(f),
            RunError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

/// Locates the first occurrence of `"key"` in `src`.
fn locate(src: &str, key: &str) -> Option<(usize, usize)> {
    let needle = format!("\"{key}\"");
    src.lines()
        .enumerate()
        .find_map(|(i, line)| line.find(&needle).map(|c| (i + 1, c + 1)))
}

fn config_err(src: &str, key: &str, message: impl Into<String>) -> ConfigError {
    let loc = locate(src, key);
    ConfigError {
        line: loc.map(|l| l.0),
        column: loc.map(|l| l.1),
        message: format!("`{key}`: {}", message.into()),
    }
}

pub fn parse_config(src: &str) -> Result<ExperimentConfig, ConfigError> {
    serde_json::from_str(src).map_err(|e| ConfigError {
        line: Some(e.line()),
        column: Some(e.column()),
        message: e.to_string(),
    })
}

/// A validated config with every default filled in, plus the live objects
/// it describes.
pub struct Resolved {
    pub config: ExperimentConfig,
    pub builtin: Builtin,
    pub trunc: Option<TruncationConfig>,
    pub deltas: Vec<f64>,
}

impl fmt::Debug for Resolved {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Resolved")
            .field("config", &self.config)
            .field("deltas", &self.deltas)
            .finish_non_exhaustive()
    }
}

fn default_levels(kind: ExperimentKind) -> Vec<i32> {
    match kind {
        ExperimentKind::Converge => (4..=9).collect(),
        ExperimentKind::Moments => vec![4, 8],
        ExperimentKind::DivergeDemo => vec![4],
        ExperimentKind::Ks5Probe => (4..=8).collect(),
        ExperimentKind::Check => vec![],
    }
}

fn resolve_deltas(cfg: &ExperimentConfig, tau: f64, src: &str) -> Result<Vec<f64>, ConfigError> {
    let given = [cfg.deltas.is_some(), cfg.levels.is_some(), cfg.m.is_some()];
    if given.iter().filter(|g| **g).count() > 1 {
        return Err(config_err(src, "deltas", "give only one of `deltas`, `levels`, `M`"));
    }
    let (key, deltas) = if let Some(d) = &cfg.deltas {
        ("deltas", d.clone())
    } else if let Some(m) = &cfg.m {
        if m.contains(&0) {
            return Err(config_err(src, "M", "entries must be positive"));
        }
        ("M", m.iter().map(|&m| tau / m as f64).collect())
    } else {
        let levels = cfg.levels.clone().unwrap_or_else(|| default_levels(cfg.experiment));
        ("levels", levels.iter().map(|&l| 2f64.powi(-l)).collect())
    };
    if cfg.experiment == ExperimentKind::Check {
        return Ok(deltas);
    }
    if deltas.is_empty() {
        return Err(config_err(src, key, "need at least one step size"));
    }
    for (i, &d) in deltas.iter().enumerate() {
        if !(d > 0.0 && d <= 1.0) {
            return Err(config_err(src, key, format!("step size {d} outside (0, 1]")));
        }
        if i > 0 && !(d < deltas[i - 1]) {
            return Err(config_err(src, key, "step sizes must be strictly decreasing"));
        }
        if i > 0 && cfg.experiment == ExperimentKind::Converge {
            grid_ratio(deltas[i - 1], d, "nesting").map_err(|e| config_err(src, key, e.to_string()))?;
        }
        if let Err(e) = grid_ratio(cfg.horizon, d, "T vs step size") {
            return Err(config_err(src, key, format!("step size {d} does not divide T={}: {e}", cfg.horizon)));
        }
        if let Err(e) = StepSize::from_delta(tau, d, cfg.horizon) {
            return Err(config_err(src, key, format!("step size {d} does not divide τ={tau}: {e}")));
        }
    }
    Ok(deltas)
}

fn regime_for(cfg: &ExperimentConfig, src: &str) -> Result<Regime, ConfigError> {
    let from_scheme = cfg.scheme.regime();
    match (cfg.regime, from_scheme) {
        (Some(r), Some(s)) if r != s => Err(config_err(
            src,
            "regime",
            format!("regime conflicts with scheme `{}`", cfg.scheme.label()),
        )),
        (Some(r), _) => Ok(r),
        (None, Some(s)) => Ok(s),
        (None, None) => Ok(Regime::TruncateFG),
    }
}

/// Validates `cfg` against `src` (used only for locating errors).
pub fn resolve(mut cfg: ExperimentConfig, src: &str) -> Result<Resolved, ConfigError> {
    let builtin = model::builtin(&cfg.model, &cfg.params).map_err(|e| {
        let key = if matches!(&e, Error::InvalidParam(m) if m.contains("unknown model id")) {
            "model"
        } else {
            "params"
        };
        config_err(src, key, e.to_string())
    })?;
    let m = &builtin.model;
    if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) {
        return Err(config_err(src, "T", "must be positive"));
    }
    if !(cfg.p > 0.0 && cfg.p.is_finite()) {
        return Err(config_err(src, "p", "must be positive"));
    }
    if let Some(q) = cfg.q {
        if !(q > 0.0) {
            return Err(config_err(src, "q", "must be positive"));
        }
    }
    if cfg.paths == 0 {
        return Err(config_err(src, "paths", "must be positive"));
    }
    let deltas = resolve_deltas(&cfg, m.delay(), src)?;
    let regime = regime_for(&cfg, src)?;
    cfg.regime = Some(regime);
    if cfg.scheme.regime().is_none() && cfg.experiment == ExperimentKind::DivergeDemo {
        cfg.scheme = match regime {
            Regime::TruncateFG => SchemeKind::TruncatedFg,
            Regime::TruncateFGH => SchemeKind::TruncatedFgh,
        };
    }

    let trunc = if cfg.experiment == ExperimentKind::Check {
        None
    } else {
        let phi_cfg = cfg.phi.clone();
        let phi = match &phi_cfg {
            Some(PhiConfig::Power { c, k }) => Phi::power(*c, *k).map_err(|e| config_err(src, "phi", e.to_string()))?,
            Some(PhiConfig::Auto { shells }) => Phi::Sampled(
                SampledEnvelope::from_model(m, regime, *shells, cfg.seed)
                    .map_err(|e| config_err(src, "phi", e.to_string()))?,
            ),
            None => builtin.default_envelope(regime).clone(),
        };
        if phi_cfg.is_none() {
            if let Phi::Power { c, k } = &phi {
                cfg.phi = Some(PhiConfig::Power { c: *c, k: *k });
            }
        }
        let t = TruncationConfig::new(phi, cfg.k0, cfg.epsilon, regime).map_err(|e| {
            let key = if matches!(e, Error::InvalidParam(ref s) if s.contains("k0")) { "k0" } else { "epsilon" };
            config_err(src, key, e.to_string())
        })?;
        cfg.k0 = Some(t.k0());
        Some(t)
    };

    if cfg.experiment == ExperimentKind::Converge {
        let finest = *deltas.last().unwrap();
        let ref_delta = cfg.ref_delta.unwrap_or(if m.has_exact_solution() {
            finest
        } else {
            finest / analysis::strong::SURROGATE_REFINEMENT
        });
        grid_ratio(finest, ref_delta, "ref_delta").map_err(|e| config_err(src, "ref_delta", e.to_string()))?;
        StepSize::from_delta(m.delay(), ref_delta, cfg.horizon)
            .map_err(|e| config_err(src, "ref_delta", e.to_string()))?;
        cfg.ref_delta = Some(ref_delta);
    }
    if let Some(t) = &trunc {
        if cfg.scheme.regime().is_some() || cfg.experiment == ExperimentKind::DivergeDemo {
            let mut all = deltas.clone();
            all.extend(cfg.ref_delta);
            for d in all {
                t.at(d).map_err(|e| config_err(src, "k0", format!("at Δ={d}: {e}")))?;
            }
        }
    }
    match cfg.experiment {
        ExperimentKind::Check => {
            if cfg.assumption.is_none() {
                return Err(config_err(src, "experiment", "check needs an `assumption`"));
            }
            if !(cfg.radius > 0.0 && cfg.radius.is_finite()) {
                return Err(config_err(src, "radius", "must be positive"));
            }
        }
        ExperimentKind::Ks5Probe => {
            if cfg.c2.is_none() {
                return Err(config_err(src, "experiment", "ks5_probe needs `c2`"));
            }
            if !(cfg.p < 2.0) {
                return Err(config_err(src, "p", "ks5_probe needs p in (0, 2)"));
            }
        }
        ExperimentKind::Moments | ExperimentKind::DivergeDemo => {
            cfg.q = Some(cfg.q.unwrap_or(2.0));
        }
        ExperimentKind::Converge => {}
    }
    Ok(Resolved {
        config: cfg,
        builtin,
        trunc,
        deltas,
    })
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub summary: Value,
    pub csv: String,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_PASS
        } else {
            EXIT_FAIL
        }
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v}")
}

fn theory_exponent(r: &Resolved) -> Option<f64> {
    let cfg = &r.config;
    let gamma = r.builtin.model.holder_exponent();
    match cfg.scheme {
        SchemeKind::TruncatedFg if cfg.p == 2.0 => {
            let c = r.builtin.constants.as_ref()?;
            let beta = c.beta?;
            let q = cfg.q.or(c.p_bar.map(|p| p - 1.0))?;
            l2_rate_exponent(q, beta, cfg.epsilon, gamma).ok()
        }
        SchemeKind::TruncatedFgh if cfg.p < 2.0 => lp_rate_exponent(cfg.p, cfg.epsilon, gamma).ok(),
        _ => None,
    }
}

fn run_converge(r: &Resolved) -> (bool, Value, String) {
    let cfg = &r.config;
    let m = &r.builtin.model;
    let setup = StrongErrorSetup {
        deltas: r.deltas.clone(),
        ref_delta: cfg.ref_delta,
        horizon: cfg.horizon,
        p: cfg.p,
        paths: cfg.paths,
        seed: cfg.seed,
    };
    let mut csv = String::from("delta,error_p,stderr,paths\n");
    let est = match estimate_errors(m, r.trunc.as_ref(), cfg.scheme, &setup) {
        Ok(e) => e,
        Err(e) => return (false, json!({ "error": e.to_string() }), csv),
    };
    for i in 0..est.deltas.len() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f(est.deltas[i]),
            fmt_f(est.errors[i]),
            fmt_f(est.stderrs[i]),
            est.paths
        ));
    }

    let theory = theory_exponent(r);
    let condition: Option<Vec<_>> = match (cfg.c2, &r.trunc) {
        (Some(c2), Some(t)) if cfg.p < 2.0 => r
            .deltas
            .iter()
            .map(|&d| lp_rate_condition(t.phi(), c2, t.epsilon(), t.k0(), cfg.p, m.holder_exponent(), d).ok())
            .collect(),
        _ => None,
    };
    let report = match RateReport::from_estimates(&est) {
        Ok(rep) => match theory {
            Some(e) => rep.with_theory(e),
            None => rep,
        },
        Err(e) => {
            return (
                false,
                json!({ "error": e.to_string(), "estimates": est }),
                csv,
            )
        }
    };
    let (lo, hi) = match (cfg.slope_min, cfg.slope_max, theory) {
        (None, None, Some(e)) => (Some(e - 0.05), None),
        (None, None, None) if m.has_exact_solution() => (Some(cfg.p / 2.0 - 0.3), Some(cfg.p / 2.0 + 0.3)),
        (None, None, None) => (Some(0.0), None),
        (lo, hi, _) => (lo, hi),
    };
    let mut passed = lo.is_none_or(|lo| report.slope >= lo) && hi.is_none_or(|hi| report.slope <= hi);
    if let Some(c) = &condition {
        passed &= c.iter().all(|c| c.holds);
    }
    let value = json!({
        "report": report,
        "overflow_paths": est.overflow_paths,
        "slope_min": lo,
        "slope_max": hi,
        "rate_condition": condition,
    });
    (passed, value, csv)
}

fn moment_setup(cfg: &ExperimentConfig, delta: f64) -> MomentSetup {
    MomentSetup {
        delta,
        horizon: cfg.horizon,
        q: cfg.q.unwrap_or(2.0),
        paths: cfg.paths,
        seed: cfg.seed,
    }
}

fn run_moments(r: &Resolved) -> (bool, Value, String) {
    let cfg = &r.config;
    let mut csv = String::from("delta,moment,stderr,paths,overflow_fraction\n");
    let mut reports = Vec::new();
    for &d in &r.deltas {
        match moment_estimate(&r.builtin.model, r.trunc.as_ref(), cfg.scheme, &moment_setup(cfg, d)) {
            Ok(rep) => {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    fmt_f(d),
                    fmt_f(rep.estimate),
                    fmt_f(rep.stderr),
                    rep.paths,
                    fmt_f(rep.overflow_fraction)
                ));
                reports.push(rep);
            }
            Err(e) => return (false, json!({ "error": e.to_string(), "reports": reports }), csv),
        }
    }
    let finite = reports.iter().all(|r| r.estimate.is_finite() && r.overflow_fraction == 0.0);
    let max = reports.iter().map(|r| r.estimate).fold(f64::NEG_INFINITY, f64::max);
    let min = reports.iter().map(|r| r.estimate).fold(f64::INFINITY, f64::min);
    let ratio = max / min;
    let passed = finite && ratio <= 3.0;
    (passed, json!({ "reports": reports, "max_over_min": ratio, "ratio_bound": 3.0 }), csv)
}

fn run_diverge(r: &Resolved) -> (bool, Value, String) {
    let cfg = &r.config;
    let mut csv = String::from("scheme,delta,overflow_fraction,moment,paths\n");
    let mut reports = Vec::new();
    let mut passed = true;
    for &d in &r.deltas {
        for kind in [SchemeKind::PlainEm, cfg.scheme] {
            match moment_estimate(&r.builtin.model, r.trunc.as_ref(), kind, &moment_setup(cfg, d)) {
                Ok(rep) => {
                    csv.push_str(&format!(
                        "{},{},{},{},{}\n",
                        kind.label(),
                        fmt_f(d),
                        fmt_f(rep.overflow_fraction),
                        fmt_f(rep.estimate),
                        rep.paths
                    ));
                    passed &= match kind {
                        SchemeKind::PlainEm => rep.overflow_fraction > 0.5,
                        _ => rep.overflow_fraction == 0.0 && rep.estimate.is_finite(),
                    };
                    reports.push(rep);
                }
                Err(e) => return (false, json!({ "error": e.to_string(), "reports": reports }), csv),
            }
        }
    }
    (passed, json!({ "reports": reports, "em_overflow_fraction_min": 0.5 }), csv)
}

fn run_check(r: &Resolved) -> Result<(bool, Value, String), ConfigError> {
    let cfg = &r.config;
    let kind = cfg.assumption.expect("validated");
    let mut constants = r.builtin.constants.clone().unwrap_or_default();
    if cfg.drop_u {
        constants.u = None;
        constants.u_jump = None;
    }
    let mut csv = String::from("assumption,radius,evaluated,violations,worst_margin\n");
    match check_assumption(kind, &r.builtin.model, &constants, cfg.radius, cfg.samples, cfg.seed) {
        Ok(rep) => {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                kind.label(),
                fmt_f(cfg.radius),
                rep.evaluated,
                rep.violations,
                fmt_f(rep.worst_margin)
            ));
            Ok((rep.violations == 0, json!({ "report": rep }), csv))
        }
        Err(e @ Error::MissingConstant(_)) => Err(ConfigError {
            line: None,
            column: None,
            message: format!("model `{}`: {e}", cfg.model),
        }),
        Err(e) => Ok((false, json!({ "error": e.to_string() }), csv)),
    }
}

fn run_ks5(r: &Resolved) -> (bool, Value, String) {
    let cfg = &r.config;
    let t = r.trunc.as_ref().expect("validated");
    let c2 = cfg.c2.expect("validated");
    let gamma = r.builtin.model.holder_exponent();
    let mut csv = String::from("delta,alpha,rate_term,level,rhs,holds\n");
    let mut rows = Vec::new();
    for &d in &r.deltas {
        match lp_rate_condition(t.phi(), c2, t.epsilon(), t.k0(), cfg.p, gamma, d) {
            Ok(c) => {
                csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    fmt_f(d),
                    fmt_f(c.alpha),
                    fmt_f(c.rate_term),
                    fmt_f(c.level),
                    fmt_f(c.rhs),
                    c.holds
                ));
                rows.push(c);
            }
            Err(e) => return (false, json!({ "error": e.to_string(), "rows": rows }), csv),
        }
    }
    let passed = rows.iter().all(|c| c.holds);
    (passed, json!({ "rows": rows, "gamma": gamma }), csv)
}

/// Runs a resolved experiment and writes `results.csv` and `summary.json`
/// into `out_dir`.
pub fn run(r: &Resolved, out_dir: &Path) -> Result<Outcome, RunError> {
    let (passed, result, csv) = match r.config.experiment {
        ExperimentKind::Converge => run_converge(r),
        ExperimentKind::Moments => run_moments(r),
        ExperimentKind::DivergeDemo => run_diverge(r),
        ExperimentKind::Check => run_check(r)?,
        ExperimentKind::Ks5Probe => run_ks5(r),
    };
    let summary = json!({
        "experiment": r.config.experiment,
        "model": r.config.model,
        "passed": passed,
        "config": r.config,
        "result": result,
    });
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("results.csv"), &csv)?;
    let mut text = serde_json::to_string_pretty(&summary).expect("summary is serializable");
    text.push('\n');
    fs::write(out_dir.join("summary.json"), text)?;
    Ok(Outcome { passed, summary, csv })
}

/// Parses, validates and runs the config at `path`. Returns the exit code:
/// 0 pass, 1 acceptance or numeric failure, 2 config or i/o error.
pub fn run_file(path: &Path, out_override: Option<&Path>) -> i32 {
    let src = match fs::read_to_string(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("cannot read {}: {e}", path.display());
            return EXIT_CONFIG;
        }
    };
    let resolved = match parse_config(&src).and_then(|c| resolve(c, &src)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return EXIT_CONFIG;
        }
    };
    let out: PathBuf = match (out_override, &resolved.config.output_dir) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(d)) => PathBuf::from(d),
        (None, None) => PathBuf::from("sddej-out"),
    };
    match run(&resolved, &out) {
        Ok(o) => {
            let status = if o.passed { "PASS" } else { "FAIL" };
            println!("{status}: {:?} -> {}", resolved.config.experiment, out.display());
            if let Some(err) = o.summary["result"].get("error") {
                eprintln!("numeric failure: {err}");
            }
            o.exit_code()
        }
        Err(e) => {
            eprintln!("{e}");
            EXIT_CONFIG
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve_src(src: &str) -> Result<Resolved, ConfigError> {
        resolve(parse_config(src)?, src)
    }

    #[test]
    fn defaults_fill_in() {
        let r = resolve_src(r#"{"experiment": "converge"}"#).unwrap();
        assert_eq!(r.config.model, "gjd");
        assert_eq!(r.deltas.len(), 6);
        assert_eq!(r.config.ref_delta, Some(2f64.powi(-9)));
        assert_eq!(r.config.regime, Some(Regime::TruncateFG));
        assert!(r.config.k0.is_some());
    }

    #[test]
    fn unknown_field_reports_a_line() {
        let src = "{\n  \"experiment\": \"converge\",\n  \"pathz\": 10\n}";
        let e = resolve_src(src).unwrap_err();
        assert_eq!(e.line, Some(3));
    }

    #[test]
    fn step_not_dividing_horizon_is_rejected_with_location() {
        let src = "{\n  \"experiment\": \"converge\",\n  \"T\": 1.0,\n  \"deltas\": [0.3, 0.15, 0.075]\n}";
        let e = resolve_src(src).unwrap_err();
        assert_eq!(e.line, Some(4));
        assert!(e.message.contains("deltas"));
    }

    #[test]
    fn unknown_model_and_param() {
        let e = resolve_src("{\"experiment\": \"moments\", \"model\": \"nope\"}").unwrap_err();
        assert!(e.message.contains("model"));
        let e = resolve_src("{\"experiment\": \"moments\", \"params\": {\"zeta\": 1}}").unwrap_err();
        assert!(e.message.contains("zeta"));
    }

    #[test]
    fn conflicting_regime() {
        let e = resolve_src(r#"{"experiment": "converge", "scheme": "tem-fg", "regime": "fgh"}"#).unwrap_err();
        assert!(e.message.contains("regime"));
    }

    #[test]
    fn check_requires_assumption() {
        assert!(resolve_src(r#"{"experiment": "check", "model": "section5"}"#).is_err());
        let r = resolve_src(r#"{"experiment": "check", "model": "section5", "assumption": "a33"}"#).unwrap();
        assert_eq!(r.config.assumption, Some(AssumptionKind::Monotone));
    }

    #[test]
    fn delay_steps_alternative() {
        let r = resolve_src(r#"{"experiment": "moments", "model": "section5", "params": {"tau": 0.25}, "M": [4, 8]}"#)
            .unwrap();
        assert_eq!(r.deltas, vec![1.0 / 16.0, 1.0 / 32.0]);
    }
}
