//! Predicted convergence exponents and the step-size condition under which
//! the `L^p` rate for `p ∈ (0, 2)` holds.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::truncation::Phi;

fn check_epsilon_gamma(epsilon: f64, gamma: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= 0.25) {
        return Err(Error::Domain(format!("ε={epsilon} outside (0, 1/4]")));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Domain(format!("γ={gamma} outside (0, 1]")));
    }
    Ok(())
}

/// Exponent of the squared `L²` error bound under polynomial local Lipschitz
/// growth of degree `β`, `q`-th moment bounds and a `γ`-Hölder initial segment:
///
/// `min(ε(q − 2β − 2)/(1 + β), 1 − 2ε, (q − 2β)/q, 2γ)`.
pub fn l2_rate_exponent(q: f64, beta: f64, epsilon: f64, gamma: f64) -> Result<f64> {
    check_epsilon_gamma(epsilon, gamma)?;
    if !(beta >= 0.0) || !(q > 0.0) {
        return Err(Error::Domain(format!("need q > 0 and β ≥ 0, got q={q}, β={beta}")));
    }
    let pieces = [
        epsilon * (q - 2.0 * beta - 2.0) / (1.0 + beta),
        1.0 - 2.0 * epsilon,
        (q - 2.0 * beta) / q,
        2.0 * gamma,
    ];
    if let Some(v) = pieces.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!("nonpositive exponent piece {v} (q={q}, β={beta}, ε={epsilon})")));
    }
    Ok(pieces.iter().copied().fold(f64::INFINITY, f64::min))
}

/// `p·min(1/4 − ε, γ)`, the exponent of the `L^p` error for `p ∈ (0, 2)`.
pub fn lp_rate_exponent(p: f64, epsilon: f64, gamma: f64) -> Result<f64> {
    if !(p > 0.0 && p < 2.0) {
        return Err(Error::Domain(format!("p={p} outside (0, 2)")));
    }
    check_epsilon_gamma(epsilon, gamma)?;
    Ok(p * (0.25 - epsilon).min(gamma))
}

/// Both sides of `α(Δ) ≥ φ(c₂·δ^{−1/(2−p)})` with
/// `δ = max(α(Δ)^p Δ^{p/4}, Δ^{pγ})` and `α(Δ) = K0·Δ^{−ε}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateCondition {
    pub delta: f64,
    pub alpha: f64,
    /// `max(α^p Δ^{p/4}, Δ^{pγ})`.
    pub rate_term: f64,
    /// Argument of `φ` on the right-hand side.
    pub level: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub fn lp_rate_condition(phi: &Phi, c2: f64, epsilon: f64, k0: f64, p: f64, gamma: f64, delta: f64) -> Result<RateCondition> {
    if !(p > 0.0 && p < 2.0) {
        return Err(Error::Domain(format!("p={p} outside (0, 2)")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("Δ={delta} outside (0, 1)")));
    }
    if !(c2 > 0.0 && c2.is_finite()) || !(k0 > 0.0 && k0.is_finite()) {
        return Err(Error::Domain(format!("need c2 > 0 and K0 > 0, got c2={c2}, K0={k0}")));
    }
    check_epsilon_gamma(epsilon, gamma)?;
    let alpha = k0 * delta.powf(-epsilon);
    let rate_term = (alpha.powf(p) * delta.powf(p / 4.0)).max(delta.powf(p * gamma));
    let level = c2 * rate_term.powf(-1.0 / (2.0 - p));
    let rhs = phi.eval(level);
    Ok(RateCondition {
        delta,
        alpha,
        rate_term,
        level,
        rhs,
        holds: alpha >= rhs,
    })
}

pub fn lp_rate_condition_holds(phi: &Phi, c2: f64, epsilon: f64, k0: f64, p: f64, gamma: f64, delta: f64) -> Result<bool> {
    lp_rate_condition(phi, c2, epsilon, k0, p, gamma, delta).map(|c| c.holds)
}
