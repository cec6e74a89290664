//! Monte Carlo estimators built on the schemes: strong errors and their
//! log–log rates, moment bounds, the interpolation gap, theoretical
//! exponents, and sampled falsification of the structural conditions.
//!
//! Every Monte Carlo routine treats path `i` as an independent task keyed by
//! `NoiseKey { seed, stream: i }`. Per-path results are collected in path
//! order and reduced with pairwise summation, so outputs are bit-identical for
//! any rayon pool size.

pub mod checker;
pub mod moments;
pub mod regression;
pub mod strong;
pub mod theory;

pub use checker::{assumption_margin, check_assumption, AssumptionKind, CheckReport, SamplePoint};
pub use moments::{interpolation_gap, moment_estimate, GapEstimate, MomentReport, MomentSetup};
pub use regression::{fit_loglog, LogLogFit};
pub use strong::{estimate_errors, strong_error, ErrorEstimates, RateReport, Reference, StrongErrorSetup};
pub use theory::{
    l2_rate_exponent, lp_rate_condition, lp_rate_condition_holds, lp_rate_exponent, RateCondition,
};

use crate::linalg::pairwise_sum;

/// Sample mean and standard error of the mean (`s/√n`, `n − 1` in `s`).
/// Non-finite samples make both entries non-finite.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 || !mean.is_finite() {
        return (mean, if mean.is_finite() { 0.0 } else { mean });
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
