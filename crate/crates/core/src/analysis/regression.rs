//! Ordinary least squares on `(log₂ Δ, log₂ error)`.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% half-width of the slope from the residual variance, `t_{0.975, n−2}`.
    pub slope_ci: f64,
}

/// Fits `log₂ err = intercept + slope·log₂ Δ` with equal weights.
pub fn fit_loglog(deltas: &[f64], errors: &[f64]) -> Result<LogLogFit> {
    if deltas.len() != errors.len() {
        return Err(Error::InvalidParam(format!(
            "{} step sizes but {} errors",
            deltas.len(),
            errors.len()
        )));
    }
    let n = deltas.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("slope fit needs at least 3 levels, got {n}")));
    }
    if let Some(d) = deltas.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(Error::Domain(format!("step size {d} must be positive and finite")));
    }
    if let Some(e) = errors.iter().find(|e| !e.is_finite()) {
        return Err(Error::NonFinite(format!("error estimate {e}")));
    }
    if let Some(i) = errors.iter().position(|e| *e <= 0.0) {
        return Err(Error::InsufficientData(format!(
            "error estimate at Δ={} is {}; log–log fit is degenerate",
            deltas[i], errors[i]
        )));
    }
    let xs: Vec<f64> = deltas.iter().map(|d| d.log2()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.log2()).collect();
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all step sizes are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let df = nf - 2.0;
    let se = (ssr / df / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::InvalidParam(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(LogLogFit {
        slope,
        intercept,
        slope_ci: t * se,
    })
}
