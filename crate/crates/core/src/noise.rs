//! Coupled Brownian and Poisson increments on a fine base grid.
//!
//! A bundle is a pure function of `(seed, stream)`. Brownian and Poisson
//! increments come from disjoint ChaCha8 substreams, so they are independent
//! and every path of a Monte Carlo run can be generated on any worker without
//! shared state. Coarser grids are obtained by exact aggregation, which lets
//! several step sizes be driven by the same realized noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;

/// Reproducibility key: `seed` names the experiment, `stream` the path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseKey {
    pub seed: u64,
    pub stream: u64,
}

impl NoiseKey {
    pub fn new(seed: u64, stream: u64) -> Self {
        NoiseKey { seed, stream }
    }
}

/// Disjoint RNG substreams derived from one key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Substream {
    Brownian = 1,
    Poisson = 2,
    Sampler = 3,
}

/// Counter-based generator keyed by `(seed, substream)` with the ChaCha
/// stream id set to `stream`.
pub fn keyed_rng(seed: u64, stream: u64, substream: Substream) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(substream as u64).to_le_bytes());
    key[16..24].copy_from_slice(b"sddej.v1");
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Number of `fine` cells in one `coarse` cell; errors unless integral to
/// within 1e-9 relative.
pub fn grid_ratio(coarse: f64, fine: f64, what: &str) -> Result<usize> {
    if !(coarse > 0.0 && fine > 0.0) || !coarse.is_finite() || !fine.is_finite() {
        return Err(Error::Grid(format!("{what}: spacings must be positive, got {coarse} / {fine}")));
    }
    let r = coarse / fine;
    let n = r.round();
    if n < 1.0 || (r - n).abs() > 1e-9 * n {
        return Err(Error::Grid(format!(
            "{what}: {coarse} is not an integer multiple of {fine} (ratio {r})"
        )));
    }
    Ok(n as usize)
}

/// Brownian and Poisson increments on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Increments {
    pub dt: f64,
    pub brownian_dim: usize,
    /// `steps × brownian_dim`, row-major.
    pub db: Vec<f64>,
    pub dn: Vec<u32>,
}

impl Increments {
    pub fn steps(&self) -> usize {
        self.dn.len()
    }

    #[inline]
    pub fn db_at(&self, k: usize) -> &[f64] {
        &self.db[k * self.brownian_dim..(k + 1) * self.brownian_dim]
    }

    /// Re-aggregates by an integer `factor` of cells.
    pub fn coarsen(&self, factor: usize) -> Result<Increments> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(Error::Grid(format!(
                "cannot group {} cells in blocks of {factor}",
                self.steps()
            )));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let m = self.brownian_dim;
        let coarse_steps = self.steps() / factor;
        let mut db = Vec::with_capacity(coarse_steps * m);
        let mut dn = Vec::with_capacity(coarse_steps);
        for k in 0..coarse_steps {
            let start = k * factor;
            for j in 0..m {
                db.push(linalg::pairwise_sum_strided(&self.db, start * m + j, m, factor));
            }
            dn.push(self.dn[start..start + factor].iter().sum());
        }
        Ok(Increments {
            dt: self.dt * factor as f64,
            brownian_dim: m,
            db,
            dn,
        })
    }
}

/// The realized driving noise of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBundle {
    key: NoiseKey,
    horizon: f64,
    lambda: f64,
    fine: Increments,
}

impl NoiseBundle {
    pub fn generate(key: NoiseKey, horizon: f64, base_dt: f64, brownian_dim: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParam(format!("lambda={lambda} must be > 0")));
        }
        if brownian_dim == 0 {
            return Err(Error::InvalidParam("brownian_dim must be >= 1".into()));
        }
        let steps = grid_ratio(horizon, base_dt, "horizon vs base_dt")?;
        let sd = base_dt.sqrt();
        let mut rng_b = keyed_rng(key.seed, key.stream, Substream::Brownian);
        let db: Vec<f64> = (0..steps * brownian_dim)
            .map(|_| sd * rng_b.sample::<f64, _>(StandardNormal))
            .collect();
        let poisson = Poisson::new(lambda * base_dt)
            .map_err(|e| Error::InvalidParam(format!("poisson rate λ·Δ={}: {e}", lambda * base_dt)))?;
        let mut rng_n = keyed_rng(key.seed, key.stream, Substream::Poisson);
        let dn: Vec<u32> = (0..steps).map(|_| poisson.sample(&mut rng_n) as u32).collect();
        Ok(NoiseBundle {
            key,
            horizon,
            lambda,
            fine: Increments {
                dt: base_dt,
                brownian_dim,
                db,
                dn,
            },
        })
    }

    /// Wraps externally supplied increments (tests, replay).
    pub fn from_increments(key: NoiseKey, lambda: f64, fine: Increments) -> Result<Self> {
        if fine.db.len() != fine.dn.len() * fine.brownian_dim {
            return Err(Error::InvalidParam("db and dn lengths disagree".into()));
        }
        Ok(NoiseBundle {
            key,
            horizon: fine.dt * fine.steps() as f64,
            lambda,
            fine,
        })
    }

    pub fn key(&self) -> NoiseKey {
        self.key
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn base_dt(&self) -> f64 {
        self.fine.dt
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn brownian_dim(&self) -> usize {
        self.fine.brownian_dim
    }
    pub fn steps(&self) -> usize {
        self.fine.steps()
    }
    pub fn fine(&self) -> &Increments {
        &self.fine
    }
    pub fn db(&self) -> &[f64] {
        &self.fine.db
    }
    pub fn dn(&self) -> &[u32] {
        &self.fine.dn
    }

    /// Increments on the grid of spacing `coarse_dt`; each coarse increment is
    /// the pairwise sum (Brownian) or exact integer sum (Poisson) of its fine
    /// cells.
    pub fn aggregate(&self, coarse_dt: f64) -> Result<Increments> {
        let factor = grid_ratio(coarse_dt, self.fine.dt, "coarse_dt vs base_dt")?;
        if !self.steps().is_multiple_of(factor) {
            return Err(Error::Grid(format!(
                "coarse_dt {coarse_dt} does not divide the horizon {}",
                self.horizon
            )));
        }
        self.fine.coarsen(factor)
    }

    /// `B(t_to) − B(t_from)` in fine-cell indices.
    pub fn brownian_increment(&self, from: usize, to: usize) -> Vec<f64> {
        let m = self.fine.brownian_dim;
        (0..m)
            .map(|j| linalg::pairwise_sum_strided(&self.fine.db, from * m + j, m, to - from))
            .collect()
    }

    /// `N(t_to) − N(t_from)` in fine-cell indices.
    pub fn jump_count(&self, from: usize, to: usize) -> u64 {
        self.fine.dn[from..to].iter().map(|&c| c as u64).sum()
    }

    /// `(B(T), N(T))`.
    pub fn terminal_values(&self) -> (Vec<f64>, u64) {
        (self.brownian_increment(0, self.steps()), self.jump_count(0, self.steps()))
    }

    /// Sample mean of `|ΔN_k|^p`.
    pub fn poisson_moment_check(&self, p: f64) -> f64 {
        if self.fine.dn.is_empty() {
            return 0.0;
        }
        let s: f64 = self
            .fine
            .dn
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| (c as f64).powf(p))
            .sum();
        s / self.fine.dn.len() as f64
    }
}
