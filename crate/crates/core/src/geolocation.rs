//! PDOA emitter geolocation from received signal strength.
//!
//! Sensors report RSS under a log-distance path-loss model. An estimate is
//! the best of a fixed number of uniformly drawn candidate locations under
//! the pairwise power-difference error `Q(x, y)`; there is no local
//! refinement step.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Arena;
use crate::vec2::Vec2;

/// Distances below this are floored (meters).
pub const MIN_DISTANCE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathLossModel {
    /// Path-loss exponent, 2 for free space.
    pub alpha: f64,
    /// Received power at 1 m, dB.
    pub p0: f64,
    /// Standard deviation of measurement noise, dB.
    pub noise_sigma: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        PathLossModel { alpha: 2.0, p0: 0.0, noise_sigma: 2.0 }
    }
}

impl PathLossModel {
    pub fn noiseless(alpha: f64, p0: f64) -> Self {
        PathLossModel { alpha, p0, noise_sigma: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("path-loss alpha must be positive, got {}", self.alpha)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise sigma must be non-negative, got {}", self.noise_sigma)));
        }
        if !self.p0.is_finite() {
            return Err(Error::Config("p0 must be finite".into()));
        }
        Ok(())
    }

    /// Noiseless received power at distance `d`.
    pub fn mean_power(&self, d: f64) -> f64 {
        self.p0 - 10.0 * self.alpha * d.max(MIN_DISTANCE).log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RssSample {
    pub pos: Vec2,
    /// Received power, dB.
    pub power: f64,
}

/// One noisy RSS measurement. Always consumes one normal draw from `rng`.
pub fn rss_at<R: Rng + ?Sized>(model: &PathLossModel, emitter: Vec2, sensor: Vec2, rng: &mut R) -> f64 {
    let noise: f64 = rng.sample(StandardNormal);
    model.mean_power(emitter.dist(sensor)) + model.noise_sigma * noise
}

/// One sample per sensor position, drawn in order.
pub fn measure<R: Rng + ?Sized>(
    model: &PathLossModel,
    emitter: Vec2,
    sensors: impl IntoIterator<Item = Vec2>,
    rng: &mut R,
) -> Vec<RssSample> {
    sensors
        .into_iter()
        .map(|pos| RssSample { pos, power: rss_at(model, emitter, pos, rng) })
        .collect()
}

/// Pairwise power-difference error of placing the emitter at `candidate`.
///
/// `Q = Σ_{k<l} [(P_k − P_l) − 5α·log10(d_l² / d_k²)]²`. With
/// `r_k = P_k + 5α·log10(d_k²)` each bracket is `r_k − r_l`, and the sum over
/// pairs equals `n·Σ(r_k − r̄)²`, which is what gets evaluated.
pub fn q_error(candidate: Vec2, samples: &[RssSample], alpha: f64) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: samples.len() });
    }
    Ok(q_error_unchecked(candidate, samples, alpha))
}

fn q_error_unchecked(candidate: Vec2, samples: &[RssSample], alpha: f64) -> f64 {
    let n = samples.len() as f64;
    let min_sq = MIN_DISTANCE * MIN_DISTANCE;
    let mut residuals = [0.0f64; 64];
    let mut spill = Vec::new();
    let r: &mut [f64] = if samples.len() <= residuals.len() {
        &mut residuals[..samples.len()]
    } else {
        spill.resize(samples.len(), 0.0);
        &mut spill
    };
    for (slot, s) in r.iter_mut().zip(samples) {
        *slot = s.power + 5.0 * alpha * candidate.dist_sq(s.pos).max(min_sq).log10();
    }
    let mean = r.iter().sum::<f64>() / n;
    n * r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
}

/// Best of `n_candidates` uniform draws over `arena` under [`q_error`].
/// Ties keep the earliest candidate.
pub fn predict<R: Rng + ?Sized>(
    samples: &[RssSample],
    alpha: f64,
    arena: &Arena,
    n_candidates: usize,
    rng: &mut R,
) -> Result<Vec2> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: samples.len() });
    }
    if n_candidates == 0 {
        return Err(Error::Config("prediction needs at least one candidate".into()));
    }
    let mut best = (f64::INFINITY, Vec2::ZERO);
    for _ in 0..n_candidates {
        let candidate = arena.sample_uniform(rng);
        let q = q_error_unchecked(candidate, samples, alpha);
        if q < best.0 {
            best = (q, candidate);
        }
    }
    Ok(best.1)
}

/// Evaluates the listed candidates instead of drawing them.
pub fn predict_from_candidates(samples: &[RssSample], alpha: f64, candidates: &[Vec2]) -> Result<Vec2> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: samples.len() });
    }
    candidates
        .iter()
        .map(|&c| (q_error_unchecked(c, samples, alpha), c))
        .fold(None, |best: Option<(f64, Vec2)>, cur| match best {
            Some(b) if b.0 <= cur.0 => Some(b),
            _ => Some(cur),
        })
        .map(|(_, c)| c)
        .ok_or_else(|| Error::Config("prediction needs at least one candidate".into()))
}
