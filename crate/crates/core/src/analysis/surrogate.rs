//! Rate-of-visitation stand-ins for the median exploration metric, usable
//! while an episode is still running.

use crate::sim::SampleRecord;

/// `(total_now − total_before) / window`.
pub fn surrogate_exploration(total_now: u64, total_before: u64, window: f64) -> f64 {
    assert!(window > 0.0, "window must be positive");
    total_now.saturating_sub(total_before) as f64 / window
}

/// Surrogate exploration at each sample over a trailing `window`. Before one
/// full window has elapsed the count is taken from the episode start.
pub fn surrogate_series(samples: &[SampleRecord], window: f64) -> Vec<f64> {
    samples
        .iter()
        .map(|s| {
            let start = s.t - window;
            let before = samples
                .iter()
                .rev()
                .find(|p| p.t <= start + 1e-9)
                .map(|p| p.total_visits)
                .unwrap_or(0);
            surrogate_exploration(s.total_visits, before, window)
        })
        .collect()
}
