//! Switching a running swarm from behavior A to behavior B.
//!
//! Each repetition runs A for one episode duration, swaps the controller to B
//! with the world untouched, and runs B for another duration. The same seed
//! also drives a baseline that runs B from a fresh launch. Windows at the end
//! of both are compared.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::Genome;
use crate::error::{Error, Result};
use crate::metrics;
use crate::seeding::{derive_seed, TAG_TRANSITION};
use crate::sim::{Episode, EpisodeRecord, SampleRecord, WorldConfig};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransitionConfig {
    pub repetitions: usize,
    /// Trailing window for the compared metrics and the rolling variance, s.
    pub final_window: f64,
    pub master_seed: u64,
}

impl Default for TransitionConfig {
    fn default() -> Self {
        TransitionConfig { repetitions: 100, final_window: 300.0, master_seed: 0 }
    }
}

/// Metrics at one sampling instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t: f64,
    /// Total-visit derivative over the last sampling period, visits/s.
    pub surrogate_exploration: f64,
    /// Distinct cells entered during the last sampling period.
    pub unique_cells: f64,
    pub network: f64,
    /// Variance of the predictions in the trailing window, m².
    pub localization: f64,
}

/// Metrics over a window ending at some time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowMetrics {
    /// Mean distinct cells per sampling period.
    pub exploration: f64,
    pub network: f64,
    pub localization: f64,
}

impl WindowMetrics {
    pub fn as_array(&self) -> [f64; 3] {
        [self.exploration, self.network, self.localization]
    }

    pub const NAMES: [&'static str; 3] = ["exploration", "network", "localization"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub switch_time: f64,
    pub repetitions: usize,
    pub final_window: f64,
    /// Mean A→B series across repetitions.
    pub transition: Vec<SeriesPoint>,
    /// Mean B-from-launch series across repetitions.
    pub baseline: Vec<SeriesPoint>,
    /// Per repetition, the window ending at the switch.
    pub pre_switch: Vec<WindowMetrics>,
    /// Per repetition, the window ending A→B.
    pub final_transition: Vec<WindowMetrics>,
    /// Per repetition, the window ending the baseline.
    pub final_baseline: Vec<WindowMetrics>,
}

impl TransitionRecord {
    /// Central 95% of the per-repetition baseline values, per metric.
    pub fn baseline_band(&self) -> [(f64, f64); 3] {
        std::array::from_fn(|m| {
            let v: Vec<f64> = self.final_baseline.iter().map(|w| w.as_array()[m]).collect();
            (stats::percentile(&v, 2.5), stats::percentile(&v, 97.5))
        })
    }

    pub fn transition_mean(&self) -> [f64; 3] {
        std::array::from_fn(|m| stats::mean(&self.final_transition.iter().map(|w| w.as_array()[m]).collect::<Vec<_>>()))
    }

    /// Whether the mean A→B window lies inside the baseline band, per metric.
    pub fn within_band(&self) -> [bool; 3] {
        let band = self.baseline_band();
        let mean = self.transition_mean();
        std::array::from_fn(|m| mean[m] >= band[m].0 && mean[m] <= band[m].1)
    }
}

pub fn repetition_seed(master: u64, repetition: usize) -> u64 {
    derive_seed(master, &[TAG_TRANSITION, repetition as u64])
}

/// One A→B run: `steps_a` steps of A, then `steps_b` steps of B.
pub fn transition_episode(
    config: &WorldConfig,
    a: &Genome,
    b: &Genome,
    seed: u64,
    steps_a: u64,
    steps_b: u64,
) -> Result<EpisodeRecord> {
    let mut ep = Episode::new(config.clone(), a.clone(), seed)?;
    ep.run_steps(steps_a);
    ep.switch_genome(b.clone());
    ep.run_steps(steps_b);
    Ok(ep.record())
}

fn in_window(samples: &[SampleRecord], end: f64, window: f64) -> impl Iterator<Item = &SampleRecord> {
    samples.iter().filter(move |s| s.t > end - window + 1e-9 && s.t <= end + 1e-9)
}

fn window_metrics(samples: &[SampleRecord], end: f64, window: f64, ceiling: f64) -> WindowMetrics {
    let picked: Vec<&SampleRecord> = in_window(samples, end, window).collect();
    let n = picked.len().max(1) as f64;
    let predictions: Vec<_> = picked.iter().map(|s| s.prediction).collect();
    WindowMetrics {
        exploration: picked.iter().map(|s| s.unique_cells as f64).sum::<f64>() / n,
        network: picked.iter().map(|s| s.network).sum::<f64>() / n,
        localization: metrics::localization_metric(&predictions, ceiling),
    }
}

fn series(samples: &[SampleRecord], period: f64, window: f64, ceiling: f64) -> Vec<SeriesPoint> {
    let mut prev_total = 0;
    samples
        .iter()
        .map(|s| {
            let predictions: Vec<_> = in_window(samples, s.t, window).map(|p| p.prediction).collect();
            let point = SeriesPoint {
                t: s.t,
                surrogate_exploration: (s.total_visits - prev_total) as f64 / period,
                unique_cells: s.unique_cells as f64,
                network: s.network,
                localization: metrics::localization_metric(&predictions, ceiling),
            };
            prev_total = s.total_visits;
            point
        })
        .collect()
}

fn mean_series(runs: &[Vec<SeriesPoint>]) -> Vec<SeriesPoint> {
    let n = runs.len() as f64;
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let avg = |f: fn(&SeriesPoint) -> f64| runs.iter().map(|r| f(&r[i])).sum::<f64>() / n;
            SeriesPoint {
                t: runs[0][i].t,
                surrogate_exploration: avg(|p| p.surrogate_exploration),
                unique_cells: avg(|p| p.unique_cells),
                network: avg(|p| p.network),
                localization: avg(|p| p.localization),
            }
        })
        .collect()
}

/// Runs `repetitions` seeded A→B transitions and their B baselines.
pub fn run_transition(a: &Genome, b: &Genome, world: &WorldConfig, config: &TransitionConfig) -> Result<TransitionRecord> {
    world.validate()?;
    if config.repetitions == 0 {
        return Err(Error::InsufficientRuns { needed: 1, got: 0 });
    }
    if !(config.final_window > 0.0) {
        return Err(Error::Config("final_window must be positive".into()));
    }
    let steps = world.steps();
    let duration = world.duration;
    let period = world.sample_period;
    let window = config.final_window;
    let ceiling = world.variance_ceiling();
    let runs = (0..config.repetitions)
        .into_par_iter()
        .map(|r| {
            let seed = repetition_seed(config.master_seed, r);
            let ab = transition_episode(world, a, b, seed, steps, steps)?;
            let base = transition_episode(world, b, b, seed, steps, 0)?;
            Ok((
                series(&ab.samples, period, window, ceiling),
                series(&base.samples, period, window, ceiling),
                window_metrics(&ab.samples, duration, window, ceiling),
                window_metrics(&ab.samples, 2.0 * duration, window, ceiling),
                window_metrics(&base.samples, duration, window, ceiling),
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut ab_series = Vec::with_capacity(runs.len());
    let mut base_series = Vec::with_capacity(runs.len());
    let mut pre_switch = Vec::with_capacity(runs.len());
    let mut final_transition = Vec::with_capacity(runs.len());
    let mut final_baseline = Vec::with_capacity(runs.len());
    for (s_ab, s_b, pre, fin_ab, fin_b) in runs {
        ab_series.push(s_ab);
        base_series.push(s_b);
        pre_switch.push(pre);
        final_transition.push(fin_ab);
        final_baseline.push(fin_b);
    }
    Ok(TransitionRecord {
        switch_time: duration,
        repetitions: config.repetitions,
        final_window: window,
        transition: mean_series(&ab_series),
        baseline: mean_series(&base_series),
        pre_switch,
        final_transition,
        final_baseline,
    })
}
