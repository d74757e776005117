//! Input ablation: evolve with inputs switched off and compare archive sizes.

use serde::{Deserialize, Serialize};

use crate::controller::InputMask;
use crate::error::{Error, Result};
use crate::evolution::{evolve, EvolutionConfig, Evaluator};
use crate::metrics::BinningConfig;
use crate::seeding::{derive_seed, TAG_ABLATION};
use crate::stats::{self, RankSumTest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskComparison {
    pub mask: InputMask,
    pub sizes: Vec<usize>,
    pub median_size: f64,
    /// Two-sided rank-sum against the reference mask; `None` for the reference.
    pub test: Option<RankSumTest>,
    pub p_corrected: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    /// The first mask, every comparison is against it.
    pub reference: InputMask,
    pub run_seeds: Vec<u64>,
    pub masks: Vec<MaskComparison>,
}

impl AblationReport {
    /// Builds the report from archive sizes, `sizes[m][r]` for mask `m`,
    /// run `r`. Bonferroni divides by the number of non-reference masks.
    pub fn from_sizes(masks: &[InputMask], run_seeds: Vec<u64>, sizes: Vec<Vec<usize>>) -> Result<AblationReport> {
        if masks.is_empty() || masks.len() != sizes.len() {
            return Err(Error::Config("one size list per mask is required".into()));
        }
        let runs = sizes.iter().map(Vec::len).min().unwrap_or(0);
        if runs < 2 {
            return Err(Error::InsufficientRuns { needed: 2, got: runs });
        }
        let reference_mask = masks[0];
        let as_f64 = |v: &[usize]| v.iter().map(|&s| s as f64).collect::<Vec<_>>();
        let reference = as_f64(&sizes[0]);
        let comparisons = masks.len() - 1;
        let masks = masks
            .iter()
            .zip(&sizes)
            .enumerate()
            .map(|(m, (&mask, s))| {
                let values = as_f64(s);
                let test = (m > 0).then(|| stats::mann_whitney_u(&values, &reference));
                MaskComparison {
                    mask,
                    sizes: s.clone(),
                    median_size: stats::median(&values),
                    p_corrected: test.as_ref().map(|t| stats::bonferroni(t.p_value, comparisons)),
                    test,
                }
            })
            .collect();
        Ok(AblationReport { reference: reference_mask, run_seeds, masks })
    }

    pub fn get(&self, mask: InputMask) -> Option<&MaskComparison> {
        self.masks.iter().find(|m| m.mask == mask)
    }
}

/// Master seed of ablation run `r`; shared by every mask.
pub fn run_seed(master: u64, r: usize) -> u64 {
    derive_seed(master, &[TAG_ABLATION, r as u64])
}

/// Evolves `runs` repertoires per mask on shared run seeds.
pub fn ablation_study<E: Evaluator + ?Sized>(
    evaluator: &E,
    config: &EvolutionConfig,
    binning: BinningConfig,
    masks: &[InputMask],
    runs: usize,
    master_seed: u64,
) -> Result<AblationReport> {
    if runs < 2 {
        return Err(Error::InsufficientRuns { needed: 2, got: runs });
    }
    let seeds: Vec<u64> = (0..runs).map(|r| run_seed(master_seed, r)).collect();
    let mut sizes = Vec::with_capacity(masks.len());
    for &mask in masks {
        let cfg = EvolutionConfig { mask, ..config.clone() };
        let per_run = seeds
            .iter()
            .map(|&s| evolve(evaluator, &cfg, binning, s, "ablation").map(|r| r.len()))
            .collect::<Result<Vec<_>>>()?;
        sizes.push(per_run);
    }
    AblationReport::from_sizes(masks, seeds, sizes)
}
