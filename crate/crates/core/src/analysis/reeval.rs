//! Re-evaluation of a repertoire with fresh seeds and more episodes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archive::{Bin, Repertoire};
use crate::error::{Error, Result};
use crate::evolution::{make_cell, Evaluator};
use crate::metrics::RawDescriptor;
use crate::seeding::{derive_seed, TAG_REEVAL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReevalCell {
    pub original: Bin,
    pub reevaluated: Bin,
    pub raw: RawDescriptor,
    pub retained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReevalReport {
    pub evals: usize,
    pub original_size: usize,
    pub retained_size: usize,
    pub retention: f64,
    /// Size of the re-binned repertoire (best claimant per new bin).
    pub reevaluated_size: usize,
    pub cells: Vec<ReevalCell>,
}

fn linear(bin: Bin, dims: [usize; 3]) -> u64 {
    ((bin.0[0] * dims[1] + bin.0[1]) * dims[2] + bin.0[2]) as u64
}

/// Re-runs every elite on `evals` fresh seeds and re-bins it. An elite is
/// retained when all three bins are unchanged.
pub fn reevaluate<E: Evaluator + ?Sized>(
    repertoire: &Repertoire,
    evaluator: &E,
    evals: usize,
    master_seed: u64,
) -> Result<(ReevalReport, Repertoire)> {
    if evals == 0 {
        return Err(Error::Config("re-evaluation needs at least one evaluation".into()));
    }
    let binning = *repertoire.binning();
    let dims = binning.dims;
    let fresh: Vec<_> = repertoire
        .iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|cell| {
            let id = linear(cell.bins, dims);
            let seeds = (0..evals as u64).map(|e| derive_seed(master_seed, &[TAG_REEVAL, id, e])).collect();
            make_cell(evaluator, cell.genome.clone(), seeds, &binning).map(|c| (cell.bins, c))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = Repertoire::new(binning, repertoire.config_hash(), master_seed);
    let mut cells = Vec::with_capacity(fresh.len());
    for (original, cell) in fresh {
        cells.push(ReevalCell {
            original,
            reevaluated: cell.bins,
            raw: cell.raw,
            retained: original == cell.bins,
        });
        out.insert(cell);
    }
    let retained_size = cells.iter().filter(|c| c.retained).count();
    let original_size = repertoire.len();
    let report = ReevalReport {
        evals,
        original_size,
        retained_size,
        retention: if original_size == 0 { 0.0 } else { retained_size as f64 / original_size as f64 },
        reevaluated_size: out.len(),
        cells,
    };
    Ok((report, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::ArchiveCell;
    use crate::controller::{self, Genome, InputMask, ParamBounds};
    use crate::metrics::BinningConfig;
    use crate::seeding::rng_from_seed;
    use crate::sim::Arena;

    struct Fixed;
    impl Evaluator for Fixed {
        fn evaluate_once(&self, g: &Genome, _seed: u64) -> Result<RawDescriptor> {
            Ok(RawDescriptor::new(g.param(0) + 2.0, (g.param(1) + 0.5) * 0.9, 5.0))
        }
    }

    /// Noise that always pushes exploration up by a seed-dependent amount.
    struct Shaky;
    impl Evaluator for Shaky {
        fn evaluate_once(&self, g: &Genome, seed: u64) -> Result<RawDescriptor> {
            let jitter = (seed % 1000) as f64 / 1000.0 * 3.0;
            Ok(RawDescriptor::new(g.param(0) + 2.0 + jitter, 0.5, 5.0))
        }
    }

    fn repertoire<E: Evaluator>(e: &E) -> Repertoire {
        let binning = BinningConfig::for_arena(&Arena::square(1000.0));
        let mut r = Repertoire::new(binning, "h", 1);
        let mut rng = rng_from_seed(2);
        for i in 0..40 {
            let g = Genome::random(&ParamBounds::default(), InputMask::ALL, &mut rng);
            let raw = e.evaluate_once(&g, i).unwrap();
            r.insert(ArchiveCell {
                bins: binning.to_bins(&raw),
                raw,
                fitness: controller::fitness(&g),
                evals: 1,
                genome: g,
                seeds: vec![i],
            });
        }
        r
    }

    #[test]
    fn deterministic_metric_retains_everything() {
        let r = repertoire(&Fixed);
        let (report, again) = reevaluate(&r, &Fixed, 20, 9).unwrap();
        assert_eq!(report.retention, 1.0);
        assert_eq!(report.retained_size, r.len());
        assert_eq!(again.bins().collect::<Vec<_>>(), r.bins().collect::<Vec<_>>());
        assert!(again.iter().all(|c| c.evals == 20));
    }

    #[test]
    fn noisy_metric_loses_cells() {
        let r = repertoire(&Shaky);
        let (report, again) = reevaluate(&r, &Shaky, 20, 9).unwrap();
        assert!(report.retained_size < report.original_size);
        assert!((0.0..=1.0).contains(&report.retention));
        assert!(again.len() <= r.len());
        assert_eq!(report.cells.len(), r.len());
        let (same, _) = reevaluate(&r, &Shaky, 20, 9).unwrap();
        assert_eq!(same, report);
    }
}
