//! Average controller parameters per slice of the archive.

use serde::{Deserialize, Serialize};

use crate::archive::Repertoire;
use crate::controller::{attraction_repulsion, N_INPUTS};
use crate::error::{Error, Result};

/// Distance at which the weight rows evaluate the attraction-repulsion term.
pub const HEATMAP_DISTANCE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSlice {
    pub count: usize,
    /// Mean `a_i(100)` per input.
    pub weights: [f64; N_INPUTS],
    /// Mean `t_i` per input.
    pub scales: [f64; N_INPUTS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    /// 0 exploration, 1 network, 2 localization.
    pub axis: usize,
    /// One entry per bin index along `axis`; `None` where no elite lies.
    pub slices: Vec<Option<HeatmapSlice>>,
}

impl Heatmap {
    /// Row labels in output order: `w1..w8` then `t1..t8`.
    pub fn row_labels() -> Vec<String> {
        (1..=N_INPUTS).map(|i| format!("w{i}")).chain((1..=N_INPUTS).map(|i| format!("t{i}"))).collect()
    }

    /// Value of `row` (0..16) in slice `s`.
    pub fn value(&self, row: usize, s: usize) -> Option<f64> {
        self.slices[s].as_ref().map(|sl| if row < N_INPUTS { sl.weights[row] } else { sl.scales[row - N_INPUTS] })
    }
}

/// Slices the archive along `axis` and averages over the elites in each
/// slice, in archive order.
pub fn parameter_heatmap(repertoire: &Repertoire, axis: usize) -> Result<Heatmap> {
    if axis > 2 {
        return Err(Error::Config(format!("axis must be 0, 1 or 2, got {axis}")));
    }
    if repertoire.is_empty() {
        return Err(Error::EmptyRepertoire);
    }
    let n = repertoire.dims()[axis];
    let mut sums = vec![([0.0; N_INPUTS], [0.0; N_INPUTS], 0usize); n];
    for cell in repertoire.iter() {
        let (w, t, count) = &mut sums[cell.bins.0[axis]];
        for (i, g) in cell.genome.groups().iter().enumerate() {
            w[i] += attraction_repulsion(HEATMAP_DISTANCE, g.k, g.c, g.sigma);
            t[i] += g.t;
        }
        *count += 1;
    }
    let slices = sums
        .into_iter()
        .map(|(w, t, count)| {
            (count > 0).then(|| HeatmapSlice {
                count,
                weights: w.map(|v| v / count as f64),
                scales: t.map(|v| v / count as f64),
            })
        })
        .collect();
    Ok(Heatmap { axis, slices })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::{ArchiveCell, Bin};
    use crate::controller::{Genome, InputMask, ParamBounds};
    use crate::metrics::{BinningConfig, RawDescriptor};
    use crate::seeding::rng_from_seed;
    use crate::sim::Arena;

    #[test]
    fn a100_examples() {
        assert_eq!(attraction_repulsion(100.0, 2.0, 100.0, 50.0), 0.0);
        // 2·(2/(1+e^{-1})−1)
        assert!((attraction_repulsion(100.0, 2.0, 0.0, 100.0) - 0.9242343145200195).abs() < 1e-15);
    }

    #[test]
    fn identical_genomes_give_their_own_values() {
        let mut rng = rng_from_seed(1);
        let g = Genome::random(&ParamBounds::default(), InputMask::ALL, &mut rng);
        let mut r = Repertoire::new(BinningConfig::for_arena(&Arena::square(1000.0)), "h", 0);
        for bin in [[0, 1, 2], [0, 5, 2], [3, 1, 9]] {
            r.insert(ArchiveCell {
                bins: Bin(bin),
                raw: RawDescriptor::default(),
                fitness: 1.0,
                evals: 1,
                genome: g.clone(),
                seeds: vec![],
            });
        }
        let h = parameter_heatmap(&r, 0).unwrap();
        assert_eq!(h.slices.len(), 10);
        assert_eq!(h.slices.iter().filter(|s| s.is_some()).count(), 2);
        let s = h.slices[0].as_ref().unwrap();
        assert_eq!(s.count, 2);
        for i in 0..N_INPUTS {
            let gi = g.group(i);
            assert_eq!(s.scales[i], gi.t);
            let a = attraction_repulsion(100.0, gi.k, gi.c, gi.sigma);
            assert!((s.weights[i] - a).abs() <= 1e-15 * a.abs().max(1.0));
        }
        assert!(h.slices[1].is_none());
        assert_eq!(Heatmap::row_labels().len(), 16);
        let empty = Repertoire::new(*r.binning(), "h", 0);
        assert!(matches!(parameter_heatmap(&empty, 0), Err(Error::EmptyRepertoire)));
        assert!(parameter_heatmap(&r, 3).is_err());
    }
}
