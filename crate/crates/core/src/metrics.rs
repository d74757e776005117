//! Behavior characteristics and their archive bins.

use serde::{Deserialize, Serialize};

use crate::archive::Bin;
use crate::error::{Error, Result};
use crate::sim::{Arena, VisitGrid};
use crate::stats;
use crate::vec2::Vec2;

/// Bumped whenever a raw-value→bin map changes.
pub const BINNING_VERSION: u32 = 1;

/// Absorbs representation error at bin edges (0.57·100 = 56.99999…).
pub const BIN_EDGE_TOLERANCE: f64 = 1e-9;

/// The three raw characteristics of an episode (or their average).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RawDescriptor {
    /// Median visitation count over all cells.
    pub exploration: f64,
    /// Fraction of the arena covered by the largest connected subgroup.
    pub network: f64,
    /// Variance of emitter predictions, m².
    pub localization: f64,
}

impl RawDescriptor {
    pub fn new(exploration: f64, network: f64, localization: f64) -> Self {
        RawDescriptor { exploration, network, localization }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.exploration, self.network, self.localization]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        RawDescriptor::new(v[0], v[1], v[2])
    }

    /// Arithmetic mean, component-wise.
    pub fn mean(items: &[RawDescriptor]) -> RawDescriptor {
        let n = items.len().max(1) as f64;
        let sum = items.iter().fold([0.0; 3], |acc, d| {
            let a = d.as_array();
            [acc[0] + a[0], acc[1] + a[1], acc[2] + a[2]]
        });
        RawDescriptor::from_array(sum.map(|s| s / n))
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorDescriptor {
    pub raw: RawDescriptor,
    pub bins: Bin,
}

/// Raw-value→bin maps. Stored in archive headers so repertoires describe
/// their own coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinningConfig {
    pub version: u32,
    /// Bins along (exploration, network, localization).
    pub dims: [usize; 3],
    /// Localization variance that maps to the top bin, m².
    pub variance_ceiling: f64,
}

impl BinningConfig {
    /// Default 10×100×10 layout; the variance ceiling is that of predictions
    /// spread uniformly over the arena, `2·area/12`.
    pub fn for_arena(arena: &Arena) -> Self {
        BinningConfig {
            version: BINNING_VERSION,
            dims: [10, 100, 10],
            variance_ceiling: uniform_variance_ceiling(arena),
        }
    }

    pub fn n_bins(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::Config(format!("archive dims must be positive, got {:?}", self.dims)));
        }
        if !(self.variance_ceiling > 0.0 && self.variance_ceiling.is_finite()) {
            return Err(Error::Config("variance ceiling must be positive".into()));
        }
        Ok(())
    }

    pub fn contains(&self, bin: Bin) -> bool {
        bin.0.iter().zip(self.dims).all(|(&b, d)| b < d)
    }

    /// Exploration: whole visits, network: percent, localization:
    /// `floor(10·log10(1+v)/log10(1+v_max))`, each clamped to its axis.
    /// Scaled values within `BIN_EDGE_TOLERANCE` below an integer floor to
    /// it, so 0.57 lands in network bin 57.
    pub fn to_bins(&self, raw: &RawDescriptor) -> Bin {
        let clamp = |v: f64, dim: usize| -> usize {
            if v.is_nan() || v <= 0.0 {
                0
            } else {
                ((v + BIN_EDGE_TOLERANCE).floor() as usize).min(dim - 1)
            }
        };
        let i = clamp(raw.exploration, self.dims[0]);
        let j = clamp(raw.network * self.dims[1] as f64, self.dims[1]);
        let scaled = self.dims[2] as f64 * raw.localization.max(0.0).ln_1p() / self.variance_ceiling.ln_1p();
        let k = clamp(scaled, self.dims[2]);
        Bin([i, j, k])
    }

    pub fn describe(&self, raw: RawDescriptor) -> BehaviorDescriptor {
        BehaviorDescriptor { raw, bins: self.to_bins(&raw) }
    }
}

pub fn uniform_variance_ceiling(arena: &Arena) -> f64 {
    2.0 * arena.area() / 12.0
}

/// Median visitation count over all cells.
pub fn exploration_metric(grid: &VisitGrid) -> f64 {
    let counts: Vec<f64> = grid.counts().iter().map(|&c| c as f64).collect();
    stats::median(&counts)
}

/// Fraction of metric-grid cells whose centers lie within `comm_radius` of
/// some member of the largest connected subgroup.
pub fn network_metric(positions: &[Vec2], comm_radius: f64, arena: &Arena, cell_size: f64) -> f64 {
    if positions.is_empty() {
        return 0.0;
    }
    let members = largest_component(positions, comm_radius);
    let (cols, rows) = arena.grid_shape(cell_size);
    let r2 = comm_radius * comm_radius;
    let mut covered = 0usize;
    for row in 0..rows {
        for col in 0..cols {
            let center = arena.cell_center(col, row, cell_size);
            if members.iter().any(|&m| positions[m].dist_sq(center) <= r2) {
                covered += 1;
            }
        }
    }
    covered as f64 / (cols * rows) as f64
}

/// Agent indices of the largest connected component of the communication
/// graph (edge iff distance ≤ radius). Ties go to the component holding the
/// lowest index. Returned in ascending order.
pub fn largest_component(positions: &[Vec2], comm_radius: f64) -> Vec<usize> {
    let n = positions.len();
    let r2 = comm_radius * comm_radius;
    let mut component = vec![usize::MAX; n];
    let mut best: Vec<usize> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let mut members = vec![start];
        component[start] = start;
        stack.push(start);
        while let Some(a) = stack.pop() {
            for b in 0..n {
                if component[b] == usize::MAX && positions[a].dist_sq(positions[b]) <= r2 {
                    component[b] = start;
                    members.push(b);
                    stack.push(b);
                }
            }
        }
        if members.len() > best.len() {
            best = members;
        }
    }
    best.sort_unstable();
    best
}

/// Communication links (index pairs within radius), `a < b`.
pub fn links(positions: &[Vec2], comm_radius: f64) -> Vec<(usize, usize)> {
    let r2 = comm_radius * comm_radius;
    let mut out = Vec::new();
    for a in 0..positions.len() {
        for b in a + 1..positions.len() {
            if positions[a].dist_sq(positions[b]) <= r2 {
                out.push((a, b));
            }
        }
    }
    out
}

/// `Var(x) + Var(y)` over all predictions (population variance). Fewer than
/// two predictions carry no information and score `ceiling`.
pub fn localization_metric(predictions: &[Vec2], ceiling: f64) -> f64 {
    if predictions.len() < 2 {
        return ceiling;
    }
    let xs: Vec<f64> = predictions.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = predictions.iter().map(|p| p.y).collect();
    stats::population_variance(&xs) + stats::population_variance(&ys)
}
