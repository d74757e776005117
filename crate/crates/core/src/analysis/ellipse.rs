//! Spread of a controller's characteristics over repeated episodes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::Genome;
use crate::error::{Error, Result};
use crate::evolution::Evaluator;
use crate::seeding::{derive_seed, TAG_ELLIPSE};
use crate::stats;

/// 1-σ ellipse of a pair of characteristics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseSlice {
    /// Characteristic indices (0 exploration, 1 network, 2 localization).
    pub axes: (usize, usize),
    pub center: (f64, f64),
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Angle of the major axis from the first characteristic's axis, radians.
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub repetitions: usize,
    pub mean: [f64; 3],
    /// Sample covariance (n − 1 denominator).
    pub covariance: [[f64; 3]; 3],
    pub slices: Vec<EllipseSlice>,
    pub samples: Vec<[f64; 3]>,
}

/// Eigen-decomposition of a symmetric 2×2 covariance.
pub fn ellipse_from_cov(axes: (usize, usize), center: (f64, f64), sxx: f64, sxy: f64, syy: f64) -> EllipseSlice {
    let half_trace = (sxx + syy) / 2.0;
    let det_term = (((sxx - syy) / 2.0).powi(2) + sxy * sxy).sqrt();
    let l1 = half_trace + det_term;
    let l2 = half_trace - det_term;
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    EllipseSlice {
        axes,
        center,
        semi_major: l1.max(0.0).sqrt(),
        semi_minor: l2.max(0.0).sqrt(),
        angle,
    }
}

pub fn slices(mean: &[f64; 3], cov: &[[f64; 3]; 3]) -> Vec<EllipseSlice> {
    [(0, 1), (0, 2), (1, 2)]
        .into_iter()
        .map(|(a, b)| ellipse_from_cov((a, b), (mean[a], mean[b]), cov[a][a], cov[a][b], cov[b][b]))
        .collect()
}

/// Evaluates `genome` `repetitions` times on seeds derived from `master_seed`.
pub fn uncertainty_ellipse<E: Evaluator + ?Sized>(
    genome: &Genome,
    evaluator: &E,
    repetitions: usize,
    master_seed: u64,
) -> Result<UncertaintyReport> {
    if repetitions < 2 {
        return Err(Error::InsufficientRuns { needed: 2, got: repetitions });
    }
    let samples = (0..repetitions as u64)
        .into_par_iter()
        .map(|r| {
            evaluator
                .evaluate_once(genome, derive_seed(master_seed, &[TAG_ELLIPSE, r]))
                .map(|d| d.as_array())
        })
        .collect::<Result<Vec<_>>>()?;
    let (mean, covariance) = stats::mean_cov3(&samples);
    Ok(UncertaintyReport { repetitions, mean, covariance, slices: slices(&mean, &covariance), samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::RawDescriptor;

    struct Constant;
    impl Evaluator for Constant {
        fn evaluate_once(&self, _: &Genome, _: u64) -> Result<RawDescriptor> {
            Ok(RawDescriptor::new(3.0, 0.2, 100.0))
        }
    }

    #[test]
    fn deterministic_metric_has_zero_covariance() {
        let rep = uncertainty_ellipse(&Genome::null(), &Constant, 10, 1).unwrap();
        assert_eq!(rep.covariance, [[0.0; 3]; 3]);
        assert_eq!(rep.mean, [3.0, 0.2, 100.0]);
        assert!(rep.slices.iter().all(|s| s.semi_major == 0.0 && s.semi_minor == 0.0));
        assert!(matches!(
            uncertainty_ellipse(&Genome::null(), &Constant, 1, 1),
            Err(Error::InsufficientRuns { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn axis_aligned_and_rotated_ellipses() {
        let s = ellipse_from_cov((0, 1), (0.0, 0.0), 4.0, 0.0, 1.0);
        assert!((s.semi_major - 2.0).abs() < 1e-12 && (s.semi_minor - 1.0).abs() < 1e-12);
        assert!(s.angle.abs() < 1e-12);
        // covariance of a line at 45°
        let s = ellipse_from_cov((0, 1), (0.0, 0.0), 1.0, 1.0, 1.0);
        assert!((s.angle - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        assert!((s.semi_major - 2f64.sqrt()).abs() < 1e-12);
        assert!(s.semi_minor.abs() < 1e-12);
    }
}
