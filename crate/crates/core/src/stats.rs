//! Descriptive statistics and the two-sided Mann-Whitney rank-sum test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Largest per-sample size handled by exact enumeration.
pub const EXACT_MAX_N: usize = 8;

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Median; mean of the two middle values for even lengths. 0 for empty input.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n.is_multiple_of(2) {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    } else {
        sorted[n / 2]
    }
}

/// Linear-interpolated percentile, `q` in `[0, 100]`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (q / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

pub fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

/// Unbiased (n − 1) variance.
pub fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

pub fn std_error(values: &[f64]) -> f64 {
    (sample_variance(values) / values.len().max(1) as f64).sqrt()
}

/// Sample mean and unbiased covariance of 3-vectors. Values are shifted by
/// the first sample before accumulating, so constant data gives exact zeros.
pub fn mean_cov3(samples: &[[f64; 3]]) -> ([f64; 3], [[f64; 3]; 3]) {
    let Some(&x0) = samples.first() else {
        return ([f64::NAN; 3], [[f64::NAN; 3]; 3]);
    };
    let n = samples.len() as f64;
    let mut shift = [0.0; 3];
    let mut cross = [[0.0; 3]; 3];
    for s in samples {
        let d = [s[0] - x0[0], s[1] - x0[1], s[2] - x0[2]];
        for a in 0..3 {
            shift[a] += d[a];
            for b in 0..3 {
                cross[a][b] += d[a] * d[b];
            }
        }
    }
    let m = shift.map(|v| v / n);
    let mu = [x0[0] + m[0], x0[1] + m[1], x0[2] + m[2]];
    let mut cov = [[0.0; 3]; 3];
    if samples.len() >= 2 {
        for a in 0..3 {
            for b in 0..3 {
                cov[a][b] = (cross[a][b] - n * m[a] * m[b]) / (n - 1.0);
            }
        }
    }
    (mu, cov)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RankSumMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSumTest {
    /// U statistic of the first sample.
    pub u: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub method: RankSumMethod,
}

/// Midranks (1-based) of the pooled values.
fn midranks(pooled: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && pooled[order[j]] == pooled[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = r;
        }
        i = j;
    }
    ranks
}

/// Two-sided Mann-Whitney rank-sum test.
///
/// Exact permutation distribution (ties handled through midranks) when both
/// samples have at most [`EXACT_MAX_N`] values, normal approximation with tie
/// and continuity corrections otherwise. Empty samples give `p = 1`.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> RankSumTest {
    let (na, nb) = (a.len(), b.len());
    if na == 0 || nb == 0 {
        return RankSumTest { u: 0.0, p_value: 1.0, method: RankSumMethod::Exact };
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum_a: f64 = ranks[..na].iter().sum();
    let u = rank_sum_a - (na * (na + 1)) as f64 / 2.0;

    if na <= EXACT_MAX_N && nb <= EXACT_MAX_N {
        let p_value = exact_p(&ranks, na, rank_sum_a);
        RankSumTest { u, p_value, method: RankSumMethod::Exact }
    } else {
        let p_value = normal_p(&pooled, na, nb, u);
        RankSumTest { u, p_value, method: RankSumMethod::Normal }
    }
}

/// Counts, over all size-`na` subsets of the pooled ranks, those whose rank
/// sum deviates from its mean at least as much as the observed one.
fn exact_p(ranks: &[f64], na: usize, observed: f64) -> f64 {
    // Midranks are multiples of 1/2, so doubled ranks are integers.
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // ways[j][s]: subsets of size j with doubled rank sum s.
    let mut ways = vec![vec![0u64; max_sum + 1]; na + 1];
    ways[0][0] = 1;
    for &r in &doubled {
        for j in (1..=na).rev() {
            for s in (r..=max_sum).rev() {
                ways[j][s] += ways[j - 1][s - r];
            }
        }
    }
    let n = ranks.len();
    let center = (na * (n + 1)) as i64; // doubled mean rank sum
    let obs_dev = ((2.0 * observed).round() as i64 - center).abs();
    let total: u64 = ways[na].iter().sum();
    let extreme: u64 = ways[na]
        .iter()
        .enumerate()
        .filter(|(s, _)| (*s as i64 - center).abs() >= obs_dev)
        .map(|(_, &w)| w)
        .sum();
    extreme as f64 / total as f64
}

fn normal_p(pooled: &[f64], na: usize, nb: usize, u: f64) -> f64 {
    let n = (na + nb) as f64;
    let mut sorted = pooled.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let (na, nb) = (na as f64, nb as f64);
    let mu = na * nb / 2.0;
    let var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
    let normal = Normal::standard();
    (2.0 * (1.0 - normal.cdf(z))).min(1.0)
}

/// Bonferroni-corrected p-value for `comparisons` tests.
pub fn bonferroni(p: f64, comparisons: usize) -> f64 {
    (p * comparisons as f64).min(1.0)
}
