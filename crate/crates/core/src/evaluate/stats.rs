//! Non-parametric significance tests and multiple-comparison adjustment.
//!
//! Small samples use exact permutation null distributions built by dynamic
//! programming over doubled mid-ranks (integers even with ties). Larger
//! samples fall back to the tie-corrected normal approximation with a
//! continuity correction.

use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Largest number of non-zero differences handled exactly.
pub const WILCOXON_EXACT_MAX: usize = 25;
/// Largest combined sample size handled exactly.
pub const MANN_WHITNEY_EXACT_MAX: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("all pairs are tied")]
    AllTied,
    #[error("need at least 5 non-tied pairs, got {0}")]
    TooFewPairs(usize),
    #[error("sample is empty")]
    EmptySample,
    #[error("non-finite observation")]
    NonFinite,
    #[error("p-value {0} outside [0, 1]")]
    BadPValue(f64),
}

/// Doubled mid-ranks (1-based) of `values`, plus tie group sizes.
fn doubled_ranks(values: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j share rank (i+1 + j+1) / 2, doubled
        let doubled = i + j + 2;
        for &idx in &order[i..=j] {
            ranks[idx] = doubled;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

fn two_sided(lower: f64, upper: f64) -> f64 {
    (2.0 * lower.min(upper)).min(1.0)
}

fn normal_two_sided(deviation: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return 1.0;
    }
    let z = ((deviation.abs() - 0.5) / sd).max(0.0);
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - n.cdf(z))).min(1.0)
}

fn tie_term(ties: &[usize]) -> f64 {
    ties.iter().map(|&t| (t * t * t - t) as f64).sum()
}

/// Two-sided Wilcoxon signed-rank test on paired samples. Zero differences
/// are dropped.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return Err(StatsError::AllTied);
    }
    if n < 5 {
        return Err(StatsError::TooFewPairs(n));
    }
    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = doubled_ranks(&magnitudes);
    let w_plus: usize = ranks
        .iter()
        .zip(&diffs)
        .filter(|(_, d)| **d > 0.0)
        .map(|(r, _)| r)
        .sum();

    if n <= WILCOXON_EXACT_MAX {
        let total: usize = ranks.iter().sum();
        // counts[s] = number of sign assignments with positive doubled-rank sum s
        let mut counts = vec![0.0f64; total + 1];
        counts[0] = 1.0;
        for &r in &ranks {
            for s in (r..=total).rev() {
                counts[s] += counts[s - r];
            }
        }
        let all = 2f64.powi(n as i32);
        let lower: f64 = counts[..=w_plus].iter().sum::<f64>() / all;
        let upper: f64 = counts[w_plus..].iter().sum::<f64>() / all;
        return Ok(two_sided(lower, upper));
    }

    let nf = n as f64;
    let w = w_plus as f64 / 2.0;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term(&ties) / 48.0;
    Ok(normal_two_sided(w - mean, var.sqrt()))
}

/// Two-sided Mann-Whitney U test.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = doubled_ranks(&pooled);
    let (n1, n2) = (a.len(), b.len());
    let n = n1 + n2;
    let rank_sum: usize = ranks[..n1].iter().sum();

    if n <= MANN_WHITNEY_EXACT_MAX {
        let total: usize = ranks.iter().sum();
        // ways[j][s]: subsets of size j with doubled-rank sum s
        let mut ways = vec![vec![0.0f64; total + 1]; n1 + 1];
        ways[0][0] = 1.0;
        for &r in &ranks {
            for j in (1..=n1).rev() {
                for s in (r..=total).rev() {
                    ways[j][s] += ways[j - 1][s - r];
                }
            }
        }
        let dist = &ways[n1];
        let all: f64 = dist.iter().sum();
        let lower = dist[..=rank_sum].iter().sum::<f64>() / all;
        let upper = dist[rank_sum..].iter().sum::<f64>() / all;
        return Ok(two_sided(lower, upper));
    }

    let (n1f, n2f, nf) = (n1 as f64, n2 as f64, n as f64);
    let u = rank_sum as f64 / 2.0 - n1f * (n1f + 1.0) / 2.0;
    let mean = n1f * n2f / 2.0;
    let var = n1f * n2f / 12.0 * ((nf + 1.0) - tie_term(&ties) / (nf * (nf - 1.0)));
    Ok(normal_two_sided(u - mean, var.max(0.0).sqrt()))
}

/// Benjamini-Hochberg adjusted p-values, in input order.
pub fn benjamini_hochberg(pvals: &[f64]) -> Result<Vec<f64>, StatsError> {
    if let Some(&bad) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(StatsError::BadPValue(bad));
    }
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &idx) in order.iter().enumerate().rev() {
        let step = pvals[idx] * m as f64 / (rank + 1) as f64;
        running = running.min(step);
        adjusted[idx] = running;
    }
    Ok(adjusted)
}
