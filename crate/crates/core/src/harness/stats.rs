//! Paired nonparametric tests.

use crate::acquisition::normal_cdf;
use crate::error::{Error, Result};

/// Largest sample size for which the exact null distribution is enumerated.
pub const EXACT_MAX_N: usize = 15;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wilcoxon {
    /// Sum of ranks of the positive differences `a − b`.
    pub statistic: f64,
    /// Number of non-zero differences.
    pub n: usize,
    pub p_value: f64,
    pub exact: bool,
}

/// Two-sided Wilcoxon signed-rank test on the differences `a − b`.
///
/// Zero differences are dropped and tied magnitudes share their average
/// rank. The null distribution is enumerated exactly for up to
/// [`EXACT_MAX_N`] differences; larger samples use the normal approximation
/// with continuity and tie corrections.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> Result<Wilcoxon> {
    let diffs: Vec<f64> = pairs.iter().map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidData("non-finite paired difference".into()));
    }
    if diffs.is_empty() {
        return Err(Error::DegenerateSample("all paired differences are zero".into()));
    }
    if diffs.len() < 5 {
        return Err(Error::DegenerateSample(format!("only {} non-zero differences; at least 5 needed", diffs.len())));
    }
    let ranks = average_ranks(&diffs);
    let n = diffs.len();
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();

    if n <= EXACT_MAX_N {
        let p = exact_p(&ranks, w_plus);
        return Ok(Wilcoxon { statistic: w_plus, n, p_value: p, exact: true });
    }

    Ok(Wilcoxon { statistic: w_plus, n, p_value: normal_p(&diffs, w_plus), exact: false })
}

fn normal_p(diffs: &[f64], w_plus: f64) -> f64 {
    let nf = diffs.len() as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = tie_sizes(diffs).iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    (2.0 * (1.0 - normal_cdf(z))).min(1.0)
}

/// Bonferroni-adjusted per-comparison significance level.
pub fn bonferroni(alpha: f64, k: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) || k == 0 {
        return Err(Error::InvalidArgument(format!("bonferroni needs alpha in (0,1) and k >= 1, got ({alpha}, {k})")));
    }
    Ok(alpha / k as f64)
}

fn sorted_magnitudes(diffs: &[f64]) -> Vec<(usize, f64)> {
    let mut idx: Vec<(usize, f64)> = diffs.iter().map(|d| d.abs()).enumerate().collect();
    idx.sort_by(|a, b| a.1.total_cmp(&b.1));
    idx
}

fn average_ranks(diffs: &[f64]) -> Vec<f64> {
    let idx = sorted_magnitudes(diffs);
    let mut ranks = vec![0.0; diffs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && idx[j + 1].1 == idx[i].1 {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for item in &idx[i..=j] {
            ranks[item.0] = r;
        }
        i = j + 1;
    }
    ranks
}

fn tie_sizes(diffs: &[f64]) -> Vec<usize> {
    let idx = sorted_magnitudes(diffs);
    let mut out = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && idx[j + 1].1 == idx[i].1 {
            j += 1;
        }
        out.push(j - i + 1);
        i = j + 1;
    }
    out
}

/// Counts sign assignments by doubled rank sum (average ranks are multiples of 1/2).
fn exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    for &r in &doubled {
        for s in (r..=total).rev() {
            counts[s] += counts[s - r];
        }
    }
    let all = (1u64 << ranks.len()) as f64;
    let w = (2.0 * w_plus).round() as usize;
    let lower: u64 = counts[..=w].iter().sum();
    let upper: u64 = counts[w..].iter().sum();
    (2.0 * lower.min(upper) as f64 / all).min(1.0)
}
