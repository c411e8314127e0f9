//! Paired two-sample tests and effect sizes.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

use super::metrics::{mean, sample_sd};

/// One-sided alternative for paired comparisons of `a` against `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alternative {
    /// `a` tends to be smaller than `b`.
    Less,
    /// `a` tends to be larger than `b`.
    Greater,
}

/// Largest number of nonzero pairs handled by exact enumeration.
pub const WILCOXON_EXACT_MAX: usize = 25;

fn differences(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Signed-rank data on the nonzero differences: midranks of |d| doubled to
/// integers, with the sign of each difference.
struct SignedRanks {
    doubled: Vec<u64>,
    positive: Vec<bool>,
    tie_sizes: Vec<usize>,
}

fn signed_ranks(d: &[f64]) -> Result<SignedRanks> {
    let mut nz: Vec<f64> = d.iter().copied().filter(|&x| x != 0.0).collect();
    if nz.is_empty() {
        return Err(Error::Degenerate("all paired differences are zero".into()));
    }
    nz.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    let mut doubled = vec![0u64; nz.len()];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < nz.len() {
        let mut j = i;
        while j + 1 < nz.len() && nz[j + 1].abs() == nz[i].abs() {
            j += 1;
        }
        // Midrank of positions i..=j (1-based) is (i + j + 2) / 2.
        let r2 = (i + j + 2) as u64;
        doubled[i..=j].iter_mut().for_each(|r| *r = r2);
        tie_sizes.push(j - i + 1);
        i = j + 1;
    }
    Ok(SignedRanks {
        doubled,
        positive: nz.iter().map(|&x| x > 0.0).collect(),
        tie_sizes,
    })
}

/// Wilcoxon signed-rank test on `a − b`, zero differences dropped. Exact null
/// distribution up to [`WILCOXON_EXACT_MAX`] nonzero pairs, normal
/// approximation with tie and continuity correction above.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], alternative: Alternative) -> Result<f64> {
    let sr = signed_ranks(&differences(a, b)?)?;
    Ok(if sr.doubled.len() <= WILCOXON_EXACT_MAX {
        exact_p(&sr, alternative)
    } else {
        normal_p(&sr, alternative)
    })
}

/// Exact branch regardless of size (the count must stay below 64 pairs).
pub fn wilcoxon_exact(a: &[f64], b: &[f64], alternative: Alternative) -> Result<f64> {
    let sr = signed_ranks(&differences(a, b)?)?;
    if sr.doubled.len() >= 64 {
        return Err(Error::InvalidArgument("exact enumeration limited to 63 pairs".into()));
    }
    Ok(exact_p(&sr, alternative))
}

/// Normal-approximation branch regardless of size.
pub fn wilcoxon_normal(a: &[f64], b: &[f64], alternative: Alternative) -> Result<f64> {
    let sr = signed_ranks(&differences(a, b)?)?;
    Ok(normal_p(&sr, alternative))
}

fn exact_p(sr: &SignedRanks, alternative: Alternative) -> f64 {
    // counts[s] = number of sign assignments whose doubled positive-rank sum is s.
    let total: u64 = sr.doubled.iter().sum();
    let mut counts = vec![0.0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in &sr.doubled {
        let r = r as usize;
        for s in (0..=reach).rev() {
            let c = counts[s];
            if c != 0.0 {
                counts[s + r] += c;
            }
        }
        reach += r;
    }
    let observed: u64 = sr
        .doubled
        .iter()
        .zip(&sr.positive)
        .filter(|(_, &p)| p)
        .map(|(r, _)| r)
        .sum();
    let all = 2f64.powi(sr.doubled.len() as i32);
    let tail: f64 = match alternative {
        Alternative::Greater => counts[observed as usize..].iter().sum(),
        Alternative::Less => counts[..=observed as usize].iter().sum(),
    };
    tail / all
}

fn normal_p(sr: &SignedRanks, alternative: Alternative) -> f64 {
    let n = sr.doubled.len() as f64;
    let w: f64 = sr
        .doubled
        .iter()
        .zip(&sr.positive)
        .filter(|(_, &p)| p)
        .map(|(&r, _)| r as f64 / 2.0)
        .sum();
    let mu = n * (n + 1.0) / 4.0;
    let ties: f64 = sr.tie_sizes.iter().map(|&t| (t * t * t - t) as f64).sum();
    let sd = (n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - ties / 48.0).sqrt();
    let std = Normal::standard();
    match alternative {
        Alternative::Greater => std.sf((w - mu - 0.5) / sd),
        Alternative::Less => std.cdf((w - mu + 0.5) / sd),
    }
}

/// One-tailed paired Student t-test on `a − b` with `n − 1` degrees of freedom.
pub fn paired_t_one_tailed(a: &[f64], b: &[f64], alternative: Alternative) -> Result<f64> {
    let d = differences(a, b)?;
    if d.len() < 2 {
        return Err(Error::InvalidArgument("paired t-test needs at least 2 pairs".into()));
    }
    let sd = sample_sd(&d);
    if !(sd > 0.0) {
        return Err(Error::Degenerate("paired differences have zero variance".into()));
    }
    let n = d.len() as f64;
    let t = mean(&d) / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("valid t distribution");
    // Lower tail on the side being tested keeps precision for tiny p.
    Ok(match alternative {
        Alternative::Less => dist.cdf(t),
        Alternative::Greater => dist.cdf(-t),
    })
}

/// Bonferroni adjustment `min(1, m·p)`.
pub fn bonferroni(p: f64, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("number of comparisons must be >= 1".into()));
    }
    Ok((p * m as f64).min(1.0))
}

/// Paired effect size `(mean(external) − mean(internal)) / sd(external − internal)`.
/// Identical samples give 0.
pub fn cohens_d_paired(external: &[f64], internal: &[f64]) -> Result<f64> {
    let d = differences(external, internal)?;
    if d.len() < 2 {
        return Err(Error::InvalidArgument("effect size needs at least 2 pairs".into()));
    }
    if d.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }
    let sd = sample_sd(&d);
    if !(sd > 0.0) {
        return Err(Error::Degenerate("differences have zero standard deviation".into()));
    }
    Ok((mean(external) - mean(internal)) / sd)
}
