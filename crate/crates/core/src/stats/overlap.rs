use crate::error::{Error, Result};

/// Shared edges of width `width` from `floor(min)` past `max`, always at least
/// two bins.
pub fn uniform_edges(samples: &[&[f64]], width: f64) -> Result<Vec<f64>> {
    if !(width > 0.0) {
        return Err(Error::InvalidArgument(format!("bin width {width} must be positive")));
    }
    let all = samples.iter().flat_map(|s| s.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Empty("no finite samples to bin".into()));
    }
    let start = (lo / width).floor() * width;
    let bins = (((hi - start) / width).floor() as usize + 1).max(2);
    Ok((0..=bins).map(|i| start + i as f64 * width).collect())
}

/// Proportion of each group's samples in bins `[e_j, e_{j+1})`, the last bin
/// closed on the right.
pub fn histogram(sample: &[f64], edges: &[f64]) -> Result<Vec<f64>> {
    if edges.len() < 3 {
        return Err(Error::InvalidArgument("need at least two bins".into()));
    }
    if edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("bin edges must increase strictly".into()));
    }
    if sample.is_empty() {
        return Err(Error::Empty("empty group".into()));
    }
    let last = edges.len() - 1;
    let mut counts = vec![0.0; last];
    for &x in sample {
        if !(x >= edges[0] && x <= edges[last]) {
            return Err(Error::InvalidArgument(format!("value {x} outside the bin range")));
        }
        let j = edges.partition_point(|&e| e <= x).saturating_sub(1).min(last - 1);
        counts[j] += 1.0;
    }
    let n = sample.len() as f64;
    Ok(counts.into_iter().map(|c| c / n).collect())
}

/// n-distribution Bhattacharyya coefficient of discrete distributions over
/// the same bins: `Σ_j (Π_g p_g(j))^(1/n)`.
pub fn bhattacharyya_probabilities(groups: &[Vec<f64>]) -> Result<f64> {
    if groups.len() < 2 {
        return Err(Error::InvalidArgument("need at least two distributions".into()));
    }
    let bins = groups[0].len();
    if groups.iter().any(|g| g.len() != bins) {
        return Err(Error::DimensionMismatch {
            expected: bins,
            found: groups.iter().map(Vec::len).find(|&l| l != bins).unwrap_or(bins),
        });
    }
    let root = 1.0 / groups.len() as f64;
    Ok((0..bins)
        .map(|j| groups.iter().map(|g| g[j]).product::<f64>().powf(root))
        .sum())
}

/// Bhattacharyya coefficient of two or more samples histogrammed on shared edges.
pub fn bhattacharyya_n(samples: &[&[f64]], edges: &[f64]) -> Result<f64> {
    let probs = samples
        .iter()
        .map(|s| histogram(s, edges))
        .collect::<Result<Vec<_>>>()?;
    bhattacharyya_probabilities(&probs)
}
