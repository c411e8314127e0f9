use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bin index per subject: `floor((age − min_age) / width)`.
pub fn age_bins(age: &[f64], width: f64) -> Result<Vec<usize>> {
    if !(width > 0.0) {
        return Err(Error::InvalidArgument(format!("bin width {width} must be positive")));
    }
    let lo = age.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(age.iter().map(|&a| ((a - lo) / width).floor() as usize).collect())
}

/// Row permutation that only exchanges rows sharing a stratum. Applying it as
/// `labels[perm[r]]` shuffles labels within strata.
pub fn permute_within(strata: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let k = strata.iter().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (r, &s) in strata.iter().enumerate() {
        members[s].push(r);
    }
    let mut perm = vec![0; strata.len()];
    for rows in &members {
        let mut shuffled = rows.clone();
        shuffled.shuffle(rng);
        for (&dst, &src) in rows.iter().zip(&shuffled) {
            perm[dst] = src;
        }
    }
    perm
}

/// Generator for replica `i` of a permutation run.
pub fn replica_rng(seed: u64, replica: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationOutcome {
    pub observed: f64,
    pub p_value: f64,
    pub n_perm: usize,
    /// Metric under each permutation, in replica order.
    pub null: Vec<f64>,
    /// Subjects alone in their age bin; their labels never move.
    pub fixed_subjects: usize,
}

/// Age-stratified permutation test with the add-one estimator
/// `p = (#{null ≥ observed} + 1) / (n_perm + 1)`.
///
/// `null_metric(perm, replica)` must return the metric computed after
/// relabeling row `r` with the label of row `perm[r]`. Replicas run in
/// parallel; results do not depend on scheduling.
pub fn age_group_permutation_test<F>(
    observed: f64,
    null_metric: F,
    age: &[f64],
    bin_width: f64,
    n_perm: usize,
    seed: u64,
) -> Result<PermutationOutcome>
where
    F: Fn(&[usize], usize) -> Result<f64> + Sync,
{
    if n_perm == 0 {
        return Err(Error::InvalidArgument("n_perm must be >= 1".into()));
    }
    let bins = age_bins(age, bin_width)?;
    let mut sizes = std::collections::HashMap::new();
    bins.iter().for_each(|&b| *sizes.entry(b).or_insert(0usize) += 1);
    let fixed_subjects = sizes.values().filter(|&&s| s == 1).count();
    let null = (0..n_perm)
        .into_par_iter()
        .map(|i| {
            let perm = permute_within(&bins, &mut replica_rng(seed, i));
            null_metric(&perm, i)
        })
        .collect::<Result<Vec<f64>>>()?;
    let p_value = permutation_p_value(observed, &null);
    Ok(PermutationOutcome {
        observed,
        p_value,
        n_perm,
        null,
        fixed_subjects,
    })
}

pub fn permutation_p_value(observed: f64, null: &[f64]) -> f64 {
    let hits = null.iter().filter(|&&v| v >= observed).count();
    (hits + 1) as f64 / (null.len() + 1) as f64
}
