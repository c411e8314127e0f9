//! Metrics, permutation inference, paired tests, distribution overlap and
//! ANCOVA effect sizes.

mod ancova;
mod metrics;
mod overlap;
mod paired;
mod permutation;

pub use ancova::{ancova_partial_eta2, AncovaResult};
pub use metrics::{
    balanced_accuracy, mean, mean_absolute_error, median, normalize_rows, quantile, sample_sd, ConfusionMatrix,
    PerformanceSamples,
};
pub use overlap::{bhattacharyya_n, bhattacharyya_probabilities, histogram, uniform_edges};
pub use paired::{
    bonferroni, cohens_d_paired, paired_t_one_tailed, wilcoxon_exact, wilcoxon_normal, wilcoxon_signed_rank,
    Alternative, WILCOXON_EXACT_MAX,
};
pub use permutation::{
    age_bins, age_group_permutation_test, permutation_p_value, permute_within, replica_rng, PermutationOutcome,
};
