use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::combat::{CovariateModelSpec, FittedBasis};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AncovaResult {
    pub partial_eta2: f64,
    pub f_statistic: f64,
    pub p_value: f64,
    pub ss_site: f64,
    pub ss_residual: f64,
    pub df_site: usize,
    pub df_residual: usize,
}

/// Site effect on one feature adjusted for covariates: intercept, effects-coded
/// site factor and the expanded covariates. With no interaction terms the
/// Type III site sum of squares is the residual increase when the site columns
/// are dropped.
pub fn ancova_partial_eta2(d: &Dataset, feature: &str, covariates: &CovariateModelSpec) -> Result<AncovaResult> {
    let f = d
        .feature_names()
        .iter()
        .position(|n| n == feature)
        .ok_or_else(|| Error::Schema(format!("no feature named '{feature}'")))?;
    let counts = d.site_counts();
    let present: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] > 0).collect();
    let k = present.len();
    if k < 2 {
        return Err(Error::InvalidArgument("site factor needs at least two sites".into()));
    }
    let level = |code: usize| present.iter().position(|&p| p == code).expect("present site");

    let basis = FittedBasis::fit(covariates, d)?;
    let c = basis.design(d)?;
    let n = d.n_subjects();
    let p_cov = c.ncols();

    // Columns: intercept, covariates, then k − 1 effects-coded site columns.
    let mut full = DMatrix::zeros(n, 1 + p_cov + k - 1);
    for r in 0..n {
        full[(r, 0)] = 1.0;
        for j in 0..p_cov {
            full[(r, 1 + j)] = c[(r, j)];
        }
        let s = level(d.site_codes()[r]);
        for j in 0..k - 1 {
            full[(r, 1 + p_cov + j)] = if s == j {
                1.0
            } else if s == k - 1 {
                -1.0
            } else {
                0.0
            };
        }
    }
    let reduced = full.columns(0, 1 + p_cov).into_owned();
    let y = d.features().columns(f, 1).into_owned();

    let rss_full = linalg::rss(&full, &y)?[0];
    let rss_reduced = linalg::rss(&reduced, &y)?[0];
    let df_site = k - 1;
    let df_residual = n
        .checked_sub(full.ncols())
        .filter(|&df| df > 0)
        .ok_or_else(|| Error::SingularDesign("no residual degrees of freedom".into()))?;
    let ss_site = (rss_reduced - rss_full).max(0.0);
    let ss_residual = rss_full;
    let total = ss_site + ss_residual;
    let partial_eta2 = if total > 0.0 { ss_site / total } else { 0.0 };
    let f_statistic = (ss_site / df_site as f64) / (ss_residual / df_residual as f64);
    let p_value = if f_statistic.is_finite() {
        FisherSnedecor::new(df_site as f64, df_residual as f64)
            .expect("valid F distribution")
            .sf(f_statistic)
    } else if ss_site > 0.0 {
        0.0
    } else {
        1.0
    };
    Ok(AncovaResult {
        partial_eta2,
        f_statistic,
        p_value,
        ss_site,
        ss_residual,
        df_site,
        df_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Covariate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn two_sites(offset: f64, noise: f64, n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sites: Vec<&str> = (0..n).map(|i| if i % 2 == 0 { "A" } else { "B" }).collect();
        let age: Vec<f64> = (0..n).map(|_| rng.random_range(20.0..80.0)).collect();
        let y = DMatrix::from_fn(n, 1, |r, _| {
            let e: f64 = rng.sample(StandardNormal);
            (if r % 2 == 1 { offset } else { 0.0 }) + noise * e
        });
        Dataset::new(
            (0..n).map(|i| i.to_string()).collect(),
            &sites,
            vec![Covariate::numeric("age", age)],
            vec!["y".into()],
            y,
        )
        .unwrap()
    }

    #[test]
    fn pure_site_difference_gives_eta_one() {
        let d = two_sites(1.0, 0.0, 40, 1);
        let r = ancova_partial_eta2(&d, "y", &CovariateModelSpec::none()).unwrap();
        assert!((r.partial_eta2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn null_case_has_small_eta() {
        let d = two_sites(0.0, 1.0, 4000, 2);
        let r = ancova_partial_eta2(&d, "y", &"age:quadratic".parse().unwrap()).unwrap();
        assert!(r.partial_eta2 < 0.01);
        assert!(r.p_value > 0.001);
    }

    #[test]
    fn confounded_design_is_singular() {
        let d = two_sites(1.0, 0.1, 20, 3);
        let sex: Vec<&str> = (0..20).map(|i| if i % 2 == 0 { "F" } else { "M" }).collect();
        let d = Dataset::new(
            d.subject_ids().to_vec(),
            &(0..20).map(|r| d.site_name(r).to_string()).collect::<Vec<_>>(),
            vec![Covariate::categorical("sex", &sex)],
            vec!["y".into()],
            d.features().clone(),
        )
        .unwrap();
        assert!(matches!(
            ancova_partial_eta2(&d, "y", &"sex".parse().unwrap()),
            Err(Error::SingularDesign(_))
        ));
    }
}
