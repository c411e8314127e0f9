//! ComBat location/scale harmonization with parametric empirical Bayes,
//! split into a fit step (parameters from training rows only) and a transform
//! step that applies stored parameters to any rows.
//!
//! Per feature `f`, the model is
//! `y = α_f + f_f(x) + γ_if + δ_if ε` for a subject at site `i`, and the
//! harmonized value is
//! `y* = (z − γ*_if) / δ*_if · σ_f + α_f + f_f(x)` with
//! `z = (y − α_f − f_f(x)) / σ_f`.

pub mod basis;

use std::collections::HashMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use basis::{Basis, CovariateModelSpec, CovariateTerm, FittedBasis, TermBasis};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombatOptions {
    pub empirical_bayes: bool,
    /// Stop when no location or squared-scale estimate moves by more than this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for CombatOptions {
    fn default() -> Self {
        Self {
            empirical_bayes: true,
            tolerance: 1e-6,
            max_iterations: 200,
        }
    }
}

impl CombatOptions {
    pub fn with_eb(empirical_bayes: bool) -> Self {
        Self {
            empirical_bayes,
            ..Self::default()
        }
    }
}

/// Hyperparameters of one site's priors, estimated across features:
/// `γ ~ Normal(gamma_bar, tau2)` and `δ² ~ InverseGamma(lambda, theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EbPrior {
    pub gamma_bar: f64,
    pub tau2: f64,
    pub lambda: f64,
    pub theta: f64,
}

impl EbPrior {
    /// Mean of the inverse-gamma prior on δ².
    pub fn scale_prior_mean(&self) -> f64 {
        self.theta / (self.lambda - 1.0)
    }
}

/// Per-site record of the fixed-point iteration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EbTrace {
    pub iterations: usize,
    /// Largest parameter change after each iteration.
    pub changes: Vec<f64>,
}

/// A fitted harmonizer. Matrices indexed `[site, feature]` follow the order of
/// `site_registry` and `feature_names`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonizationModel {
    pub feature_names: Vec<String>,
    pub site_registry: Vec<String>,
    pub eb_enabled: bool,
    pub basis: FittedBasis,
    /// `p × V`, one column per feature.
    pub covariate_coefficients: DMatrix<f64>,
    pub grand_means: Vec<f64>,
    pub pooled_scale: Vec<f64>,
    /// γ*, `k × V`, in units of `pooled_scale`.
    pub site_location: DMatrix<f64>,
    /// δ*, `k × V`, multiplicative.
    pub site_scale: DMatrix<f64>,
    /// Moment estimates γ̂ before shrinkage.
    pub location_moments: DMatrix<f64>,
    /// Moment estimates δ̂² before shrinkage.
    pub scale_moments: DMatrix<f64>,
    /// Empty when empirical Bayes is off.
    pub eb_priors: Vec<EbPrior>,
    pub eb_traces: Vec<EbTrace>,
}

/// Fits a harmonizer on `train`.
pub fn fit(train: &Dataset, spec: &CovariateModelSpec, options: &CombatOptions) -> Result<HarmonizationModel> {
    fit_inner(train, spec, options).map(|(model, _)| model)
}

/// Fits on `d` and returns the model with `model.transform(d)`.
pub fn fit_transform(
    d: &Dataset,
    spec: &CovariateModelSpec,
    options: &CombatOptions,
) -> Result<(HarmonizationModel, DMatrix<f64>)> {
    let model = fit(d, spec, options)?;
    let out = model.transform(d)?;
    Ok((model, out))
}

/// One-shot harmonization of `d` by itself: the values computed during the
/// fit from the standardized data matrix, without a separate transform pass.
pub fn harmonize(d: &Dataset, spec: &CovariateModelSpec, options: &CombatOptions) -> Result<DMatrix<f64>> {
    fit_inner(d, spec, options).map(|(_, y)| y)
}

fn fit_inner(
    train: &Dataset,
    spec: &CovariateModelSpec,
    options: &CombatOptions,
) -> Result<(HarmonizationModel, DMatrix<f64>)> {
    if !(options.tolerance > 0.0) || options.max_iterations == 0 {
        return Err(Error::InvalidArgument(
            "EB tolerance and iteration cap must be positive".into(),
        ));
    }
    let n = train.n_subjects();
    let v = train.n_features();
    if options.empirical_bayes && v < 2 {
        return Err(Error::InvalidArgument(
            "empirical Bayes pools across features and needs at least 2".into(),
        ));
    }

    // Sites present in the training rows, in registry order.
    let counts_all = train.site_counts();
    let mut local = vec![usize::MAX; counts_all.len()];
    let mut registry = Vec::new();
    let mut counts = Vec::new();
    for (i, &c) in counts_all.iter().enumerate() {
        if c == 0 {
            continue;
        }
        if c < 2 {
            return Err(Error::SiteTooSmall {
                site: train.site_registry()[i].clone(),
                count: c,
                required: 2,
            });
        }
        local[i] = registry.len();
        registry.push(train.site_registry()[i].clone());
        counts.push(c);
    }
    let k = registry.len();
    let site: Vec<usize> = train.site_codes().iter().map(|&c| local[c]).collect();

    let basis = FittedBasis::fit(spec, train)?;
    let c = basis.design(train)?;
    let p = c.ncols();
    let mut x = DMatrix::zeros(n, k + p);
    for r in 0..n {
        x[(r, site[r])] = 1.0;
        for j in 0..p {
            x[(r, k + j)] = c[(r, j)];
        }
    }
    let y = train.features();
    let b = linalg::lstsq(&x, y)?;

    let grand_means: Vec<f64> = (0..v)
        .map(|f| (0..k).map(|i| counts[i] as f64 / n as f64 * b[(i, f)]).sum())
        .collect();
    let coefficients = b.rows(k, p).into_owned();
    let resid = y - &x * &b;
    let pooled_scale: Vec<f64> = resid
        .column_iter()
        .map(|col| (col.norm_squared() / n as f64).sqrt())
        .collect();
    if let Some(f) = pooled_scale.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::Degenerate(format!(
            "feature '{}' has zero residual variance",
            train.feature_names()[f]
        )));
    }

    let stand = standard_mean(&c, &coefficients, &grand_means);
    let z = DMatrix::from_fn(n, v, |r, f| (y[(r, f)] - stand[(r, f)]) / pooled_scale[f]);

    let rows_of: Vec<Vec<usize>> = (0..k).map(|i| (0..n).filter(|&r| site[r] == i).collect()).collect();
    let mut gamma_hat = DMatrix::zeros(k, v);
    let mut delta_hat2 = DMatrix::zeros(k, v);
    for (i, rows) in rows_of.iter().enumerate() {
        let m = rows.len() as f64;
        for f in 0..v {
            let mean = rows.iter().map(|&r| z[(r, f)]).sum::<f64>() / m;
            let var = rows.iter().map(|&r| (z[(r, f)] - mean).powi(2)).sum::<f64>() / m;
            gamma_hat[(i, f)] = mean;
            delta_hat2[(i, f)] = var;
        }
    }
    for i in 0..k {
        for f in 0..v {
            if !(delta_hat2[(i, f)] > 0.0) {
                return Err(Error::Degenerate(format!(
                    "feature '{}' is constant within site '{}'",
                    train.feature_names()[f],
                    registry[i]
                )));
            }
        }
    }

    let (gamma_star, delta_star2, eb_priors, eb_traces) = if options.empirical_bayes {
        let mut g_star = DMatrix::zeros(k, v);
        let mut d_star = DMatrix::zeros(k, v);
        let mut priors = Vec::with_capacity(k);
        let mut traces = Vec::with_capacity(k);
        for i in 0..k {
            let g_hat: Vec<f64> = gamma_hat.row(i).iter().copied().collect();
            let d_hat: Vec<f64> = delta_hat2.row(i).iter().copied().collect();
            let prior = site_prior(&g_hat, &d_hat, &registry[i])?;
            let site_z: Vec<Vec<f64>> = (0..v)
                .map(|f| rows_of[i].iter().map(|&r| z[(r, f)]).collect())
                .collect();
            let (g, d, trace) =
                shrink(&site_z, &g_hat, &d_hat, &prior, options).ok_or_else(|| Error::NoConvergence {
                    site: registry[i].clone(),
                    iterations: options.max_iterations,
                })?;
            for f in 0..v {
                g_star[(i, f)] = g[f];
                d_star[(i, f)] = d[f];
            }
            priors.push(prior);
            traces.push(trace);
        }
        (g_star, d_star, priors, traces)
    } else {
        (gamma_hat.clone(), delta_hat2.clone(), Vec::new(), Vec::new())
    };
    let site_scale = delta_star2.map(f64::sqrt);

    let harmonized = DMatrix::from_fn(n, v, |r, f| {
        adjust(
            z[(r, f)],
            gamma_star[(site[r], f)],
            site_scale[(site[r], f)],
            pooled_scale[f],
            stand[(r, f)],
        )
    });

    let model = HarmonizationModel {
        feature_names: train.feature_names().to_vec(),
        site_registry: registry,
        eb_enabled: options.empirical_bayes,
        basis,
        covariate_coefficients: coefficients,
        grand_means,
        pooled_scale,
        site_location: gamma_star,
        site_scale,
        location_moments: gamma_hat,
        scale_moments: delta_hat2,
        eb_priors,
        eb_traces,
    };
    Ok((model, harmonized))
}

/// `α_f + Σ_j c_rj β_jf`, summed in a fixed order so every row's value is
/// independent of which other rows are present.
fn standard_mean(c: &DMatrix<f64>, beta: &DMatrix<f64>, alpha: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(c.nrows(), alpha.len(), |r, f| {
        let mut s = 0.0;
        for j in 0..c.ncols() {
            s += c[(r, j)] * beta[(j, f)];
        }
        alpha[f] + s
    })
}

#[inline]
fn adjust(z: f64, gamma: f64, delta: f64, sigma: f64, stand: f64) -> f64 {
    (z - gamma) / delta * sigma + stand
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let s2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, s2)
}

/// Method-of-moments hyperparameters across the features of one site.
fn site_prior(gamma_hat: &[f64], delta_hat2: &[f64], site: &str) -> Result<EbPrior> {
    let (gamma_bar, tau2) = mean_var(gamma_hat);
    let (m, s2) = mean_var(delta_hat2);
    if !(s2 > 0.0) {
        return Err(Error::Degenerate(format!(
            "site '{site}' has identical scale estimates for every feature"
        )));
    }
    Ok(EbPrior {
        gamma_bar,
        tau2,
        lambda: (2.0 * s2 + m * m) / s2,
        theta: (m * s2 + m * m * m) / s2,
    })
}

/// Fixed-point iteration for one site. `z[f]` holds the site's standardized
/// values of feature `f`. Returns `None` when the cap is reached.
fn shrink(
    z: &[Vec<f64>],
    gamma_hat: &[f64],
    delta_hat2: &[f64],
    prior: &EbPrior,
    options: &CombatOptions,
) -> Option<(Vec<f64>, Vec<f64>, EbTrace)> {
    let n = z[0].len() as f64;
    let mut g = gamma_hat.to_vec();
    let mut d = delta_hat2.to_vec();
    let mut trace = EbTrace::default();
    for it in 1..=options.max_iterations {
        let mut change = 0.0_f64;
        for f in 0..g.len() {
            let g_new = (prior.tau2 * n * gamma_hat[f] + d[f] * prior.gamma_bar) / (prior.tau2 * n + d[f]);
            let ss: f64 = z[f].iter().map(|&v| (v - g_new).powi(2)).sum();
            let d_new = (0.5 * ss + prior.theta) / (n / 2.0 + prior.lambda - 1.0);
            change = change.max((g_new - g[f]).abs()).max((d_new - d[f]).abs());
            g[f] = g_new;
            d[f] = d_new;
        }
        trace.changes.push(change);
        trace.iterations = it;
        if change < options.tolerance {
            return Some((g, d, trace));
        }
    }
    None
}

impl HarmonizationModel {
    pub fn n_sites(&self) -> usize {
        self.site_registry.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Harmonized feature matrix for `data` using only stored parameters.
    pub fn transform(&self, data: &Dataset) -> Result<DMatrix<f64>> {
        if data.feature_names() != self.feature_names.as_slice() {
            return Err(Error::Schema(format!(
                "feature names differ from the model's ({} expected, {} given)",
                self.feature_names.len(),
                data.n_features()
            )));
        }
        let index: HashMap<&str, usize> = self
            .site_registry
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let site = (0..data.n_subjects())
            .map(|r| {
                let name = data.site_name(r);
                index
                    .get(name)
                    .copied()
                    .ok_or_else(|| Error::UnknownSite(name.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let c = self.basis.design(data)?;
        let stand = standard_mean(&c, &self.covariate_coefficients, &self.grand_means);
        let y = data.features();
        Ok(DMatrix::from_fn(data.n_subjects(), self.n_features(), |r, f| {
            let sigma = self.pooled_scale[f];
            let z = (y[(r, f)] - stand[(r, f)]) / sigma;
            adjust(
                z,
                self.site_location[(site[r], f)],
                self.site_scale[(site[r], f)],
                sigma,
                stand[(r, f)],
            )
        }))
    }

    /// [`transform`](Self::transform) wrapped back into a dataset.
    pub fn transform_dataset(&self, data: &Dataset) -> Result<Dataset> {
        data.with_features(self.transform(data)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from(self)).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        match probe.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(v) => {
                return Err(Error::ModelFormat(format!(
                    "format_version {v} is not supported (expected {FORMAT_VERSION})"
                )))
            }
            None => return Err(Error::ModelFormat("missing format_version".into())),
        }
        let file: ModelFile = serde_json::from_value(probe).map_err(|e| Error::ModelFormat(e.to_string()))?;
        file.try_into()
    }

    pub fn export(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn import(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Row-major matrix with explicit dimensions.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MatrixFile {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixFile {
    fn from(m: &DMatrix<f64>) -> Self {
        MatrixFile {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }
}

impl MatrixFile {
    fn into_matrix(self, name: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        if self.rows != rows || self.cols != cols || self.data.len() != rows * cols {
            return Err(Error::ModelFormat(format!(
                "{name}: expected {rows}x{cols}, found {}x{} with {} values",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(rows, cols, &self.data))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    feature_names: Vec<String>,
    site_registry: Vec<String>,
    eb_enabled: bool,
    covariate_basis: FittedBasis,
    covariate_coefficients: MatrixFile,
    grand_means: Vec<f64>,
    pooled_scale: Vec<f64>,
    site_location: MatrixFile,
    site_scale: MatrixFile,
    location_moments: MatrixFile,
    scale_moments: MatrixFile,
    eb_priors: Vec<EbPrior>,
    eb_traces: Vec<EbTrace>,
}

impl From<&HarmonizationModel> for ModelFile {
    fn from(m: &HarmonizationModel) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            feature_names: m.feature_names.clone(),
            site_registry: m.site_registry.clone(),
            eb_enabled: m.eb_enabled,
            covariate_basis: m.basis.clone(),
            covariate_coefficients: (&m.covariate_coefficients).into(),
            grand_means: m.grand_means.clone(),
            pooled_scale: m.pooled_scale.clone(),
            site_location: (&m.site_location).into(),
            site_scale: (&m.site_scale).into(),
            location_moments: (&m.location_moments).into(),
            scale_moments: (&m.scale_moments).into(),
            eb_priors: m.eb_priors.clone(),
            eb_traces: m.eb_traces.clone(),
        }
    }
}

impl TryFrom<ModelFile> for HarmonizationModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let v = f.feature_names.len();
        let k = f.site_registry.len();
        let p = f.covariate_basis.n_columns();
        if v == 0 || k == 0 {
            return Err(Error::ModelFormat("model has no features or no sites".into()));
        }
        if f.grand_means.len() != v || f.pooled_scale.len() != v {
            return Err(Error::ModelFormat(
                "per-feature vectors do not match feature_names".into(),
            ));
        }
        if f.pooled_scale.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::ModelFormat("pooled_scale must be positive".into()));
        }
        if f.eb_enabled && (f.eb_priors.len() != k || f.eb_traces.len() != k) {
            return Err(Error::ModelFormat("eb_priors must hold one entry per site".into()));
        }
        let site_scale = f.site_scale.into_matrix("site_scale", k, v)?;
        if site_scale.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::ModelFormat("site_scale must be positive".into()));
        }
        Ok(HarmonizationModel {
            feature_names: f.feature_names,
            site_registry: f.site_registry,
            eb_enabled: f.eb_enabled,
            basis: f.covariate_basis,
            covariate_coefficients: f.covariate_coefficients.into_matrix("covariate_coefficients", p, v)?,
            grand_means: f.grand_means,
            pooled_scale: f.pooled_scale,
            site_location: f.site_location.into_matrix("site_location", k, v)?,
            site_scale,
            location_moments: f.location_moments.into_matrix("location_moments", k, v)?,
            scale_moments: f.scale_moments.into_matrix("scale_moments", k, v)?,
            eb_priors: f.eb_priors,
            eb_traces: f.eb_traces,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Covariate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Sites with location/scale distortions over a quadratic age trend.
    fn sample(sites: &[(f64, f64)], per_site: usize, v: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = sites.len() * per_site;
        let mut names = Vec::with_capacity(n);
        let mut age = Vec::with_capacity(n);
        let mut y = DMatrix::zeros(n, v);
        for r in 0..n {
            let s = r / per_site;
            names.push(format!("site{s}"));
            let a: f64 = rng.random_range(20.0..90.0);
            age.push(a);
            for f in 0..v {
                let e: f64 = rng.sample(StandardNormal);
                let (shift, scale) = sites[s];
                y[(r, f)] = 2.5 + 0.01 * f as f64 - 0.0009 * a - 0.00005 * a * a + shift + scale * 0.1 * e;
            }
        }
        Dataset::new(
            (0..n).map(|i| format!("s{i}")).collect(),
            &names,
            vec![Covariate::numeric("age", age)],
            (0..v).map(|f| format!("f{f}")).collect(),
            y,
        )
        .unwrap()
    }

    fn quad() -> CovariateModelSpec {
        "age:quadratic".parse().unwrap()
    }

    #[test]
    fn single_site_without_eb_is_identity() {
        let d = sample(&[(0.0, 1.0)], 40, 3, 1);
        let (m, y) = fit_transform(&d, &quad(), &CombatOptions::with_eb(false)).unwrap();
        assert!(m.site_location.iter().all(|g| g.abs() < 1e-12));
        assert!(m.site_scale.iter().all(|s| (s - 1.0).abs() < 1e-12));
        assert!((y - d.features()).abs().max() < 1e-10);
    }

    #[test]
    fn transform_reproduces_one_shot() {
        let d = sample(&[(0.1, 1.2), (-0.1, 0.8), (0.0, 1.0)], 30, 4, 2);
        for eb in [false, true] {
            let opts = CombatOptions::with_eb(eb);
            let (_, y) = fit_transform(&d, &quad(), &opts).unwrap();
            let one = harmonize(&d, &quad(), &opts).unwrap();
            assert!((y - one).abs().max() <= 1e-10);
        }
    }

    #[test]
    fn unseen_site_is_named() {
        let d = sample(&[(0.0, 1.0), (0.2, 1.0)], 10, 2, 3);
        let m = fit(&d, &quad(), &CombatOptions::default()).unwrap();
        let other = sample(&[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)], 3, 2, 4);
        match m.transform(&other) {
            Err(Error::UnknownSite(s)) => assert_eq!(s, "site2"),
            r => panic!("expected unknown site, got {r:?}"),
        }
    }

    #[test]
    fn singleton_site_and_single_feature_eb_are_rejected() {
        let d = sample(&[(0.0, 1.0), (0.2, 1.0)], 10, 2, 5);
        let rows: Vec<usize> = (0..11).collect();
        assert!(matches!(
            fit(&d.subset(&rows), &quad(), &CombatOptions::default()),
            Err(Error::SiteTooSmall { count: 1, .. })
        ));
        let one = sample(&[(0.0, 1.0), (0.2, 1.0)], 10, 1, 5);
        assert!(fit(&one, &quad(), &CombatOptions::default()).is_err());
        assert!(fit(&one, &quad(), &CombatOptions::with_eb(false)).is_ok());
    }

    #[test]
    fn shrinkage_stays_between_moments_and_priors() {
        let d = sample(&[(0.1, 1.3), (-0.15, 0.7), (0.05, 1.0), (0.0, 0.9)], 15, 6, 6);
        let m = fit(&d, &quad(), &CombatOptions::default()).unwrap();
        for i in 0..m.n_sites() {
            let prior = m.eb_priors[i];
            for f in 0..m.n_features() {
                let (g, gh) = (m.site_location[(i, f)], m.location_moments[(i, f)]);
                assert!((g - gh) * (g - prior.gamma_bar) <= 1e-15);
            }
            assert!(m.eb_traces[i].iterations < 200);
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let d = sample(&[(0.1, 1.2), (-0.1, 0.8)], 20, 3, 7);
        let m = fit(&d, &"age:spline5".parse().unwrap(), &CombatOptions::default()).unwrap();
        let back = HarmonizationModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.transform(&d).unwrap(), m.transform(&d).unwrap());
    }

    #[test]
    fn bad_model_files_are_format_errors() {
        let d = sample(&[(0.1, 1.2), (-0.1, 0.8)], 20, 3, 8);
        let json = fit(&d, &quad(), &CombatOptions::default()).unwrap().to_json();
        let truncated = &json[..json.len() / 2];
        assert!(matches!(
            HarmonizationModel::from_json(truncated),
            Err(Error::ModelFormat(_))
        ));
        let bumped = json.replacen("\"format_version\": 1", "\"format_version\": 99", 1);
        assert!(matches!(HarmonizationModel::from_json(&bumped), Err(Error::ModelFormat(m)) if m.contains("99")));
    }
}
