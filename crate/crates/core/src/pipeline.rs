//! Transformer/estimator composition and repeated cross-validation.
//!
//! Every step of a [`Pipeline`] is fitted on the training fold only and then
//! applied to both folds, so nothing learned from test rows reaches a model.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combat::{self, CombatOptions, CovariateModelSpec, HarmonizationModel};
use crate::data::{CovariateValues, Dataset};
use crate::error::{Error, Result};
use crate::predict::{self, GbtModel, GbtParams, Predictions};
use crate::stats::{self, ConfusionMatrix, PerformanceSamples};

/// Learns a state from training rows.
pub trait Transformer: Send + Sync {
    fn name(&self) -> &str;
    fn fit(&self, train: &Dataset) -> Result<Box<dyn FittedTransformer>>;
}

/// A fitted state applied to any rows; features are replaced, sites and
/// covariates pass through.
pub trait FittedTransformer: Send + Sync {
    fn transform(&self, data: &Dataset) -> Result<Dataset>;
}

pub trait Estimator: Send + Sync {
    fn name(&self) -> &str;
    fn fit(&self, train: &Dataset, target: &Target) -> Result<Box<dyn FittedEstimator>>;
}

pub trait FittedEstimator: Send + Sync {
    fn predict(&self, data: &Dataset) -> Result<Predictions>;
}

/// Prediction target, kept apart from the features so labels can be permuted
/// without touching the dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Classes { codes: Vec<usize>, names: Vec<String> },
    Values(Vec<f64>),
}

impl Target {
    pub fn site(d: &Dataset) -> Target {
        Target::Classes {
            codes: d.site_codes().to_vec(),
            names: d.site_registry().to_vec(),
        }
    }

    pub fn covariate(d: &Dataset, name: &str) -> Result<Target> {
        match d.covariate(name).map(|c| &c.values) {
            Some(CovariateValues::Numeric(v)) => Ok(Target::Values(v.clone())),
            Some(CovariateValues::Categorical { levels, codes }) => Ok(Target::Classes {
                codes: codes.clone(),
                names: levels.clone(),
            }),
            None => Err(Error::Schema(format!("no target column '{name}'"))),
        }
    }

    /// `site` or the name of a covariate.
    pub fn column(d: &Dataset, name: &str) -> Result<Target> {
        if name == "site" {
            Ok(Self::site(d))
        } else {
            Self::covariate(d, name)
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Target::Classes { codes, .. } => codes.len(),
            Target::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subset(&self, rows: &[usize]) -> Target {
        match self {
            Target::Classes { codes, names } => Target::Classes {
                codes: rows.iter().map(|&r| codes[r]).collect(),
                names: names.clone(),
            },
            Target::Values(v) => Target::Values(rows.iter().map(|&r| v[r]).collect()),
        }
    }

    /// Row `r` takes the label of row `perm[r]`.
    pub fn permuted(&self, perm: &[usize]) -> Target {
        self.subset(perm)
    }

    pub fn class_codes(&self) -> Option<&[usize]> {
        match self {
            Target::Classes { codes, .. } => Some(codes),
            Target::Values(_) => None,
        }
    }
}

/// The ComBat harmonizer as a pipeline step.
#[derive(Debug, Clone, PartialEq)]
pub struct Harmonizer {
    pub covariates: CovariateModelSpec,
    pub options: CombatOptions,
}

impl Harmonizer {
    pub fn new(covariates: CovariateModelSpec) -> Self {
        Self {
            covariates,
            options: CombatOptions::default(),
        }
    }
}

impl Transformer for Harmonizer {
    fn name(&self) -> &str {
        "harmonizer"
    }

    fn fit(&self, train: &Dataset) -> Result<Box<dyn FittedTransformer>> {
        Ok(Box::new(combat::fit(train, &self.covariates, &self.options)?))
    }
}

impl FittedTransformer for HarmonizationModel {
    fn transform(&self, data: &Dataset) -> Result<Dataset> {
        self.transform_dataset(data)
    }
}

/// Gradient-boosted trees; classifies class targets, regresses real ones.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Gbt {
    pub params: GbtParams,
}

impl Estimator for Gbt {
    fn name(&self) -> &str {
        "gbt"
    }

    fn fit(&self, train: &Dataset, target: &Target) -> Result<Box<dyn FittedEstimator>> {
        let model = match target {
            Target::Classes { codes, names } => {
                predict::train_classifier(train.features(), codes, names.len(), &self.params)?
            }
            Target::Values(v) => predict::train_regressor(train.features(), v, &self.params)?,
        };
        Ok(Box::new(model))
    }
}

impl FittedEstimator for GbtModel {
    fn predict(&self, data: &Dataset) -> Result<Predictions> {
        GbtModel::predict(self, data.features())
    }
}

/// Ordered transformers followed by one estimator.
#[derive(Clone)]
pub struct Pipeline {
    steps: Vec<Arc<dyn Transformer>>,
    estimator: Arc<dyn Estimator>,
}

impl Pipeline {
    pub fn new(estimator: impl Estimator + 'static) -> Self {
        Self {
            steps: Vec::new(),
            estimator: Arc::new(estimator),
        }
    }

    pub fn with_step(mut self, step: impl Transformer + 'static) -> Self {
        self.steps.push(Arc::new(step));
        self
    }

    pub fn step_names(&self) -> Vec<&str> {
        self.steps
            .iter()
            .map(|s| s.name())
            .chain([self.estimator.name()])
            .collect()
    }

    pub fn fit(&self, train: &Dataset, target: &Target) -> Result<FittedPipeline> {
        let mut states = Vec::with_capacity(self.steps.len());
        let mut current = train.clone();
        for step in &self.steps {
            let state = step.fit(&current)?;
            current = state.transform(&current)?;
            states.push(state);
        }
        let estimator = self.estimator.fit(&current, target)?;
        Ok(FittedPipeline { states, estimator })
    }
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline").field("steps", &self.step_names()).finish()
    }
}

/// One fitted state per step plus the fitted estimator.
pub struct FittedPipeline {
    states: Vec<Box<dyn FittedTransformer>>,
    estimator: Box<dyn FittedEstimator>,
}

impl FittedPipeline {
    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        let mut current = data.clone();
        for s in &self.states {
            current = s.transform(&current)?;
        }
        Ok(current)
    }

    pub fn predict(&self, data: &Dataset) -> Result<Predictions> {
        self.estimator.predict(&self.transform(data)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stratification {
    None,
    /// Stratify by the class target.
    Target,
    /// Stratify by `site` or a categorical covariate.
    Column(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvScheme {
    pub folds: usize,
    pub repetitions: usize,
    pub stratify: Stratification,
    pub seed: u64,
}

impl CvScheme {
    pub fn new(folds: usize, repetitions: usize, stratify: Stratification, seed: u64) -> Result<Self> {
        let s = Self {
            folds,
            repetitions,
            stratify,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidArgument("folds must be >= 2".into()));
        }
        if self.repetitions < 1 {
            return Err(Error::InvalidArgument("repetitions must be >= 1".into()));
        }
        Ok(())
    }

    /// Train/test index pairs of every fold of repetition `r`.
    pub fn splits(&self, d: &Dataset, target: &Target, repetition: usize) -> Result<Vec<Split>> {
        let seed = self.seed.wrapping_add(repetition as u64);
        match &self.stratify {
            Stratification::None => kfold(d.n_subjects(), self.folds, seed),
            Stratification::Target => {
                let codes = target
                    .class_codes()
                    .ok_or_else(|| Error::InvalidArgument("cannot stratify by a real-valued target".into()))?;
                stratified_kfold(codes, self.folds, seed)
            }
            Stratification::Column(col) => stratified_kfold(&d.strata(col, "site")?.0, self.folds, seed),
        }
    }
}

/// Sorted training and test row indices of one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn splits_from_assignment(fold_of: &[usize], folds: usize) -> Vec<Split> {
    (0..folds)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..fold_of.len()).partition(|&r| fold_of[r] == f);
            Split { train, test }
        })
        .collect()
}

/// Folds that keep every stratum spread evenly: members of each stratum are
/// shuffled and dealt round-robin, continuing the deal across strata so fold
/// totals also differ by at most one.
pub fn stratified_kfold(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<Split>> {
    if folds < 2 || folds > labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{folds} folds for {} rows",
            labels.len()
        )));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (r, &l) in labels.iter().enumerate() {
        members[l].push(r);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; labels.len()];
    let mut dealt = 0usize;
    for (s, rows) in members.iter_mut().enumerate() {
        if rows.is_empty() {
            continue;
        }
        if rows.len() < folds {
            return Err(Error::StratumTooSmall {
                stratum: s.to_string(),
                size: rows.len(),
                required: folds,
            });
        }
        rows.shuffle(&mut rng);
        for &r in rows.iter() {
            fold_of[r] = dealt % folds;
            dealt += 1;
        }
    }
    Ok(splits_from_assignment(&fold_of, folds))
}

/// Unstratified shuffled folds with sizes differing by at most one.
pub fn kfold(n: usize, folds: usize, seed: u64) -> Result<Vec<Split>> {
    if folds < 2 || folds > n {
        return Err(Error::InvalidArgument(format!("{folds} folds for {n} rows")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; n];
    for (i, &r) in order.iter().enumerate() {
        fold_of[r] = i % folds;
    }
    Ok(splits_from_assignment(&fold_of, folds))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    BalancedAccuracy,
    MeanAbsoluteError,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::BalancedAccuracy => "balanced_accuracy",
            Metric::MeanAbsoluteError => "mean_absolute_error",
        }
    }

    pub fn for_target(target: &Target) -> Metric {
        match target {
            Target::Classes { .. } => Metric::BalancedAccuracy,
            Target::Values(_) => Metric::MeanAbsoluteError,
        }
    }

    pub fn score(&self, actual: &Target, predicted: &Predictions) -> Result<f64> {
        match (self, actual, predicted) {
            (Metric::BalancedAccuracy, Target::Classes { codes, .. }, Predictions::Classes(p)) => {
                stats::balanced_accuracy(codes, p)
            }
            (Metric::MeanAbsoluteError, Target::Values(v), Predictions::Values(p)) => stats::mean_absolute_error(v, p),
            _ => Err(Error::InvalidArgument(format!(
                "metric {} does not fit this target",
                self.name()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub repetition: usize,
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub predictions: Predictions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub samples: PerformanceSamples,
    /// In (repetition, fold) order.
    pub folds: Vec<FoldRecord>,
}

impl CvOutcome {
    /// Test-fold predictions of every repetition pooled into one matrix.
    pub fn confusion(&self, target: &Target) -> Result<ConfusionMatrix> {
        let Target::Classes { codes, names } = target else {
            return Err(Error::InvalidArgument("confusion matrix needs a class target".into()));
        };
        let mut m = ConfusionMatrix::zeros(names.clone());
        for rec in &self.folds {
            let Predictions::Classes(p) = &rec.predictions else {
                return Err(Error::InvalidArgument("fold holds real-valued predictions".into()));
            };
            let actual: Vec<usize> = rec.test_indices.iter().map(|&r| codes[r]).collect();
            m.record(&actual, p)?;
        }
        Ok(m)
    }
}

/// Repeated k-fold evaluation. Repetition `r` draws its folds with seed
/// `scheme.seed + r`; folds run in parallel and are reported in
/// (repetition, fold) order.
pub fn run_cv(p: &Pipeline, d: &Dataset, target: &Target, scheme: &CvScheme, metric: Metric) -> Result<CvOutcome> {
    scheme.validate()?;
    if target.len() != d.n_subjects() {
        return Err(Error::DimensionMismatch {
            expected: d.n_subjects(),
            found: target.len(),
        });
    }
    let mut tasks = Vec::with_capacity(scheme.repetitions * scheme.folds);
    for rep in 0..scheme.repetitions {
        for (fold, split) in scheme.splits(d, target, rep)?.into_iter().enumerate() {
            tasks.push((rep, fold, split));
        }
    }
    let results = tasks
        .into_par_iter()
        .map(|(rep, fold, split)| {
            let run = || -> Result<(f64, FoldRecord)> {
                let fitted = p.fit(&d.subset(&split.train), &target.subset(&split.train))?;
                let predictions = fitted.predict(&d.subset(&split.test))?;
                let score = metric.score(&target.subset(&split.test), &predictions)?;
                Ok((
                    score,
                    FoldRecord {
                        repetition: rep,
                        fold,
                        test_indices: split.test,
                        predictions,
                    },
                ))
            };
            run().map_err(|e| e.in_fold(rep, fold))
        })
        .collect::<Result<Vec<_>>>()?;
    let (values, folds): (Vec<f64>, Vec<FoldRecord>) = results.into_iter().unzip();
    Ok(CvOutcome {
        samples: PerformanceSamples::new(metric.name(), scheme.repetitions, scheme.folds, values)?,
        folds,
    })
}
