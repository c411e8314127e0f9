//! The two evaluation protocols: harmonization efficacy (is the site still
//! predictable after harmonization?) and the hold-out leakage experiment
//! (does harmonizing before splitting inflate internal performance?).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combat::{self, CombatOptions, CovariateModelSpec};
use crate::data::{split_indices, Dataset};
use crate::error::{Error, Result};
use crate::pipeline::{run_cv, CvScheme, Gbt, Harmonizer, Metric, Pipeline, Stratification, Target};
use crate::predict::GbtParams;
use crate::simulate::{simulate_dataset, SimulationConfig};
use crate::stats::{
    self, age_group_permutation_test, cohens_d_paired, paired_t_one_tailed, wilcoxon_signed_rank, Alternative,
    ConfusionMatrix, PerformanceSamples,
};

pub const SIGNIFICANCE: f64 = 0.05;

/// Repetition and permutation counts for quick runs and for full-size runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scale {
    Desk,
    Paper,
}

impl Scale {
    pub fn repetitions(self) -> usize {
        match self {
            Scale::Desk => 20,
            Scale::Paper => 100,
        }
    }

    pub fn permutations(self) -> usize {
        match self {
            Scale::Desk => 1000,
            Scale::Paper => 5000,
        }
    }

    /// Repetitions of the inner 5-fold CV in the leakage experiment.
    pub fn inner_repetitions(self) -> usize {
        match self {
            Scale::Desk => 1,
            Scale::Paper => 10,
        }
    }
}

fn default_covariates() -> CovariateModelSpec {
    "age:spline5".parse().expect("valid covariate spec")
}

// ── Efficacy ───────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EfficacyMode {
    /// No harmonization.
    Raw,
    /// Harmonize the whole dataset once, then cross-validate (leaky on purpose).
    HarmonizeAll,
    /// Harmonizer fitted inside every training fold.
    HarmonizerInCv,
}

impl std::str::FromStr for EfficacyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Self::Raw),
            "harmonize_all" | "harmonize-all" => Ok(Self::HarmonizeAll),
            "harmonizer_in_cv" | "harmonizer-in-cv" => Ok(Self::HarmonizerInCv),
            _ => Err(Error::InvalidArgument(format!(
                "unknown mode '{s}' (raw, harmonize_all, harmonizer_in_cv)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// Site prediction is indistinguishable from chance.
    Removed,
    /// Above chance, but significantly below the raw-data accuracy.
    Reduced,
    NotReduced,
}

impl Verdict {
    pub fn decide(permutation_p: f64, wilcoxon_p: Option<f64>) -> Verdict {
        if permutation_p >= SIGNIFICANCE {
            Verdict::Removed
        } else if wilcoxon_p.is_some_and(|p| p < SIGNIFICANCE) {
            Verdict::Reduced
        } else {
            Verdict::NotReduced
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficacyOptions {
    pub scheme: CvScheme,
    pub n_perm: usize,
    pub age_column: String,
    pub bin_width: f64,
    pub covariates: CovariateModelSpec,
    pub combat: CombatOptions,
    pub gbt: GbtParams,
}

impl EfficacyOptions {
    pub fn at_scale(scale: Scale, seed: u64) -> Self {
        Self {
            scheme: CvScheme {
                folds: 5,
                repetitions: scale.repetitions(),
                stratify: Stratification::Target,
                seed,
            },
            n_perm: scale.permutations(),
            age_column: "age".into(),
            bin_width: 5.0,
            covariates: default_covariates(),
            combat: CombatOptions::default(),
            gbt: GbtParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficacyReport {
    pub mode: EfficacyMode,
    pub raw_samples: PerformanceSamples,
    /// Absent in raw mode, where the tested samples are the raw ones.
    pub harmonized_samples: Option<PerformanceSamples>,
    /// Median over repetitions of the tested configuration.
    pub observed: f64,
    pub chance_level: f64,
    pub permutation_p: f64,
    pub n_perm: usize,
    pub null_distribution: Vec<f64>,
    pub wilcoxon_p: Option<f64>,
    pub verdict: Verdict,
    pub raw_confusion: ConfusionMatrix,
    pub harmonized_confusion: Option<ConfusionMatrix>,
}

/// Site-prediction efficacy assessment.
///
/// The permutation null reruns one repetition of the same CV per replica with
/// site labels shuffled within age bins; features, covariates and the site
/// column seen by the harmonizer are left untouched.
pub fn assess_efficacy(d: &Dataset, mode: EfficacyMode, options: &EfficacyOptions) -> Result<EfficacyReport> {
    options.scheme.validate()?;
    if d.n_sites() < 2 {
        return Err(Error::InvalidArgument("efficacy needs at least two sites".into()));
    }
    let target = Target::site(d);
    let metric = Metric::BalancedAccuracy;
    let gbt = Gbt { params: options.gbt };
    let harmonizer = Harmonizer {
        covariates: options.covariates.clone(),
        options: options.combat,
    };

    let raw_pipeline = Pipeline::new(gbt);
    let raw = run_cv(&raw_pipeline, d, &target, &options.scheme, metric)?;

    let (data, pipeline) = match mode {
        EfficacyMode::Raw => (d.clone(), raw_pipeline.clone()),
        EfficacyMode::HarmonizeAll => {
            let y = combat::harmonize(d, &options.covariates, &options.combat)?;
            (d.with_features(y)?, raw_pipeline.clone())
        }
        EfficacyMode::HarmonizerInCv => (d.clone(), Pipeline::new(gbt).with_step(harmonizer)),
    };
    let tested = match mode {
        EfficacyMode::Raw => None,
        _ => Some(run_cv(&pipeline, &data, &target, &options.scheme, metric)?),
    };
    let tested_samples = tested.as_ref().map_or(&raw.samples, |t| &t.samples);
    let observed = tested_samples.median();

    let null_scheme = CvScheme {
        repetitions: 1,
        ..options.scheme.clone()
    };
    let age = d.numeric_covariate(&options.age_column)?;
    let perm = age_group_permutation_test(
        observed,
        |perm, replica| {
            let scheme = CvScheme {
                seed: null_scheme.seed.wrapping_add(replica as u64),
                ..null_scheme.clone()
            };
            Ok(run_cv(&pipeline, &data, &target.permuted(perm), &scheme, metric)?
                .samples
                .mean())
        },
        age,
        options.bin_width,
        options.n_perm,
        options.scheme.seed,
    )?;

    let wilcoxon_p = match &tested {
        None => None,
        // Identical accuracies everywhere carry no evidence of a reduction.
        Some(t) => Some(
            match wilcoxon_signed_rank(&t.samples.values, &raw.samples.values, Alternative::Less) {
                Ok(p) => p,
                Err(Error::Degenerate(_)) => 1.0,
                Err(e) => return Err(e),
            },
        ),
    };
    Ok(EfficacyReport {
        mode,
        raw_confusion: raw.confusion(&target)?,
        harmonized_confusion: tested.as_ref().map(|t| t.confusion(&target)).transpose()?,
        harmonized_samples: tested.map(|t| t.samples),
        raw_samples: raw.samples,
        observed,
        chance_level: 1.0 / d.site_counts().iter().filter(|&&c| c > 0).count() as f64,
        permutation_p: perm.p_value,
        n_perm: perm.n_perm,
        null_distribution: perm.null,
        verdict: Verdict::decide(perm.p_value, wilcoxon_p),
        wilcoxon_p,
    })
}

// ── Leakage experiment ─────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakageTask {
    Site,
    Age,
}

impl std::str::FromStr for LeakageTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "site" => Ok(Self::Site),
            "age" => Ok(Self::Age),
            _ => Err(Error::InvalidArgument(format!("unknown task '{s}' (site, age)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageOptions {
    pub repetitions: usize,
    pub holdout_fraction: f64,
    /// Share of the data set used to fit the external arm's harmonizer.
    pub harmonizer_fraction: f64,
    pub inner_folds: usize,
    pub inner_repetitions: usize,
    pub covariates: CovariateModelSpec,
    pub combat: CombatOptions,
    pub gbt: GbtParams,
    /// Run the harmonizer-in-pipeline arm (the other two arms always run).
    pub not_leaked_arm: bool,
    /// Number of comparisons for the Bonferroni adjustment.
    pub comparisons: usize,
    pub seed: u64,
}

impl LeakageOptions {
    pub fn at_scale(scale: Scale, seed: u64) -> Self {
        Self {
            repetitions: scale.repetitions(),
            holdout_fraction: 0.5,
            harmonizer_fraction: 0.8,
            inner_folds: 5,
            inner_repetitions: scale.inner_repetitions(),
            covariates: default_covariates(),
            combat: CombatOptions::default(),
            gbt: GbtParams::default(),
            not_leaked_arm: true,
            comparisons: 2,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.repetitions < 2 {
            return Err(Error::InvalidArgument(
                "leakage experiment needs at least 2 repetitions".into(),
            ));
        }
        if self.comparisons < 1 {
            return Err(Error::InvalidArgument("comparisons must be >= 1".into()));
        }
        CvScheme::new(self.inner_folds, self.inner_repetitions, Stratification::None, 0).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSamples {
    /// One value per repetition.
    pub values: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

impl ArmSamples {
    fn new(values: Vec<f64>) -> Self {
        Self {
            mean: stats::mean(&values),
            sd: stats::sample_sd(&values),
            values,
        }
    }
}

/// One internal arm against the external arm; `None` when the paired
/// differences have no spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmComparison {
    pub p_value: Option<f64>,
    pub p_adjusted: Option<f64>,
    pub cohens_d: Option<f64>,
}

impl ArmComparison {
    fn new(external: &ArmSamples, internal: &ArmSamples, comparisons: usize) -> Result<Self> {
        let p = match paired_t_one_tailed(&internal.values, &external.values, Alternative::Less) {
            Ok(p) => Some(p),
            Err(Error::Degenerate(_)) => None,
            Err(e) => return Err(e),
        };
        let d = match cohens_d_paired(&external.values, &internal.values) {
            Ok(d) => Some(d),
            Err(Error::Degenerate(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            p_value: p,
            p_adjusted: p.map(|p| stats::bonferroni(p, comparisons)).transpose()?,
            cohens_d: d,
        })
    }
}

/// Per-repetition record of the shared split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitFingerprint {
    pub repetition: usize,
    /// Digest of the data-set rows after the hold-out split.
    pub holdout: u64,
    /// Digest of the inner CV folds seen by the two internal arms.
    pub inner_folds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub task: LeakageTask,
    pub metric: String,
    pub options: LeakageOptions,
    pub external: ArmSamples,
    pub internal_leaked: ArmSamples,
    pub internal_not_leaked: Option<ArmSamples>,
    pub leaked_vs_external: ArmComparison,
    pub not_leaked_vs_external: Option<ArmComparison>,
    pub fingerprints: Vec<SplitFingerprint>,
}

impl LeakageReport {
    /// `mean(external) − mean(leaked)`.
    pub fn leakage_gap(&self) -> f64 {
        self.external.mean - self.internal_leaked.mean
    }
}

struct Repetition {
    external: f64,
    leaked: f64,
    not_leaked: Option<f64>,
    fingerprint: SplitFingerprint,
}

fn fnv1a(parts: impl IntoIterator<Item = usize>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        for b in (p as u64).to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Simulates data from `c` and runs [`leakage_experiment_on`].
pub fn leakage_experiment(c: &SimulationConfig, task: LeakageTask, options: &LeakageOptions) -> Result<LeakageReport> {
    let (d, _) = simulate_dataset(c)?;
    leakage_experiment_on(&d, task, options)
}

/// Hold-out leakage experiment on a fixed dataset. Each repetition draws a
/// new site-stratified hold-out split shared by all three arms:
///
/// - external: harmonizer fitted on a stratified share of the data set,
///   predictor trained on the whole harmonized data set, scored on the
///   harmonized external set;
/// - not leaked: harmonizer and predictor cross-validated together;
/// - leaked: data set harmonized once, then the predictor cross-validated.
pub fn leakage_experiment_on(d: &Dataset, task: LeakageTask, options: &LeakageOptions) -> Result<LeakageReport> {
    options.validate()?;
    let (target_of, metric): (fn(&Dataset) -> Result<Target>, Metric) = match task {
        LeakageTask::Site => (|d| Ok(Target::site(d)), Metric::BalancedAccuracy),
        LeakageTask::Age => (|d| Target::covariate(d, "age"), Metric::MeanAbsoluteError),
    };
    let gbt = Gbt { params: options.gbt };
    let harmonizer = Harmonizer {
        covariates: options.covariates.clone(),
        options: options.combat,
    };
    let in_pipeline = Pipeline::new(gbt).with_step(harmonizer);
    let predictor_only = Pipeline::new(gbt);

    let reps = (0..options.repetitions)
        .into_par_iter()
        .map(|rep| -> Result<Repetition> {
            let seed = options.seed.wrapping_add(rep as u64);
            let (dev_rows, ext_rows) = split_indices(d, options.holdout_fraction, "site", seed)?;
            let dev = d.subset(&dev_rows);
            let ext = d.subset(&ext_rows);
            let dev_target = target_of(&dev)?;
            let ext_target = target_of(&ext)?;

            let (fit_rows, _) = split_indices(&dev, options.harmonizer_fraction, "site", seed)?;
            let model = combat::fit(&dev.subset(&fit_rows), &options.covariates, &options.combat)?;
            let fitted = predictor_only.fit(&model.transform_dataset(&dev)?, &dev_target)?;
            let external = metric.score(&ext_target, &fitted.predict(&model.transform_dataset(&ext)?)?)?;

            let scheme = CvScheme::new(
                options.inner_folds,
                options.inner_repetitions,
                Stratification::Column("site".into()),
                seed,
            )?;
            let mut fold_digest = Vec::new();
            for r in 0..scheme.repetitions {
                for s in scheme.splits(&dev, &dev_target, r)? {
                    fold_digest.extend(s.test);
                    fold_digest.push(usize::MAX);
                }
            }
            let harmonized_dev = dev.with_features(combat::harmonize(&dev, &options.covariates, &options.combat)?)?;
            let leaked = run_cv(&predictor_only, &harmonized_dev, &dev_target, &scheme, metric)?
                .samples
                .mean();
            let not_leaked = if options.not_leaked_arm {
                Some(run_cv(&in_pipeline, &dev, &dev_target, &scheme, metric)?.samples.mean())
            } else {
                None
            };
            Ok(Repetition {
                external,
                leaked,
                not_leaked,
                fingerprint: SplitFingerprint {
                    repetition: rep,
                    holdout: fnv1a(dev_rows),
                    inner_folds: fnv1a(fold_digest),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let external = ArmSamples::new(reps.iter().map(|r| r.external).collect());
    let internal_leaked = ArmSamples::new(reps.iter().map(|r| r.leaked).collect());
    let internal_not_leaked = options
        .not_leaked_arm
        .then(|| ArmSamples::new(reps.iter().map(|r| r.not_leaked.expect("arm ran")).collect()));
    let leaked_vs_external = ArmComparison::new(&external, &internal_leaked, options.comparisons)?;
    let not_leaked_vs_external = internal_not_leaked
        .as_ref()
        .map(|nl| ArmComparison::new(&external, nl, options.comparisons))
        .transpose()?;
    Ok(LeakageReport {
        task,
        metric: metric.name().into(),
        options: options.clone(),
        external,
        internal_leaked,
        internal_not_leaked,
        leaked_vs_external,
        not_leaked_vs_external,
        fingerprints: reps.into_iter().map(|r| r.fingerprint).collect(),
    })
}
