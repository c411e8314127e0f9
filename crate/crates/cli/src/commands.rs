use std::path::{Path, PathBuf};

use serde::Serialize;

use harmonize_core::audit::{
    assess_efficacy, leakage_experiment, leakage_experiment_on, EfficacyOptions, LeakageOptions, Scale,
};
use harmonize_core::combat::{self, CombatOptions, CovariateModelSpec, HarmonizationModel};
use harmonize_core::data::{load_feature_table, write_feature_table, ColumnKind, Dataset, TableSchema};
use harmonize_core::fractal::{fractal_dimension, VoxelGrid};
use harmonize_core::pipeline::{run_cv, CvScheme, Gbt, Harmonizer, Metric, Pipeline, Stratification, Target};
use harmonize_core::simulate::{simulate_dataset, FeatureKind, SimulationConfig};
use harmonize_core::stats::{self, ancova_partial_eta2, bhattacharyya_n, uniform_edges};
use harmonize_core::Error;

use crate::manifest::{announce, output_error, write_json, write_report, Run};
use crate::{
    AncovaArgs, ApplyArgs, BcArgs, Cli, CliError, Command, CvArgs, EfficacyArgs, FdArgs, FitArgs, HarmonizeWhere,
    LeakageArgs, SimulateArgs, TableArgs,
};

type Outcome = Result<(), CliError>;

pub fn run(cli: &Cli) -> Outcome {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(Error::InvalidArgument("--threads must be >= 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let scale = if cli.global.paper_scale {
        Scale::Paper
    } else {
        Scale::Desk
    };
    let ctx = Ctx { cli, scale };
    match &cli.command {
        Command::Fit(a) => ctx.fit(a),
        Command::Apply(a) => ctx.apply(a),
        Command::Simulate(a) => ctx.simulate(a),
        Command::Cv(a) => ctx.cv(a),
        Command::Efficacy(a) => ctx.efficacy(a),
        Command::AuditLeakage(a) => ctx.audit_leakage(a),
        Command::Fd(a) => ctx.fd(a),
        Command::Bc(a) => ctx.bc(a),
        Command::Ancova(a) => ctx.ancova(a),
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
    scale: Scale,
}

fn covariate_spec(text: &str) -> Result<CovariateModelSpec, CliError> {
    Ok(text.parse::<CovariateModelSpec>()?)
}

fn spec_columns(spec: &CovariateModelSpec) -> Vec<String> {
    spec.terms.iter().map(|t| t.name.clone()).collect()
}

/// Loads a table with `needed` plus any extra covariate columns.
fn load(run: &mut Run, path: &Path, table: &TableArgs, needed: &[String]) -> Result<Dataset, CliError> {
    run.input(path)?;
    let mut names: Vec<String> = Vec::new();
    for n in needed.iter().chain(&table.extra_covariates) {
        if n != &table.site_column && !names.contains(n) {
            names.push(n.clone());
        }
    }
    let schema = TableSchema {
        id_column: table.id_column.clone(),
        site_column: table.site_column.clone(),
        covariates: names.into_iter().map(|n| (n, ColumnKind::Auto)).collect(),
        features: table.features.clone(),
    };
    Ok(load_feature_table(path, &schema)?)
}

fn truth_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.truth.json"))
}

fn parse_shape(shape: &str) -> Result<VoxelGrid, CliError> {
    let bad = || Error::InvalidArgument(format!("unknown shape '{shape}' (cube:N, slab:N, menger:LEVEL)"));
    let (kind, size) = shape.split_once(':').ok_or_else(bad)?;
    let size: usize = size.parse().map_err(|_| bad())?;
    Ok(match kind {
        "cube" => VoxelGrid::cube(size)?,
        "slab" => VoxelGrid::slab(size, size)?,
        "menger" if size <= 6 => VoxelGrid::menger(size as u32)?,
        _ => return Err(bad().into()),
    })
}

#[derive(Serialize)]
struct Summary {
    median: f64,
    iqr: f64,
    mean: f64,
}

#[derive(Serialize)]
struct GroupCount {
    name: String,
    n: usize,
}

impl Ctx<'_> {
    fn run(&self, name: &str) -> Run {
        Run::start(name, &self.cli.global)
    }

    fn seed(&self) -> u64 {
        self.cli.global.seed
    }

    fn fit(&self, a: &FitArgs) -> Outcome {
        let mut run = self.run("fit");
        let spec = covariate_spec(&a.covariates)?;
        let d = load(&mut run, &a.train, &a.table, &spec_columns(&spec))?;
        let model = combat::fit(&d, &spec, &CombatOptions::with_eb(!a.no_eb))?;
        model.export(&a.out).map_err(|e| output_error(&a.out, e))?;
        announce(&run.finish(serde_json::json!({
            "covariates": spec.to_string(),
            "empirical_bayes": !a.no_eb,
            "subjects": d.n_subjects(),
            "features": d.n_features(),
            "out": a.out,
        }))?)
    }

    fn apply(&self, a: &ApplyArgs) -> Outcome {
        let mut run = self.run("apply");
        run.input(&a.model)?;
        let model = HarmonizationModel::import(&a.model)?;
        let needed: Vec<String> = model.basis.terms.iter().map(|t| t.name.clone()).collect();
        let mut table = a.table.clone();
        table.features.get_or_insert_with(|| model.feature_names.clone());
        let d = load(&mut run, &a.data, &table, &needed)?;
        let out = model.transform_dataset(&d)?;
        write_feature_table(&out, &a.out).map_err(|e| output_error(&a.out, e))?;
        announce(&run.finish(serde_json::json!({ "subjects": out.n_subjects(), "out": a.out }))?)
    }

    fn simulate(&self, a: &SimulateArgs) -> Outcome {
        let run = self.run("simulate");
        let mut c = match (&a.preset, a.sites, a.per_site) {
            (Some(p), _, _) => SimulationConfig::preset(p, self.seed())?,
            (None, Some(k), Some(n)) => {
                let kind = match a.kind.as_str() {
                    "ct" => FeatureKind::Ct,
                    "fd" => FeatureKind::Fd,
                    other => return Err(Error::InvalidArgument(format!("unknown kind '{other}' (ct, fd)")).into()),
                };
                SimulationConfig::standard(kind, k, n, self.seed())?
            }
            _ => return Err(Error::InvalidArgument("give --preset or --sites with --per-site".into()).into()),
        };
        if let Some(g) = a.gamma_sd {
            c.gamma_sd = g;
        }
        if let Some(e) = a.epsilon_sd {
            c.epsilon_sd = e;
        }
        c.unit_scale |= a.unit_scale;
        let (d, truth) = simulate_dataset(&c)?;
        write_feature_table(&d, &a.out).map_err(|e| output_error(&a.out, e))?;
        let sidecar = truth_path(&a.out);
        write_json(&sidecar, &truth)?;
        announce(&run.finish(serde_json::json!({ "config": c, "out": a.out, "truth": sidecar }))?)
    }

    fn cv(&self, a: &CvArgs) -> Outcome {
        let mut run = self.run("cv");
        let spec = covariate_spec(&a.covariates)?;
        let mut needed = spec_columns(&spec);
        if a.target != "site" {
            needed.push(a.target.clone());
        }
        let d = load(&mut run, &a.data, &a.table, &needed)?;
        let target = if a.target == "site" {
            Target::site(&d)
        } else {
            Target::column(&d, &a.target)?
        };
        let stratify = match target {
            Target::Classes { .. } => Stratification::Target,
            Target::Values(_) => Stratification::Column("site".into()),
        };
        let reps = a.reps.unwrap_or(self.scale.repetitions());
        let scheme = CvScheme::new(a.folds, reps, stratify, self.seed())?;
        let metric = Metric::for_target(&target);
        let (data, pipeline) = match a.harmonize {
            HarmonizeWhere::None => (d.clone(), Pipeline::new(Gbt::default())),
            HarmonizeWhere::InCv => (
                d.clone(),
                Pipeline::new(Gbt::default()).with_step(Harmonizer::new(spec.clone())),
            ),
            HarmonizeWhere::All => {
                let y = combat::harmonize(&d, &spec, &CombatOptions::default())?;
                (d.with_features(y)?, Pipeline::new(Gbt::default()))
            }
        };
        let out = run_cv(&pipeline, &data, &target, &scheme, metric)?;
        let confusion = match target {
            Target::Classes { .. } => Some(out.confusion(&target)?),
            Target::Values(_) => None,
        };
        let result = serde_json::json!({
            "target": a.target,
            "metric": metric.name(),
            "summary": Summary {
                median: out.samples.median(),
                iqr: out.samples.iqr(),
                mean: out.samples.mean(),
            },
            "samples": out.samples,
            "confusion": confusion,
            "normalized_confusion": confusion.as_ref().map(|c| c.normalized()).transpose()?,
        });
        let manifest = run.finish(serde_json::json!({
            "harmonize": a.harmonize,
            "covariates": spec.to_string(),
            "scheme": scheme,
        }))?;
        write_report(&a.out, &manifest, &result)
    }

    fn efficacy(&self, a: &EfficacyArgs) -> Outcome {
        let mut run = self.run("efficacy");
        let spec = covariate_spec(&a.covariates)?;
        let mut needed = spec_columns(&spec);
        needed.push(a.age_column.clone());
        let d = load(&mut run, &a.data, &a.table, &needed)?;
        let mut options = EfficacyOptions::at_scale(self.scale, self.seed());
        options.scheme.folds = a.folds;
        options.scheme.repetitions = a.reps.unwrap_or(options.scheme.repetitions);
        options.n_perm = a.perms.unwrap_or(options.n_perm);
        options.age_column = a.age_column.clone();
        options.bin_width = a.bin_width;
        options.covariates = spec;
        let report = assess_efficacy(&d, a.mode, &options)?;
        let manifest = run.finish(&options)?;
        write_report(&a.out, &manifest, &report)
    }

    fn audit_leakage(&self, a: &LeakageArgs) -> Outcome {
        let mut run = self.run("audit-leakage");
        let mut options = LeakageOptions::at_scale(self.scale, self.seed());
        options.repetitions = a.reps.unwrap_or(options.repetitions);
        options.inner_repetitions = a.inner_reps.unwrap_or(options.inner_repetitions);
        options.not_leaked_arm = !a.no_not_leaked;
        options.comparisons = a.comparisons;
        options.covariates = covariate_spec(&a.covariates)?;
        let (report, source) = match (&a.preset, &a.data) {
            (Some(p), _) => {
                let c = SimulationConfig::preset(p, self.seed())?;
                (
                    leakage_experiment(&c, a.task, &options)?,
                    serde_json::json!({ "preset": p, "simulation": c }),
                )
            }
            (None, Some(path)) => {
                let mut needed = spec_columns(&options.covariates);
                needed.push("age".into());
                let d = load(&mut run, path, &a.table, &needed)?;
                (
                    leakage_experiment_on(&d, a.task, &options)?,
                    serde_json::json!({ "data": path }),
                )
            }
            (None, None) => return Err(Error::InvalidArgument("give --preset or --data".into()).into()),
        };
        let manifest = run.finish(serde_json::json!({ "source": source, "options": options }))?;
        write_report(&a.out, &manifest, &report)
    }

    fn fd(&self, a: &FdArgs) -> Outcome {
        let mut run = self.run("fd");
        let grid = match (&a.grid, &a.shape) {
            (Some(path), _) => {
                run.input(path)?;
                VoxelGrid::load(path)?
            }
            (None, Some(shape)) => parse_shape(shape)?,
            (None, None) => return Err(Error::InvalidArgument("give --grid or --shape".into()).into()),
        };
        let estimate = fractal_dimension(&grid, a.offsets, self.seed())?;
        let result = serde_json::json!({
            "dims": grid.dims(),
            "occupied": grid.n_occupied(),
            "fd": estimate.fd,
            "window": estimate.window,
            "curve": estimate.curve,
        });
        let manifest = run.finish(serde_json::json!({ "grid": a.grid, "shape": a.shape, "offsets": a.offsets }))?;
        write_report(&a.out, &manifest, &result)
    }

    fn bc(&self, a: &BcArgs) -> Outcome {
        let mut run = self.run("bc");
        let mut needed = vec![a.column.clone()];
        if a.group_by != a.table.site_column {
            needed.push(a.group_by.clone());
        }
        let d = load(&mut run, &a.data, &a.table, &needed)?;
        let values = d.numeric_covariate(&a.column)?;
        let (codes, names) = d.strata(&a.group_by, &a.table.site_column)?;
        let groups: Vec<Vec<f64>> = (0..names.len())
            .map(|g| (0..codes.len()).filter(|&r| codes[r] == g).map(|r| values[r]).collect())
            .collect();
        let present: Vec<usize> = (0..names.len()).filter(|&g| !groups[g].is_empty()).collect();
        let slices: Vec<&[f64]> = present.iter().map(|&g| groups[g].as_slice()).collect();
        let edges = uniform_edges(&slices, a.bin_width)?;
        let all = bhattacharyya_n(&slices, &edges)?;
        let pairwise = slices
            .iter()
            .map(|x| {
                slices
                    .iter()
                    .map(|y| bhattacharyya_n(&[x, y], &edges))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let result = serde_json::json!({
            "column": a.column,
            "group_by": a.group_by,
            "groups": present.iter().map(|&g| GroupCount { name: names[g].clone(), n: groups[g].len() }).collect::<Vec<_>>(),
            "bins": edges.len() - 1,
            "bc": all,
            "pairwise": pairwise,
            "mean": stats::mean(values),
        });
        let manifest = run.finish(serde_json::json!({ "bin_width": a.bin_width }))?;
        write_report(&a.out, &manifest, &result)
    }

    fn ancova(&self, a: &AncovaArgs) -> Outcome {
        let mut run = self.run("ancova");
        let spec = covariate_spec(&a.covariates)?;
        let d = load(&mut run, &a.data, &a.table, &spec_columns(&spec))?;
        let rows = d
            .feature_names()
            .iter()
            .map(|f| {
                let r = ancova_partial_eta2(&d, f, &spec)?;
                Ok(serde_json::json!({ "feature": f, "result": r }))
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let manifest = run.finish(serde_json::json!({ "covariates": spec.to_string() }))?;
        write_report(&a.out, &manifest, &rows)
    }
}
