//! Python bindings. Tables cross the boundary as lists of rows; reports come
//! back as plain dicts.

use std::collections::HashMap;
use std::path::PathBuf;

use harmonize_core::audit::{self, EfficacyMode, EfficacyOptions, LeakageOptions, LeakageTask, Scale};
use harmonize_core::combat::{self, CombatOptions, CovariateModelSpec};
use harmonize_core::data::{self, Covariate, TableSchema};
use harmonize_core::fractal;
use harmonize_core::simulate::{simulate_dataset, SimulationConfig};
use harmonize_core::stats::{self, Alternative};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn py_err(e: harmonize_core::Error) -> PyErr {
    match e {
        harmonize_core::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait OrPy<T> {
    fn or_py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for harmonize_core::Result<T> {
    fn or_py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn spec(text: &str) -> PyResult<CovariateModelSpec> {
    text.parse().or_py()
}

/// Serializes through JSON into Python dicts and lists.
fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn matrix(values: &[Vec<f64>], ncols: usize) -> PyResult<DMatrix<f64>> {
    if values.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err(format!("every feature row needs {ncols} values")));
    }
    Ok(DMatrix::from_fn(values.len(), ncols, |r, c| values[r][c]))
}

/// Multi-site feature table.
#[pyclass(module = "harmonize", frozen)]
struct Dataset {
    inner: data::Dataset,
}

#[pymethods]
impl Dataset {
    #[new]
    #[pyo3(signature = (subject_ids, sites, feature_names, features, numeric=None, categorical=None))]
    fn new(
        subject_ids: Vec<String>,
        sites: Vec<String>,
        feature_names: Vec<String>,
        features: Vec<Vec<f64>>,
        numeric: Option<HashMap<String, Vec<f64>>>,
        categorical: Option<HashMap<String, Vec<String>>>,
    ) -> PyResult<Self> {
        let mut covariates: Vec<Covariate> = Vec::new();
        let mut numeric: Vec<_> = numeric.unwrap_or_default().into_iter().collect();
        numeric.sort_by(|a, b| a.0.cmp(&b.0));
        covariates.extend(numeric.into_iter().map(|(n, v)| Covariate::numeric(n, v)));
        let mut categorical: Vec<_> = categorical.unwrap_or_default().into_iter().collect();
        categorical.sort_by(|a, b| a.0.cmp(&b.0));
        covariates.extend(categorical.iter().map(|(n, v)| Covariate::categorical(n.clone(), v)));
        let x = matrix(&features, feature_names.len())?;
        let inner = data::Dataset::new(subject_ids, &sites, covariates, feature_names, x).or_py()?;
        Ok(Self { inner })
    }

    /// Reads a CSV with `subject_id` and `site` columns; `covariates` are
    /// loaded as covariates and every other column as a feature.
    #[staticmethod]
    #[pyo3(signature = (path, covariates=Vec::new()))]
    fn read_csv(path: PathBuf, covariates: Vec<String>) -> PyResult<Self> {
        let inner = data::load_feature_table(&path, &TableSchema::with_covariates(&covariates)).or_py()?;
        Ok(Self { inner })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        data::write_feature_table(&self.inner, &path).or_py()
    }

    #[getter]
    fn n_subjects(&self) -> usize {
        self.inner.n_subjects()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    #[getter]
    fn subject_ids(&self) -> Vec<String> {
        self.inner.subject_ids().to_vec()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names().to_vec()
    }

    /// Sorted site names.
    #[getter]
    fn site_names(&self) -> Vec<String> {
        self.inner.site_registry().to_vec()
    }

    /// Site name of every row.
    #[getter]
    fn sites(&self) -> Vec<String> {
        (0..self.inner.n_subjects())
            .map(|r| self.inner.site_name(r).to_string())
            .collect()
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        rows(self.inner.features())
    }

    fn numeric_covariate(&self, name: &str) -> PyResult<Vec<f64>> {
        Ok(self.inner.numeric_covariate(name).or_py()?.to_vec())
    }

    fn subset(&self, rows: Vec<usize>) -> PyResult<Self> {
        if let Some(&r) = rows.iter().find(|&&r| r >= self.inner.n_subjects()) {
            return Err(PyValueError::new_err(format!("row {r} out of range")));
        }
        Ok(Self {
            inner: self.inner.subset(&rows),
        })
    }

    fn __len__(&self) -> usize {
        self.inner.n_subjects()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(subjects={}, features={}, sites={})",
            self.inner.n_subjects(),
            self.inner.n_features(),
            self.inner.n_sites()
        )
    }
}

/// Fitted location/scale harmonizer.
#[pyclass(module = "harmonize", frozen)]
struct HarmonizationModel {
    inner: combat::HarmonizationModel,
}

#[pymethods]
impl HarmonizationModel {
    #[staticmethod]
    #[pyo3(signature = (train, covariates="age:spline5", empirical_bayes=true))]
    fn fit(py: Python<'_>, train: &Dataset, covariates: &str, empirical_bayes: bool) -> PyResult<Self> {
        let spec = spec(covariates)?;
        let d = &train.inner;
        let inner = py
            .detach(|| combat::fit(d, &spec, &CombatOptions::with_eb(empirical_bayes)))
            .or_py()?;
        Ok(Self { inner })
    }

    fn transform(&self, data: &Dataset) -> PyResult<Dataset> {
        Ok(Dataset {
            inner: self.inner.transform_dataset(&data.inner).or_py()?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: combat::HarmonizationModel::import(&path).or_py()?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.export(&path).or_py()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names.clone()
    }

    #[getter]
    fn site_names(&self) -> Vec<String> {
        self.inner.site_registry.clone()
    }
}

/// Harmonizes a dataset by itself in one pass.
#[pyfunction(name = "harmonize")]
#[pyo3(signature = (data, covariates="age:spline5", empirical_bayes=true))]
fn harmonize_dataset(py: Python<'_>, data: &Dataset, covariates: &str, empirical_bayes: bool) -> PyResult<Dataset> {
    let spec = spec(covariates)?;
    let d = &data.inner;
    let y = py
        .detach(|| combat::harmonize(d, &spec, &CombatOptions::with_eb(empirical_bayes)))
        .or_py()?;
    Ok(Dataset {
        inner: d.with_features(y).or_py()?,
    })
}

/// Synthetic table from a preset such as `ct-k3-n25`. Returns the dataset and
/// the ground-truth site effects.
#[pyfunction]
#[pyo3(signature = (preset, seed=0, gamma_sd=None, epsilon_sd=None, unit_scale=false))]
fn simulate<'py>(
    py: Python<'py>,
    preset: &str,
    seed: u64,
    gamma_sd: Option<f64>,
    epsilon_sd: Option<f64>,
    unit_scale: bool,
) -> PyResult<(Dataset, Bound<'py, PyAny>)> {
    let mut c = SimulationConfig::preset(preset, seed).or_py()?;
    c.gamma_sd = gamma_sd.unwrap_or(c.gamma_sd);
    c.epsilon_sd = epsilon_sd.unwrap_or(c.epsilon_sd);
    c.unit_scale |= unit_scale;
    let (inner, truth) = simulate_dataset(&c).or_py()?;
    Ok((Dataset { inner }, to_py(py, &truth)?))
}

/// Site-predictability test: `mode` is raw, harmonize_all or harmonizer_in_cv.
#[pyfunction]
#[pyo3(signature = (data, mode="harmonizer_in_cv", seed=0, repetitions=None, permutations=None, covariates="age:spline5"))]
fn assess_efficacy<'py>(
    py: Python<'py>,
    data: &Dataset,
    mode: &str,
    seed: u64,
    repetitions: Option<usize>,
    permutations: Option<usize>,
    covariates: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let mode: EfficacyMode = mode.parse().or_py()?;
    let mut o = EfficacyOptions::at_scale(Scale::Desk, seed);
    o.scheme.repetitions = repetitions.unwrap_or(o.scheme.repetitions);
    o.n_perm = permutations.unwrap_or(o.n_perm);
    o.covariates = spec(covariates)?;
    let d = &data.inner;
    let report = py.detach(|| audit::assess_efficacy(d, mode, &o)).or_py()?;
    to_py(py, &report)
}

/// External versus internal performance. Give either a preset name or a dataset.
#[pyfunction]
#[pyo3(signature = (preset=None, data=None, task="site", seed=0, repetitions=None, not_leaked_arm=true))]
fn leakage_experiment<'py>(
    py: Python<'py>,
    preset: Option<&str>,
    data: Option<&Dataset>,
    task: &str,
    seed: u64,
    repetitions: Option<usize>,
    not_leaked_arm: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let task: LeakageTask = task.parse().or_py()?;
    let mut o = LeakageOptions::at_scale(Scale::Desk, seed);
    o.repetitions = repetitions.unwrap_or(o.repetitions);
    o.not_leaked_arm = not_leaked_arm;
    let report = match (preset, data) {
        (Some(p), None) => {
            let c = SimulationConfig::preset(p, seed).or_py()?;
            py.detach(|| audit::leakage_experiment(&c, task, &o))
        }
        (None, Some(d)) => {
            let d = &d.inner;
            py.detach(|| audit::leakage_experiment_on(d, task, &o))
        }
        _ => return Err(PyValueError::new_err("give exactly one of preset or data")),
    }
    .or_py()?;
    to_py(py, &report)
}

/// Binary voxel grid.
#[pyclass(module = "harmonize", frozen)]
struct VoxelGrid {
    inner: fractal::VoxelGrid,
}

#[pymethods]
impl VoxelGrid {
    /// `occupied` lists voxels with x varying fastest, then y, then z.
    #[new]
    fn new(dims: [usize; 3], occupied: Vec<bool>) -> PyResult<Self> {
        Ok(Self {
            inner: fractal::VoxelGrid::new(dims, occupied).or_py()?,
        })
    }

    #[staticmethod]
    fn cube(n: usize) -> PyResult<Self> {
        Ok(Self {
            inner: fractal::VoxelGrid::cube(n).or_py()?,
        })
    }

    #[staticmethod]
    fn slab(nx: usize, ny: usize) -> PyResult<Self> {
        Ok(Self {
            inner: fractal::VoxelGrid::slab(nx, ny).or_py()?,
        })
    }

    #[staticmethod]
    fn menger(level: u32) -> PyResult<Self> {
        Ok(Self {
            inner: fractal::VoxelGrid::menger(level).or_py()?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: fractal::VoxelGrid::load(&path).or_py()?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).or_py()
    }

    #[getter]
    fn dims(&self) -> [usize; 3] {
        self.inner.dims()
    }

    #[getter]
    fn n_occupied(&self) -> usize {
        self.inner.n_occupied()
    }
}

#[pyfunction]
#[pyo3(signature = (grid, offsets=20, seed=0))]
fn fractal_dimension<'py>(py: Python<'py>, grid: &VoxelGrid, offsets: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let g = &grid.inner;
    let estimate = py.detach(|| fractal::fractal_dimension(g, offsets, seed)).or_py()?;
    to_py(py, &estimate)
}

/// One-sided Wilcoxon signed-rank p-value of `a` against `b`.
#[pyfunction]
#[pyo3(signature = (a, b, alternative="less"))]
fn wilcoxon_signed_rank(a: Vec<f64>, b: Vec<f64>, alternative: &str) -> PyResult<f64> {
    let alt = match alternative {
        "less" => Alternative::Less,
        "greater" => Alternative::Greater,
        other => {
            return Err(PyValueError::new_err(format!(
                "alternative must be less or greater, got {other}"
            )))
        }
    };
    stats::wilcoxon_signed_rank(&a, &b, alt).or_py()
}

/// Bhattacharyya coefficient of several samples on shared bins of `bin_width`.
#[pyfunction]
#[pyo3(signature = (samples, bin_width=1.0))]
fn bhattacharyya(samples: Vec<Vec<f64>>, bin_width: f64) -> PyResult<f64> {
    let slices: Vec<&[f64]> = samples.iter().map(Vec::as_slice).collect();
    let edges = stats::uniform_edges(&slices, bin_width).or_py()?;
    stats::bhattacharyya_n(&slices, &edges).or_py()
}

#[pymodule]
fn harmonize(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<HarmonizationModel>()?;
    m.add_class::<VoxelGrid>()?;
    m.add_function(wrap_pyfunction!(harmonize_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(assess_efficacy, m)?)?;
    m.add_function(wrap_pyfunction!(leakage_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(fractal_dimension, m)?)?;
    m.add_function(wrap_pyfunction!(wilcoxon_signed_rank, m)?)?;
    m.add_function(wrap_pyfunction!(bhattacharyya, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
