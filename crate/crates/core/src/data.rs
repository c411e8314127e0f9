//! Tabular multi-site feature data: ingestion, CSV output, splitting and
//! meta-dataset selection.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CellIssue, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum CovariateValues {
    Numeric(Vec<f64>),
    /// `codes[j]` indexes into `levels`; levels are sorted.
    Categorical {
        levels: Vec<String>,
        codes: Vec<usize>,
    },
}

impl CovariateValues {
    pub fn len(&self) -> usize {
        match self {
            CovariateValues::Numeric(v) => v.len(),
            CovariateValues::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn subset(&self, rows: &[usize]) -> Self {
        match self {
            CovariateValues::Numeric(v) => CovariateValues::Numeric(rows.iter().map(|&r| v[r]).collect()),
            CovariateValues::Categorical { levels, codes } => CovariateValues::Categorical {
                levels: levels.clone(),
                codes: rows.iter().map(|&r| codes[r]).collect(),
            },
        }
    }

    /// Cell rendering used for CSV output.
    fn render(&self, row: usize) -> String {
        match self {
            CovariateValues::Numeric(v) => format_g17(v[row]),
            CovariateValues::Categorical { levels, codes } => levels[codes[row]].clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Covariate {
    pub name: String,
    pub values: CovariateValues,
}

impl Covariate {
    pub fn numeric(name: impl Into<String>, values: Vec<f64>) -> Self {
        Covariate {
            name: name.into(),
            values: CovariateValues::Numeric(values),
        }
    }

    /// Builds a categorical covariate from raw labels; levels are sorted.
    pub fn categorical<S: AsRef<str>>(name: impl Into<String>, labels: &[S]) -> Self {
        let levels: Vec<String> = labels
            .iter()
            .map(|s| s.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let lookup: HashMap<&str, usize> = levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let codes = labels.iter().map(|s| lookup[s.as_ref()]).collect();
        Covariate {
            name: name.into(),
            values: CovariateValues::Categorical { levels, codes },
        }
    }
}

/// A multi-site feature table: `n` subjects, `V` features, one site label
/// per subject and a set of biological covariates.
///
/// Immutable once built. Subject ids are carried for reporting only.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    subject_ids: Vec<String>,
    features: DMatrix<f64>,
    feature_names: Vec<String>,
    site_codes: Vec<usize>,
    site_registry: Vec<String>,
    covariates: Vec<Covariate>,
}

impl Dataset {
    /// Builds a dataset from per-row site names. The site registry is the
    /// sorted set of distinct names.
    pub fn new<S: AsRef<str>>(
        subject_ids: Vec<String>,
        sites: &[S],
        covariates: Vec<Covariate>,
        feature_names: Vec<String>,
        features: DMatrix<f64>,
    ) -> Result<Self> {
        let registry: Vec<String> = sites
            .iter()
            .map(|s| s.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let lookup: HashMap<&str, usize> = registry.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let codes = sites.iter().map(|s| lookup[s.as_ref()]).collect();
        Self::from_codes(subject_ids, codes, registry, covariates, feature_names, features)
    }

    /// Builds a dataset from site codes into an explicit registry.
    pub fn from_codes(
        subject_ids: Vec<String>,
        site_codes: Vec<usize>,
        site_registry: Vec<String>,
        covariates: Vec<Covariate>,
        feature_names: Vec<String>,
        features: DMatrix<f64>,
    ) -> Result<Self> {
        let n = subject_ids.len();
        if features.nrows() != n || site_codes.len() != n {
            return Err(Error::Schema(format!(
                "row counts differ: {} ids, {} feature rows, {} sites",
                n,
                features.nrows(),
                site_codes.len()
            )));
        }
        if feature_names.is_empty() || features.ncols() != feature_names.len() {
            return Err(Error::Schema(format!(
                "{} feature names for {} feature columns",
                feature_names.len(),
                features.ncols()
            )));
        }
        if site_registry.is_empty() {
            return Err(Error::Schema("empty site registry".into()));
        }
        if let Some(&c) = site_codes.iter().find(|&&c| c >= site_registry.len()) {
            return Err(Error::Schema(format!("site code {c} outside registry")));
        }
        check_unique("site", &site_registry)?;
        check_unique("feature", &feature_names)?;
        let mut seen = HashSet::with_capacity(n);
        for id in &subject_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateSubject(id.clone()));
            }
        }
        let mut names = HashSet::new();
        for c in &covariates {
            if c.values.len() != n {
                return Err(Error::Schema(format!(
                    "covariate '{}' has {} values for {} rows",
                    c.name,
                    c.values.len(),
                    n
                )));
            }
            if !names.insert(c.name.as_str()) || feature_names.contains(&c.name) {
                return Err(Error::Schema(format!("column '{}' declared twice", c.name)));
            }
            if let CovariateValues::Numeric(v) = &c.values {
                if let Some(r) = v.iter().position(|x| !x.is_finite()) {
                    return Err(Error::InvalidCells(vec![CellIssue {
                        row: r,
                        column: c.name.clone(),
                        message: "missing or non-finite value".into(),
                    }]));
                }
            }
        }
        if let Some(pos) = features.as_slice().iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidCells(vec![CellIssue {
                row: pos % n.max(1),
                column: feature_names[pos / n.max(1)].clone(),
                message: "missing or non-finite value".into(),
            }]));
        }
        Ok(Dataset {
            subject_ids,
            features,
            feature_names,
            site_codes,
            site_registry,
            covariates,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_sites(&self) -> usize {
        self.site_registry.len()
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn site_codes(&self) -> &[usize] {
        &self.site_codes
    }

    pub fn site_registry(&self) -> &[String] {
        &self.site_registry
    }

    pub fn site_name(&self, row: usize) -> &str {
        &self.site_registry[self.site_codes[row]]
    }

    pub fn covariates(&self) -> &[Covariate] {
        &self.covariates
    }

    pub fn covariate(&self, name: &str) -> Option<&Covariate> {
        self.covariates.iter().find(|c| c.name == name)
    }

    pub fn numeric_covariate(&self, name: &str) -> Result<&[f64]> {
        match self.covariate(name).map(|c| &c.values) {
            Some(CovariateValues::Numeric(v)) => Ok(v),
            Some(_) => Err(Error::Schema(format!("covariate '{name}' is categorical"))),
            None => Err(Error::Schema(format!("missing covariate '{name}'"))),
        }
    }

    /// Per-site subject counts, indexed like the registry.
    pub fn site_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_sites()];
        self.site_codes.iter().for_each(|&c| counts[c] += 1);
        counts
    }

    /// Rows in the given order; the site registry is kept as is.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let features = self.features.select_rows(rows.iter());
        Dataset {
            subject_ids: rows.iter().map(|&r| self.subject_ids[r].clone()).collect(),
            features,
            feature_names: self.feature_names.clone(),
            site_codes: rows.iter().map(|&r| self.site_codes[r]).collect(),
            site_registry: self.site_registry.clone(),
            covariates: self
                .covariates
                .iter()
                .map(|c| Covariate {
                    name: c.name.clone(),
                    values: c.values.subset(rows),
                })
                .collect(),
        }
    }

    /// Same rows, sites and covariates with a replacement feature matrix.
    pub fn with_features(&self, features: DMatrix<f64>) -> Result<Dataset> {
        if features.shape() != self.features.shape() {
            return Err(Error::DimensionMismatch {
                expected: self.features.len(),
                found: features.len(),
            });
        }
        Ok(Dataset {
            features,
            ..self.clone()
        })
    }

    /// Drops registry entries with no rows, keeping the order of the rest.
    fn compact_registry(mut self) -> Dataset {
        let counts = self.site_counts();
        let mut remap = vec![usize::MAX; counts.len()];
        let mut registry = Vec::new();
        for (i, name) in self.site_registry.iter().enumerate() {
            if counts[i] > 0 {
                remap[i] = registry.len();
                registry.push(name.clone());
            }
        }
        self.site_codes.iter_mut().for_each(|c| *c = remap[*c]);
        self.site_registry = registry;
        self
    }

    /// Stratum code per row for `column`: the site column or a categorical covariate.
    pub fn strata(&self, column: &str, site_column: &str) -> Result<(Vec<usize>, Vec<String>)> {
        if column == site_column {
            return Ok((self.site_codes.clone(), self.site_registry.clone()));
        }
        match self.covariate(column).map(|c| &c.values) {
            Some(CovariateValues::Categorical { levels, codes }) => Ok((codes.clone(), levels.clone())),
            Some(CovariateValues::Numeric(_)) => Err(Error::InvalidArgument(format!(
                "cannot stratify by numeric column '{column}'"
            ))),
            None => Err(Error::Schema(format!("no column '{column}' to stratify by"))),
        }
    }
}

fn check_unique(what: &str, names: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(Error::Schema(format!("duplicate {what} name '{n}'")));
        }
    }
    Ok(())
}

// ── Loading and writing ────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnKind {
    /// Numeric if every cell parses as a number, categorical otherwise.
    Auto,
    Numeric,
    Categorical,
}

/// Maps CSV columns to roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSchema {
    pub id_column: String,
    pub site_column: String,
    pub covariates: Vec<(String, ColumnKind)>,
    /// Feature columns; `None` takes every column not otherwise mapped.
    pub features: Option<Vec<String>>,
}

impl TableSchema {
    /// `subject_id` and `site` columns, the named covariates (kind inferred),
    /// every other column a feature.
    pub fn with_covariates<S: AsRef<str>>(covariates: &[S]) -> Self {
        TableSchema {
            id_column: "subject_id".into(),
            site_column: "site".into(),
            covariates: covariates
                .iter()
                .map(|c| (c.as_ref().to_string(), ColumnKind::Auto))
                .collect(),
            features: None,
        }
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || matches!(cell.to_ascii_lowercase().as_str(), "na" | "nan" | "n/a" | "null")
}

/// Reads a feature table. Rows with missing or unparseable mapped cells are
/// rejected together in a single [`Error::InvalidCells`].
pub fn load_feature_table(path: &Path, schema: &TableSchema) -> Result<Dataset> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_feature_table(file, schema)
}

pub fn read_feature_table<R: std::io::Read>(reader: R, schema: &TableSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column '{name}' not found in header")))
    };
    let id_col = col(&schema.id_column)?;
    let site_col = col(&schema.site_column)?;
    let cov_cols = schema
        .covariates
        .iter()
        .map(|(name, kind)| Ok((name.clone(), *kind, col(name)?)))
        .collect::<Result<Vec<_>>>()?;
    let feature_cols: Vec<(String, usize)> = match &schema.features {
        Some(names) => names.iter().map(|n| Ok((n.clone(), col(n)?))).collect::<Result<_>>()?,
        None => {
            let taken: HashSet<usize> = [id_col, site_col]
                .into_iter()
                .chain(cov_cols.iter().map(|c| c.2))
                .collect();
            header
                .iter()
                .enumerate()
                .filter(|(i, _)| !taken.contains(i))
                .map(|(i, h)| (h.clone(), i))
                .collect()
        }
    };
    if feature_cols.is_empty() {
        return Err(Error::Schema("no feature columns".into()));
    }

    let mut issues = Vec::new();
    let mut ids = Vec::new();
    let mut sites = Vec::new();
    let mut cov_raw: Vec<Vec<String>> = vec![Vec::new(); cov_cols.len()];
    let mut feat_raw: Vec<Vec<f64>> = vec![Vec::new(); feature_cols.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        let cell = |i: usize| record.get(i).unwrap_or("");
        let mut flag = |column: &str, message: &str| {
            issues.push(CellIssue {
                row,
                column: column.to_string(),
                message: message.to_string(),
            })
        };
        let id = cell(id_col);
        if is_missing(id) {
            flag(&schema.id_column, "missing value");
        }
        ids.push(id.to_string());
        let site = cell(site_col);
        if is_missing(site) {
            flag(&schema.site_column, "missing value");
        }
        sites.push(site.to_string());
        for (k, (name, _, i)) in cov_cols.iter().enumerate() {
            let v = cell(*i);
            if is_missing(v) {
                flag(name, "missing value");
            }
            cov_raw[k].push(v.to_string());
        }
        for (k, (name, i)) in feature_cols.iter().enumerate() {
            let v = cell(*i);
            let parsed = if is_missing(v) {
                flag(name, "missing value");
                f64::NAN
            } else {
                match v.parse::<f64>() {
                    Ok(x) if x.is_finite() => x,
                    _ => {
                        flag(name, &format!("cannot parse '{v}' as a number"));
                        f64::NAN
                    }
                }
            };
            feat_raw[k].push(parsed);
        }
    }
    let mut covariates = Vec::with_capacity(cov_cols.len());
    for ((name, kind, _), raw) in cov_cols.iter().zip(&cov_raw) {
        let parsed: Vec<Option<f64>> = raw
            .iter()
            .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect();
        let numeric = match kind {
            ColumnKind::Numeric => true,
            ColumnKind::Categorical => false,
            ColumnKind::Auto => raw.iter().zip(&parsed).all(|(v, p)| is_missing(v) || p.is_some()),
        };
        if numeric {
            for (row, (v, p)) in raw.iter().zip(&parsed).enumerate() {
                if !is_missing(v) && p.is_none() {
                    issues.push(CellIssue {
                        row,
                        column: name.clone(),
                        message: format!("cannot parse '{v}' as a number"),
                    });
                }
            }
            covariates.push(Covariate::numeric(
                name.clone(),
                parsed.into_iter().map(|p| p.unwrap_or(f64::NAN)).collect(),
            ));
        } else {
            covariates.push(Covariate::categorical(name.clone(), raw));
        }
    }
    if !issues.is_empty() {
        issues.sort_by_key(|i| i.row);
        return Err(Error::InvalidCells(issues));
    }
    if ids.is_empty() {
        return Err(Error::Empty("table has no data rows".into()));
    }
    let n = ids.len();
    let features = DMatrix::from_fn(n, feature_cols.len(), |r, c| feat_raw[c][r]);
    Dataset::new(
        ids,
        &sites,
        covariates,
        feature_cols.into_iter().map(|(n, _)| n).collect(),
        features,
    )
}

/// `%.17g`-style rendering: 17 significant digits, trailing zeros trimmed.
/// Parsing the result gives back the same `f64`.
pub fn format_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent in {:e} output");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let sign = if negative { "-" } else { "" };
    if !(-5..17).contains(&exp) {
        let m = trim_fraction(&format!("{}.{}", &digits[..1], &digits[1..]));
        return format!("{sign}{m}e{exp}");
    }
    let body = if exp >= 0 {
        let split = exp as usize + 1;
        format!("{}.{}", &digits[..split], &digits[split..])
    } else {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    };
    format!("{sign}{}", trim_fraction(&body))
}

fn trim_fraction(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Writes `subject_id,site,<covariates>,<features>` with LF line endings.
pub fn write_feature_table(d: &Dataset, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    write_feature_csv(d, &mut w).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn write_feature_csv<W: Write>(d: &Dataset, w: &mut W) -> std::io::Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    let mut header = vec!["subject_id".to_string(), "site".to_string()];
    header.extend(d.covariates.iter().map(|c| c.name.clone()));
    header.extend(d.feature_names.iter().cloned());
    wtr.write_record(&header)?;
    for r in 0..d.n_subjects() {
        let mut rec = vec![d.subject_ids[r].clone(), d.site_name(r).to_string()];
        rec.extend(d.covariates.iter().map(|c| c.values.render(r)));
        rec.extend((0..d.n_features()).map(|f| format_g17(d.features[(r, f)])));
        wtr.write_record(&rec)?;
    }
    wtr.flush()
}

// ── Splitting and selection ────────────────────────────────────────────────

/// Stratified random split. The first part takes `round(fraction * size)` rows
/// of every stratum (at least one, leaving at least one for the second part).
/// Both parts keep the input row order.
pub fn split_holdout(d: &Dataset, fraction: f64, stratify_by: &str, seed: u64) -> Result<(Dataset, Dataset)> {
    let (first, second) = split_indices(d, fraction, stratify_by, seed)?;
    Ok((d.subset(&first), d.subset(&second)))
}

/// Row indices of the two parts of [`split_holdout`].
pub fn split_indices(d: &Dataset, fraction: f64, stratify_by: &str, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("fraction {fraction} not in (0, 1)")));
    }
    let (codes, names) = d.strata(stratify_by, "site")?;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); names.len()];
    for (r, &c) in codes.iter().enumerate() {
        members[c].push(r);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut first = Vec::new();
    let mut second = Vec::new();
    for (c, rows) in members.iter_mut().enumerate() {
        if rows.is_empty() {
            continue;
        }
        if rows.len() < 2 {
            return Err(Error::StratumTooSmall {
                stratum: names[c].clone(),
                size: rows.len(),
                required: 2,
            });
        }
        rows.shuffle(&mut rng);
        let take = ((fraction * rows.len() as f64).round() as usize).clamp(1, rows.len() - 1);
        first.extend_from_slice(&rows[..take]);
        second.extend_from_slice(&rows[take..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok((first, second))
}

/// An age-bounded pool of single-site datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaDatasetSpec {
    pub name: String,
    pub age_min: f64,
    pub age_max: f64,
    pub included_sites: Vec<String>,
}

impl MetaDatasetSpec {
    pub fn new(name: impl Into<String>, age_min: f64, age_max: f64, included_sites: Vec<String>) -> Result<Self> {
        let spec = MetaDatasetSpec {
            name: name.into(),
            age_min,
            age_max,
            included_sites,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.age_min < self.age_max) {
            return Err(Error::InvalidArgument(format!(
                "age range {}..{} is empty",
                self.age_min, self.age_max
            )));
        }
        if self.included_sites.is_empty() {
            return Err(Error::InvalidArgument("meta-dataset includes no sites".into()));
        }
        Ok(())
    }

    /// Age bounds of the named meta-datasets (CHILDHOOD, ADOLESCENCE,
    /// ADULTHOOD, LIFESPAN), in years.
    pub fn age_range_of(name: &str) -> Option<(f64, f64)> {
        match name.to_ascii_uppercase().as_str() {
            "CHILDHOOD" => Some((5.0, 13.0)),
            "ADOLESCENCE" => Some((11.0, 20.0)),
            "ADULTHOOD" => Some((18.0, 87.0)),
            "LIFESPAN" => Some((5.0, 87.0)),
            _ => None,
        }
    }
}

/// Rows with `age_min <= age <= age_max` at an included site. The registry of
/// the result lists only the sites that remain.
pub fn select_meta_dataset(d: &Dataset, spec: &MetaDatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let age = d.numeric_covariate("age")?;
    let included: HashSet<&str> = spec.included_sites.iter().map(String::as_str).collect();
    let rows: Vec<usize> = (0..d.n_subjects())
        .filter(|&r| age[r] >= spec.age_min && age[r] <= spec.age_max && included.contains(d.site_name(r)))
        .collect();
    if rows.is_empty() {
        return Err(Error::Empty(format!("meta-dataset '{}' selects no rows", spec.name)));
    }
    Ok(d.subset(&rows).compact_registry())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset {
        let csv = "subject_id,site,age,sex,f1\n\
                   a,S1,10.5,F,2.5\n\
                   b,S2,11,M,2.75\n\
                   c,S1,12,F,2.625\n";
        read_feature_table(csv.as_bytes(), &TableSchema::with_covariates(&["age", "sex"])).unwrap()
    }

    #[test]
    fn parses_three_rows() {
        let d = small();
        assert_eq!(d.n_subjects(), 3);
        assert_eq!(d.n_features(), 1);
        assert_eq!(d.n_sites(), 2);
        assert_eq!(d.site_registry(), ["S1", "S2"]);
        assert_eq!(d.numeric_covariate("age").unwrap(), [10.5, 11.0, 12.0]);
        match &d.covariate("sex").unwrap().values {
            CovariateValues::Categorical { levels, codes } => {
                assert_eq!(levels, &["F", "M"]);
                assert_eq!(codes, &[0, 1, 0]);
            }
            _ => panic!("sex should be categorical"),
        }
    }

    #[test]
    fn crlf_is_accepted() {
        let csv = "subject_id,site,f1\r\na,S1,1\r\nb,S2,2\r\n";
        let d = read_feature_table(csv.as_bytes(), &TableSchema::with_covariates::<&str>(&[])).unwrap();
        assert_eq!(d.features()[(1, 0)], 2.0);
    }

    #[test]
    fn blank_cell_names_row_and_column() {
        let csv = "subject_id,site,age,f1\na,S1,10,1\nb,S1,,2\nc,S2,12,x\n";
        let err = read_feature_table(csv.as_bytes(), &TableSchema::with_covariates(&["age"])).unwrap_err();
        match err {
            Error::InvalidCells(issues) => {
                assert_eq!(issues.len(), 2);
                assert_eq!((issues[0].row, issues[0].column.as_str()), (1, "age"));
                assert_eq!((issues[1].row, issues[1].column.as_str()), (2, "f1"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_and_empty_features_are_rejected() {
        let csv = "subject_id,site,f1\na,S1,1\na,S2,2\n";
        assert!(matches!(
            read_feature_table(csv.as_bytes(), &TableSchema::with_covariates::<&str>(&[])),
            Err(Error::DuplicateSubject(id)) if id == "a"
        ));
        let csv = "subject_id,site,age\na,S1,1\n";
        assert!(matches!(
            read_feature_table(csv.as_bytes(), &TableSchema::with_covariates(&["age"])),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_feature_table(
            Path::new("/nonexistent/table.csv"),
            &TableSchema::with_covariates::<&str>(&[]),
        );
        assert!(matches!(err, Err(Error::Io { .. })));
    }

    #[test]
    fn g17_formatting_round_trips() {
        for x in [
            0.1,
            -2.5,
            1e-7,
            123456789.12345679,
            6.02214076e23,
            1.0 / 3.0,
            -0.0,
            5e-324,
            42.0,
        ] {
            let s = format_g17(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{x} -> {s}");
        }
        assert_eq!(format_g17(2.5), "2.5");
        assert_eq!(format_g17(100.0), "100");
        assert_eq!(format_g17(0.1), "0.10000000000000001");
    }

    fn balanced(n_per_site: usize, sites: usize) -> Dataset {
        let n = n_per_site * sites;
        let site_names: Vec<String> = (0..n).map(|i| format!("S{}", i % sites)).collect();
        Dataset::new(
            (0..n).map(|i| format!("id{i}")).collect(),
            &site_names,
            vec![Covariate::numeric("age", (0..n).map(|i| i as f64).collect())],
            vec!["f".into()],
            DMatrix::from_fn(n, 1, |r, _| r as f64),
        )
        .unwrap()
    }

    #[test]
    fn balanced_split_halves_each_site() {
        let d = balanced(50, 2);
        let (a, b) = split_holdout(&d, 0.5, "site", 3).unwrap();
        assert_eq!((a.n_subjects(), b.n_subjects()), (50, 50));
        assert_eq!(a.site_counts(), vec![25, 25]);
        assert_eq!(b.site_counts(), vec![25, 25]);
        let (a2, _) = split_holdout(&d, 0.5, "site", 3).unwrap();
        assert_eq!(a.subject_ids(), a2.subject_ids());
    }

    #[test]
    fn odd_strata_round_half_up() {
        let d = balanced(25, 3);
        let (a, b) = split_holdout(&d, 0.5, "site", 11).unwrap();
        assert_eq!(a.site_counts(), vec![13, 13, 13]);
        assert_eq!(b.site_counts(), vec![12, 12, 12]);
    }

    #[test]
    fn singleton_stratum_cannot_be_split() {
        let d = balanced(1, 2);
        assert!(matches!(
            split_holdout(&d, 0.5, "site", 0),
            Err(Error::StratumTooSmall { size: 1, .. })
        ));
        assert!(split_holdout(&balanced(4, 2), 1.0, "site", 0).is_err());
    }

    #[test]
    fn meta_dataset_filters_age_and_sites() {
        let d = balanced(10, 3);
        let spec = MetaDatasetSpec::new("X", 5.0, 13.0, vec!["S0".into(), "S1".into(), "S2".into()]).unwrap();
        let m = select_meta_dataset(&d, &spec).unwrap();
        let age = m.numeric_covariate("age").unwrap();
        assert!(age.iter().all(|&a| (5.0..=13.0).contains(&a)));
        assert_eq!(m.n_subjects(), 9);

        let only = MetaDatasetSpec::new("Y", 0.0, 100.0, vec!["S2".into()]).unwrap();
        let m = select_meta_dataset(&d, &only).unwrap();
        assert_eq!(m.site_registry(), ["S2"]);
        assert!(m.site_codes().iter().all(|&c| c == 0));

        let none = MetaDatasetSpec::new("Z", 0.0, 100.0, vec!["elsewhere".into()]).unwrap();
        assert!(matches!(select_meta_dataset(&d, &none), Err(Error::Empty(_))));
        assert!(MetaDatasetSpec::new("bad", 13.0, 5.0, vec!["S0".into()]).is_err());
    }
}
