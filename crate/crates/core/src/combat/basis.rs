//! Covariate expansion for the biological part of the model.
//!
//! Numeric covariates expand to a linear, quadratic or cubic B-spline basis;
//! categorical covariates expand to one-hot columns without the reference
//! (first) level. The fitted basis carries every training statistic needed to
//! expand new rows, so expansion never looks at the data being transformed
//! beyond the row itself.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{CovariateValues, Dataset};
use crate::error::{Error, Result};

pub const DEFAULT_SPLINE_DF: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    Linear,
    Quadratic,
    Spline { df: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateTerm {
    pub name: String,
    /// Ignored for categorical covariates, which are always one-hot.
    pub basis: Basis,
}

/// Which covariates enter the model and how.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CovariateModelSpec {
    pub terms: Vec<CovariateTerm>,
}

impl CovariateModelSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(terms: Vec<CovariateTerm>) -> Result<Self> {
        let spec = Self { terms };
        spec.validate()?;
        Ok(spec)
    }

    pub fn term(mut self, name: impl Into<String>, basis: Basis) -> Result<Self> {
        self.terms.push(CovariateTerm {
            name: name.into(),
            basis,
        });
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for t in &self.terms {
            if !seen.insert(t.name.as_str()) {
                return Err(Error::InvalidArgument(format!("covariate '{}' listed twice", t.name)));
            }
            if let Basis::Spline { df } = t.basis {
                if df < 3 {
                    return Err(Error::InvalidArgument(format!(
                        "spline df for '{}' is {df}, must be >= 3",
                        t.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Parses `age:spline5,sex`, `age:quadratic`, `age:linear` or a bare name
/// (linear for numeric covariates, one-hot for categorical ones).
impl FromStr for CovariateModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, basis) = match part.split_once(':') {
                None => (part, Basis::Linear),
                Some((name, b)) => (name.trim(), parse_basis(b.trim())?),
            };
            if name.is_empty() {
                return Err(Error::InvalidArgument(format!("empty covariate name in '{part}'")));
            }
            terms.push(CovariateTerm {
                name: name.to_string(),
                basis,
            });
        }
        Self::new(terms)
    }
}

fn parse_basis(b: &str) -> Result<Basis> {
    match b {
        "linear" => Ok(Basis::Linear),
        "quadratic" => Ok(Basis::Quadratic),
        "spline" => Ok(Basis::Spline { df: DEFAULT_SPLINE_DF }),
        _ => b
            .strip_prefix("spline")
            .and_then(|df| df.parse().ok())
            .map(|df| Basis::Spline { df })
            .ok_or_else(|| Error::InvalidArgument(format!("unknown covariate basis '{b}'"))),
    }
}

impl fmt::Display for CovariateModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|t| match t.basis {
                Basis::Linear => t.name.clone(),
                Basis::Quadratic => format!("{}:quadratic", t.name),
                Basis::Spline { df } => format!("{}:spline{df}", t.name),
            })
            .collect();
        f.write_str(&parts.join(","))
    }
}

/// One fitted covariate expansion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TermBasis {
    Linear {
        center: f64,
        scale: f64,
    },
    Quadratic {
        center: f64,
        scale: f64,
    },
    /// Full clamped knot vector of a cubic B-spline; the first basis function
    /// is dropped so the expansion carries no intercept.
    Spline {
        knots: Vec<f64>,
    },
    OneHot {
        levels: Vec<String>,
    },
}

impl TermBasis {
    pub fn n_columns(&self) -> usize {
        match self {
            TermBasis::Linear { .. } => 1,
            TermBasis::Quadratic { .. } => 2,
            TermBasis::Spline { knots } => knots.len() - 5,
            TermBasis::OneHot { levels } => levels.len().saturating_sub(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedTerm {
    pub name: String,
    pub basis: TermBasis,
}

/// Training-time covariate expansion, reusable on any dataset with the same
/// covariate columns.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FittedBasis {
    pub terms: Vec<FittedTerm>,
}

impl FittedBasis {
    pub fn fit(spec: &CovariateModelSpec, data: &Dataset) -> Result<Self> {
        spec.validate()?;
        let mut terms = Vec::with_capacity(spec.terms.len());
        for term in &spec.terms {
            let cov = data
                .covariate(&term.name)
                .ok_or_else(|| Error::Schema(format!("missing covariate '{}'", term.name)))?;
            let basis = match (&cov.values, term.basis) {
                (CovariateValues::Categorical { levels, codes }, basis) => {
                    if basis != Basis::Linear {
                        return Err(Error::InvalidArgument(format!(
                            "covariate '{}' is categorical and cannot take a {basis:?} basis",
                            term.name
                        )));
                    }
                    let mut present = vec![false; levels.len()];
                    codes.iter().for_each(|&c| present[c] = true);
                    TermBasis::OneHot {
                        levels: levels
                            .iter()
                            .zip(present)
                            .filter(|&(_, p)| p)
                            .map(|(l, _)| l.clone())
                            .collect(),
                    }
                }
                (CovariateValues::Numeric(x), Basis::Linear) => {
                    let (center, scale) = center_scale(x);
                    TermBasis::Linear { center, scale }
                }
                (CovariateValues::Numeric(x), Basis::Quadratic) => {
                    let (center, scale) = center_scale(x);
                    TermBasis::Quadratic { center, scale }
                }
                (CovariateValues::Numeric(x), Basis::Spline { df }) => TermBasis::Spline {
                    knots: spline_knots(x, df)?,
                },
            };
            terms.push(FittedTerm {
                name: term.name.clone(),
                basis,
            });
        }
        Ok(FittedBasis { terms })
    }

    pub fn n_columns(&self) -> usize {
        self.terms.iter().map(|t| t.basis.n_columns()).sum()
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.n_columns());
        for t in &self.terms {
            match &t.basis {
                TermBasis::Linear { .. } => names.push(t.name.clone()),
                TermBasis::Quadratic { .. } => {
                    names.push(t.name.clone());
                    names.push(format!("{}^2", t.name));
                }
                TermBasis::Spline { .. } => {
                    names.extend((1..=t.basis.n_columns()).map(|j| format!("{}_bs{j}", t.name)))
                }
                TermBasis::OneHot { levels } => names.extend(levels.iter().skip(1).map(|l| format!("{}[{l}]", t.name))),
            }
        }
        names
    }

    /// Expanded covariate columns for every row of `data` (no intercept).
    pub fn design(&self, data: &Dataset) -> Result<DMatrix<f64>> {
        let n = data.n_subjects();
        let mut out = DMatrix::zeros(n, self.n_columns());
        let mut col = 0;
        for t in &self.terms {
            let cov = data
                .covariate(&t.name)
                .ok_or_else(|| Error::Schema(format!("missing covariate '{}'", t.name)))?;
            match (&t.basis, &cov.values) {
                (TermBasis::Linear { center, scale }, CovariateValues::Numeric(x)) => {
                    for (r, &v) in x.iter().enumerate() {
                        out[(r, col)] = (v - center) / scale;
                    }
                }
                (TermBasis::Quadratic { center, scale }, CovariateValues::Numeric(x)) => {
                    for (r, &v) in x.iter().enumerate() {
                        let u = (v - center) / scale;
                        out[(r, col)] = u;
                        out[(r, col + 1)] = u * u;
                    }
                }
                (TermBasis::Spline { knots }, CovariateValues::Numeric(x)) => {
                    for (r, &v) in x.iter().enumerate() {
                        let b = spline_row(knots, v);
                        for (j, bj) in b.iter().skip(1).enumerate() {
                            out[(r, col + j)] = *bj;
                        }
                    }
                }
                (TermBasis::OneHot { levels: train }, CovariateValues::Categorical { levels, codes }) => {
                    let map: Vec<Option<usize>> = levels.iter().map(|l| train.iter().position(|t| t == l)).collect();
                    for (r, &c) in codes.iter().enumerate() {
                        match map[c] {
                            Some(0) => {}
                            Some(j) => out[(r, col + j - 1)] = 1.0,
                            None => {
                                return Err(Error::InvalidArgument(format!(
                                    "covariate '{}' has level '{}' not seen in training",
                                    t.name, levels[c]
                                )))
                            }
                        }
                    }
                }
                _ => {
                    return Err(Error::Schema(format!(
                        "covariate '{}' changed type since fitting",
                        t.name
                    )))
                }
            }
            col += t.basis.n_columns();
        }
        Ok(out)
    }
}

fn center_scale(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    (mean, if sd > 0.0 { sd } else { 1.0 })
}

/// Linear-interpolation sample quantile (type 7).
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

const DEGREE: usize = 3;

/// Clamped knot vector with `df - 3` interior knots at training quantiles.
fn spline_knots(x: &[f64], df: usize) -> Result<Vec<f64>> {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if !(lo < hi) {
        return Err(Error::SingularDesign(
            "spline covariate is constant in the training data".into(),
        ));
    }
    let n_interior = df - DEGREE;
    let mut knots = vec![lo; DEGREE + 1];
    knots.extend((1..=n_interior).map(|i| quantile(&sorted, i as f64 / (n_interior + 1) as f64)));
    knots.extend(std::iter::repeat_n(hi, DEGREE + 1));
    Ok(knots)
}

/// All B-spline basis values of degree `deg` at `x` inside the knot span.
fn bspline_values(knots: &[f64], deg: usize, x: f64) -> Vec<f64> {
    let m = knots.len();
    let last = (0..m - 1)
        .rev()
        .find(|&j| knots[j] < knots[j + 1])
        .expect("non-degenerate knots");
    let span = if x >= knots[last] {
        last
    } else {
        (0..=last).rev().find(|&j| knots[j] <= x).unwrap_or(0)
    };
    let mut n = vec![0.0; m - 1];
    n[span] = 1.0;
    for d in 1..=deg {
        let mut next = vec![0.0; m - 1 - d];
        for (j, v) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            let den1 = knots[j + d] - knots[j];
            if den1 > 0.0 {
                acc += (x - knots[j]) / den1 * n[j];
            }
            let den2 = knots[j + d + 1] - knots[j + 1];
            if den2 > 0.0 {
                acc += (knots[j + d + 1] - x) / den2 * n[j + 1];
            }
            *v = acc;
        }
        n = next;
    }
    n
}

/// First derivative of every cubic basis function at `x`.
fn bspline_derivatives(knots: &[f64], x: f64) -> Vec<f64> {
    let lower = bspline_values(knots, DEGREE - 1, x);
    let count = knots.len() - DEGREE - 1;
    (0..count)
        .map(|j| {
            let mut d = 0.0;
            let den1 = knots[j + DEGREE] - knots[j];
            if den1 > 0.0 {
                d += lower[j] / den1;
            }
            let den2 = knots[j + DEGREE + 1] - knots[j + 1];
            if den2 > 0.0 {
                d -= lower[j + 1] / den2;
            }
            DEGREE as f64 * d
        })
        .collect()
}

/// Cubic basis at `x`, continued linearly outside the boundary knots.
fn spline_row(knots: &[f64], x: f64) -> Vec<f64> {
    let (lo, hi) = (knots[0], knots[knots.len() - 1]);
    let edge = if x < lo {
        lo
    } else if x > hi {
        hi
    } else {
        return bspline_values(knots, DEGREE, x);
    };
    let v = bspline_values(knots, DEGREE, edge);
    let d = bspline_derivatives(knots, edge);
    v.iter().zip(&d).map(|(v, d)| v + d * (x - edge)).collect()
}
