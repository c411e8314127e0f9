use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unweighted mean of per-class recall over the classes present in `actual`.
pub fn balanced_accuracy(actual: &[usize], predicted: &[usize]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            found: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::Empty("no predictions to score".into()));
    }
    let k = actual.iter().max().map_or(0, |m| m + 1);
    let mut total = vec![0usize; k];
    let mut hit = vec![0usize; k];
    for (&a, &p) in actual.iter().zip(predicted) {
        total[a] += 1;
        hit[a] += usize::from(a == p);
    }
    let (sum, classes) = total
        .iter()
        .zip(&hit)
        .filter(|(t, _)| **t > 0)
        .fold((0.0, 0usize), |(s, c), (&t, &h)| (s + h as f64 / t as f64, c + 1));
    Ok(sum / classes as f64)
}

pub fn mean_absolute_error(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            found: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::Empty("no predictions to score".into()));
    }
    Ok(actual.iter().zip(predicted).map(|(a, p)| (a - p).abs()).sum::<f64>() / actual.len() as f64)
}

/// Counts with rows = actual class and columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: Vec<String>) -> Self {
        let k = classes.len();
        Self {
            classes,
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_predictions(classes: Vec<String>, actual: &[usize], predicted: &[usize]) -> Result<Self> {
        let mut m = Self::zeros(classes);
        m.record(actual, predicted)?;
        Ok(m)
    }

    pub fn record(&mut self, actual: &[usize], predicted: &[usize]) -> Result<()> {
        if actual.len() != predicted.len() {
            return Err(Error::DimensionMismatch {
                expected: actual.len(),
                found: predicted.len(),
            });
        }
        let k = self.classes.len();
        for (&a, &p) in actual.iter().zip(predicted) {
            if a >= k || p >= k {
                return Err(Error::InvalidArgument(format!("class index outside 0..{k}")));
            }
            self.counts[a][p] += 1;
        }
        Ok(())
    }

    /// Each row divided by its total, so rows sum to one.
    pub fn normalized(&self) -> Result<Vec<Vec<f64>>> {
        normalize_rows(
            &self
                .counts
                .iter()
                .map(|r| r.iter().map(|&c| c as f64).collect())
                .collect::<Vec<Vec<f64>>>(),
            &self.classes,
        )
    }
}

/// Row normalization of a real-valued matrix such as an averaged confusion matrix.
pub fn normalize_rows(m: &[Vec<f64>], classes: &[String]) -> Result<Vec<Vec<f64>>> {
    m.iter()
        .enumerate()
        .map(|(i, row)| {
            let total: f64 = row.iter().sum();
            if !(total > 0.0) {
                return Err(Error::Degenerate(format!(
                    "confusion row '{}' has no observations",
                    classes.get(i).map_or("?", String::as_str)
                )));
            }
            Ok(row.iter().map(|c| c / total).collect())
        })
        .collect()
}

/// Linear-interpolation quantile of unsorted data.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    crate::combat::basis::quantile(&v, q)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n − 1).
pub fn sample_sd(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() as f64 - 1.0)).sqrt()
}

/// Metric values for every (repetition, fold) of a cross-validation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSamples {
    pub metric: String,
    pub repetitions: usize,
    pub folds: usize,
    /// Row-major `repetitions × folds`.
    pub values: Vec<f64>,
}

impl PerformanceSamples {
    pub fn new(metric: impl Into<String>, repetitions: usize, folds: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != repetitions * folds {
            return Err(Error::DimensionMismatch {
                expected: repetitions * folds,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("non-finite performance value".into()));
        }
        Ok(Self {
            metric: metric.into(),
            repetitions,
            folds,
            values,
        })
    }

    pub fn get(&self, repetition: usize, fold: usize) -> f64 {
        self.values[repetition * self.folds + fold]
    }

    pub fn repetition(&self, repetition: usize) -> &[f64] {
        &self.values[repetition * self.folds..(repetition + 1) * self.folds]
    }

    pub fn repetition_means(&self) -> Vec<f64> {
        (0..self.repetitions).map(|r| mean(self.repetition(r))).collect()
    }

    /// Median over repetitions of the per-repetition mean.
    pub fn median(&self) -> f64 {
        median(&self.repetition_means())
    }

    /// Interquartile range over repetitions of the per-repetition mean.
    pub fn iqr(&self) -> f64 {
        let m = self.repetition_means();
        quantile(&m, 0.75) - quantile(&m, 0.25)
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn balanced_accuracy_definition() {
        assert_eq!(balanced_accuracy(&[0, 0, 1, 1], &[0, 0, 1, 0]).unwrap(), 0.75);
        assert_eq!(balanced_accuracy(&[0, 1, 1, 1, 2], &[0, 1, 1, 1, 2]).unwrap(), 1.0);
        assert!(balanced_accuracy(&[0], &[0, 1]).is_err());
        assert!(balanced_accuracy(&[], &[]).is_err());
    }

    #[test]
    fn mae_definition() {
        assert_eq!(mean_absolute_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mean_absolute_error(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert!(mean_absolute_error(&[], &[]).is_err());
    }

    #[test]
    fn confusion_rows_normalize() {
        let names = vec!["a".to_string(), "b".to_string()];
        let m = ConfusionMatrix::from_predictions(names.clone(), &[0, 1], &[0, 1]).unwrap();
        assert_eq!(m.normalized().unwrap(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let m = ConfusionMatrix::from_predictions(names.clone(), &[0, 0, 0, 0, 1], &[0, 0, 1, 1, 1]).unwrap();
        assert_eq!(m.normalized().unwrap()[0], vec![0.5, 0.5]);
        let empty = ConfusionMatrix::from_predictions(names, &[0], &[0]).unwrap();
        assert!(empty.normalized().is_err());
    }

    #[test]
    fn samples_aggregate_per_repetition() {
        let s = PerformanceSamples::new("ba", 3, 2, vec![0.1, 0.3, 0.5, 0.5, 0.9, 0.7]).unwrap();
        assert_eq!(s.repetition_means(), vec![0.2, 0.5, 0.8]);
        assert!((s.median() - 0.5).abs() < 1e-15);
        assert!((s.iqr() - 0.3).abs() < 1e-12);
        assert!(PerformanceSamples::new("ba", 2, 2, vec![0.0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn relabeling_leaves_balanced_accuracy_unchanged(
            pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60),
            shift in 1usize..4,
        ) {
            let (a, p): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let relabel = |v: &[usize]| v.iter().map(|&c| (c + shift) % 4).collect::<Vec<_>>();
            let x = balanced_accuracy(&a, &p).unwrap();
            let y = balanced_accuracy(&relabel(&a), &relabel(&p)).unwrap();
            prop_assert!((x - y).abs() < 1e-12);
        }

        #[test]
        fn equal_totals_make_average_and_normalize_commute(
            rows in prop::collection::vec(prop::collection::vec(0u64..10, 3), 2..6),
        ) {
            // Two matrices with the same row totals: the second reverses each row.
            let names: Vec<String> = (0..3).map(|i| i.to_string()).collect();
            let a: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&c| c as f64 + 1.0).collect()).collect();
            let b: Vec<Vec<f64>> = a.iter().map(|r| r.iter().rev().copied().collect()).collect();
            let avg: Vec<Vec<f64>> = a.iter().zip(&b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p + q) / 2.0).collect()).collect();
            let lhs = normalize_rows(&avg, &names).unwrap();
            let na = normalize_rows(&a, &names).unwrap();
            let nb = normalize_rows(&b, &names).unwrap();
            for i in 0..a.len() {
                for j in 0..3 {
                    prop_assert!((lhs[i][j] - (na[i][j] + nb[i][j]) / 2.0).abs() < 1e-12);
                }
            }
        }
    }
}
