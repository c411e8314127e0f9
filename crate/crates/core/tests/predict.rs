use harmonize_core::predict::{train_classifier, train_regressor, GbtModel, GbtParams, Predictions};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn regression_data(n: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Integer-valued features keep split midpoints exact under shifts.
    let x = DMatrix::from_fn(n, 4, |_, _| rng.random_range(0..50) as f64);
    let y = (0..n)
        .map(|r| {
            0.1 * x[(r, 0)] - 0.05 * x[(r, 1)] * (x[(r, 2)] > 20.0) as u8 as f64 + rng.sample::<f64, _>(StandardNormal)
        })
        .collect();
    (x, y)
}

fn truncated(model: &GbtModel, rounds: usize) -> GbtModel {
    GbtModel {
        trees: model.trees[..rounds].to_vec(),
        ..model.clone()
    }
}

#[test]
fn training_loss_never_increases() {
    let (x, y) = regression_data(300, 1);
    let model = train_regressor(&x, &y, &GbtParams::default()).unwrap();
    let mut last = f64::INFINITY;
    for r in 0..=model.trees.len() {
        let Predictions::Values(p) = truncated(&model, r).predict(&x).unwrap() else {
            unreachable!()
        };
        let loss: f64 = p.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum();
        assert!(loss <= last + 1e-9, "round {r}: {loss} > {last}");
        last = loss;
    }
}

#[test]
fn row_order_does_not_change_trees() {
    let (x, y) = regression_data(200, 2);
    let mut order: Vec<usize> = (0..200).collect();
    order.reverse();
    order.swap(3, 150);
    let xp = x.select_rows(&order);
    let yp: Vec<f64> = order.iter().map(|&r| y[r]).collect();
    let params = GbtParams {
        n_rounds: 20,
        ..GbtParams::default()
    };
    let a = train_regressor(&x, &y, &params).unwrap();
    let b = train_regressor(&xp, &yp, &params).unwrap();
    assert_eq!(a.trees.len(), b.trees.len());
    for (ta, tb) in a.trees.iter().zip(&b.trees) {
        for (na, nb) in ta.nodes.iter().zip(&tb.nodes) {
            assert_eq!(
                (na.feature, na.threshold, na.left, na.right),
                (nb.feature, nb.threshold, nb.left, nb.right)
            );
            assert!((na.value - nb.value).abs() < 1e-9);
        }
    }
}

#[test]
fn shifting_a_feature_shifts_thresholds_only() {
    let (x, y) = regression_data(200, 3);
    let labels: Vec<usize> = y
        .iter()
        .map(|&v| {
            if v > 1.5 {
                2
            } else if v > 0.0 {
                1
            } else {
                0
            }
        })
        .collect();
    let mut shifted = x.clone();
    shifted.column_mut(1).add_scalar_mut(1000.0);
    let params = GbtParams {
        n_rounds: 20,
        ..GbtParams::default()
    };
    let a = train_classifier(&x, &labels, 3, &params).unwrap();
    let b = train_classifier(&shifted, &labels, 3, &params).unwrap();
    for (ta, tb) in a.trees.iter().zip(&b.trees) {
        for (na, nb) in ta.nodes.iter().zip(&tb.nodes) {
            if na.is_leaf() {
                continue;
            }
            let offset = if na.feature == 1 { 1000.0 } else { 0.0 };
            assert_eq!(na.feature, nb.feature);
            assert_eq!(na.threshold + offset, nb.threshold);
        }
    }
    assert_eq!(a.predict(&x).unwrap(), b.predict(&shifted).unwrap());
}

#[test]
fn classifier_learns_separable_classes() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let labels: Vec<usize> = (0..150).map(|i| i % 3).collect();
    let x = DMatrix::from_fn(150, 2, |r, c| {
        labels[r] as f64 * 3.0 * (c == 0) as u8 as f64 + rng.sample::<f64, _>(StandardNormal) * 0.3
    });
    let m = train_classifier(&x, &labels, 3, &GbtParams::default()).unwrap();
    let Predictions::Classes(p) = m.predict(&x).unwrap() else {
        unreachable!()
    };
    assert_eq!(p, labels);
}
