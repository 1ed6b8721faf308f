//! Finite-difference verification of every analytic loss gradient.
//!
//! The differencing loop here is written against the public loss functions
//! only and never touches the gradient code it checks. Losses carrying the
//! distance regularizer are differenced with the scaling norm pinned at the
//! base point, matching the stop-gradient convention of the backward pass.

use ordage_core::losses::{
    cross_entropy, mean_variance, mse, order_regularizer, order_regularizer_scaled,
    order_scale_for,
};
use ordage_core::numerics::Matrix;
use ordage_core::rng::RngState;
use rand::Rng;

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-5;

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    diff / na.max(nn).max(1e-12)
}

fn central_diff(mut eval: impl FnMut(&Matrix) -> f64, at: &Matrix) -> Vec<f64> {
    let mut grads = Vec::with_capacity(at.as_slice().len());
    let mut work = at.clone();
    for idx in 0..at.as_slice().len() {
        let orig = work.as_slice()[idx];
        work.as_mut_slice()[idx] = orig + STEP;
        let up = eval(&work);
        work.as_mut_slice()[idx] = orig - STEP;
        let down = eval(&work);
        work.as_mut_slice()[idx] = orig;
        grads.push((up - down) / (2.0 * STEP));
    }
    grads
}

fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
}

#[test]
fn cross_entropy_gradient_matches_differences() {
    let mut rng = RngState::new(100, 0).rng();
    for _ in 0..5 {
        let n = rng.random_range(2..6);
        let c = 10;
        let logits = random_matrix(n, c, &mut rng);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let analytic = cross_entropy(&logits, &labels).unwrap().grad_logits;
        let numeric = central_diff(
            |m| cross_entropy(m, &labels).unwrap().value,
            &logits,
        );
        assert!(rel_err(analytic.as_slice(), &numeric) < TOL);
    }
}

#[test]
fn mse_gradient_matches_differences() {
    let mut rng = RngState::new(101, 0).rng();
    for _ in 0..5 {
        let n = rng.random_range(2..8);
        let pred = random_matrix(n, 1, &mut rng);
        let truth: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let analytic = mse(pred.as_slice(), &truth).unwrap().grad_pred;
        let numeric = central_diff(|m| mse(m.as_slice(), &truth).unwrap().value, &pred);
        assert!(rel_err(&analytic, &numeric) < TOL);
    }
}

#[test]
fn mean_variance_gradient_matches_differences() {
    let mut rng = RngState::new(102, 0).rng();
    let class_ages: Vec<f64> = (0..10).map(|i| i as f64).collect();
    for _ in 0..5 {
        let n = rng.random_range(2..6);
        let logits = random_matrix(n, 10, &mut rng);
        let truth: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..9.0)).collect();
        let analytic = mean_variance(&logits, &class_ages, &truth, 0.2, 0.05)
            .unwrap()
            .grad_logits;
        let numeric = central_diff(
            |m| {
                mean_variance(m, &class_ages, &truth, 0.2, 0.05)
                    .unwrap()
                    .value
            },
            &logits,
        );
        assert!(rel_err(analytic.as_slice(), &numeric) < TOL);
    }
}

#[test]
fn order_regularizer_gradient_matches_differences() {
    let mut rng = RngState::new(103, 0).rng();
    for k in [0.5, 2.0 / 3.0, 1.0, 2.0] {
        for _ in 0..4 {
            let n = rng.random_range(3..7);
            let features = random_matrix(n, 8, &mut rng);
            let ages: Vec<f64> = (0..n).map(|_| rng.random_range(8.0..95.0)).collect();
            let analytic = order_regularizer(&features, &ages, k).unwrap().grad_features;
            let scale = order_scale_for(&features);
            let numeric = central_diff(
                |m| order_regularizer_scaled(m, &ages, k, scale).unwrap().value,
                &features,
            );
            let err = rel_err(analytic.as_slice(), &numeric);
            assert!(err < TOL, "k = {k}: rel err {err}");
        }
    }
}
