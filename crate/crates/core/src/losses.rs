//! The five training losses with hand-derived gradients.
//!
//! Classification losses operate on logits; regression losses on scalar
//! predictions. The ordinal distance regularizer operates on penultimate
//! features scaled by the batch's largest L2 norm and pulls embeddings apart
//! in proportion to absolute age differences: its value is the negative mean
//! over ordered sample pairs of `|age_i - age_j| * Lk(x̄_i, x̄_j)`, so it is
//! never positive and shrinking it spreads the feature space ordinally.
//!
//! Gradient convention: the norm used to scale features is a constant in the
//! backward pass. The max is non-smooth, and the regularizer's job is to move
//! features within the scaled ball, not to fight the scaler. Finite-difference
//! checks therefore evaluate the loss with that norm frozen at the base point
//! (see [`order_regularizer_scaled`]).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{
    lk_distance, max_l2_norm, stable_log_softmax, stable_softmax, Matrix, NumericsError,
    NORM_FLOOR,
};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("{kind} loss requires {what}")]
    MissingInput { kind: LossKind, what: &'static str },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid loss config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// The loss families under study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Mse,
    MseDistance,
    Ce,
    CeMeanVariance,
    CeOrder,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Mse,
        LossKind::MseDistance,
        LossKind::Ce,
        LossKind::CeMeanVariance,
        LossKind::CeOrder,
    ];

    /// Classification kinds train a classifier head; the rest a regressor.
    pub fn is_classification(self) -> bool {
        matches!(
            self,
            LossKind::Ce | LossKind::CeMeanVariance | LossKind::CeOrder
        )
    }

    /// Kinds carrying the pairwise distance regularizer.
    pub fn has_order_term(self) -> bool {
        matches!(self, LossKind::CeOrder | LossKind::MseDistance)
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::MseDistance => "mse-distance",
            LossKind::Ce => "ce",
            LossKind::CeMeanVariance => "ce-mean-variance",
            LossKind::CeOrder => "ce-order",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "mse-distance" => Ok(LossKind::MseDistance),
            "ce" => Ok(LossKind::Ce),
            "ce-mean-variance" => Ok(LossKind::CeMeanVariance),
            "ce-order" => Ok(LossKind::CeOrder),
            other => Err(format!(
                "unknown loss '{other}' (expected one of: mse, mse-distance, ce, ce-mean-variance, ce-order)"
            )),
        }
    }
}

/// Every tunable a loss evaluation needs.
///
/// `k` is the distance exponent for the pairwise regularizer (Manhattan by
/// default; the distance baseline defaults to Euclidean). `lambda_order`
/// weighs the regularizer against the base loss, and the mean/variance
/// weights follow the customary values for that method. `class_ages` maps
/// class index to its age in years and must be strictly increasing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossConfig {
    pub kind: LossKind,
    pub k: f64,
    pub lambda_order: f64,
    pub lambda_mean: f64,
    pub lambda_var: f64,
    pub class_ages: Vec<f64>,
}

impl LossConfig {
    /// Kind-appropriate defaults: `k = 2` for the Euclidean distance
    /// baseline, `k = 1` elsewhere.
    pub fn new(kind: LossKind, class_ages: Vec<f64>) -> Self {
        Self {
            kind,
            k: if kind == LossKind::MseDistance { 2.0 } else { 1.0 },
            lambda_order: 1.0,
            lambda_mean: 0.2,
            lambda_var: 0.05,
            class_ages,
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.k > 0.0) {
            return Err(LossError::InvalidConfig(format!(
                "k must be > 0, got {}",
                self.k
            )));
        }
        for (name, v) in [
            ("lambda_order", self.lambda_order),
            ("lambda_mean", self.lambda_mean),
            ("lambda_var", self.lambda_var),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(LossError::InvalidConfig(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        if self.class_ages.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(LossError::InvalidConfig(
                "class_ages must be strictly increasing".into(),
            ));
        }
        if self.kind.is_classification() && self.class_ages.is_empty() {
            return Err(LossError::InvalidConfig(
                "classification losses need a nonempty class_ages".into(),
            ));
        }
        Ok(())
    }
}

/// Value plus gradients with respect to whichever inputs the loss touches.
/// Unused gradient blocks are zero-sized.
#[derive(Debug, Clone)]
pub struct LossOutput {
    pub value: f64,
    /// d value / d logits, batch x C (classification kinds).
    pub grad_logits: Matrix,
    /// d value / d penultimate features, batch x d (regularized kinds).
    pub grad_features: Matrix,
    /// d value / d scalar predictions (regression kinds).
    pub grad_pred: Vec<f64>,
    /// Set when a single-sample batch made the pairwise term degenerate.
    pub order_term_skipped: bool,
}

impl LossOutput {
    fn scalar(value: f64) -> Self {
        Self {
            value,
            grad_logits: Matrix::zeros(0, 0),
            grad_features: Matrix::zeros(0, 0),
            grad_pred: Vec::new(),
            order_term_skipped: false,
        }
    }
}

/// Mean negative log-likelihood of the true class.
///
/// `value = -(1/N) sum_i log softmax(logits_i)[label_i]` and the logit
/// gradient is `(softmax - onehot) / N`.
pub fn cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<LossOutput, LossError> {
    if logits.rows() != labels.len() {
        return Err(LossError::LengthMismatch {
            left: logits.rows(),
            right: labels.len(),
        });
    }
    if logits.rows() == 0 {
        return Err(LossError::MissingInput {
            kind: LossKind::Ce,
            what: "a nonempty batch",
        });
    }
    let n = logits.rows();
    let c = logits.cols();
    let inv_n = 1.0 / n as f64;
    let mut value = 0.0;
    let mut grad = Matrix::zeros(n, c);
    for (i, &label) in labels.iter().enumerate() {
        if label >= c {
            return Err(LossError::LabelOutOfRange { label, classes: c });
        }
        let row = logits.row(i);
        let logp = stable_log_softmax(row)?;
        value -= logp[label] * inv_n;
        let probs = stable_softmax(row)?;
        let grow = grad.row_mut(i);
        for (j, &p) in probs.iter().enumerate() {
            grow[j] = (p - if j == label { 1.0 } else { 0.0 }) * inv_n;
        }
    }
    let mut out = LossOutput::scalar(value);
    out.grad_logits = grad;
    Ok(out)
}

/// Mean squared error over scalar predictions.
pub fn mse(pred_ages: &[f64], true_ages: &[f64]) -> Result<LossOutput, LossError> {
    if pred_ages.len() != true_ages.len() {
        return Err(LossError::LengthMismatch {
            left: pred_ages.len(),
            right: true_ages.len(),
        });
    }
    if pred_ages.is_empty() {
        return Err(LossError::MissingInput {
            kind: LossKind::Mse,
            what: "a nonempty batch",
        });
    }
    let n = pred_ages.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(pred_ages.len());
    for (&p, &t) in pred_ages.iter().zip(true_ages) {
        let diff = p - t;
        value += diff * diff / n;
        grad.push(2.0 * diff / n);
    }
    let mut out = LossOutput::scalar(value);
    out.grad_pred = grad;
    Ok(out)
}

/// Ordinal distance regularizer on penultimate features.
///
/// Features are scaled by the batch's largest L2 norm, then
/// `value = -(1/(N(N-1))) * sum_{i != j} |age_i - age_j| * Lk(x̄_i, x̄_j)`.
/// A single-sample batch has no pairs; it yields value 0, zero gradients,
/// and the `order_term_skipped` flag.
pub fn order_regularizer(
    features: &Matrix,
    ages: &[f64],
    k: f64,
) -> Result<LossOutput, LossError> {
    let m = max_l2_norm(features.iter_rows()).unwrap_or(0.0);
    let scale = if m <= NORM_FLOOR { 1.0 } else { m };
    order_regularizer_scaled(features, ages, k, scale)
}

/// [`order_regularizer`] with the scaling norm supplied by the caller.
///
/// This is the stop-gradient evaluation path: gradients (and finite
/// differences taken against this function) treat `scale` as a constant.
pub fn order_regularizer_scaled(
    features: &Matrix,
    ages: &[f64],
    k: f64,
    scale: f64,
) -> Result<LossOutput, LossError> {
    if features.rows() != ages.len() {
        return Err(LossError::LengthMismatch {
            left: features.rows(),
            right: ages.len(),
        });
    }
    if !(k > 0.0) {
        return Err(NumericsError::InvalidParameter { name: "k", value: k }.into());
    }
    if !(scale > 0.0) {
        return Err(NumericsError::InvalidParameter {
            name: "scale",
            value: scale,
        }
        .into());
    }
    let n = features.rows();
    if n == 0 {
        return Err(LossError::MissingInput {
            kind: LossKind::CeOrder,
            what: "a nonempty batch",
        });
    }
    let d = features.cols();
    if n == 1 {
        let mut out = LossOutput::scalar(0.0);
        out.grad_features = Matrix::zeros(1, d);
        out.order_term_skipped = true;
        return Ok(out);
    }

    let scaled: Vec<Vec<f64>> = features
        .iter_rows()
        .map(|r| r.iter().map(|x| x / scale).collect())
        .collect();

    let pair_norm = 1.0 / (n * (n - 1)) as f64;
    let mut value = 0.0;
    let mut grad = Matrix::zeros(n, d);
    let mut slope = vec![0.0; d];
    for i in 0..n {
        for j in (i + 1)..n {
            let xi = &scaled[i];
            let xj = &scaled[j];
            let weight = (ages[i] - ages[j]).abs();
            let dist = lk_distance(xi, xj, k)?;
            // Ordered pairs (i,j) and (j,i) contribute identically.
            value += 2.0 * weight * dist;
            if weight == 0.0 {
                continue;
            }
            if dist > 0.0 {
                // d dist / d x̄_i per coordinate: S^((1-k)/k) |δ|^(k-1) sgn(δ)
                // with S = sum |δ|^k. For k = 1 this is just sgn(δ).
                if k == 1.0 {
                    for (s, (&a, &b)) in slope.iter_mut().zip(xi.iter().zip(xj)) {
                        let delta = a - b;
                        *s = if delta > 0.0 {
                            1.0
                        } else if delta < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                    }
                } else {
                    let s_sum: f64 = xi
                        .iter()
                        .zip(xj)
                        .map(|(&a, &b)| (a - b).abs().powf(k))
                        .sum();
                    let s_factor = s_sum.powf((1.0 - k) / k);
                    for (s, (&a, &b)) in slope.iter_mut().zip(xi.iter().zip(xj)) {
                        let delta = a - b;
                        *s = if delta == 0.0 {
                            0.0
                        } else {
                            s_factor
                                * delta.abs().powf(k - 1.0)
                                * if delta > 0.0 { 1.0 } else { -1.0 }
                        };
                    }
                }
            } else {
                // Coincident features with distinct ages: the distance cusp
                // admits any subgradient; pick the one that separates the
                // pair, moving the older sample up in every coordinate.
                let dir = if ages[i] > ages[j] { 1.0 } else { -1.0 };
                for s in slope.iter_mut() {
                    *s = dir;
                }
            }
            // Chain through x̄ = x / scale with scale held constant.
            let coeff = 2.0 * weight * pair_norm / scale;
            {
                let gi = grad.row_mut(i);
                for (g, &s) in gi.iter_mut().zip(&slope) {
                    *g -= coeff * s;
                }
            }
            {
                let gj = grad.row_mut(j);
                for (g, &s) in gj.iter_mut().zip(&slope) {
                    *g += coeff * s;
                }
            }
        }
    }
    let mut out = LossOutput::scalar(-value * pair_norm);
    out.grad_features = grad;
    Ok(out)
}

/// Mean/variance penalty on the decoded age distribution.
///
/// With `p = softmax(logits_i)` and `m_i = sum_c p_ic * age_c`:
/// `value = lambda_mean * (1/2N) sum (m_i - t_i)^2
///        + lambda_var * (1/N) sum_i sum_c p_ic (age_c - m_i)^2`.
pub fn mean_variance(
    logits: &Matrix,
    class_ages: &[f64],
    true_ages: &[f64],
    lambda_mean: f64,
    lambda_var: f64,
) -> Result<LossOutput, LossError> {
    if logits.cols() != class_ages.len() {
        return Err(LossError::LengthMismatch {
            left: logits.cols(),
            right: class_ages.len(),
        });
    }
    if logits.rows() != true_ages.len() {
        return Err(LossError::LengthMismatch {
            left: logits.rows(),
            right: true_ages.len(),
        });
    }
    if logits.rows() == 0 {
        return Err(LossError::MissingInput {
            kind: LossKind::CeMeanVariance,
            what: "a nonempty batch",
        });
    }
    let n = logits.rows();
    let c = logits.cols();
    let inv_n = 1.0 / n as f64;
    let mut mean_term = 0.0;
    let mut var_term = 0.0;
    let mut grad = Matrix::zeros(n, c);
    for i in 0..n {
        let probs = stable_softmax(logits.row(i))?;
        let mean: f64 = probs.iter().zip(class_ages).map(|(&p, &a)| p * a).sum();
        let var: f64 = probs
            .iter()
            .zip(class_ages)
            .map(|(&p, &a)| p * (a - mean) * (a - mean))
            .sum();
        let diff = mean - true_ages[i];
        mean_term += diff * diff;
        var_term += var;
        let grow = grad.row_mut(i);
        for (j, (&p, &a)) in probs.iter().zip(class_ages).enumerate() {
            let dm = p * (a - mean);
            let dv = p * ((a - mean) * (a - mean) - var);
            grow[j] = inv_n * (lambda_mean * diff * dm + lambda_var * dv);
        }
    }
    let value = lambda_mean * mean_term * inv_n / 2.0 + lambda_var * var_term * inv_n;
    let mut out = LossOutput::scalar(value);
    out.grad_logits = grad;
    Ok(out)
}

/// Inputs for [`total_loss`]; which fields are required depends on the kind.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossInputs<'a> {
    /// Batch x C logits (classification kinds).
    pub logits: Option<&'a Matrix>,
    /// Batch x d penultimate features (regularized kinds).
    pub features: Option<&'a Matrix>,
    /// Scalar predictions (regression kinds).
    pub pred_ages: Option<&'a [f64]>,
    /// Ground-truth ages in years.
    pub true_ages: &'a [f64],
    /// Class indices (classification kinds).
    pub labels: Option<&'a [usize]>,
}

/// Evaluate the configured loss, summing components with their weights.
pub fn total_loss(config: &LossConfig, inputs: LossInputs<'_>) -> Result<LossOutput, LossError> {
    total_loss_scaled(config, inputs, None)
}

/// [`total_loss`] with the regularizer's scaling norm pinned to a caller
/// value, used by finite-difference harnesses to honor the stop-gradient
/// convention. `None` computes the norm from the batch as usual.
pub fn total_loss_scaled(
    config: &LossConfig,
    inputs: LossInputs<'_>,
    order_scale: Option<f64>,
) -> Result<LossOutput, LossError> {
    config.validate()?;
    let order = |features: &Matrix| -> Result<LossOutput, LossError> {
        match order_scale {
            Some(scale) => order_regularizer_scaled(features, inputs.true_ages, config.k, scale),
            None => order_regularizer(features, inputs.true_ages, config.k),
        }
    };
    match config.kind {
        LossKind::Mse => {
            let pred = inputs.pred_ages.ok_or(LossError::MissingInput {
                kind: config.kind,
                what: "pred_ages",
            })?;
            mse(pred, inputs.true_ages)
        }
        LossKind::MseDistance => {
            let pred = inputs.pred_ages.ok_or(LossError::MissingInput {
                kind: config.kind,
                what: "pred_ages",
            })?;
            let features = inputs.features.ok_or(LossError::MissingInput {
                kind: config.kind,
                what: "features",
            })?;
            let base = mse(pred, inputs.true_ages)?;
            let mut reg = order(features)?;
            reg.grad_features.scale(config.lambda_order);
            Ok(LossOutput {
                value: base.value + config.lambda_order * reg.value,
                grad_logits: Matrix::zeros(0, 0),
                grad_features: reg.grad_features,
                grad_pred: base.grad_pred,
                order_term_skipped: reg.order_term_skipped,
            })
        }
        LossKind::Ce => {
            let logits = inputs.logits.ok_or(LossError::MissingInput {
                kind: config.kind,
                what: "logits",
            })?;
            let labels = inputs.labels.ok_or(LossError::MissingInput {
                kind: config.kind,
                what: "labels",
            })?;
            cross_entropy(logits, labels)
        }
        LossKind::CeMeanVariance => {
            let logits = inputs.logits.ok_or(LossError::MissingInput {
                kind: config.kind,
                what: "logits",
            })?;
            let labels = inputs.labels.ok_or(LossError::MissingInput {
                kind: config.kind,
                what: "labels",
            })?;
            let base = cross_entropy(logits, labels)?;
            let mv = mean_variance(
                logits,
                &config.class_ages,
                inputs.true_ages,
                config.lambda_mean,
                config.lambda_var,
            )?;
            let mut grad_logits = base.grad_logits;
            grad_logits.add_assign(&mv.grad_logits);
            Ok(LossOutput {
                value: base.value + mv.value,
                grad_logits,
                grad_features: Matrix::zeros(0, 0),
                grad_pred: Vec::new(),
                order_term_skipped: false,
            })
        }
        LossKind::CeOrder => {
            let logits = inputs.logits.ok_or(LossError::MissingInput {
                kind: config.kind,
                what: "logits",
            })?;
            let labels = inputs.labels.ok_or(LossError::MissingInput {
                kind: config.kind,
                what: "labels",
            })?;
            let features = inputs.features.ok_or(LossError::MissingInput {
                kind: config.kind,
                what: "features",
            })?;
            let base = cross_entropy(logits, labels)?;
            let mut reg = order(features)?;
            reg.grad_features.scale(config.lambda_order);
            Ok(LossOutput {
                value: base.value + config.lambda_order * reg.value,
                grad_logits: base.grad_logits,
                grad_features: reg.grad_features,
                grad_pred: Vec::new(),
                order_term_skipped: reg.order_term_skipped,
            })
        }
    }
}

/// Largest row norm of a feature matrix, for pinning the regularizer scale.
pub fn order_scale_for(features: &Matrix) -> f64 {
    let m = max_l2_norm(features.iter_rows()).unwrap_or(0.0);
    if m <= NORM_FLOOR {
        1.0
    } else {
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::numerics::ALGEBRA_TOL;
    use crate::rng::RngState;

    fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        Matrix::from_vec(rows, cols, data)
    }

    #[test]
    fn ce_uniform_logits_is_log_c() {
        let logits = Matrix::zeros(3, 4);
        let out = cross_entropy(&logits, &[0, 2, 3]).unwrap();
        assert!((out.value - 4.0f64.ln()).abs() < ALGEBRA_TOL);
    }

    #[test]
    fn ce_hand_value() {
        let logits = Matrix::from_vec(1, 3, vec![1.0, 2.0, 3.0]);
        let out = cross_entropy(&logits, &[2]).unwrap();
        assert!((out.value - 0.4076059644443803).abs() < 1e-12);
    }

    #[test]
    fn ce_saturated_correct_prediction_is_zero() {
        let logits = Matrix::from_vec(1, 4, vec![1.0e3, 0.0, 0.0, 0.0]);
        let out = cross_entropy(&logits, &[0]).unwrap();
        assert!(out.value.abs() < ALGEBRA_TOL);
    }

    #[test]
    fn ce_rejects_out_of_range_label() {
        let logits = Matrix::zeros(1, 3);
        assert!(matches!(
            cross_entropy(&logits, &[3]),
            Err(LossError::LabelOutOfRange { label: 3, classes: 3 })
        ));
    }

    #[test]
    fn ce_grad_rows_sum_to_zero() {
        let mut rng = RngState::new(5, 0).rng();
        let logits = random_matrix(4, 6, &mut rng);
        let out = cross_entropy(&logits, &[0, 5, 2, 2]).unwrap();
        for i in 0..4 {
            let s: f64 = out.grad_logits.row(i).iter().sum();
            assert!(s.abs() < ALGEBRA_TOL);
        }
    }

    #[test]
    fn mse_hand_values() {
        assert_eq!(mse(&[7.0, 8.0], &[7.0, 8.0]).unwrap().value, 0.0);
        assert_eq!(mse(&[10.0], &[13.0]).unwrap().value, 9.0);
        assert_eq!(mse(&[1.0, 2.0], &[0.0, 0.0]).unwrap().value, 2.5);
    }

    #[test]
    fn order_two_sample_hand_value() {
        // After max-norm scaling the rows are [1, 0] and [0.5, 0]:
        // Manhattan distance 0.5, age gap 2, so the mean over the two
        // ordered pairs is -(1/2) * 2 * (2 * 0.5) = -1.
        let features = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.5, 0.0]);
        let out = order_regularizer(&features, &[3.0, 5.0], 1.0).unwrap();
        assert_eq!(out.value, -1.0);
    }

    #[test]
    fn order_equal_ages_is_zero() {
        let mut rng = RngState::new(6, 0).rng();
        let features = random_matrix(5, 8, &mut rng);
        let out = order_regularizer(&features, &[40.0; 5], 1.0).unwrap();
        assert_eq!(out.value, 0.0);
        assert!(out.grad_features.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn order_identical_features_pull_apart() {
        let features = Matrix::from_vec(2, 3, vec![0.2, 0.4, 0.1, 0.2, 0.4, 0.1]);
        let out = order_regularizer(&features, &[30.0, 60.0], 1.0).unwrap();
        assert_eq!(out.value, 0.0);
        // Row 1 is older: descent (-grad) must increase its coordinates.
        assert!(out.grad_features.row(1).iter().all(|&g| g < 0.0));
        assert!(out.grad_features.row(0).iter().all(|&g| g > 0.0));
        for j in 0..3 {
            assert_eq!(out.grad_features.get(0, j), -out.grad_features.get(1, j));
        }
    }

    #[test]
    fn order_single_sample_skips() {
        let features = Matrix::from_vec(1, 4, vec![1.0, 2.0, 3.0, 4.0]);
        let out = order_regularizer(&features, &[50.0], 1.0).unwrap();
        assert_eq!(out.value, 0.0);
        assert!(out.order_term_skipped);
        assert_eq!(out.grad_features.rows(), 1);
        assert!(out.grad_features.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn order_value_never_positive() {
        let mut rng = RngState::new(7, 0).rng();
        for _ in 0..20 {
            let n = rng.random_range(2..10);
            let features = random_matrix(n, 6, &mut rng);
            let ages: Vec<f64> = (0..n).map(|_| rng.random_range(8.0..95.0)).collect();
            for k in [0.5, 1.0, 2.0] {
                let out = order_regularizer(&features, &ages, k).unwrap();
                assert!(out.value <= 0.0);
                assert!(out.grad_features.all_finite());
            }
        }
    }

    #[test]
    fn order_rejects_bad_k() {
        let features = Matrix::zeros(2, 2);
        assert!(order_regularizer(&features, &[1.0, 2.0], 0.0).is_err());
        assert!(order_regularizer(&features, &[1.0, 2.0], -1.0).is_err());
    }

    #[test]
    fn mean_variance_one_hot_is_zero() {
        // Saturated logits make the softmax an exact one-hot.
        let logits = Matrix::from_vec(1, 3, vec![1.0e4, 0.0, 0.0]);
        let out = mean_variance(&logits, &[20.0, 21.0, 22.0], &[20.0], 1.0, 1.0).unwrap();
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn mean_variance_hand_values() {
        // Even split over ages {20, 22} with true age 21: the decoded mean
        // is exact, the variance is 1.
        let logits = Matrix::from_vec(1, 2, vec![0.0, 0.0]);
        let ages = [20.0, 22.0];
        let mean_only = mean_variance(&logits, &ages, &[21.0], 1.0, 0.0).unwrap();
        assert!(mean_only.value.abs() < ALGEBRA_TOL);
        let var_only = mean_variance(&logits, &ages, &[21.0], 0.0, 1.0).unwrap();
        assert!((var_only.value - 1.0).abs() < ALGEBRA_TOL);

        // Uniform over {10, 20, 30} with true age 20: variance 200/3.
        let logits = Matrix::from_vec(1, 3, vec![0.0, 0.0, 0.0]);
        let ages = [10.0, 20.0, 30.0];
        let mean_only = mean_variance(&logits, &ages, &[20.0], 1.0, 0.0).unwrap();
        assert!(mean_only.value.abs() < 1e-12);
        let var_only = mean_variance(&logits, &ages, &[20.0], 0.0, 1.0).unwrap();
        assert!((var_only.value - 200.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn mean_variance_value_nonnegative() {
        let mut rng = RngState::new(8, 0).rng();
        let ages: Vec<f64> = (0..6).map(|i| 20.0 + i as f64).collect();
        for _ in 0..10 {
            let logits = random_matrix(4, 6, &mut rng);
            let t: Vec<f64> = (0..4).map(|_| rng.random_range(20.0..26.0)).collect();
            let out = mean_variance(&logits, &ages, &t, 0.2, 0.05).unwrap();
            assert!(out.value >= 0.0);
        }
    }

    #[test]
    fn total_loss_zero_weight_degenerates() {
        let mut rng = RngState::new(9, 0).rng();
        let logits = random_matrix(4, 5, &mut rng);
        let features = random_matrix(4, 8, &mut rng);
        let ages = [21.0, 24.0, 20.0, 23.0];
        let labels = [1usize, 4, 0, 3];
        let class_ages: Vec<f64> = (0..5).map(|i| 20.0 + i as f64).collect();

        let mut cfg = LossConfig::new(LossKind::CeOrder, class_ages.clone());
        cfg.lambda_order = 0.0;
        let with_order = total_loss(
            &cfg,
            LossInputs {
                logits: Some(&logits),
                features: Some(&features),
                true_ages: &ages,
                labels: Some(&labels),
                ..Default::default()
            },
        )
        .unwrap();
        let plain = cross_entropy(&logits, &labels).unwrap();
        assert_eq!(with_order.value, plain.value);

        let pred = [22.0, 25.0, 19.0, 21.0];
        let mut cfg = LossConfig::new(LossKind::MseDistance, Vec::new());
        cfg.lambda_order = 0.0;
        let with_dist = total_loss(
            &cfg,
            LossInputs {
                pred_ages: Some(&pred),
                features: Some(&features),
                true_ages: &ages,
                ..Default::default()
            },
        )
        .unwrap();
        let plain = mse(&pred, &ages).unwrap();
        assert_eq!(with_dist.value, plain.value);
    }

    #[test]
    fn total_loss_is_component_sum() {
        let mut rng = RngState::new(10, 0).rng();
        let class_ages: Vec<f64> = (0..6).map(|i| 18.0 + i as f64).collect();
        for _ in 0..10 {
            let logits = random_matrix(5, 6, &mut rng);
            let features = random_matrix(5, 12, &mut rng);
            let labels: Vec<usize> = (0..5).map(|_| rng.random_range(0..6)).collect();
            let ages: Vec<f64> = labels.iter().map(|&l| class_ages[l]).collect();
            let cfg = LossConfig::new(LossKind::CeOrder, class_ages.clone());
            let combined = total_loss(
                &cfg,
                LossInputs {
                    logits: Some(&logits),
                    features: Some(&features),
                    true_ages: &ages,
                    labels: Some(&labels),
                    ..Default::default()
                },
            )
            .unwrap();
            let ce = cross_entropy(&logits, &labels).unwrap();
            let reg = order_regularizer(&features, &ages, 1.0).unwrap();
            assert!((combined.value - (ce.value + reg.value)).abs() < ALGEBRA_TOL);
        }
    }

    #[test]
    fn total_loss_reports_missing_inputs() {
        let cfg = LossConfig::new(LossKind::Ce, vec![20.0, 21.0]);
        let err = total_loss(
            &cfg,
            LossInputs {
                true_ages: &[20.0],
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, LossError::MissingInput { what: "logits", .. }));

        let cfg = LossConfig::new(LossKind::Mse, Vec::new());
        let err = total_loss(
            &cfg,
            LossInputs {
                true_ages: &[20.0],
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(
            err,
            LossError::MissingInput { what: "pred_ages", .. }
        ));
    }
}
