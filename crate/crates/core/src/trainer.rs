//! Deterministic mini-batch training with decoupled weight decay, early
//! stopping on validation MAE, and the evaluation harness.
//!
//! Each epoch oversamples the training strata, shuffles, and walks fixed
//! mini-batches; the final partial batch is kept (its pairwise term is
//! skipped when it holds a single sample). Every random draw comes from a
//! per-purpose `(seed, stream)` state, training is single-writer over the
//! parameters, and all reductions are ordered, so two runs with identical
//! inputs produce bit-identical parameters, histories, and reports
//! (wall-clock fields excepted).

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    class_index, stratified_oversample, DataError, Dataset, OversampleMode,
};
use crate::losses::{total_loss, LossConfig, LossError, LossInputs};
use crate::metrics::{
    mae, ordinality_score, systematic_bias, MetricsError, MetricsReport,
};
use crate::model::{
    backward, forward, from_document, init_params, predict_age, to_document, DenseLayer,
    HeadKind, MlpGrads, MlpParams, ModelConfig, ModelDocument, ModelError,
};
use crate::numerics::Matrix;
use crate::rng::RngState;

const STREAM_INIT: u64 = 10;
const STREAM_EPOCH_BASE: u64 = 1 << 20;

/// Forward pass chunk for full-dataset evaluation.
const EVAL_CHUNK: usize = 1024;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),
    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Diverged { epoch: usize },
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

/// Training hyperparameters. Defaults: AdamW at learning rate 1e-3 with
/// weight decay 1e-2, batch size 4, up to 100 epochs with patience 10.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation-MAE improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub loss: LossConfig,
    pub oversample: OversampleMode,
}

impl TrainConfig {
    /// Defaults around a loss config; oversampling strata follow the loss
    /// family (integer classes for classifiers, age bins for regression).
    pub fn new(loss: LossConfig, seed: u64) -> Self {
        let oversample = if loss.kind.is_classification() {
            OversampleMode::ByClass
        } else {
            OversampleMode::ByAgeBin
        };
        Self {
            learning_rate: 1e-3,
            weight_decay: 1e-2,
            batch_size: 4,
            max_epochs: 100,
            patience: 10,
            seed,
            loss,
            oversample,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(TrainError::InvalidConfig(
                "learning_rate must be positive and weight_decay nonnegative".into(),
            ));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(TrainError::InvalidConfig(
                "batch_size and max_epochs must be positive".into(),
            ));
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            return Err(TrainError::InvalidConfig(
                "patience must be in 1..=max_epochs".into(),
            ));
        }
        self.loss.validate()?;
        Ok(())
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second moment estimates per parameter plus the step counter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub m: Vec<DenseLayer>,
    pub v: Vec<DenseLayer>,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(params: &MlpParams) -> Self {
        let zeros = params.zeros_grads();
        Self {
            m: zeros.layers.clone(),
            v: zeros.layers,
            t: 0,
        }
    }
}

/// One decoupled-weight-decay update:
/// `p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p_pre`
/// with bias-corrected moments and the decay taken on the pre-step value.
pub fn adamw_step(
    params: &mut MlpParams,
    grads: &MlpGrads,
    state: &mut OptimizerState,
    lr: f64,
    wd: f64,
) {
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for l in 0..params.layers.len() {
        let pw = params.layers[l].weight.as_mut_slice();
        let gw = grads.layers[l].weight.as_slice();
        let mw = state.m[l].weight.as_mut_slice();
        let vw = state.v[l].weight.as_mut_slice();
        for i in 0..pw.len() {
            pw[i] = adamw_update(pw[i], gw[i], &mut mw[i], &mut vw[i], bc1, bc2, lr, wd);
        }
        let pb = &mut params.layers[l].bias;
        let gb = &grads.layers[l].bias;
        let mb = &mut state.m[l].bias;
        let vb = &mut state.v[l].bias;
        for i in 0..pb.len() {
            pb[i] = adamw_update(pb[i], gb[i], &mut mb[i], &mut vb[i], bc1, bc2, lr, wd);
        }
    }
}

#[inline]
fn adamw_update(
    p: f64,
    g: f64,
    m: &mut f64,
    v: &mut f64,
    bc1: f64,
    bc2: f64,
    lr: f64,
    wd: f64,
) -> f64 {
    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
    let m_hat = *m / bc1;
    let v_hat = *v / bc2;
    p - lr * m_hat / (v_hat.sqrt() + ADAM_EPS) - lr * wd * p
}

/// Per-epoch record. `wall_secs` is a measurement and is excluded from the
/// bit-reproducibility contract.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub train_loss: f64,
    pub val_mae: f64,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// Index of the epoch whose parameters were returned (minimal val MAE).
    pub best_epoch: usize,
}

struct EpochBatch {
    features: Matrix,
    true_ages: Vec<f64>,
    labels: Vec<usize>,
}

fn batch_of(dataset: &Dataset, order: &[usize], class_ages: Option<&[f64]>) -> EpochBatch {
    let mut data = Vec::with_capacity(order.len() * dataset.dim);
    let mut true_ages = Vec::with_capacity(order.len());
    let mut labels = Vec::with_capacity(order.len());
    for &idx in order {
        let s = &dataset.samples[idx];
        data.extend_from_slice(&s.features);
        true_ages.push(s.chron_age);
        if let Some(classes) = class_ages {
            labels.push(class_index(s.chron_age, classes));
        }
    }
    EpochBatch {
        features: Matrix::from_vec(order.len(), dataset.dim, data),
        true_ages,
        labels,
    }
}

/// Train with per-epoch oversampling and seeded shuffling, tracking the best
/// validation MAE; returns the best epoch's parameters and the history.
///
/// Classifier configurations require every training age to fall inside the
/// head's class range (integer classes built from the training data).
pub fn train_model(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    train_data: &Dataset,
    val_data: &Dataset,
) -> Result<(MlpParams, TrainHistory), TrainError> {
    train_config.validate()?;
    model_config.validate()?;
    if train_data.is_empty() {
        return Err(TrainError::EmptyDataset("train"));
    }
    if val_data.is_empty() {
        return Err(TrainError::EmptyDataset("validation"));
    }
    let classification = train_config.loss.kind.is_classification();
    let class_ages: Option<Vec<f64>> = if classification {
        match &model_config.head {
            HeadKind::Classifier { class_ages } => {
                if class_ages != &train_config.loss.class_ages {
                    return Err(TrainError::InvalidConfig(
                        "model head and loss config disagree on class ages".into(),
                    ));
                }
                Some(class_ages.clone())
            }
            HeadKind::Regressor => {
                return Err(TrainError::InvalidConfig(
                    "classification loss needs a classifier head".into(),
                ))
            }
        }
    } else {
        if !matches!(model_config.head, HeadKind::Regressor) {
            return Err(TrainError::InvalidConfig(
                "regression loss needs a regressor head".into(),
            ));
        }
        None
    };

    let mut params = init_params(model_config, RngState::new(train_config.seed, STREAM_INIT))?;
    let mut opt = OptimizerState::new(&params);
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
    };
    let mut best_params = params.clone();
    let mut best_mae = f64::INFINITY;
    let mut stall = 0usize;

    for epoch in 0..train_config.max_epochs {
        let start = Instant::now();
        let mut epoch_rng =
            RngState::new(train_config.seed, STREAM_EPOCH_BASE + epoch as u64).rng();
        // Balance strata first, then shuffle so batches mix ages; a sorted
        // batch would zero out every pairwise age gap.
        let epoch_data =
            stratified_oversample(train_data, train_config.oversample, &mut epoch_rng)?;
        let mut order: Vec<usize> = (0..epoch_data.len()).collect();
        use rand::Rng;
        for i in (1..order.len()).rev() {
            let j = epoch_rng.random_range(0..=i);
            order.swap(i, j);
        }

        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(train_config.batch_size) {
            let batch = batch_of(&epoch_data, chunk, class_ages.as_deref());
            let (output, cache) = forward(&params, &batch.features)?;
            let features = cache.penultimate();
            let pred: Vec<f64>;
            let inputs = if classification {
                LossInputs {
                    logits: Some(&output),
                    features: Some(features),
                    true_ages: &batch.true_ages,
                    labels: Some(&batch.labels),
                    ..Default::default()
                }
            } else {
                pred = output.iter_rows().map(|r| r[0]).collect();
                LossInputs {
                    pred_ages: Some(&pred),
                    features: Some(features),
                    true_ages: &batch.true_ages,
                    ..Default::default()
                }
            };
            let loss = total_loss(&train_config.loss, inputs)?;
            if !loss.value.is_finite() {
                return Err(TrainError::Diverged { epoch });
            }
            loss_sum += loss.value * chunk.len() as f64;
            seen += chunk.len();
            let grad_output = if classification {
                loss.grad_logits
            } else {
                Matrix::from_vec(chunk.len(), 1, loss.grad_pred)
            };
            let grads = backward(&params, &cache, &grad_output, &loss.grad_features)?;
            adamw_step(
                &mut params,
                &grads,
                &mut opt,
                train_config.learning_rate,
                train_config.weight_decay,
            );
        }

        let val_pred = predict_dataset(&params, model_config, val_data)?;
        let val_mae = mae(&val_pred, &val_data.ages()).expect("validated nonempty");
        history.epochs.push(EpochStats {
            train_loss: loss_sum / seen as f64,
            val_mae,
            wall_secs: start.elapsed().as_secs_f64(),
        });
        if val_mae < best_mae {
            best_mae = val_mae;
            best_params = params.clone();
            history.best_epoch = epoch;
            stall = 0;
        } else {
            stall += 1;
            if stall >= train_config.patience {
                break;
            }
        }
    }
    Ok((best_params, history))
}

/// Decoded ages for a whole dataset in input order (chunked forward).
pub fn predict_dataset(
    params: &MlpParams,
    model_config: &ModelConfig,
    data: &Dataset,
) -> Result<Vec<f64>, TrainError> {
    let mut out = Vec::with_capacity(data.len());
    let full = data.features_matrix();
    let mut row = 0;
    while row < data.len() {
        let end = (row + EVAL_CHUNK).min(data.len());
        let chunk = Matrix::from_vec(
            end - row,
            data.dim,
            full.as_slice()[row * data.dim..end * data.dim].to_vec(),
        );
        let (output, _) = forward(params, &chunk)?;
        out.extend(predict_age(&output, &model_config.head));
        row = end;
    }
    Ok(out)
}

/// Full evaluation product: the report, penultimate embeddings in input
/// order, and decoded ages.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub embeddings: Matrix,
    pub pred_ages: Vec<f64>,
}

/// Evaluate a trained model on a test set. Metric precondition failures are
/// recorded per metric in the report instead of aborting the rest; the
/// ordinality metric groups embeddings by rounded integer age.
pub fn evaluate_model(
    params: &MlpParams,
    model_config: &ModelConfig,
    test_data: &Dataset,
) -> Result<Evaluation, TrainError> {
    if test_data.is_empty() {
        return Err(TrainError::EmptyDataset("test"));
    }
    let full = test_data.features_matrix();
    let mut pred_ages = Vec::with_capacity(test_data.len());
    let mut embeddings: Option<Matrix> = None;
    let mut row = 0;
    while row < test_data.len() {
        let end = (row + EVAL_CHUNK).min(test_data.len());
        let chunk = Matrix::from_vec(
            end - row,
            test_data.dim,
            full.as_slice()[row * test_data.dim..end * test_data.dim].to_vec(),
        );
        let (output, cache) = forward(params, &chunk)?;
        pred_ages.extend(predict_age(&output, &model_config.head));
        let pen = cache.penultimate();
        let emb = embeddings.get_or_insert_with(|| Matrix::zeros(0, pen.cols()));
        let mut data = emb.as_slice().to_vec();
        data.extend_from_slice(pen.as_slice());
        *emb = Matrix::from_vec(row + pen.rows(), pen.cols(), data);
        row = end;
    }
    let embeddings = embeddings.expect("nonempty test set");
    let true_ages = test_data.ages();

    let mut errors = std::collections::BTreeMap::new();
    let mae = mae(&pred_ages, &true_ages).expect("nonempty test set");
    let rounded: Vec<f64> = true_ages
        .iter()
        .map(|&a| crate::data::rounded_age(a) as f64)
        .collect();
    let ordinality = match ordinality_score(&embeddings, &rounded) {
        Ok(v) => Some(v),
        Err(e) => {
            errors.insert("ordinality".to_string(), e.to_string());
            None
        }
    };
    let (sb_left, sb_right, n_left, n_right) = match systematic_bias(&pred_ages, &true_ages) {
        Ok(sb) => (
            Some(sb.sb_left),
            Some(sb.sb_right),
            sb.n_left,
            sb.n_right,
        ),
        Err(e @ MetricsError::InsufficientSamples { .. }) | Err(e) => {
            errors.insert("systematic_bias".to_string(), e.to_string());
            (None, None, 0, 0)
        }
    };
    let mut per_class_counts = std::collections::BTreeMap::new();
    for &a in &true_ages {
        *per_class_counts
            .entry(crate::data::rounded_age(a))
            .or_insert(0usize) += 1;
    }
    Ok(Evaluation {
        report: MetricsReport {
            mae,
            ordinality,
            sb_left,
            sb_right,
            n_left,
            n_right,
            per_class_counts,
            metric_errors: errors,
        },
        embeddings,
        pred_ages,
    })
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk training artifact: the model document plus the exact training
/// configuration and root random state that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model: ModelDocument,
    pub train_config: TrainConfig,
    pub rng: RngState,
}

impl Checkpoint {
    pub fn new(model_config: &ModelConfig, params: &MlpParams, train_config: &TrainConfig) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            model: to_document(model_config, params),
            train_config: train_config.clone(),
            rng: RngState::new(train_config.seed, STREAM_INIT),
        }
    }

    pub fn into_parts(self) -> Result<(ModelConfig, MlpParams, TrainConfig), TrainError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(TrainError::Checkpoint(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        let (config, params) = from_document(&self.model)?;
        Ok((config, params, self.train_config))
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), TrainError> {
    let json = serde_json::to_string_pretty(checkpoint)
        .map_err(|e| TrainError::Checkpoint(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| TrainError::Checkpoint(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_lifespan, round_to_classes, SynthConfig};
    use crate::losses::LossKind;

    #[test]
    fn adamw_first_step_hand_value() {
        let mut params = MlpParams {
            layers: vec![DenseLayer {
                weight: Matrix::from_vec(1, 1, vec![1.0]),
                bias: vec![0.0],
            }],
        };
        let grads = MlpGrads {
            layers: vec![DenseLayer {
                weight: Matrix::from_vec(1, 1, vec![1.0]),
                bias: vec![0.0],
            }],
        };
        let mut state = OptimizerState::new(&params);
        adamw_step(&mut params, &grads, &mut state, 0.1, 0.0);
        assert_eq!(state.t, 1);
        let w = params.layers[0].weight.get(0, 0);
        assert!((w - 0.9).abs() < 1e-8, "w = {w}");

        // Same step with weight decay 0.01 subtracts lr * wd * w = 0.001.
        let mut params2 = MlpParams {
            layers: vec![DenseLayer {
                weight: Matrix::from_vec(1, 1, vec![1.0]),
                bias: vec![0.0],
            }],
        };
        let mut state2 = OptimizerState::new(&params2);
        adamw_step(&mut params2, &grads, &mut state2, 0.1, 0.01);
        let w2 = params2.layers[0].weight.get(0, 0);
        assert!((w2 - 0.899).abs() < 1e-8, "w = {w2}");
    }

    #[test]
    fn adamw_zero_gradient_fixed_point_without_decay() {
        let mut params = MlpParams {
            layers: vec![DenseLayer {
                weight: Matrix::from_vec(1, 2, vec![0.7, -0.3]),
                bias: vec![0.25],
            }],
        };
        let grads = params.zeros_grads();
        let grads = MlpGrads {
            layers: grads.layers,
        };
        let mut state = OptimizerState::new(&params);
        let before = params.clone();
        for _ in 0..5 {
            adamw_step(&mut params, &grads, &mut state, 1e-3, 0.0);
        }
        assert_eq!(params, before);
    }

    #[test]
    fn adamw_pure_decay_is_geometric() {
        let lr = 1e-3;
        let wd = 1e-2;
        let p0 = 1.37;
        let mut params = MlpParams {
            layers: vec![DenseLayer {
                weight: Matrix::from_vec(1, 1, vec![p0]),
                bias: vec![0.0],
            }],
        };
        let grads = MlpGrads {
            layers: params.zeros_grads().layers,
        };
        let mut state = OptimizerState::new(&params);
        let mut reference = p0;
        for _ in 0..50 {
            adamw_step(&mut params, &grads, &mut state, lr, wd);
            reference = reference - lr * wd * reference;
            assert_eq!(params.layers[0].weight.get(0, 0), reference);
        }
    }

    fn tiny_setup(
        kind: LossKind,
        seed: u64,
    ) -> (ModelConfig, TrainConfig, Dataset, Dataset) {
        let config = SynthConfig {
            n: 120,
            d: 8,
            signal_dims: 4,
            age_range: (20.0, 40.0),
            seed,
            ..SynthConfig::default()
        };
        let data = generate_lifespan(&config).unwrap();
        let (train, val, _) =
            crate::data::stratified_split(&data, (0.7, 0.3, 0.0), seed).unwrap();
        let (_, class_ages) = round_to_classes(&train).unwrap();
        let (head, loss_classes) = if kind.is_classification() {
            (
                HeadKind::Classifier {
                    class_ages: class_ages.clone(),
                },
                class_ages,
            )
        } else {
            (HeadKind::Regressor, Vec::new())
        };
        let model_config = ModelConfig::new(8, vec![12, 12], head).unwrap();
        let mut train_config = TrainConfig::new(LossConfig::new(kind, loss_classes), seed);
        train_config.max_epochs = 4;
        train_config.patience = 4;
        (model_config, train_config, train, val)
    }

    #[test]
    fn training_is_bit_deterministic() {
        let (model_config, train_config, train, val) = tiny_setup(LossKind::CeOrder, 31);
        let (params_a, hist_a) = train_model(&model_config, &train_config, &train, &val).unwrap();
        let (params_b, hist_b) = train_model(&model_config, &train_config, &train, &val).unwrap();
        assert_eq!(params_a, params_b);
        assert_eq!(hist_a.best_epoch, hist_b.best_epoch);
        for (a, b) in hist_a.epochs.iter().zip(&hist_b.epochs) {
            assert_eq!(a.train_loss, b.train_loss);
            assert_eq!(a.val_mae, b.val_mae);
        }
    }

    #[test]
    fn best_epoch_has_minimal_val_mae() {
        let (model_config, mut train_config, train, val) = tiny_setup(LossKind::Ce, 32);
        train_config.max_epochs = 6;
        train_config.patience = 6;
        let (_, hist) = train_model(&model_config, &train_config, &train, &val).unwrap();
        let best = hist.epochs[hist.best_epoch].val_mae;
        assert!(hist.epochs.iter().all(|e| e.val_mae >= best));
    }

    #[test]
    fn patience_stops_training_on_constant_data() {
        // Constant dataset: zero features, zero target. The gradient is
        // exactly zero, validation MAE never improves past epoch 0, and
        // patience 1 halts the loop immediately.
        let mut train = Dataset::new(4);
        let mut val = Dataset::new(4);
        for i in 0..40 {
            let s = crate::data::Sample {
                features: vec![0.0; 4],
                chron_age: 0.0,
                brain_age: 0.0,
                group: None,
            };
            if i % 2 == 0 {
                train.samples.push(s);
            } else {
                val.samples.push(s);
            }
        }
        let model_config = ModelConfig::new(4, vec![8], HeadKind::Regressor).unwrap();
        let mut train_config = TrainConfig::new(LossConfig::new(LossKind::Mse, Vec::new()), 1);
        train_config.max_epochs = 60;
        train_config.patience = 1;
        let (_, hist) = train_model(&model_config, &train_config, &train, &val).unwrap();
        assert_eq!(hist.epochs.len(), 2, "stall should stop after two epochs");
        assert_eq!(hist.best_epoch, 0);
    }

    #[test]
    fn absurd_learning_rate_reports_divergence() {
        let (model_config, mut train_config, train, val) = tiny_setup(LossKind::Mse, 33);
        train_config.learning_rate = 1e150;
        train_config.max_epochs = 10;
        train_config.patience = 10;
        let err = train_model(&model_config, &train_config, &train, &val).unwrap_err();
        assert!(matches!(err, TrainError::Diverged { .. }));
    }

    #[test]
    fn oracle_params_evaluate_to_zero_error() {
        // Input is a one-hot class indicator; a pass-through hidden layer
        // and a saturated head make the softmax an exact one-hot, so
        // decoded ages equal true ages everywhere.
        let c = 5;
        let class_ages: Vec<f64> = vec![10.0, 20.0, 30.0, 40.0, 50.0];
        let mut hidden = Matrix::zeros(c, c);
        for i in 0..c {
            hidden.set(i, i, 1.0);
        }
        let mut head = Matrix::zeros(c, c);
        for i in 0..c {
            head.set(i, i, 2000.0);
        }
        let params = MlpParams {
            layers: vec![
                DenseLayer {
                    weight: hidden,
                    bias: vec![0.0; c],
                },
                DenseLayer {
                    weight: head,
                    bias: vec![0.0; c],
                },
            ],
        };
        let model_config = ModelConfig::new(
            c,
            vec![c],
            HeadKind::Classifier {
                class_ages: class_ages.clone(),
            },
        )
        .unwrap();
        let mut test = Dataset::new(c);
        for rep in 0..4 {
            for (cls, &age) in class_ages.iter().enumerate() {
                let mut features = vec![0.0; c];
                features[cls] = 1.0;
                test.samples.push(crate::data::Sample {
                    features,
                    chron_age: age,
                    brain_age: age,
                    group: None,
                });
                let _ = rep;
            }
        }
        let eval = evaluate_model(&params, &model_config, &test).unwrap();
        assert_eq!(eval.report.mae, 0.0);
        assert_eq!(eval.report.sb_left, Some(0.0));
        assert_eq!(eval.report.sb_right, Some(0.0));
        assert_eq!(eval.pred_ages[0], 10.0);
        assert_eq!(eval.report.per_class_counts.len(), 5);
    }

    #[test]
    fn checkpoint_round_trip() {
        let (model_config, train_config, train, val) = tiny_setup(LossKind::Ce, 35);
        let (params, _) = train_model(&model_config, &train_config, &train, &val).unwrap();
        let ckpt = Checkpoint::new(&model_config, &params, &train_config);
        let dir = std::env::temp_dir().join("ordage_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ckpt.json");
        save_checkpoint(&path, &ckpt).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        let (config2, params2, train2) = loaded.into_parts().unwrap();
        assert_eq!(config2, model_config);
        assert_eq!(params2, params);
        assert_eq!(train2.seed, train_config.seed);
        std::fs::remove_dir_all(&dir).ok();
    }
}
