//! A small fully-connected network with hand-written backpropagation.
//!
//! Hidden layers use the rectifier; the head is linear and is either a
//! classifier over integer-age classes or a scalar regressor. The activation
//! of the last hidden layer (the "penultimate features") is exposed through
//! [`ForwardCache`] because both the distance regularizer and the ordinality
//! metric operate on it. [`gradcheck`] verifies the whole analytic gradient
//! path against central finite differences.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::{
    order_scale_for, total_loss_scaled, LossConfig, LossError, LossInputs, LossOutput,
};
use crate::numerics::{dot, stable_softmax, Matrix};
use crate::rng::RngState;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: expected {expected}, got {got} ({context})")]
    ShapeMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("malformed model document: {0}")]
    Document(String),
}

/// Output head: classify into ordered age classes or regress a scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HeadKind {
    Classifier { class_ages: Vec<f64> },
    Regressor,
}

impl HeadKind {
    pub fn output_dim(&self) -> usize {
        match self {
            HeadKind::Classifier { class_ages } => class_ages.len(),
            HeadKind::Regressor => 1,
        }
    }
}

/// Network architecture. `hidden_dims` must be nonempty so a penultimate
/// layer always exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub head: HeadKind,
}

impl ModelConfig {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, head: HeadKind) -> Result<Self, ModelError> {
        let config = Self {
            input_dim,
            hidden_dims,
            head,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.input_dim == 0 {
            return Err(ModelError::InvalidConfig("input_dim must be positive".into()));
        }
        if self.hidden_dims.is_empty() {
            return Err(ModelError::InvalidConfig(
                "hidden_dims must be nonempty (a penultimate layer is required)".into(),
            ));
        }
        if self.hidden_dims.iter().any(|&d| d == 0) {
            return Err(ModelError::InvalidConfig("hidden dims must be positive".into()));
        }
        if let HeadKind::Classifier { class_ages } = &self.head {
            if class_ages.is_empty() {
                return Err(ModelError::InvalidConfig("classifier needs classes".into()));
            }
            if class_ages.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(ModelError::InvalidConfig(
                    "class_ages must be strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }

    /// Layer dimensions chained input -> hidden* -> output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.head.output_dim()));
        dims
    }

    pub fn penultimate_dim(&self) -> usize {
        *self.hidden_dims.last().expect("hidden_dims validated nonempty")
    }
}

/// One dense layer: weight is `in_dim x out_dim` row-major, bias has
/// `out_dim` entries. Also reused as the per-layer gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn zeros_like(other: &DenseLayer) -> Self {
        Self {
            weight: Matrix::zeros(other.weight.rows(), other.weight.cols()),
            bias: vec![0.0; other.bias.len()],
        }
    }
}

/// All trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<DenseLayer>,
}

/// Parameter gradients, shaped exactly like [`MlpParams`].
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<DenseLayer>,
}

impl MlpParams {
    pub fn zeros_grads(&self) -> MlpGrads {
        MlpGrads {
            layers: self.layers.iter().map(DenseLayer::zeros_like).collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.as_slice().len() + l.bias.len())
            .sum()
    }
}

/// Per-layer intermediates from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer: `layer_inputs[0]` is the batch, `layer_inputs[l]`
    /// the activation feeding layer `l`. The last entry is the penultimate
    /// activation.
    pub layer_inputs: Vec<Matrix>,
    /// Pre-activation of each layer.
    pub pre_activations: Vec<Matrix>,
}

impl ForwardCache {
    /// Activation of the last hidden layer (batch x penultimate_dim).
    pub fn penultimate(&self) -> &Matrix {
        self.layer_inputs.last().expect("cache from a forward pass")
    }
}

/// He-style initialization: weights are zero-mean normal with variance
/// `2 / fan_in` (entries drawn row-major, layer by layer), biases zero.
pub fn init_params(config: &ModelConfig, rng_state: RngState) -> Result<MlpParams, ModelError> {
    config.validate()?;
    let mut rng = rng_state.rng();
    let mut layers = Vec::new();
    for (fan_in, fan_out) in config.layer_dims() {
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        let data: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| normal.sample(&mut rng))
            .collect();
        layers.push(DenseLayer {
            weight: Matrix::from_vec(fan_in, fan_out, data),
            bias: vec![0.0; fan_out],
        });
    }
    Ok(MlpParams { layers })
}

/// Run the network over a batch (rows are samples).
///
/// Returns the head output (batch x C logits or batch x 1 predictions) and
/// the cache needed for [`backward`].
pub fn forward(params: &MlpParams, batch: &Matrix) -> Result<(Matrix, ForwardCache), ModelError> {
    let expected = params.layers[0].weight.rows();
    if batch.cols() != expected {
        return Err(ModelError::ShapeMismatch {
            expected,
            got: batch.cols(),
            context: "forward input columns",
        });
    }
    let num_layers = params.layers.len();
    let mut layer_inputs = Vec::with_capacity(num_layers);
    let mut pre_activations = Vec::with_capacity(num_layers);
    let mut current = batch.clone();
    for (l, layer) in params.layers.iter().enumerate() {
        let mut z = current.matmul(&layer.weight);
        for i in 0..z.rows() {
            let row = z.row_mut(i);
            for (v, &b) in row.iter_mut().zip(&layer.bias) {
                *v += b;
            }
        }
        layer_inputs.push(current);
        if l + 1 == num_layers {
            pre_activations.push(z.clone());
            return Ok((
                z,
                ForwardCache {
                    layer_inputs,
                    pre_activations,
                },
            ));
        }
        let mut activated = z.clone();
        for v in activated.as_mut_slice() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        pre_activations.push(z);
        current = activated;
    }
    unreachable!("layers validated nonempty")
}

/// Backpropagate head and penultimate gradients to every parameter.
///
/// `grad_output` is d loss / d head output. `grad_penultimate` (which may be
/// zero-sized) is added to the gradient flowing into the last hidden
/// activation; the two contributions are additive, so callers can inject the
/// regularizer's feature gradient here.
pub fn backward(
    params: &MlpParams,
    cache: &ForwardCache,
    grad_output: &Matrix,
    grad_penultimate: &Matrix,
) -> Result<MlpGrads, ModelError> {
    let num_layers = params.layers.len();
    let head = &params.layers[num_layers - 1];
    if grad_output.cols() != head.weight.cols() {
        return Err(ModelError::ShapeMismatch {
            expected: head.weight.cols(),
            got: grad_output.cols(),
            context: "grad_output columns",
        });
    }
    if grad_output.rows() != cache.layer_inputs[0].rows() {
        return Err(ModelError::ShapeMismatch {
            expected: cache.layer_inputs[0].rows(),
            got: grad_output.rows(),
            context: "grad_output rows",
        });
    }
    let penultimate_dim = params.layers[num_layers - 1].weight.rows();
    if !grad_penultimate.is_empty() && grad_penultimate.cols() != penultimate_dim {
        return Err(ModelError::ShapeMismatch {
            expected: penultimate_dim,
            got: grad_penultimate.cols(),
            context: "grad_penultimate columns",
        });
    }

    let mut grads = params.zeros_grads();
    let mut upstream = grad_output.clone();
    for l in (0..num_layers).rev() {
        grads.layers[l].weight = cache.layer_inputs[l].transposed_matmul(&upstream);
        grads.layers[l].bias = upstream.column_sums();
        if l == 0 {
            break;
        }
        let mut next = upstream.matmul_transposed(&params.layers[l].weight);
        if l == num_layers - 1 && !grad_penultimate.is_empty() {
            next.add_assign(grad_penultimate);
        }
        // Rectifier mask from the previous layer's pre-activation.
        let pre = &cache.pre_activations[l - 1];
        for (g, &z) in next.as_mut_slice().iter_mut().zip(pre.as_slice()) {
            if z <= 0.0 {
                *g = 0.0;
            }
        }
        upstream = next;
    }
    Ok(grads)
}

/// Decode ages from head output: softmax expectation over class ages for a
/// classifier, identity for a regressor. Classifier predictions are convex
/// combinations of class ages, so they always lie in the class-age range.
pub fn predict_age(output: &Matrix, head: &HeadKind) -> Vec<f64> {
    match head {
        HeadKind::Classifier { class_ages } => output
            .iter_rows()
            .map(|logits| {
                let probs = stable_softmax(logits).expect("finite logits");
                dot(&probs, class_ages)
            })
            .collect(),
        HeadKind::Regressor => output.iter_rows().map(|r| r[0]).collect(),
    }
}

/// Relative error of one parameter block in a gradient comparison.
#[derive(Debug, Clone, Serialize)]
pub struct BlockCheck {
    pub name: String,
    pub rel_err: f64,
}

/// Outcome of [`gradcheck`]: worst block relative error per parameter block,
/// compared at the standard tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockCheck>,
    pub max_rel_err: f64,
    pub passed: bool,
}

/// Tolerance for analytic-vs-numeric gradient agreement.
pub const GRADCHECK_TOL: f64 = 1e-5;

/// Central-difference step.
pub const GRADCHECK_STEP: f64 = 1e-6;

fn block_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nn = 0.0;
    for (&a, &n) in analytic.iter().zip(numeric) {
        diff += (a - n) * (a - n);
        na += a * a;
        nn += n * n;
    }
    let denom = na.sqrt().max(nn.sqrt()).max(1e-12);
    diff.sqrt() / denom
}

/// A fixed batch for exercising the gradient path of one loss kind.
pub struct GradCheckInstance {
    pub params: MlpParams,
    pub batch: Matrix,
    pub true_ages: Vec<f64>,
    pub labels: Vec<usize>,
}

/// Draw a random instance consistent with the configs.
pub fn gradcheck_instance(
    model_config: &ModelConfig,
    loss_config: &LossConfig,
    rng_state: RngState,
    batch_size: usize,
) -> Result<GradCheckInstance, ModelError> {
    use rand::Rng;
    let params = init_params(model_config, rng_state)?;
    let mut rng = rng_state.with_stream(rng_state.stream.wrapping_add(1)).rng();
    let data: Vec<f64> = (0..batch_size * model_config.input_dim)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let batch = Matrix::from_vec(batch_size, model_config.input_dim, data);
    let (true_ages, labels) = if loss_config.kind.is_classification() {
        let c = loss_config.class_ages.len();
        let labels: Vec<usize> = (0..batch_size).map(|_| rng.random_range(0..c)).collect();
        let ages = labels.iter().map(|&l| loss_config.class_ages[l]).collect();
        (ages, labels)
    } else {
        let lo = loss_config.class_ages.first().copied().unwrap_or(0.0);
        let hi = loss_config.class_ages.last().copied().unwrap_or(10.0);
        let ages = (0..batch_size).map(|_| rng.random_range(lo..hi)).collect();
        (ages, Vec::new())
    };
    Ok(GradCheckInstance {
        params,
        batch,
        true_ages,
        labels,
    })
}

/// Forward plus loss for a fixed instance. When the loss carries the
/// distance regularizer its scaling norm is pinned via `order_scale` so the
/// evaluation matches the stop-gradient convention of the backward pass.
pub fn instance_loss(
    params: &MlpParams,
    loss_config: &LossConfig,
    instance: &GradCheckInstance,
    order_scale: Option<f64>,
) -> Result<(LossOutput, ForwardCache), ModelError> {
    let (output, cache) = forward(params, &instance.batch)?;
    let features = cache.penultimate();
    let pred: Vec<f64>;
    let inputs = if loss_config.kind.is_classification() {
        LossInputs {
            logits: Some(&output),
            features: Some(features),
            true_ages: &instance.true_ages,
            labels: Some(&instance.labels),
            ..Default::default()
        }
    } else {
        pred = output.iter_rows().map(|r| r[0]).collect();
        LossInputs {
            pred_ages: Some(&pred),
            features: Some(features),
            true_ages: &instance.true_ages,
            ..Default::default()
        }
    };
    let loss = total_loss_scaled(loss_config, inputs, order_scale)?;
    Ok((loss, cache))
}

/// Analytic parameter gradients for an instance.
pub fn analytic_grads(
    params: &MlpParams,
    loss_config: &LossConfig,
    instance: &GradCheckInstance,
) -> Result<MlpGrads, ModelError> {
    let (loss, cache) = instance_loss(params, loss_config, instance, None)?;
    let grad_output = if loss_config.kind.is_classification() {
        loss.grad_logits
    } else {
        let n = loss.grad_pred.len();
        Matrix::from_vec(n, 1, loss.grad_pred)
    };
    backward(params, &cache, &grad_output, &loss.grad_features)
}

/// Central-difference parameter gradients for an instance.
pub fn numeric_grads(
    params: &MlpParams,
    loss_config: &LossConfig,
    instance: &GradCheckInstance,
) -> Result<MlpGrads, ModelError> {
    // Pin the regularizer scale at the base point so the differentiated
    // function is the one the backward pass models.
    let order_scale = if loss_config.kind.has_order_term() {
        let (_, cache) = forward(params, &instance.batch)?;
        Some(order_scale_for(cache.penultimate()))
    } else {
        None
    };
    let mut work = params.clone();
    let mut grads = params.zeros_grads();
    for l in 0..params.layers.len() {
        for idx in 0..params.layers[l].weight.as_slice().len() {
            let orig = work.layers[l].weight.as_slice()[idx];
            work.layers[l].weight.as_mut_slice()[idx] = orig + GRADCHECK_STEP;
            let up = instance_loss(&work, loss_config, instance, order_scale)?.0.value;
            work.layers[l].weight.as_mut_slice()[idx] = orig - GRADCHECK_STEP;
            let down = instance_loss(&work, loss_config, instance, order_scale)?.0.value;
            work.layers[l].weight.as_mut_slice()[idx] = orig;
            grads.layers[l].weight.as_mut_slice()[idx] = (up - down) / (2.0 * GRADCHECK_STEP);
        }
        for idx in 0..params.layers[l].bias.len() {
            let orig = work.layers[l].bias[idx];
            work.layers[l].bias[idx] = orig + GRADCHECK_STEP;
            let up = instance_loss(&work, loss_config, instance, order_scale)?.0.value;
            work.layers[l].bias[idx] = orig - GRADCHECK_STEP;
            let down = instance_loss(&work, loss_config, instance, order_scale)?.0.value;
            work.layers[l].bias[idx] = orig;
            grads.layers[l].bias[idx] = (up - down) / (2.0 * GRADCHECK_STEP);
        }
    }
    Ok(grads)
}

/// Compare analytic and numeric gradients block by block.
pub fn gradcheck_report(analytic: &MlpGrads, numeric: &MlpGrads) -> GradCheckReport {
    let mut blocks = Vec::new();
    for (l, (a, n)) in analytic.layers.iter().zip(&numeric.layers).enumerate() {
        blocks.push(BlockCheck {
            name: format!("layer{l}.weight"),
            rel_err: block_rel_err(a.weight.as_slice(), n.weight.as_slice()),
        });
        blocks.push(BlockCheck {
            name: format!("layer{l}.bias"),
            rel_err: block_rel_err(&a.bias, &n.bias),
        });
    }
    let max_rel_err = blocks.iter().map(|b| b.rel_err).fold(0.0, f64::max);
    GradCheckReport {
        passed: max_rel_err < GRADCHECK_TOL,
        blocks,
        max_rel_err,
    }
}

/// End-to-end gradient verification for one loss kind on a random instance.
pub fn gradcheck(
    model_config: &ModelConfig,
    loss_config: &LossConfig,
    rng_state: RngState,
    batch_size: usize,
) -> Result<GradCheckReport, ModelError> {
    let instance = gradcheck_instance(model_config, loss_config, rng_state, batch_size)?;
    let analytic = analytic_grads(&instance.params, loss_config, &instance)?;
    let numeric = numeric_grads(&instance.params, loss_config, &instance)?;
    Ok(gradcheck_report(&analytic, &numeric))
}

/// Versioned on-disk form of a trained network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: u32,
    pub config: ModelConfig,
    pub layers: Vec<LayerDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerDocument {
    /// Row-major `in_dim x out_dim` weight entries.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

pub const MODEL_DOC_VERSION: u32 = 1;

pub fn to_document(config: &ModelConfig, params: &MlpParams) -> ModelDocument {
    ModelDocument {
        version: MODEL_DOC_VERSION,
        config: config.clone(),
        layers: params
            .layers
            .iter()
            .map(|l| LayerDocument {
                weights: l.weight.as_slice().to_vec(),
                bias: l.bias.clone(),
            })
            .collect(),
    }
}

pub fn from_document(doc: &ModelDocument) -> Result<(ModelConfig, MlpParams), ModelError> {
    if doc.version != MODEL_DOC_VERSION {
        return Err(ModelError::Document(format!(
            "unsupported model document version {}",
            doc.version
        )));
    }
    doc.config.validate()?;
    let dims = doc.config.layer_dims();
    if dims.len() != doc.layers.len() {
        return Err(ModelError::Document(format!(
            "expected {} layers, document has {}",
            dims.len(),
            doc.layers.len()
        )));
    }
    let mut layers = Vec::with_capacity(doc.layers.len());
    for ((fan_in, fan_out), layer) in dims.into_iter().zip(&doc.layers) {
        if layer.weights.len() != fan_in * fan_out || layer.bias.len() != fan_out {
            return Err(ModelError::Document("layer shape mismatch".into()));
        }
        if layer.weights.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
            return Err(ModelError::Document("non-finite parameter".into()));
        }
        layers.push(DenseLayer {
            weight: Matrix::from_vec(fan_in, fan_out, layer.weights.clone()),
            bias: layer.bias.clone(),
        });
    }
    Ok((doc.config.clone(), MlpParams { layers }))
}
