//! Encoder, task head and adversary with gradient reversal.
//!
//! ```text
//! x ─ E_θ ─ z ─┬─ P_φ ─ softplus ─ ŷ
//!              └─ GRL_λ ─ A_ψ ─ district logits
//! ```
//!
//! The encoder is a stack of `Dense → BatchNorm → ReLU → Dropout` blocks.
//! Both heads are `Dense → ReLU → … → Dense`. The adversary has no dropout,
//! so it never draws from the dropout stream; that keeps a λ = 0 fair run
//! bit-identical to the baseline on the encoder and task head.

mod checkpoint;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_SCHEMA_VERSION};

use crate::dataset::{Dataset, StandardizationParams, N_FEATURES};
use crate::error::{Error, Result};
use crate::nn::loss::accuracy;
use crate::nn::rng::streams;
use crate::nn::{
    cross_entropy_loss, grl_backward, mse_loss, BatchNorm, Dense, Dropout, Matrix, Mode, Param,
    ParamSpan, Relu, RngStream, Softplus,
};

/// Inputs further than this many standard deviations from the training mean
/// are taken as a sign that standardization was skipped.
pub const INPUT_GUARD: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Fair,
    Baseline,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Fair => "fair",
            Variant::Baseline => "baseline",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fair" => Ok(Variant::Fair),
            "baseline" => Ok(Variant::Baseline),
            other => Err(format!("unknown variant `{other}` (expected fair or baseline)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    /// Encoder block widths; the last one is the representation size.
    pub encoder_widths: Vec<usize>,
    /// Task head widths, ending in 1.
    pub task_widths: Vec<usize>,
    /// Adversary widths, ending in the district count.
    pub adversary_widths: Vec<usize>,
    pub dropout: f64,
    pub lambda: f64,
    pub n_districts: usize,
    pub variant: Variant,
}

impl ModelConfig {
    pub fn new(n_districts: usize, variant: Variant) -> Self {
        ModelConfig {
            input_dim: N_FEATURES,
            encoder_widths: vec![128, 128, 64],
            task_widths: vec![128, 1],
            adversary_widths: vec![128, n_districts],
            dropout: 0.3,
            lambda: 1.0,
            n_districts,
            variant,
        }
    }

    pub fn representation_dim(&self) -> usize {
        self.encoder_widths.last().copied().unwrap_or(self.input_dim)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.input_dim == 0 {
            return bad("input dimension must be positive".into());
        }
        if self.encoder_widths.is_empty() || self.encoder_widths.contains(&0) {
            return bad(format!("invalid encoder widths {:?}", self.encoder_widths));
        }
        if self.task_widths.last() != Some(&1) || self.task_widths.contains(&0) {
            return bad(format!(
                "task head widths {:?} must be positive and end in 1",
                self.task_widths
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} not in [0, 1)", self.dropout));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda {} must be finite and >= 0", self.lambda));
        }
        if self.variant == Variant::Fair {
            if self.n_districts < 2 {
                return bad("the adversary needs at least 2 districts".into());
            }
            if self.adversary_widths.last() != Some(&self.n_districts)
                || self.adversary_widths.contains(&0)
            {
                return bad(format!(
                    "adversary widths {:?} must be positive and end in {}",
                    self.adversary_widths, self.n_districts
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct EncoderBlock {
    dense: Dense,
    bn: BatchNorm,
    relu: Relu,
    dropout: Dropout,
}

/// `Dense → ReLU → … → Dense` (no activation after the last layer).
#[derive(Clone, Debug)]
struct Mlp {
    dense: Vec<Dense>,
    relu: Vec<Relu>,
}

impl Mlp {
    fn init(in_dim: usize, widths: &[usize], rng: &mut RngStream) -> Self {
        let mut dense = Vec::with_capacity(widths.len());
        let mut prev = in_dim;
        for &w in widths {
            dense.push(Dense::he_uniform(prev, w, rng));
            prev = w;
        }
        Mlp {
            relu: vec![Relu::default(); widths.len().saturating_sub(1)],
            dense,
        }
    }

    fn forward(&mut self, x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        let last = self.dense.len() - 1;
        for i in 0..self.dense.len() {
            h = self.dense[i].forward(&h)?;
            if i < last {
                h = self.relu[i].forward(&h);
            }
        }
        Ok(h)
    }

    fn infer(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        let last = self.dense.len() - 1;
        for (i, d) in self.dense.iter().enumerate() {
            h = d.apply(&h)?;
            if i < last {
                h = h.map(|v| v.max(0.0));
            }
        }
        Ok(h)
    }

    fn backward(&mut self, grad: &Matrix) -> Result<Matrix> {
        let mut g = grad.clone();
        for i in (0..self.dense.len()).rev() {
            if i < self.dense.len() - 1 {
                g = self.relu[i].backward(&g)?;
            }
            g = self.dense[i].backward(&g)?;
        }
        Ok(g)
    }

    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param)>) {
        for (i, d) in self.dense.iter().enumerate() {
            out.push((format!("{prefix}.{i}.weight"), &d.weight));
            out.push((format!("{prefix}.{i}.bias"), &d.bias));
        }
    }

    fn params_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        for d in self.dense.iter_mut() {
            out.push(&mut d.weight);
            out.push(&mut d.bias);
        }
    }
}

/// Result of one forward/backward pass on a batch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepOutput {
    /// Mean squared error, USD M².
    pub task_loss: f64,
    /// Adversary cross-entropy in nats (`None` for the baseline).
    pub adv_loss: Option<f64>,
    /// `task_loss − λ · adv_loss`.
    pub total_loss: f64,
    pub predictions: Vec<f64>,
    pub adv_accuracy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `n × 1`, non-negative.
    pub predictions: Matrix,
    /// `n × K` district logits (fair variant only).
    pub logits: Option<Matrix>,
}

/// The fair model, or the baseline when built with [`Variant::Baseline`]
/// (encoder and task head only).
#[derive(Clone, Debug)]
pub struct FairModel {
    config: ModelConfig,
    seed: u64,
    encoder: Vec<EncoderBlock>,
    task: Mlp,
    softplus: Softplus,
    adversary: Option<Mlp>,
    dropout_rng: RngStream,
    pub standardization: Option<StandardizationParams>,
    /// District label for each adversary class, in class order.
    pub district_labels: Vec<String>,
}

/// Builds a model with He-uniform weights and zero biases.
///
/// The encoder and task head draw from the `init` stream and the adversary
/// from its own `adversary-init` stream, so a fair and a baseline model built
/// from the same seed share their encoder and task-head weights exactly.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<FairModel> {
    config.validate()?;
    let mut init = RngStream::new(seed, streams::INIT);
    let mut prev = config.input_dim;
    let mut encoder = Vec::with_capacity(config.encoder_widths.len());
    for &w in &config.encoder_widths {
        encoder.push(EncoderBlock {
            dense: Dense::he_uniform(prev, w, &mut init),
            bn: BatchNorm::new(w),
            relu: Relu::default(),
            dropout: Dropout::new(config.dropout)?,
        });
        prev = w;
    }
    let task = Mlp::init(prev, &config.task_widths, &mut init);
    let adversary = match config.variant {
        Variant::Fair => {
            let mut rng = RngStream::new(seed, streams::ADVERSARY_INIT);
            Some(Mlp::init(prev, &config.adversary_widths, &mut rng))
        }
        Variant::Baseline => None,
    };
    Ok(FairModel {
        config: config.clone(),
        seed,
        encoder,
        task,
        softplus: Softplus::default(),
        adversary,
        dropout_rng: RngStream::new(seed, streams::DROPOUT),
        standardization: None,
        district_labels: Vec::new(),
    })
}

fn check_input(x: &Matrix, input_dim: usize) -> Result<()> {
    if x.cols() != input_dim {
        return Err(Error::shape(format!(
            "model expects {input_dim} features, got {}",
            x.cols()
        )));
    }
    if let Some(v) = x.as_slice().iter().find(|v| !v.is_finite() || v.abs() > INPUT_GUARD) {
        return Err(Error::invalid(format!(
            "input value {v} exceeds |z| > {INPUT_GUARD}; features must be standardized first"
        )));
    }
    Ok(())
}

impl FairModel {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn lambda(&self) -> f64 {
        self.config.lambda
    }

    pub fn set_lambda(&mut self, lambda: f64) -> Result<()> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!("lambda {lambda} must be finite and >= 0")));
        }
        self.config.lambda = lambda;
        Ok(())
    }

    /// Sets the task output bias so an all-zero representation predicts `mean`.
    pub fn set_output_bias_for_mean(&mut self, mean: f64) {
        // inverse softplus
        let b = if mean > 20.0 { mean } else { mean.exp_m1().max(1e-12).ln() };
        if let Some(last) = self.task.dense.last_mut() {
            last.bias.value.iter_mut().for_each(|v| *v = b);
        }
    }

    /// Named parameters in checkpoint order: encoder blocks, task head, adversary.
    pub fn named_params(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        for (i, b) in self.encoder.iter().enumerate() {
            out.push((format!("encoder.{i}.dense.weight"), &b.dense.weight));
            out.push((format!("encoder.{i}.dense.bias"), &b.dense.bias));
            out.push((format!("encoder.{i}.bn.gamma"), &b.bn.gamma));
            out.push((format!("encoder.{i}.bn.beta"), &b.bn.beta));
        }
        self.task.params("task", &mut out);
        if let Some(a) = &self.adversary {
            a.params("adversary", &mut out);
        }
        out
    }

    /// Mutable parameters, same order as [`named_params`](Self::named_params).
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for b in self.encoder.iter_mut() {
            out.push(&mut b.dense.weight);
            out.push(&mut b.dense.bias);
            out.push(&mut b.bn.gamma);
            out.push(&mut b.bn.beta);
        }
        self.task.params_mut(&mut out);
        if let Some(a) = self.adversary.as_mut() {
            a.params_mut(&mut out);
        }
        out
    }

    /// Trainable parameter count (batchnorm running statistics excluded).
    pub fn parameter_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }

    pub fn adversary_parameter_count(&self) -> usize {
        self.named_params()
            .iter()
            .filter(|(n, _)| n.starts_with("adversary."))
            .map(|(_, p)| p.len())
            .sum()
    }

    /// Encoder + task-head parameter count.
    pub fn predictor_parameter_count(&self) -> usize {
        self.parameter_count() - self.adversary_parameter_count()
    }

    pub fn param_spans(&self) -> Vec<ParamSpan> {
        let mut start = 0;
        self.named_params()
            .into_iter()
            .map(|(name, p)| {
                let span = ParamSpan::new(name, start..start + p.len());
                start += p.len();
                span
            })
            .collect()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.named_params()
            .iter()
            .flat_map(|(_, p)| p.value.iter().copied())
            .collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.named_params()
            .iter()
            .flat_map(|(_, p)| p.grad.iter().copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.parameter_count();
        if flat.len() != n {
            return Err(Error::shape(format!("model has {n} parameters, got {}", flat.len())));
        }
        let mut at = 0;
        for p in self.params_mut() {
            let len = p.len();
            p.value.copy_from_slice(&flat[at..at + len]);
            at += len;
        }
        Ok(())
    }

    /// Batchnorm running means and variances, block by block.
    pub fn flat_buffers(&self) -> Vec<f64> {
        self.encoder
            .iter()
            .flat_map(|b| b.bn.running_mean.iter().chain(&b.bn.running_var).copied())
            .collect()
    }

    pub fn buffer_names(&self) -> Vec<(String, usize)> {
        self.encoder
            .iter()
            .enumerate()
            .flat_map(|(i, b)| {
                [
                    (format!("encoder.{i}.bn.running_mean"), b.bn.features()),
                    (format!("encoder.{i}.bn.running_var"), b.bn.features()),
                ]
            })
            .collect()
    }

    pub fn set_flat_buffers(&mut self, flat: &[f64]) -> Result<()> {
        let n: usize = self.encoder.iter().map(|b| 2 * b.bn.features()).sum();
        if flat.len() != n {
            return Err(Error::shape(format!("model has {n} buffer values, got {}", flat.len())));
        }
        let mut at = 0;
        for b in self.encoder.iter_mut() {
            let f = b.bn.features();
            b.bn.running_mean.copy_from_slice(&flat[at..at + f]);
            b.bn.running_var.copy_from_slice(&flat[at + f..at + 2 * f]);
            at += 2 * f;
        }
        Ok(())
    }

    /// Reuse the current dropout masks on later train-mode passes.
    pub fn set_dropout_frozen(&mut self, frozen: bool) {
        for b in self.encoder.iter_mut() {
            b.dropout.set_frozen(frozen);
        }
    }

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Forward pass caching activations for backward. `x` must be standardized.
    pub fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<ForwardOutput> {
        check_input(x, self.config.input_dim)?;
        let mut h = x.clone();
        for b in self.encoder.iter_mut() {
            h = b.dense.forward(&h)?;
            h = b.bn.forward(&h, mode)?;
            h = b.relu.forward(&h);
            h = b.dropout.forward(&h, mode, &mut self.dropout_rng)?;
        }
        let out = self.task.forward(&h)?;
        let predictions = self.softplus.forward(&out);
        let logits = match self.adversary.as_mut() {
            Some(a) => Some(a.forward(&h)?),
            None => None,
        };
        Ok(ForwardOutput {
            predictions,
            logits,
        })
    }

    fn representation(&self, x: &Matrix) -> Result<Matrix> {
        check_input(x, self.config.input_dim)?;
        let mut h = x.clone();
        for b in &self.encoder {
            h = b.dense.apply(&h)?;
            h = b.bn.infer(&h)?;
            h = h.map(|v| v.max(0.0));
        }
        Ok(h)
    }

    /// Inference-mode predictions for standardized features; no state changes.
    pub fn infer(&self, x: &Matrix) -> Result<Vec<f64>> {
        let z = self.representation(x)?;
        Ok(self
            .task
            .infer(&z)?
            .into_vec()
            .into_iter()
            .map(crate::nn::layers::softplus)
            .collect())
    }

    /// Inference-mode adversary logits (fair variant only).
    pub fn infer_logits(&self, x: &Matrix) -> Result<Option<Matrix>> {
        match &self.adversary {
            Some(a) => Ok(Some(a.infer(&self.representation(x)?)?)),
            None => Ok(None),
        }
    }

    /// Damage predictions (USD M) for every row, using the stored standardization.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        let params = self
            .standardization
            .as_ref()
            .ok_or_else(|| Error::invalid("model has no standardization parameters"))?;
        if params.feature_names.iter().map(String::as_str).ne(data.feature_order().iter().copied()) {
            return Err(Error::shape("dataset feature order differs from the model's"));
        }
        self.infer(&params.transform(&data.feature_matrix())?)
    }

    /// Train-mode losses without touching gradients. With frozen dropout this
    /// is the deterministic objective used by the gradient checks.
    pub fn losses(&mut self, x: &Matrix, y: &[f64], s: &[usize]) -> Result<(f64, Option<f64>)> {
        let out = self.forward(x, Mode::Train)?;
        let (task, _) = mse_loss(&out.predictions, &Matrix::column(y))?;
        let adv = match &out.logits {
            Some(l) => Some(cross_entropy_loss(l, s)?.0),
            None => None,
        };
        Ok((task, adv))
    }

    /// Forward and backward on one batch; gradients are left in the parameters.
    ///
    /// Encoder and task head receive `∂(L_task − λ·L_adv)`; the adversary
    /// receives `∂L_adv` (it minimizes its own loss).
    pub fn compute_gradients(&mut self, x: &Matrix, y: &[f64], s: &[usize]) -> Result<StepOutput> {
        if x.rows() < 2 {
            return Err(Error::invalid("a training batch needs at least 2 rows"));
        }
        if y.len() != x.rows() || (self.adversary.is_some() && s.len() != x.rows()) {
            return Err(Error::shape("batch features, targets and labels differ in length"));
        }
        self.zero_grad();
        let out = self.forward(x, Mode::Train)?;
        let (task_loss, g_pred) = mse_loss(&out.predictions, &Matrix::column(y))?;
        let g = self.softplus.backward(&g_pred)?;
        let mut g_rep = self.task.backward(&g)?;

        let lambda = self.config.lambda;
        let (adv_loss, adv_accuracy) = match (&out.logits, self.adversary.as_mut()) {
            (Some(logits), Some(adv)) => {
                let (loss, g_logits) = cross_entropy_loss(logits, s)?;
                let g_adv = adv.backward(&g_logits)?;
                // λ = 0 reverses to exact zeros; skip the add so signed zeros
                // cannot differ from the baseline.
                if lambda != 0.0 {
                    g_rep = g_rep.add(&grl_backward(&g_adv, lambda))?;
                }
                (Some(loss), Some(accuracy(logits, s)))
            }
            _ => (None, None),
        };

        for b in self.encoder.iter_mut().rev() {
            g_rep = b.dropout.backward(&g_rep)?;
            g_rep = b.relu.backward(&g_rep)?;
            g_rep = b.bn.backward(&g_rep)?;
            g_rep = b.dense.backward(&g_rep)?;
        }

        let total_loss = task_loss - lambda * adv_loss.unwrap_or(0.0);
        if !task_loss.is_finite() || !total_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss (task {task_loss}, adversarial {adv_loss:?})"
            )));
        }
        Ok(StepOutput {
            task_loss,
            adv_loss,
            total_loss,
            predictions: out.predictions.into_vec(),
            adv_accuracy,
        })
    }

    /// One simultaneous Adam update of every parameter group.
    pub fn training_step(
        &mut self,
        x: &Matrix,
        y: &[f64],
        s: &[usize],
        optimizer: &mut crate::nn::Adam,
    ) -> Result<StepOutput> {
        let out = self.compute_gradients(x, y, s)?;
        optimizer.step(&mut self.params_mut())?;
        Ok(out)
    }
}
