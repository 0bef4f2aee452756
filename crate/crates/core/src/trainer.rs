//! Mini-batch training loop for both variants.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{fit_standardization, Dataset};
use crate::error::{Error, Result};
use crate::fairness::{fairness_report, performance_metrics, FairnessReport, PerformanceReport};
use crate::model::{init_model, FairModel, ModelConfig, Variant};
use crate::nn::rng::streams;
use crate::nn::{Adam, AdamConfig, PlateauScheduler, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub lambda: f64,
    pub scheduler_factor: f64,
    pub scheduler_patience: usize,
    pub min_lr: f64,
    pub seed: u64,
    pub variant: Variant,
    /// Start the task output at the training-target mean instead of softplus(0).
    pub init_output_bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            lr: 1e-3,
            weight_decay: 1e-5,
            lambda: 1.0,
            scheduler_factor: 0.5,
            scheduler_patience: 10,
            min_lr: 0.0,
            seed: 0,
            variant: Variant::Fair,
            init_output_bias: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.batch_size < 2 {
            return bad(format!(
                "need epochs >= 1 and batch size >= 2 (got {} and {})",
                self.epochs, self.batch_size
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight decay {} must be >= 0", self.weight_decay));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda {} must be >= 0", self.lambda));
        }
        if !(self.scheduler_factor > 0.0 && self.scheduler_factor < 1.0) || self.scheduler_patience == 0 {
            return bad("scheduler factor must be in (0, 1) and patience >= 1".into());
        }
        if !(self.min_lr >= 0.0 && self.min_lr <= self.lr) {
            return bad(format!("min lr {} not in [0, lr]", self.min_lr));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub task_loss: f64,
    pub adv_loss: Option<f64>,
    pub total_loss: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub adv_accuracy: Option<f64>,
    /// Wall-clock seconds since training started.
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub schema_version: u32,
    pub variant: Variant,
    pub lambda: f64,
    pub seed: u64,
    pub parameter_count: usize,
    pub epochs: Vec<EpochRecord>,
}

pub const LOG_CSV_HEADER: [&str; 7] = [
    "epoch",
    "task_loss",
    "adv_loss",
    "total_loss",
    "lr",
    "adv_accuracy",
    "seconds",
];

impl TrainingLog {
    /// Equal in every field except wall-clock time.
    pub fn same_numbers(&self, other: &TrainingLog) -> bool {
        let strip = |l: &TrainingLog| {
            let mut l = l.clone();
            l.epochs.iter_mut().for_each(|e| e.seconds = 0.0);
            l
        };
        strip(self) == strip(other)
    }

    /// CSV with the adversarial columns left empty for the baseline.
    pub fn write_csv_to<W: Write>(&self, writer: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(LOG_CSV_HEADER)?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.task_loss.to_string(),
                opt(e.adv_loss),
                e.total_loss.to_string(),
                e.lr.to_string(),
                opt(e.adv_accuracy),
                format!("{:.3}", e.seconds),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(f)
    }
}

/// Batch boundaries over `n` rows; a trailing batch of one row is merged
/// into the previous batch.
pub fn batch_ranges(n: usize, batch_size: usize) -> Vec<std::ops::Range<usize>> {
    let mut out: Vec<std::ops::Range<usize>> = (0..n)
        .step_by(batch_size)
        .map(|s| s..(s + batch_size).min(n))
        .collect();
    if out.len() >= 2 && out.last().is_some_and(|r| r.len() == 1) {
        let last = out.pop().expect("len >= 2");
        out.last_mut().expect("len >= 1").end = last.end;
    }
    out
}

/// Trains a fresh model on `train` (the training split only).
///
/// Standardization is fit on `train` and stored in the model. Every epoch
/// reshuffles rows with the `shuffle` stream; the plateau scheduler watches the
/// epoch-mean task loss.
pub fn train(train: &Dataset, config: &TrainConfig) -> Result<(FairModel, TrainingLog)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train.len() < 2 {
        return Err(Error::invalid("training needs at least 2 rows"));
    }
    let standardization = fit_standardization(train)?;
    let x = standardization.transform(&train.feature_matrix())?;
    let y = train.targets();
    let s = train.district_indices();

    let mut model_config = ModelConfig::new(train.n_districts(), config.variant);
    model_config.lambda = config.lambda;
    let mut model = init_model(&model_config, config.seed)?;
    model.standardization = Some(standardization);
    model.district_labels = train.district_labels().to_vec();
    if config.init_output_bias {
        model.set_output_bias_for_mean(y.iter().sum::<f64>() / y.len() as f64);
    }

    let mut adam = Adam::new(AdamConfig {
        lr: config.lr,
        weight_decay: config.weight_decay,
        ..AdamConfig::default()
    });
    let mut scheduler = PlateauScheduler::new(
        config.lr,
        config.scheduler_factor,
        config.scheduler_patience,
        config.min_lr,
    )?;
    let mut shuffle = RngStream::new(config.seed, streams::SHUFFLE);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let batches = batch_ranges(train.len(), config.batch_size);
    let start = Instant::now();
    let mut log = TrainingLog {
        schema_version: 1,
        variant: config.variant,
        lambda: if config.variant == Variant::Fair { config.lambda } else { 0.0 },
        seed: config.seed,
        parameter_count: model.parameter_count(),
        epochs: Vec::with_capacity(config.epochs),
    };

    let mut step = 0usize;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle);
        let lr = adam.lr();
        let (mut task, mut adv, mut total, mut acc) = (0.0, 0.0, 0.0, 0.0);
        for r in &batches {
            step += 1;
            let idx = &order[r.clone()];
            let xb = x.select_rows(idx);
            let yb: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            let sb: Vec<usize> = idx.iter().map(|&i| s[i]).collect();
            let out = model
                .training_step(&xb, &yb, &sb, &mut adam)
                .map_err(|e| match e {
                    Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}, step {step}: {m}")),
                    other => other,
                })?;
            let w = idx.len() as f64;
            task += w * out.task_loss;
            total += w * out.total_loss;
            adv += w * out.adv_loss.unwrap_or(0.0);
            acc += w * out.adv_accuracy.unwrap_or(0.0);
        }
        let n = train.len() as f64;
        let fair = model.variant() == Variant::Fair;
        log.epochs.push(EpochRecord {
            epoch,
            task_loss: task / n,
            adv_loss: fair.then_some(adv / n),
            total_loss: total / n,
            lr,
            adv_accuracy: fair.then_some(acc / n),
            seconds: start.elapsed().as_secs_f64(),
        });
        adam.set_lr(scheduler.step(task / n));
    }
    Ok((model, log))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub performance: PerformanceReport,
    pub fairness: FairnessReport,
}

/// Predicts once and computes every performance and fairness metric.
pub fn evaluate(model: &FairModel, data: &Dataset) -> Result<EvaluationReport> {
    if model.district_labels.as_slice() != data.district_labels() {
        return Err(Error::invalid(format!(
            "model districts {:?} differ from dataset districts {:?}",
            model.district_labels,
            data.district_labels()
        )));
    }
    let pred = model.predict(data)?;
    let actual = data.targets();
    Ok(EvaluationReport {
        performance: performance_metrics(&actual, &pred)?,
        fairness: fairness_report(&actual, &pred, &data.districts(), &data.regions())?,
    })
}
