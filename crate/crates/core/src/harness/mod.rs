//! Training and evaluation loops, metrics, negative sampling and the
//! EdgeBank baseline.

mod edgebank;
mod linkpred;
mod metrics;
mod negatives;
mod sequence;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use edgebank::{edgebank_eval, EdgeBank, EdgeBankWindow};
pub use linkpred::{evaluate_linkpred, train_linkpred, train_time_scale, LinkEval, LinkRun};
pub use metrics::{accuracy, auc, mean_std};
pub use negatives::{draw_negatives, negative_sample, NegSampleSpec};
pub use sequence::{evaluate_sequence, train_sequence, SequenceRun};

use crate::error::{Error, Result};
use crate::model::CtanConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    SequenceCls,
    LinkPred,
}

/// Control configurations applied on top of the model configuration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    /// `γ = 5`, `ε = 1`: a strongly contractive, dissipative update.
    LargeGamma,
}

impl Ablation {
    pub fn apply(&self, cfg: &CtanConfig) -> CtanConfig {
        match self {
            Ablation::None => cfg.clone(),
            Ablation::LargeGamma => CtanConfig {
                gamma: 5.0,
                epsilon: 1.0,
                ..cfg.clone()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub task: Task,
    pub epochs: usize,
    /// Instances per optimizer step for sequence classification; events
    /// per optimizer step for link prediction.
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Epochs without validation-loss improvement before the learning rate
    /// is halved (sequence classification).
    pub lr_halving_patience: usize,
    /// Epochs without validation-AUC improvement before training stops
    /// (link prediction).
    pub early_stop_patience: usize,
    pub seeds: Vec<u64>,
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::sequence()
    }
}

impl TrainConfig {
    pub fn sequence() -> Self {
        Self {
            task: Task::SequenceCls,
            epochs: 20,
            batch_size: 1,
            lr: 3e-4,
            weight_decay: 1e-7,
            lr_halving_patience: 5,
            early_stop_patience: 50,
            seeds: vec![0, 1, 2],
            ablation: Ablation::None,
        }
    }

    pub fn link() -> Self {
        Self {
            task: Task::LinkPred,
            epochs: 30,
            batch_size: 200,
            lr: 1e-4,
            weight_decay: 1e-6,
            lr_halving_patience: 5,
            early_stop_patience: 50,
            seeds: vec![0],
            ablation: Ablation::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.task == Task::SequenceCls && self.batch_size != 1 {
            return Err(Error::Contract(format!(
                "sequence classification processes one instance per step, got batch_size {}",
                self.batch_size
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Contract("epochs and batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0) {
            return Err(Error::Contract(
                "lr must be positive and weight_decay non-negative".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::Contract("at least one seed is required".into()));
        }
        Ok(())
    }

    pub(crate) fn adam(&self) -> crate::adam::AdamConfig {
        crate::adam::AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..Default::default()
        }
    }
}

/// One line of the metrics stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub auc: Option<f64>,
    pub lr: f64,
}

pub trait MetricsSink {
    fn record(&mut self, m: &EpochMetrics) -> Result<()>;
}

impl MetricsSink for Vec<EpochMetrics> {
    fn record(&mut self, m: &EpochMetrics) -> Result<()> {
        self.push(m.clone());
        Ok(())
    }
}

/// Writes each record as one JSON line.
pub struct JsonLines<W: Write>(pub W);

impl<W: Write> MetricsSink for JsonLines<W> {
    fn record(&mut self, m: &EpochMetrics) -> Result<()> {
        serde_json::to_writer(&mut self.0, m)?;
        self.0.write_all(b"\n")?;
        Ok(())
    }
}

/// Sends every record to two sinks.
pub struct Tee<'a>(pub &'a mut dyn MetricsSink, pub &'a mut dyn MetricsSink);

impl MetricsSink for Tee<'_> {
    fn record(&mut self, m: &EpochMetrics) -> Result<()> {
        self.0.record(m)?;
        self.1.record(m)
    }
}

/// Aggregate over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub metric: String,
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn new(metric: &str, values: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&values);
        Self {
            metric: metric.to_string(),
            values,
            mean,
            std,
        }
    }
}

/// `-log σ(z)` for a positive target, `-log σ(−z)` otherwise, evaluated
/// without overflow.
pub(crate) fn bce_value(z: f64, positive: bool) -> f64 {
    let m = if positive { -z } else { z };
    // softplus(m)
    m.max(0.0) + (-m.abs()).exp().ln_1p()
}
