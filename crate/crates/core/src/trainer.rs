//! Small binary classifiers trained by minibatch SGD in exactly the order the
//! epoch plans prescribe.
//!
//! Each epoch walks `plan.order` and cuts it into consecutive minibatches of
//! `batch_size` (the last may be shorter); there is no second shuffle. The
//! loss is binary cross-entropy on a single logit.

use std::hash::Hasher;

use fnv::FnvHasher;
use rand::RngCore;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{sigmoid, softplus};
use crate::sampler::EpochPlan;
use crate::synth::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Linear,
    /// One tanh hidden layer.
    Mlp { hidden: usize },
}

impl Architecture {
    pub fn n_params(&self, dim: usize) -> usize {
        match *self {
            Architecture::Linear => dim + 1,
            Architecture::Mlp { hidden } => hidden * dim + hidden + hidden + 1,
        }
    }
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture::Mlp { hidden: 32 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Heavy-ball momentum; 0 is plain SGD.
    pub momentum: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.05,
            batch_size: 32,
            momentum: 0.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// Model with all parameters in one flat vector.
///
/// Layout: linear is `[w (dim), b]`; the MLP is
/// `[W1 (hidden x dim, row-major), b1 (hidden), w2 (hidden), b2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub architecture: Architecture,
    pub dim: usize,
    pub params: Vec<f64>,
}

impl Model {
    pub fn zeros(architecture: Architecture, dim: usize) -> Self {
        Model {
            architecture,
            dim,
            params: vec![0.0; architecture.n_params(dim)],
        }
    }

    /// Gaussian init: linear weights `N(0, 0.01^2)`, MLP layers scaled by
    /// `1/sqrt(fan_in)`. Biases start at zero.
    pub fn init(architecture: Architecture, dim: usize, rng: &mut impl RngCore) -> Self {
        let mut model = Model::zeros(architecture, dim);
        match architecture {
            Architecture::Linear => {
                let normal = Normal::new(0.0, 0.01).expect("valid normal");
                for w in &mut model.params[..dim] {
                    *w = normal.sample(rng);
                }
            }
            Architecture::Mlp { hidden } => {
                let first = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).expect("valid normal");
                let second = Normal::new(0.0, 1.0 / (hidden as f64).sqrt()).expect("valid normal");
                for w in &mut model.params[..hidden * dim] {
                    *w = first.sample(rng);
                }
                let w2 = hidden * dim + hidden;
                for w in &mut model.params[w2..w2 + hidden] {
                    *w = second.sample(rng);
                }
            }
        }
        model
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        match self.architecture {
            Architecture::Linear => dot(&self.params[..d], x) + self.params[d],
            Architecture::Mlp { hidden } => {
                let (w1, rest) = self.params.split_at(hidden * d);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(hidden);
                let mut z = b2[0];
                for k in 0..hidden {
                    let a = (dot(&w1[k * d..(k + 1) * d], x) + b1[k]).tanh();
                    z += w2[k] * a;
                }
                z
            }
        }
    }

    /// Cross-entropy loss of one sample; adds its gradient into `grad`.
    pub fn loss_and_grad(&self, x: &[f64], positive: bool, grad: &mut [f64]) -> f64 {
        let d = self.dim;
        let y = if positive { 1.0 } else { 0.0 };
        match self.architecture {
            Architecture::Linear => {
                let z = self.logit(x);
                let dz = sigmoid(z) - y;
                for (g, xi) in grad[..d].iter_mut().zip(x) {
                    *g += dz * xi;
                }
                grad[d] += dz;
                softplus(z) - y * z
            }
            Architecture::Mlp { hidden } => {
                let (w1, rest) = self.params.split_at(hidden * d);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(hidden);
                let act: Vec<f64> = (0..hidden)
                    .map(|k| (dot(&w1[k * d..(k + 1) * d], x) + b1[k]).tanh())
                    .collect();
                let z = b2[0] + dot(w2, &act);
                let dz = sigmoid(z) - y;
                let (g_w1, g_rest) = grad.split_at_mut(hidden * d);
                let (g_b1, g_rest) = g_rest.split_at_mut(hidden);
                let (g_w2, g_b2) = g_rest.split_at_mut(hidden);
                g_b2[0] += dz;
                for k in 0..hidden {
                    g_w2[k] += dz * act[k];
                    let dh = dz * w2[k] * (1.0 - act[k] * act[k]);
                    g_b1[k] += dh;
                    for (g, xi) in g_w1[k * d..(k + 1) * d].iter_mut().zip(x) {
                        *g += dh * xi;
                    }
                }
                softplus(z) - y * z
            }
        }
    }

    pub fn loss(&self, x: &[f64], positive: bool) -> f64 {
        let z = self.logit(x);
        softplus(z) - if positive { z } else { 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-sample loss, each evaluated just before its batch's update.
    pub loss: f64,
    /// FNV-1a over the epoch order (indices as little-endian u64).
    pub order_fingerprint: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

pub fn order_fingerprint(order: &[usize]) -> u64 {
    let mut hasher = FnvHasher::default();
    for &i in order {
        hasher.write(&(i as u64).to_le_bytes());
    }
    hasher.finish()
}

/// Runs SGD over `plans` starting from `model`.
pub fn train(
    mut model: Model,
    data: &Dataset,
    plans: &[EpochPlan],
    hyper: &Hyperparams,
) -> Result<(Model, TrainLog)> {
    hyper.validate()?;
    if data.dim != model.dim {
        return Err(Error::ShapeError {
            expected: model.dim,
            actual: data.dim,
        });
    }
    if plans.is_empty() {
        return Err(Error::PlanMismatch("no epoch plans".into()));
    }
    for (i, plan) in plans.iter().enumerate() {
        if plan.epoch != i + 1 {
            return Err(Error::PlanMismatch(format!(
                "plan {i} is labelled epoch {}, expected {}",
                plan.epoch,
                i + 1
            )));
        }
        if !plan.is_permutation_of(data.len()) {
            return Err(Error::PlanMismatch(format!(
                "epoch {} order is not a permutation of {} samples",
                plan.epoch,
                data.len()
            )));
        }
    }

    let n_params = model.params.len();
    let mut grad = vec![0.0; n_params];
    let mut velocity = vec![0.0; n_params];
    let mut log = TrainLog::default();
    for plan in plans {
        let mut epoch_loss = 0.0;
        for (batch_index, batch) in plan.order.chunks(hyper.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            for &i in batch {
                let r = &data.records[i];
                batch_loss += model.loss_and_grad(&r.features, r.positive, &mut grad);
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite {
                    what: "loss",
                    epoch: plan.epoch,
                    batch: batch_index,
                });
            }
            epoch_loss += batch_loss;
            let scale = 1.0 / batch.len() as f64;
            for ((p, v), g) in model.params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = hyper.momentum * *v + g * scale;
                *p -= hyper.learning_rate * *v;
            }
            if !model.is_finite() {
                return Err(Error::NonFinite {
                    what: "weights",
                    epoch: plan.epoch,
                    batch: batch_index,
                });
            }
        }
        log.epochs.push(EpochLog {
            epoch: plan.epoch,
            loss: epoch_loss / data.len() as f64,
            order_fingerprint: order_fingerprint(&plan.order),
        });
    }
    Ok((model, log))
}

/// Positive-class probability per record, in input order.
pub fn predict_scores(model: &Model, data: &Dataset) -> Result<Vec<f64>> {
    if data.dim != model.dim {
        return Err(Error::ShapeError {
            expected: model.dim,
            actual: data.dim,
        });
    }
    Ok(data
        .records
        .iter()
        .map(|r| sigmoid(model.logit(&r.features)))
        .collect())
}

/// Versioned checkpoint wrapper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: Model,
}

pub const CHECKPOINT_FORMAT: &str = "kgc-model";
pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn new(model: Model) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let parse = |message: String| Error::Parse {
            path: "<checkpoint>".into(),
            message,
        };
        let ckpt: Checkpoint = serde_json::from_str(text).map_err(|e| parse(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(parse(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        if ckpt.model.params.len() != ckpt.model.architecture.n_params(ckpt.model.dim) {
            return Err(parse("parameter count does not match architecture".into()));
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::FineLabel;
    use crate::seed::{Purpose, SeedSpec};
    use crate::synth::SampleRecord;

    fn toy_data() -> Dataset {
        let records = (0..10)
            .map(|i| {
                let positive = i % 2 == 0;
                let sign = if positive { 1.0 } else { -1.0 };
                SampleRecord {
                    id: format!("s{i}"),
                    positive,
                    fine_label: FineLabel::from(if positive { "a" } else { "normal" }),
                    features: vec![sign * (1.0 + i as f64 * 0.1), 0.3 * i as f64 - 1.0],
                }
            })
            .collect();
        Dataset::new(records).unwrap()
    }

    fn identity_plans(n: usize, epochs: usize) -> Vec<EpochPlan> {
        (1..=epochs)
            .map(|epoch| EpochPlan {
                epoch,
                order: (0..n).collect(),
            })
            .collect()
    }

    #[test]
    fn zero_model_predicts_half() {
        let data = toy_data();
        for arch in [Architecture::Linear, Architecture::Mlp { hidden: 4 }] {
            let scores = predict_scores(&Model::zeros(arch, 2), &data).unwrap();
            assert!(scores.iter().all(|&s| s == 0.5));
        }
    }

    #[test]
    fn linear_score_closed_form() {
        let model = Model {
            architecture: Architecture::Linear,
            dim: 3,
            params: vec![0.5, -1.25, 2.0, 0.1],
        };
        let x = [0.3, 0.7, -0.2];
        let z: f64 = 0.5 * 0.3 - 1.25 * 0.7 + 2.0 * -0.2 + 0.1;
        let expected = 1.0 / (1.0 + (-z).exp());
        assert!((sigmoid(model.logit(&x)) - expected).abs() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        let data = toy_data();
        let model = Model::zeros(Architecture::Linear, 3);
        assert!(matches!(
            predict_scores(&model, &data),
            Err(Error::ShapeError { expected: 3, actual: 2 })
        ));
        assert!(matches!(
            train(model, &data, &identity_plans(10, 1), &Hyperparams::default()),
            Err(Error::ShapeError { .. })
        ));
    }

    #[test]
    fn plan_mismatch() {
        let data = toy_data();
        let model = Model::zeros(Architecture::Linear, 2);
        let short = identity_plans(9, 2);
        assert!(matches!(
            train(model.clone(), &data, &short, &Hyperparams::default()),
            Err(Error::PlanMismatch(_))
        ));
        assert!(matches!(
            train(model.clone(), &data, &[], &Hyperparams::default()),
            Err(Error::PlanMismatch(_))
        ));
        let mut misnumbered = identity_plans(10, 2);
        misnumbered[1].epoch = 5;
        assert!(matches!(
            train(model, &data, &misnumbered, &Hyperparams::default()),
            Err(Error::PlanMismatch(_))
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let data = toy_data();
        let model = Model {
            architecture: Architecture::Linear,
            dim: 2,
            params: vec![f64::MAX, f64::MAX, 0.0],
        };
        let hyper = Hyperparams {
            learning_rate: 1e300,
            ..Hyperparams::default()
        };
        assert!(matches!(
            train(model, &data, &identity_plans(10, 1), &hyper),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn training_is_deterministic_and_logs_epochs() {
        let data = toy_data();
        let mut rng = SeedSpec::new(4).stream(Purpose::ModelInit, 0, 0);
        let model = Model::init(Architecture::Mlp { hidden: 3 }, 2, &mut rng);
        let plans = identity_plans(10, 4);
        let hyper = Hyperparams {
            batch_size: 3,
            ..Hyperparams::default()
        };
        let (a, log_a) = train(model.clone(), &data, &plans, &hyper).unwrap();
        let (b, log_b) = train(model, &data, &plans, &hyper).unwrap();
        assert_eq!(a, b);
        assert_eq!(log_a, log_b);
        assert_eq!(log_a.epochs.len(), 4);
        assert_eq!(
            log_a.epochs[0].order_fingerprint,
            order_fingerprint(&(0..10).collect::<Vec<_>>())
        );
    }

    #[test]
    fn fingerprint_depends_on_order() {
        assert_ne!(order_fingerprint(&[0, 1, 2]), order_fingerprint(&[0, 2, 1]));
        // FNV-1a 64 offset basis for empty input.
        assert_eq!(order_fingerprint(&[]), 0xcbf2_9ce4_8422_2325);
    }

    #[test]
    fn hyperparam_validation() {
        let ok = Hyperparams::default();
        assert!(ok.validate().is_ok());
        assert!(Hyperparams { learning_rate: 0.0, ..ok }.validate().is_err());
        assert!(Hyperparams { batch_size: 0, ..ok }.validate().is_err());
        assert!(Hyperparams { momentum: 1.0, ..ok }.validate().is_err());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut rng = SeedSpec::new(4).stream(Purpose::ModelInit, 0, 0);
        let model = Model::init(Architecture::Mlp { hidden: 2 }, 3, &mut rng);
        let text = Checkpoint::new(model.clone()).to_json();
        assert_eq!(Checkpoint::from_json(&text).unwrap().model, model);
        let bad = text.replace("\"version\": 1", "\"version\": 9");
        assert!(Checkpoint::from_json(&bad).is_err());
    }
}
