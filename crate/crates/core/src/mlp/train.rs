use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bcel, Gradients, MlpModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 256,
            learning_rate: 0.002318,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-7,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch size must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig(format!("learning rate {} must be finite and >= 0", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.adam_epsilon <= 0.0 {
            return Err(Error::InvalidConfig("Adam moments must be in [0, 1) with positive epsilon".into()));
        }
        Ok(())
    }
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(model: &mut MlpModel, config: &TrainConfig) -> Self {
        let shapes: Vec<usize> = model.trainable_mut().iter().map(|t| t.len()).collect();
        Self {
            learning_rate: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.adam_epsilon,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn apply(&mut self, model: &mut MlpModel, grads: &Gradients) {
        self.step += 1;
        let correction = (1.0 - self.beta2.powi(self.step)).sqrt() / (1.0 - self.beta1.powi(self.step));
        let lr = self.learning_rate * correction;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        for (((param, grad), m), v) in model
            .trainable_mut()
            .into_iter()
            .zip(&grads.tensors)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for k in 0..param.len() {
                let g = grad[k];
                m[k] = b1 * m[k] + (1.0 - b1) * g;
                v[k] = b2 * v[k] + (1.0 - b2) * g * g;
                param[k] -= lr * m[k] / (v[k].sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub binary_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_binary_accuracy: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }
}

fn correct_bits(probabilities: &Array2<f64>, targets: &Array2<f64>) -> usize {
    probabilities
        .iter()
        .zip(targets)
        .filter(|(&p, &y)| (p >= 0.5) == (y >= 0.5))
        .count()
}

/// Mini-batch training on binary cross-entropy.
///
/// Rows are reshuffled every epoch from a generator seeded by `config.seed`;
/// the last batch may be partial. Epoch loss and accuracy are row-weighted
/// means of the training-mode batch values.
pub fn train(
    model: &mut MlpModel,
    x: &Array2<f64>,
    y: &Array2<f64>,
    config: &TrainConfig,
    validation: Option<(&Array2<f64>, &Array2<f64>)>,
) -> Result<TrainingHistory> {
    config.validate()?;
    if x.nrows() != y.nrows() || y.ncols() != model.spec.output_width {
        return Err(Error::DimensionMismatch {
            context: "training labels",
            expected: x.nrows() * model.spec.output_width,
            actual: y.len(),
        });
    }
    if x.nrows() == 0 {
        return Err(Error::DegenerateDataset("empty training split".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(model, config);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut history = TrainingHistory::default();

    for epoch in 0..config.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (batch, rows) in order.chunks(config.batch_size).enumerate() {
            let xb = x.select(Axis(0), rows);
            let yb = y.select(Axis(0), rows);
            let cache = model.forward_train(&xb)?;
            let loss = bcel(&yb, &cache.probabilities)?;
            if !loss.is_finite() || cache.probabilities.iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            loss_sum += loss * rows.len() as f64;
            correct += correct_bits(&cache.probabilities, &yb);
            let grads = model.backward(&cache, &yb)?;
            model.update_running(&cache);
            adam.apply(model, &grads);
        }
        let (val_loss, val_binary_accuracy) = match validation {
            Some((vx, vy)) if vx.nrows() > 0 => {
                let p = model.predict(vx)?;
                (Some(bcel(vy, &p)?), Some(correct_bits(&p, vy) as f64 / vy.len() as f64))
            }
            _ => (None, None),
        };
        let record = EpochRecord {
            epoch,
            loss: loss_sum / x.nrows() as f64,
            binary_accuracy: correct as f64 / y.len() as f64,
            val_loss,
            val_binary_accuracy,
            seconds: start.elapsed().as_secs_f64(),
        };
        let level = if record.val_loss.is_some() { log::Level::Info } else { log::Level::Debug };
        log::log!(
            level,
            "epoch {:>3}: loss {:.5} acc {:.5}{}",
            epoch + 1,
            record.loss,
            record.binary_accuracy,
            record
                .val_binary_accuracy
                .map(|a| format!(" val_acc {a:.5}"))
                .unwrap_or_default()
        );
        history.epochs.push(record);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::ModelSpec;
    use rand::Rng;

    fn toy(rows: usize) -> (Array2<f64>, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Array2::from_shape_simple_fn((rows, 4), || rng.gen_range(-1.0..1.0));
        let y = Array2::from_shape_fn((rows, 2), |(r, c)| {
            let s = x[[r, 0]] + x[[r, 1]];
            f64::from(u8::from((s > 0.0) == (c == 0)))
        });
        (x, y)
    }

    fn model() -> MlpModel {
        MlpModel::new(ModelSpec::with_hidden(4, &[8], 1, 2), 3).unwrap()
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let (x, y) = toy(40);
        let mut m = model();
        let before = m.clone();
        let config = TrainConfig { epochs: 3, batch_size: 40, learning_rate: 0.0, ..TrainConfig::default() };
        let history = train(&mut m, &x, &y, &config, None).unwrap();
        assert_eq!(m.hidden[0].dense, before.hidden[0].dense);
        assert_eq!(m.output, before.output);
        let losses = history.losses();
        assert!(losses.iter().all(|&l| (l - losses[0]).abs() < 1e-12));
    }

    #[test]
    fn one_record_per_epoch_and_validation() {
        let (x, y) = toy(50);
        let mut m = model();
        let config = TrainConfig { epochs: 4, batch_size: 16, ..TrainConfig::default() };
        let history = train(&mut m, &x, &y, &config, Some((&x, &y))).unwrap();
        assert_eq!(history.epochs.len(), 4);
        assert!(history.epochs.iter().all(|e| e.val_loss.is_some()));
    }

    #[test]
    fn seeded_training_is_reproducible() {
        let (x, y) = toy(60);
        let config = TrainConfig { epochs: 3, batch_size: 16, ..TrainConfig::default() };
        let (mut a, mut b) = (model(), model());
        train(&mut a, &x, &y, &config, None).unwrap();
        train(&mut b, &x, &y, &config, None).unwrap();
        assert_eq!(a.checksum(), b.checksum());
    }

    #[test]
    fn divergence_reports_position() {
        let (x, mut y) = toy(20);
        y[[0, 0]] = f64::NAN;
        let mut m = model();
        let config = TrainConfig { epochs: 2, batch_size: 20, ..TrainConfig::default() };
        assert!(matches!(
            train(&mut m, &x, &y, &config, None),
            Err(Error::NonFiniteLoss { epoch: 0, batch: 0 })
        ));
    }

    #[test]
    fn invalid_configs() {
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: -1.0, ..TrainConfig::default() }.validate().is_err());
    }
}
