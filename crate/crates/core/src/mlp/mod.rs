//! Feed-forward placement surrogate.
//!
//! Each hidden layer is `dense -> batch norm -> ReLU`; the output layer is a
//! dense layer with a sigmoid per bit. Rows are samples, so a dense layer maps
//! `X (n x in)` to `X W + b` with `W (in x out)`.

mod gradcheck;
mod train;

use std::path::Path;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::distributions::{Distribution, Uniform};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

pub use gradcheck::{gradient_check, GradientCheck};
pub use train::{train, Adam, EpochRecord, TrainConfig, TrainingHistory};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;
pub const PROB_CLIP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_width: usize,
    pub hidden: Vec<usize>,
    pub output_width: usize,
    pub n_servers: usize,
    /// One flag per hidden layer.
    pub batch_norm: Vec<bool>,
}

impl ModelSpec {
    pub const DEFAULT_HIDDEN: [usize; 3] = [512, 512, 256];

    /// Default architecture for the given feature and label widths.
    pub fn new(input_width: usize, n_instances: usize, n_servers: usize) -> Self {
        Self::with_hidden(input_width, &Self::DEFAULT_HIDDEN, n_instances, n_servers)
    }

    pub fn with_hidden(input_width: usize, hidden: &[usize], n_instances: usize, n_servers: usize) -> Self {
        Self {
            input_width,
            hidden: hidden.to_vec(),
            output_width: n_instances * n_servers,
            n_servers,
            batch_norm: vec![true; hidden.len()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.input_width == 0 || self.output_width == 0 || self.hidden.contains(&0) {
            return bad(format!("layer widths must be >= 1: {self:?}"));
        }
        if self.n_servers == 0 || !self.output_width.is_multiple_of(self.n_servers) {
            return bad(format!(
                "output width {} not divisible by {} servers",
                self.output_width, self.n_servers
            ));
        }
        if self.batch_norm.len() != self.hidden.len() {
            return bad(format!(
                "{} batch-norm flags for {} hidden layers",
                self.batch_norm.len(),
                self.hidden.len()
            ));
        }
        Ok(())
    }

    pub fn n_instances(&self) -> usize {
        self.output_width / self.n_servers
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn uniform(fan_in: usize, fan_out: usize, limit: f64, rng: &mut ChaCha8Rng) -> Self {
        let dist = Uniform::new_inclusive(-limit, limit);
        Self {
            weights: Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(rng)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNorm {
    fn new(units: usize) -> Self {
        Self {
            gamma: Array1::ones(units),
            beta: Array1::zeros(units),
            running_mean: Array1::zeros(units),
            running_var: Array1::ones(units),
            momentum: BN_MOMENTUM,
            epsilon: BN_EPSILON,
        }
    }

    fn infer(&self, z: &Array2<f64>) -> Array2<f64> {
        let scale = &self.gamma / &self.running_var.mapv(|v| (v + self.epsilon).sqrt());
        (z - &self.running_mean) * &scale + &self.beta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenLayer {
    pub dense: Dense,
    pub batch_norm: Option<BatchNorm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Training,
    Inference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterCount {
    pub trainable: usize,
    pub non_trainable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub seed: u64,
    pub hidden: Vec<HiddenLayer>,
    pub output: Dense,
}

/// Intermediate values of a training-mode pass over one batch.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Array2<f64>,
    layers: Vec<HiddenCache>,
    pub probabilities: Array2<f64>,
}

#[derive(Debug, Clone)]
struct HiddenCache {
    /// Batch-norm output (or dense output without batch norm), before ReLU.
    pre_activation: Array2<f64>,
    activation: Array2<f64>,
    norm: Option<NormCache>,
}

#[derive(Debug, Clone)]
struct NormCache {
    normalized: Array2<f64>,
    mean: Array1<f64>,
    var: Array1<f64>,
    inv_std: Array1<f64>,
}

impl ForwardCache {
    /// Batch-normalized activations of a hidden layer before scale and shift.
    pub fn normalized(&self, layer: usize) -> Option<&Array2<f64>> {
        self.layers.get(layer)?.norm.as_ref().map(|n| &n.normalized)
    }

    /// Inputs to every hidden ReLU, used to detect kinks.
    pub fn pre_activations(&self) -> impl Iterator<Item = &Array2<f64>> {
        self.layers.iter().map(|l| &l.pre_activation)
    }
}

/// Trainable-parameter gradients in the order of [`MlpModel::trainable_mut`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl MlpModel {
    /// Fan-in scaled uniform initialization; biases start at zero.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fan_in = spec.input_width;
        let mut hidden = Vec::with_capacity(spec.hidden.len());
        for (&units, &bn) in spec.hidden.iter().zip(&spec.batch_norm) {
            hidden.push(HiddenLayer {
                dense: Dense::uniform(fan_in, units, (6.0 / fan_in as f64).sqrt(), &mut rng),
                batch_norm: bn.then(|| BatchNorm::new(units)),
            });
            fan_in = units;
        }
        let output = Dense::uniform(fan_in, spec.output_width, (3.0 / fan_in as f64).sqrt(), &mut rng);
        Ok(Self { format_version: MODEL_FORMAT_VERSION, spec, seed, hidden, output })
    }

    /// Sets the output layer to zero so that every prediction is 0.5.
    pub fn zero_output_layer(&mut self) {
        self.output.weights.fill(0.0);
        self.output.bias.fill(0.0);
    }

    pub fn parameter_count(&self) -> ParameterCount {
        let dense = |d: &Dense| d.weights.len() + d.bias.len();
        let mut trainable = dense(&self.output);
        let mut non_trainable = 0;
        for layer in &self.hidden {
            trainable += dense(&layer.dense);
            if let Some(bn) = &layer.batch_norm {
                trainable += bn.gamma.len() + bn.beta.len();
                non_trainable += bn.running_mean.len() + bn.running_var.len();
            }
        }
        ParameterCount { trainable, non_trainable }
    }

    fn check_width(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.spec.input_width {
            return Err(Error::DimensionMismatch {
                context: "model input",
                expected: self.spec.input_width,
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    /// Inference-mode probabilities; pure.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_width(x)?;
        let mut a = x.to_owned();
        for layer in &self.hidden {
            let z = layer.dense.apply(&a);
            let y = match &layer.batch_norm {
                Some(bn) => bn.infer(&z),
                None => z,
            };
            a = y.mapv(|v| v.max(0.0));
        }
        Ok(self.output.apply(&a).mapv(sigmoid))
    }

    /// Training-mode pass with batch statistics. Running statistics are left
    /// untouched; see [`MlpModel::update_running`].
    pub fn forward_train(&self, x: &Array2<f64>) -> Result<ForwardCache> {
        self.check_width(x)?;
        let n = x.nrows() as f64;
        let mut layers = Vec::with_capacity(self.hidden.len());
        let mut a = x.to_owned();
        for layer in &self.hidden {
            let z = layer.dense.apply(&a);
            let (pre_activation, norm) = match &layer.batch_norm {
                Some(bn) => {
                    let mean = z.sum_axis(Axis(0)) / n;
                    let centered = &z - &mean;
                    let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n;
                    let inv_std = var.mapv(|v| 1.0 / (v + bn.epsilon).sqrt());
                    let normalized = centered * &inv_std;
                    let y = &normalized * &bn.gamma + &bn.beta;
                    (y, Some(NormCache { normalized, mean, var, inv_std }))
                }
                None => (z, None),
            };
            let activation = pre_activation.mapv(|v| v.max(0.0));
            layers.push(HiddenCache { pre_activation, activation, norm });
            a = layers.last().expect("just pushed").activation.clone();
        }
        let probabilities = self.output.apply(&a).mapv(sigmoid);
        Ok(ForwardCache { input: x.to_owned(), layers, probabilities })
    }

    /// Moves running statistics toward the batch statistics held in `cache`.
    pub fn update_running(&mut self, cache: &ForwardCache) {
        for (layer, lc) in self.hidden.iter_mut().zip(&cache.layers) {
            if let (Some(bn), Some(norm)) = (layer.batch_norm.as_mut(), lc.norm.as_ref()) {
                let m = bn.momentum;
                Zip::from(&mut bn.running_mean).and(&norm.mean).for_each(|r, &b| *r = m * *r + (1.0 - m) * b);
                Zip::from(&mut bn.running_var).and(&norm.var).for_each(|r, &b| *r = m * *r + (1.0 - m) * b);
            }
        }
    }

    /// Forward pass in either mode. Training mode updates running statistics.
    pub fn forward(&mut self, x: &Array2<f64>, mode: Mode) -> Result<Array2<f64>> {
        match mode {
            Mode::Inference => self.predict(x),
            Mode::Training => {
                let cache = self.forward_train(x)?;
                self.update_running(&cache);
                Ok(cache.probabilities)
            }
        }
    }

    /// Gradient of mean binary cross-entropy with respect to every trainable
    /// parameter, for the batch held in `cache`.
    pub fn backward(&self, cache: &ForwardCache, targets: &Array2<f64>) -> Result<Gradients> {
        if targets.dim() != cache.probabilities.dim() {
            return Err(Error::DimensionMismatch {
                context: "targets vs outputs",
                expected: cache.probabilities.len(),
                actual: targets.len(),
            });
        }
        let n = cache.input.nrows() as f64;
        let scale = 1.0 / (n * targets.ncols() as f64);
        let d_logits = (&cache.probabilities - targets) * scale;

        let last_activation = cache.layers.last().map_or(&cache.input, |l| &l.activation);
        let mut reversed: Vec<Vec<f64>> = vec![
            d_logits.sum_axis(Axis(0)).to_vec(),
            into_vec(last_activation.t().dot(&d_logits)),
        ];
        let mut d_a = d_logits.dot(&self.output.weights.t());

        for (index, (layer, lc)) in self.hidden.iter().zip(&cache.layers).enumerate().rev() {
            let mut d_y = d_a;
            Zip::from(&mut d_y).and(&lc.pre_activation).for_each(|g, &p| {
                if p <= 0.0 {
                    *g = 0.0;
                }
            });
            let d_z = match (&layer.batch_norm, &lc.norm) {
                (Some(bn), Some(norm)) => {
                    let d_beta = d_y.sum_axis(Axis(0));
                    let d_gamma = (&d_y * &norm.normalized).sum_axis(Axis(0));
                    let d_xhat = d_y * &bn.gamma;
                    let sum_d = d_xhat.sum_axis(Axis(0));
                    let sum_dx = (&d_xhat * &norm.normalized).sum_axis(Axis(0));
                    let d_z = (d_xhat * n - &sum_d - &norm.normalized * &sum_dx) * &(&norm.inv_std / n);
                    reversed.push(d_beta.to_vec());
                    reversed.push(d_gamma.to_vec());
                    d_z
                }
                _ => d_y,
            };
            let input = if index == 0 { &cache.input } else { &cache.layers[index - 1].activation };
            reversed.push(d_z.sum_axis(Axis(0)).to_vec());
            reversed.push(into_vec(input.t().dot(&d_z)));
            d_a = if index == 0 { Array2::zeros((0, 0)) } else { d_z.dot(&layer.dense.weights.t()) };
        }
        reversed.reverse();
        Ok(Gradients { tensors: reversed })
    }

    /// Trainable tensors in a fixed order: per hidden layer `W, b[, gamma, beta]`,
    /// then output `W, b`.
    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.hidden {
            out.push(layer.dense.weights.as_slice_mut().expect("standard layout"));
            out.push(layer.dense.bias.as_slice_mut().expect("standard layout"));
            if let Some(bn) = &mut layer.batch_norm {
                out.push(bn.gamma.as_slice_mut().expect("standard layout"));
                out.push(bn.beta.as_slice_mut().expect("standard layout"));
            }
        }
        out.push(self.output.weights.as_slice_mut().expect("standard layout"));
        out.push(self.output.bias.as_slice_mut().expect("standard layout"));
        out
    }

    /// SHA-256 of the serialized model.
    pub fn checksum(&self) -> String {
        io::sha256_hex(&serde_json::to_vec(self).expect("model serializes"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: Self = io::read_json(path)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion { found: model.format_version, expected: MODEL_FORMAT_VERSION });
        }
        model.spec.validate()?;
        Ok(model)
    }
}

fn into_vec(a: Array2<f64>) -> Vec<f64> {
    if a.is_standard_layout() {
        a.into_raw_vec_and_offset().0
    } else {
        a.iter().copied().collect()
    }
}

/// Mean binary cross-entropy with probabilities clipped to `[1e-7, 1 - 1e-7]`.
pub fn bcel(targets: &Array2<f64>, probabilities: &Array2<f64>) -> Result<f64> {
    if targets.dim() != probabilities.dim() {
        return Err(Error::DimensionMismatch {
            context: "bcel operands",
            expected: targets.len(),
            actual: probabilities.len(),
        });
    }
    let total: f64 = Zip::from(targets).and(probabilities).fold(0.0, |acc, &y, &p| {
        let p = p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
        acc - (y * p.ln() + (1.0 - y) * (1.0 - p).ln())
    });
    Ok(total / targets.len().max(1) as f64)
}

/// Argmax server per instance block, ties to the lowest index.
pub fn decode_placement(row: &[f64], n_instances: usize, n_servers: usize) -> Vec<usize> {
    assert_eq!(row.len(), n_instances * n_servers, "probability row width");
    row.chunks(n_servers)
        .map(|block| {
            let mut best = 0;
            for (s, &p) in block.iter().enumerate().skip(1) {
                if p > block[best] {
                    best = s;
                }
            }
            best
        })
        .collect()
}

/// Decodes every row of a probability matrix.
pub fn decode_rows(probabilities: &Array2<f64>, n_instances: usize, n_servers: usize) -> Vec<Vec<usize>> {
    probabilities
        .outer_iter()
        .map(|row| decode_placement(&row.to_vec(), n_instances, n_servers))
        .collect()
}
