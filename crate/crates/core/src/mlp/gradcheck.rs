use ndarray::Array2;

use super::{bcel, MlpModel};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Parameters whose perturbation moved a ReLU input across zero.
    pub skipped: usize,
}

fn loss_at(model: &MlpModel, x: &Array2<f64>, y: &Array2<f64>) -> Result<(f64, Vec<bool>)> {
    let cache = model.forward_train(x)?;
    let loss = bcel(y, &cache.probabilities)?;
    let signs = cache.pre_activations().flat_map(|a| a.iter().map(|&v| v > 0.0)).collect();
    Ok((loss, signs))
}

/// Compares backprop gradients with central differences on every trainable
/// parameter, using `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(model: &MlpModel, x: &Array2<f64>, y: &Array2<f64>) -> Result<GradientCheck> {
    let cache = model.forward_train(x)?;
    let analytic = model.backward(&cache, y)?;
    let (_, base_signs) = loss_at(model, x, y)?;

    let mut probe = model.clone();
    let mut result = GradientCheck { max_relative_error: 0.0, checked: 0, skipped: 0 };
    for (t, grad) in analytic.tensors.iter().enumerate() {
        for k in 0..grad.len() {
            let original = probe.trainable_mut()[t][k];
            probe.trainable_mut()[t][k] = original + FD_STEP;
            let (plus, plus_signs) = loss_at(&probe, x, y)?;
            probe.trainable_mut()[t][k] = original - FD_STEP;
            let (minus, minus_signs) = loss_at(&probe, x, y)?;
            probe.trainable_mut()[t][k] = original;

            if plus_signs != base_signs || minus_signs != base_signs {
                result.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = grad[k];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            result.max_relative_error = result.max_relative_error.max(err);
            result.checked += 1;
        }
    }
    Ok(result)
}
