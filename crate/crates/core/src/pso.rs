//! Particle swarm search for the learning rate.
//!
//! Particles move in `log10(h)`; every evaluated `h` is clamped back into the
//! configured bounds. The objective used for tuning is the mean held-out
//! binary cross-entropy over a k-fold split of the training rows.

use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::mlp::{bcel, train, MlpModel, ModelSpec, TrainConfig};

/// Objective value assigned to a diverged training run.
pub const DIVERGENCE_PENALTY: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwarmConfig {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub lower: f64,
    pub upper: f64,
    pub seed: u64,
    pub folds: usize,
    pub tuning_epochs: usize,
    /// Training rows drawn (seeded) for cross-validation; `None` uses all.
    pub max_rows: Option<usize>,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            particles: 10,
            iterations: 50,
            inertia: 0.729,
            cognitive: 1.49445,
            social: 1.49445,
            lower: 1e-8,
            upper: 0.1,
            seed: 13,
            folds: 3,
            tuning_epochs: 15,
            max_rows: Some(1500),
        }
    }
}

impl SwarmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_owned()));
        if !(self.lower > 0.0 && self.lower < self.upper && self.upper.is_finite()) {
            return bad("swarm bounds must satisfy 0 < lower < upper");
        }
        if self.particles == 0 || self.iterations == 0 {
            return bad("swarm needs at least one particle and one iteration");
        }
        if self.folds < 2 || self.tuning_epochs == 0 {
            return bad("cross-validation needs >= 2 folds and >= 1 epoch");
        }
        if self.max_rows.is_some_and(|r| r < self.folds) {
            return bad("max_rows must cover every fold");
        }
        Ok(())
    }

    fn log_bounds(&self) -> (f64, f64) {
        (self.lower.log10(), self.upper.log10())
    }

    /// Learning rate for a log-space position, clamped into the bounds.
    pub fn to_rate(&self, position: f64) -> f64 {
        10f64.powf(position).clamp(self.lower, self.upper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub position: f64,
    pub velocity: f64,
    pub best_position: f64,
    pub best_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub iteration: usize,
    pub particle: usize,
    pub h: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneTrace {
    pub evaluations: Vec<Evaluation>,
    /// Global best value after each iteration.
    pub global_best: Vec<f64>,
    pub best_h: f64,
    pub best_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneSummary {
    pub best_h: f64,
    pub best_value: f64,
    pub evaluations: usize,
    pub config: SwarmConfig,
}

impl TuneTrace {
    /// Writes `trace.csv` and `summary.json` into `dir`.
    pub fn save(&self, dir: &Path, config: &SwarmConfig) -> Result<()> {
        io::write_csv(
            &dir.join("trace.csv"),
            &["iteration", "particle", "h", "p_h", "global_best"],
            self.evaluations.iter().map(|e| {
                [
                    e.iteration.to_string(),
                    e.particle.to_string(),
                    e.h.to_string(),
                    e.value.to_string(),
                    self.global_best[e.iteration].to_string(),
                ]
            }),
        )?;
        io::write_json(&dir.join("summary.json"), &self.summary(config))
    }

    pub fn summary(&self, config: &SwarmConfig) -> TuneSummary {
        TuneSummary {
            best_h: self.best_h,
            best_value: self.best_value,
            evaluations: self.evaluations.len(),
            config: config.clone(),
        }
    }
}

fn sanitize(value: f64) -> f64 {
    if value.is_finite() {
        value
    } else {
        DIVERGENCE_PENALTY
    }
}

/// Minimizes `objective(h)` over `h` in the configured bounds.
///
/// The first iteration evaluates the initial positions, so the objective is
/// called `particles * iterations` times. Evaluations within an iteration run
/// in parallel; bests are updated afterwards in particle order.
pub fn pso_minimize<F>(objective: F, config: &SwarmConfig) -> Result<(f64, TuneTrace)>
where
    F: Fn(f64) -> f64 + Sync,
{
    config.validate()?;
    let (lo, hi) = config.log_bounds();
    let v_max = (hi - lo) / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut swarm: Vec<Particle> = (0..config.particles)
        .map(|_| {
            let position = rng.gen_range(lo..=hi);
            Particle {
                position,
                velocity: rng.gen_range(-v_max..=v_max),
                best_position: position,
                best_value: f64::INFINITY,
            }
        })
        .collect();
    let mut best_position = swarm[0].position;
    let mut best_value = f64::INFINITY;
    let mut evaluations = Vec::with_capacity(config.particles * config.iterations);
    let mut global_best = Vec::with_capacity(config.iterations);

    for iteration in 0..config.iterations {
        if iteration > 0 {
            for p in &mut swarm {
                let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
                p.velocity = (config.inertia * p.velocity
                    + config.cognitive * r1 * (p.best_position - p.position)
                    + config.social * r2 * (best_position - p.position))
                    .clamp(-v_max, v_max);
                p.position = (p.position + p.velocity).clamp(lo, hi);
            }
        }
        let values: Vec<f64> = swarm
            .par_iter()
            .map(|p| sanitize(objective(config.to_rate(p.position))))
            .collect();
        for (index, (p, &value)) in swarm.iter_mut().zip(&values).enumerate() {
            evaluations.push(Evaluation { iteration, particle: index, h: config.to_rate(p.position), value });
            if value < p.best_value {
                p.best_value = value;
                p.best_position = p.position;
            }
            if value < best_value {
                best_value = value;
                best_position = p.position;
            }
        }
        log::debug!("pso iteration {iteration}: best {best_value:.6} at h={:.3e}", config.to_rate(best_position));
        global_best.push(best_value);
    }
    let best_h = config.to_rate(best_position);
    Ok((best_h, TuneTrace { evaluations, global_best, best_h, best_value }))
}

/// Mean held-out loss of fresh models trained with learning rate `h`.
#[derive(Debug, Clone)]
pub struct CrossValidation {
    x: Array2<f64>,
    y: Array2<f64>,
    folds: Vec<Vec<usize>>,
    spec: ModelSpec,
    train: TrainConfig,
    lower: f64,
    upper: f64,
}

impl CrossValidation {
    /// Partitions the training rows into seeded folds. Only training rows
    /// should be passed in; the test split must not influence tuning.
    pub fn new(
        x: &Array2<f64>,
        y: &Array2<f64>,
        spec: ModelSpec,
        base: &TrainConfig,
        config: &SwarmConfig,
    ) -> Result<Self> {
        config.validate()?;
        if x.nrows() != y.nrows() {
            return Err(Error::DimensionMismatch { context: "cv rows", expected: x.nrows(), actual: y.nrows() });
        }
        let mut order: Vec<usize> = (0..x.nrows()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
        if let Some(limit) = config.max_rows {
            order.truncate(limit);
        }
        if order.len() < config.folds {
            return Err(Error::DegenerateDataset(format!(
                "{} rows cannot fill {} folds",
                order.len(),
                config.folds
            )));
        }
        let mut folds = vec![Vec::new(); config.folds];
        for (k, &row) in order.iter().enumerate() {
            folds[k % config.folds].push(row);
        }
        Ok(Self {
            x: x.to_owned(),
            y: y.to_owned(),
            folds,
            spec,
            train: TrainConfig { epochs: config.tuning_epochs, ..base.clone() },
            lower: config.lower,
            upper: config.upper,
        })
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }

    /// `P(h)`. Divergence in any fold yields [`DIVERGENCE_PENALTY`].
    pub fn evaluate(&self, h: f64) -> Result<f64> {
        if !(self.lower..=self.upper).contains(&h) {
            return Err(Error::OutOfBounds { value: h, lo: self.lower, hi: self.upper });
        }
        let mut total = 0.0;
        for (k, held_out) in self.folds.iter().enumerate() {
            let rows: Vec<usize> = self
                .folds
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .flat_map(|(_, f)| f.iter().copied())
                .collect();
            let fold_seed = self.train.seed.wrapping_add(k as u64);
            let mut model = MlpModel::new(self.spec.clone(), fold_seed)?;
            let config = TrainConfig { learning_rate: h, seed: fold_seed, ..self.train.clone() };
            let (tx, ty) = (self.x.select(Axis(0), &rows), self.y.select(Axis(0), &rows));
            match train(&mut model, &tx, &ty, &config, None) {
                Ok(_) => {}
                Err(Error::NonFiniteLoss { epoch, batch }) => {
                    log::warn!("h={h:.3e} fold {k} diverged at epoch {epoch} batch {batch}");
                    return Ok(DIVERGENCE_PENALTY);
                }
                Err(e) => return Err(e),
            }
            let p = model.predict(&self.x.select(Axis(0), held_out))?;
            let loss = bcel(&self.y.select(Axis(0), held_out), &p)?;
            if !loss.is_finite() {
                return Ok(DIVERGENCE_PENALTY);
            }
            total += loss;
        }
        Ok(total / self.folds.len() as f64)
    }

    /// Runs the swarm over [`CrossValidation::evaluate`].
    pub fn tune(&self, config: &SwarmConfig) -> Result<(f64, TuneTrace)> {
        pso_minimize(
            |h| match self.evaluate(h) {
                Ok(v) => v,
                Err(e) => {
                    log::warn!("objective failed at h={h:.3e}: {e}");
                    DIVERGENCE_PENALTY
                }
            },
            config,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn target() -> f64 {
        0.002318f64.log10()
    }

    fn sphere(h: f64) -> f64 {
        (h.log10() - target()).powi(2)
    }

    #[test]
    fn sphere_converges_with_defaults() {
        let config = SwarmConfig::default();
        let (best, trace) = pso_minimize(sphere, &config).unwrap();
        assert!((best.log10() - target()).abs() < 1e-3, "best {best}");
        assert_eq!(trace.evaluations.len(), 500);
        assert_eq!(trace.global_best.len(), 50);
        assert!(trace.global_best.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn evaluated_rates_stay_in_bounds() {
        let config = SwarmConfig { seed: 99, ..SwarmConfig::default() };
        let (_, trace) = pso_minimize(|h| -h.log10(), &config).unwrap();
        assert!(trace.evaluations.iter().all(|e| (1e-8..=0.1).contains(&e.h)));
        assert!((trace.best_h - 0.1).abs() < 1e-12);
    }

    #[test]
    fn single_evaluation_budget() {
        let config = SwarmConfig { particles: 1, iterations: 1, ..SwarmConfig::default() };
        let (best, trace) = pso_minimize(sphere, &config).unwrap();
        assert_eq!(trace.evaluations.len(), 1);
        assert_eq!(best, trace.evaluations[0].h);
    }

    #[test]
    fn seeded_runs_repeat() {
        let config = SwarmConfig { iterations: 10, ..SwarmConfig::default() };
        assert_eq!(pso_minimize(sphere, &config).unwrap(), pso_minimize(sphere, &config).unwrap());
    }

    #[test]
    fn non_finite_values_are_penalized() {
        let config = SwarmConfig { particles: 3, iterations: 2, ..SwarmConfig::default() };
        let (_, trace) = pso_minimize(|_| f64::NAN, &config).unwrap();
        assert!(trace.evaluations.iter().all(|e| e.value == DIVERGENCE_PENALTY));
    }

    #[test]
    fn config_validation() {
        assert!(SwarmConfig { lower: 0.0, ..SwarmConfig::default() }.validate().is_err());
        assert!(SwarmConfig { lower: 0.2, ..SwarmConfig::default() }.validate().is_err());
        assert!(SwarmConfig { particles: 0, ..SwarmConfig::default() }.validate().is_err());
        assert!(SwarmConfig { folds: 1, ..SwarmConfig::default() }.validate().is_err());
    }

    fn toy_cv() -> CrossValidation {
        let x = Array2::from_shape_fn((30, 3), |(r, c)| ((r * 7 + c * 3) % 11) as f64 / 11.0 - 0.5);
        let y = Array2::from_shape_fn((30, 2), |(r, c)| f64::from(u8::from((x[[r, 0]] > 0.0) == (c == 0))));
        let spec = ModelSpec::with_hidden(3, &[4], 1, 2);
        let config = SwarmConfig { tuning_epochs: 2, max_rows: None, ..SwarmConfig::default() };
        let base = TrainConfig { batch_size: 8, ..TrainConfig::default() };
        CrossValidation::new(&x, &y, spec, &base, &config).unwrap()
    }

    #[test]
    fn folds_partition_training_rows() {
        let cv = toy_cv();
        let mut rows: Vec<usize> = cv.folds().iter().flatten().copied().collect();
        rows.sort_unstable();
        assert_eq!(rows, (0..30).collect::<Vec<_>>());
        assert!(cv.folds().iter().all(|f| f.len() == 10));
    }

    #[test]
    fn objective_is_repeatable_and_bounded() {
        let cv = toy_cv();
        let a = cv.evaluate(0.01).unwrap();
        assert_eq!(a, cv.evaluate(0.01).unwrap());
        assert!(a.is_finite() && a > 0.0);
        assert!(matches!(cv.evaluate(0.0), Err(Error::OutOfBounds { .. })));
        assert!(cv.evaluate(0.1).unwrap().is_finite());
    }
}
