//! Pipeline configuration, read from TOML. Every section is optional and
//! falls back to its defaults.
//!
//! ```toml
//! [generator]
//! seed = 42
//! server_capacity = { min = 0, max = 10 }
//!
//! [dataset]
//! n_snapshots = 1000
//!
//! [train]
//! epochs = 100
//!
//! [swarm]
//! particles = 10
//! iterations = 50
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vnfmig::mlp::{ModelSpec, TrainConfig};
use vnfmig::pso::SwarmConfig;
use vnfmig::GeneratorConfig;

use crate::error::CliError;

pub const OUT_DIR_ENV: &str = "VNFMIG_OUT";
pub const DEFAULT_OUT_DIR: &str = "vnfmig-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub n_snapshots: u64,
    pub split_ratio: f64,
    pub split_seed: u64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self { n_snapshots: 1000, split_ratio: 0.8, split_seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: Vec<usize>,
    pub batch_norm: bool,
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { hidden: ModelSpec::DEFAULT_HIDDEN.to_vec(), batch_norm: true, seed: 1 }
    }
}

impl ModelSection {
    pub fn spec(&self, input_width: usize, n_instances: usize, n_servers: usize) -> ModelSpec {
        let mut spec = ModelSpec::with_hidden(input_width, &self.hidden, n_instances, n_servers);
        spec.batch_norm = vec![self.batch_norm; self.hidden.len()];
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub bin_width_ms: f64,
    pub bench_counts: Vec<usize>,
    pub bench_seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { bin_width_ms: 0.5, bench_counts: vec![1, 10, 100, 1000], bench_seed: 3 }
    }
}

/// Stages run by `all`, in pipeline order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageToggles {
    pub generate: bool,
    pub dataset: bool,
    pub tune: bool,
    pub train: bool,
    pub eval: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        Self { generate: true, dataset: true, tune: true, train: true, eval: true }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub out_dir: Option<PathBuf>,
    pub generator: GeneratorConfig,
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub swarm: SwarmConfig,
    pub eval: EvalSection,
    pub stages: StageToggles,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.generator.validate()?;
        self.train.validate()?;
        self.swarm.validate()?;
        if self.dataset.n_snapshots == 0 {
            return Err(CliError::Config("dataset.n_snapshots must be >= 1".into()));
        }
        if !(self.dataset.split_ratio > 0.0 && self.dataset.split_ratio < 1.0) {
            return Err(CliError::Config(format!("dataset.split_ratio {} outside (0, 1)", self.dataset.split_ratio)));
        }
        if self.model.hidden.contains(&0) {
            return Err(CliError::Config("model.hidden widths must be >= 1".into()));
        }
        if !(self.eval.bin_width_ms > 0.0) {
            return Err(CliError::Config("eval.bin_width_ms must be positive".into()));
        }
        let counts = &self.eval.bench_counts;
        if counts.is_empty() || counts[0] == 0 || counts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Config(format!("eval.bench_counts must be positive and increasing: {counts:?}")));
        }
        Ok(())
    }

    /// Output directory: explicit flag, then config, then `$VNFMIG_OUT`, then `./vnfmig-out`.
    pub fn resolve_out_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.out_dir.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}
