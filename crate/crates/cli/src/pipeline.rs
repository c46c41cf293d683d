//! Pipeline stages. Each stage checks its upstream artifacts in the run
//! manifest, writes its outputs atomically, then records them.
//!
//! Output layout:
//!
//! ```text
//! manifest.json
//! snapshots/   manifest.json, snapshot_NNNNNN.json
//! dataset/     records.jsonl, solves.jsonl, profile.json, encoded/
//! tune/        trace.csv, summary.json
//! model/       model.json, history.json, summary.json
//! eval/        report.json and five CSV tables
//! bench/       runtime.json, runtime_table.csv
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vnfmig::dataset::{build_raw_dataset, split_and_normalize, EncodedDataset, FeasibilityProfile, LabeledRecord, RawMatrix};
use vnfmig::eval::{
    self, binary_accuracy, categorical_and_complete_accuracy, delay_difference_report, runtime_benchmark,
    AccuracyReport, EvalCase, EvalReport,
};
use vnfmig::mlp::{decode_rows, train, MlpModel, ParameterCount, TrainConfig, TrainingHistory};
use vnfmig::pso::{CrossValidation, TuneSummary};
use vnfmig::topology::{generate_corpus, load_corpus, save_corpus};
use vnfmig::{io, solve, NetworkSnapshot};

use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::manifest::{hash_json, unix_now, RunManifest};

pub const STAGE_GENERATE: &str = "generate";
pub const STAGE_DATASET: &str = "dataset";
pub const STAGE_TUNE: &str = "tune";
pub const STAGE_TRAIN: &str = "train";
pub const STAGE_EVAL: &str = "eval";
pub const STAGE_BENCH: &str = "bench";

pub const EVAL_CSVS: [&str; 5] =
    [eval::ACCURACY_CSV, eval::HISTOGRAM_CSV, eval::DEPENDENT_CSV, eval::RUNTIME_CSV, eval::PROFILE_CSV];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSource {
    Flag,
    Tuned,
    Config,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub learning_rate: f64,
    pub source: RateSource,
    pub epochs: usize,
    pub parameters: ParameterCount,
    pub final_loss: f64,
    pub final_binary_accuracy: f64,
    pub test_binary_accuracy: Option<f64>,
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub out: PathBuf,
    manifest: RunManifest,
}

fn rel(parts: &[&str]) -> String {
    parts.join("/")
}

impl Pipeline {
    pub fn new(config: PipelineConfig, out: PathBuf) -> Result<Self, CliError> {
        config.validate()?;
        std::fs::create_dir_all(&out)
            .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", out.display())))?;
        let manifest = RunManifest::load_or_new(&out, &hash_json(&config))?;
        Ok(Self { config, out, manifest })
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    fn generate_hash(&self) -> String {
        hash_json(&(&self.config.generator, self.config.dataset.n_snapshots))
    }

    fn dataset_hash(&self) -> String {
        hash_json(&(&self.config.generator, &self.config.dataset))
    }

    /// Learning rate and epoch count do not influence tuning.
    fn tune_hash(&self) -> String {
        let train = TrainConfig { learning_rate: 0.0, epochs: 1, ..self.config.train.clone() };
        hash_json(&(self.dataset_hash(), &self.config.model, &train, &self.config.swarm))
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    pub fn generate(&mut self) -> Result<(), CliError> {
        let started = unix_now();
        let n = self.config.dataset.n_snapshots;
        log::info!("generating {n} snapshots (seed {})", self.config.generator.seed);
        let snapshots = generate_corpus(&self.config.generator, n)?;
        let manifest = save_corpus(&self.path("snapshots"), &self.config.generator, &snapshots)?;
        let mut files: Vec<(String, bool)> = manifest.files.iter().map(|f| (rel(&["snapshots", f]), true)).collect();
        files.push((rel(&["snapshots", "manifest.json"]), true));
        self.manifest.record(&self.out, STAGE_GENERATE, self.generate_hash(), started, &files)
    }

    fn load_snapshots(&self) -> Result<Vec<NetworkSnapshot>, CliError> {
        self.manifest.require(&self.out, STAGE_GENERATE, Some(&self.generate_hash()))?;
        Ok(load_corpus(&self.path("snapshots"))?.1)
    }

    pub fn dataset(&mut self) -> Result<(), CliError> {
        let started = unix_now();
        let snapshots = self.load_snapshots()?;
        log::info!("solving {} migration scenarios", snapshots.len() * 63);
        let raw = build_raw_dataset(&snapshots, solve)?;
        if raw.rejected > 0 {
            log::warn!("{} solver labels failed re-verification and were dropped", raw.rejected);
        }
        log::info!(
            "{} of {} solves feasible ({:.1}%)",
            raw.profile.succeeded(),
            raw.profile.attempted(),
            100.0 * raw.profile.success_rate()
        );
        let matrix = RawMatrix::from_records(&snapshots, &raw.records)?;
        let encoded = split_and_normalize(&matrix, self.config.dataset.split_ratio, self.config.dataset.split_seed)?;
        let dir = self.path("dataset");
        io::write_jsonl(&dir.join("records.jsonl"), &raw.records)?;
        io::write_jsonl(&dir.join("solves.jsonl"), &raw.solves)?;
        io::write_json(&dir.join("profile.json"), &raw.profile)?;
        encoded.save(&dir.join("encoded"))?;
        let mut files = vec![
            (rel(&["dataset", "records.jsonl"]), true),
            (rel(&["dataset", "solves.jsonl"]), false),
            (rel(&["dataset", "profile.json"]), true),
        ];
        for name in ["schema.json", "features.csv", "labels.csv", "splits.json"] {
            files.push((rel(&["dataset", "encoded", name]), true));
        }
        self.manifest.record(&self.out, STAGE_DATASET, self.dataset_hash(), started, &files)
    }

    fn load_dataset(&self) -> Result<EncodedDataset, CliError> {
        self.manifest.require(&self.out, STAGE_DATASET, Some(&self.dataset_hash()))?;
        Ok(EncodedDataset::load(&self.path("dataset/encoded"))?)
    }

    pub fn tune(&mut self) -> Result<f64, CliError> {
        let started = unix_now();
        let data = self.load_dataset()?;
        let spec = self.config.model.spec(data.schema.width(), data.schema.n_instances, data.schema.n_servers);
        let swarm = &self.config.swarm;
        let cv = CrossValidation::new(&data.train_features(), &data.train_labels(), spec, &self.config.train, swarm)?;
        log::info!(
            "tuning learning rate: {} particles x {} iterations, {}-fold CV on {} rows",
            swarm.particles,
            swarm.iterations,
            swarm.folds,
            cv.folds().iter().map(Vec::len).sum::<usize>()
        );
        let (best, trace) = cv.tune(swarm)?;
        log::info!("tuned learning rate {best:.6e} (P(h) = {:.6})", trace.best_value);
        trace.save(&self.path("tune"), swarm)?;
        let files = [(rel(&["tune", "trace.csv"]), true), (rel(&["tune", "summary.json"]), true)];
        let input = self.tune_hash();
        self.manifest.record(&self.out, STAGE_TUNE, input, started, &files)?;
        Ok(best)
    }

    /// Flag, then a recorded tuning result, then the configured rate.
    pub fn resolve_learning_rate(&self, flag: Option<f64>) -> Result<(f64, RateSource), CliError> {
        if let Some(lr) = flag {
            return Ok((lr, RateSource::Flag));
        }
        if let Some(record) = self.manifest.stages.get(STAGE_TUNE) {
            if record.input_hash == self.tune_hash() {
                self.manifest.require(&self.out, STAGE_TUNE, None)?;
                let summary: TuneSummary = io::read_json(&self.path("tune/summary.json"))?;
                return Ok((summary.best_h, RateSource::Tuned));
            }
            log::warn!("tuning result is stale for the current config; using the configured learning rate");
        }
        Ok((self.config.train.learning_rate, RateSource::Config))
    }

    pub fn train(&mut self, lr_flag: Option<f64>) -> Result<TrainSummary, CliError> {
        let started = unix_now();
        let data = self.load_dataset()?;
        let (learning_rate, source) = self.resolve_learning_rate(lr_flag)?;
        let config = TrainConfig { learning_rate, ..self.config.train.clone() };
        config.validate()?;
        let spec = self.config.model.spec(data.schema.width(), data.schema.n_instances, data.schema.n_servers);
        let mut model = MlpModel::new(spec, self.config.model.seed)?;
        let parameters = model.parameter_count();
        log::info!(
            "training {} trainable parameters for {} epochs at learning rate {learning_rate:.6e} ({source:?})",
            parameters.trainable,
            config.epochs
        );
        let (tx, ty) = (data.train_features(), data.train_labels());
        let (vx, vy) = (data.test_features(), data.test_labels());
        let history = train(&mut model, &tx, &ty, &config, Some((&vx, &vy)))?;
        let last = history.last().expect("at least one epoch");
        let summary = TrainSummary {
            learning_rate,
            source,
            epochs: config.epochs,
            parameters,
            final_loss: last.loss,
            final_binary_accuracy: last.binary_accuracy,
            test_binary_accuracy: last.val_binary_accuracy,
        };
        model.save(&self.path("model/model.json"))?;
        io::write_json(&self.path("model/history.json"), &history)?;
        io::write_json(&self.path("model/summary.json"), &summary)?;
        let files = [
            (rel(&["model", "model.json"]), true),
            (rel(&["model", "history.json"]), false),
            (rel(&["model", "summary.json"]), true),
        ];
        let input = hash_json(&(self.dataset_hash(), &self.config.model, &config));
        self.manifest.record(&self.out, STAGE_TRAIN, input, started, &files)?;
        Ok(summary)
    }

    fn load_model(&self) -> Result<MlpModel, CliError> {
        self.manifest.require(&self.out, STAGE_TRAIN, None)?;
        Ok(MlpModel::load(&self.path("model/model.json"))?)
    }

    pub fn eval(&mut self) -> Result<EvalReport, CliError> {
        let started = unix_now();
        let snapshots = self.load_snapshots()?;
        let data = self.load_dataset()?;
        let model = self.load_model()?;
        let profile: FeasibilityProfile = io::read_json(&self.path("dataset/profile.json"))?;
        let by_id: HashMap<u64, &NetworkSnapshot> = snapshots.iter().map(|s| (s.snapshot_id, s)).collect();
        let (n_instances, n_servers) = (data.schema.n_instances, data.schema.n_servers);

        let test_x = data.test_features();
        let test_y = data.test_labels();
        let test_p = model.predict(&test_x)?;
        let train_p = model.predict(&data.train_features())?;
        let predicted = decode_rows(&test_p, n_instances, n_servers);
        let optimal = decode_rows(&test_y, n_instances, n_servers);
        let keys: Vec<_> = data.split.test.iter().map(|&r| data.keys[r]).collect();
        let sizes: Vec<usize> = keys.iter().map(|k| k.migration_bitmask.len()).collect();
        let accuracy = AccuracyReport {
            train_binary: binary_accuracy(&train_p, &data.train_labels(), 0.5)?,
            test_binary: binary_accuracy(&test_p, &test_y, 0.5)?,
            baseline_binary: binary_accuracy(&ndarray::Array2::zeros(test_y.dim()), &test_y, 0.5)?,
            categorical: categorical_and_complete_accuracy(&predicted, &optimal, &sizes)?,
        };
        let cases = keys
            .iter()
            .zip(optimal.iter().zip(&predicted))
            .map(|(key, (opt, pred))| {
                let snapshot = by_id.get(&key.snapshot_id).ok_or_else(|| {
                    CliError::MissingArtifact(format!("snapshot {} referenced by the dataset", key.snapshot_id))
                })?;
                Ok(EvalCase { snapshot, migration_set: key.migration_bitmask, optimal: opt, predicted: pred })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let delay = delay_difference_report(&cases, self.config.eval.bin_width_ms)?;
        let runtime = self.benchmark(&snapshots, &model, &data)?;
        let report = EvalReport { accuracy, delay, feasibility_profile: profile, runtime: Some(runtime) };
        log::info!(
            "test binary accuracy {:.4} (baseline {:.4}), categorical {:.4}, complete {:.4}",
            report.accuracy.test_binary,
            report.accuracy.baseline_binary,
            report.accuracy.categorical.overall.categorical(),
            report.accuracy.categorical.overall.complete()
        );

        let dir = self.path("eval");
        io::write_json(&dir.join("report.json"), &report)?;
        eval::write_accuracy_csv(&dir.join(eval::ACCURACY_CSV), &report.accuracy.categorical)?;
        eval::write_histogram_csv(&dir.join(eval::HISTOGRAM_CSV), &report.delay)?;
        eval::write_dependent_csv(&dir.join(eval::DEPENDENT_CSV), &report.delay)?;
        eval::write_runtime_csv(&dir.join(eval::RUNTIME_CSV), report.runtime.as_ref().expect("benchmark ran"))?;
        eval::write_profile_csv(&dir.join(eval::PROFILE_CSV), &report.feasibility_profile)?;
        let mut files = vec![(rel(&["eval", "report.json"]), false)];
        files.extend(EVAL_CSVS.iter().map(|name| (rel(&["eval", name]), *name != eval::RUNTIME_CSV)));
        self.manifest.record(&self.out, STAGE_EVAL, hash_json(&self.config.eval), started, &files)?;
        Ok(report)
    }

    fn benchmark(
        &self,
        snapshots: &[NetworkSnapshot],
        model: &MlpModel,
        data: &EncodedDataset,
    ) -> Result<eval::RuntimeTable, CliError> {
        let counts = &self.config.eval.bench_counts;
        log::info!("timing solver and surrogate for {counts:?} requests");
        let table = runtime_benchmark(snapshots, model, &data.schema, counts, self.config.eval.bench_seed)?;
        for row in &table.rows {
            log::info!("{:>5} requests: solver {:.6} s, surrogate {:.6} s", row.requests, row.solver_s, row.surrogate_s);
        }
        Ok(table)
    }

    pub fn bench(&mut self) -> Result<eval::RuntimeTable, CliError> {
        let started = unix_now();
        let snapshots = self.load_snapshots()?;
        let data = self.load_dataset()?;
        let model = self.load_model()?;
        let table = self.benchmark(&snapshots, &model, &data)?;
        io::write_json(&self.path("bench/runtime.json"), &table)?;
        eval::write_runtime_csv(&self.path("bench").join(eval::RUNTIME_CSV), &table)?;
        let files = [(rel(&["bench", "runtime.json"]), false), (rel(&["bench", eval::RUNTIME_CSV]), false)];
        self.manifest.record(&self.out, STAGE_BENCH, hash_json(&self.config.eval), started, &files)
            .map(|()| table)
    }

    /// Runs the enabled stages in order; a tuned rate feeds training unless
    /// `lr_flag` overrides it.
    pub fn all(&mut self, lr_flag: Option<f64>) -> Result<(), CliError> {
        let stages = self.config.stages.clone();
        if stages.generate {
            self.generate()?;
        }
        if stages.dataset {
            self.dataset()?;
        }
        if stages.tune && lr_flag.is_none() {
            self.tune()?;
        }
        if stages.train {
            self.train(lr_flag)?;
        }
        if stages.eval {
            self.eval()?;
        }
        Ok(())
    }
}

/// Records of the raw dataset, for callers that need optimal downtimes.
pub fn load_records(out: &Path) -> Result<Vec<LabeledRecord>, CliError> {
    Ok(io::read_jsonl(&out.join("dataset/records.jsonl"))?)
}

pub fn load_history(out: &Path) -> Result<TrainingHistory, CliError> {
    Ok(io::read_json(&out.join("model/history.json"))?)
}
