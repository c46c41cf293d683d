//! Run manifest: what each stage wrote, with content hashes.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use vnfmig::io;

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    /// Whether rerunning the stage with the same config reproduces the bytes.
    pub deterministic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    /// Hash of the configuration the stage consumed.
    pub input_hash: String,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_hash: String,
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// SHA-256 of a value's JSON encoding.
pub fn hash_json<T: Serialize>(value: &T) -> String {
    io::sha256_hex(&serde_json::to_vec(value).expect("config serializes"))
}

impl RunManifest {
    pub fn load_or_new(out: &Path, config_hash: &str) -> Result<Self, CliError> {
        let path = out.join(MANIFEST_FILE);
        if path.exists() {
            let mut manifest: Self = io::read_json(&path)
                .map_err(|e| CliError::Runtime(format!("unreadable {}: {e}", path.display())))?;
            manifest.config_hash = config_hash.to_owned();
            manifest.version = env!("CARGO_PKG_VERSION").to_owned();
            Ok(manifest)
        } else {
            Ok(Self {
                version: env!("CARGO_PKG_VERSION").to_owned(),
                config_hash: config_hash.to_owned(),
                stages: BTreeMap::new(),
            })
        }
    }

    pub fn save(&self, out: &Path) -> Result<(), CliError> {
        io::write_json(&out.join(MANIFEST_FILE), self).map_err(CliError::from)
    }

    /// Hashes `files` (relative paths, with determinism flags) and records the stage.
    pub fn record(
        &mut self,
        out: &Path,
        stage: &str,
        input_hash: String,
        started_unix_s: f64,
        files: &[(String, bool)],
    ) -> Result<(), CliError> {
        let artifacts = files
            .iter()
            .map(|(path, deterministic)| {
                Ok(Artifact { path: path.clone(), sha256: io::sha256_file(&out.join(path))?, deterministic: *deterministic })
            })
            .collect::<vnfmig::Result<Vec<_>>>()?;
        self.stages.insert(
            stage.to_owned(),
            StageRecord { started_unix_s, finished_unix_s: unix_now(), input_hash, artifacts },
        );
        self.save(out)
    }

    /// Checks that `stage` ran, that its artifacts are unchanged on disk, and,
    /// when given, that it consumed the configuration hashing to `input_hash`.
    pub fn require(&self, out: &Path, stage: &str, input_hash: Option<&str>) -> Result<&StageRecord, CliError> {
        let record = self.stages.get(stage).ok_or_else(|| {
            CliError::MissingArtifact(format!("stage `{stage}` has not run in {}; run `vnfmig {stage}` first", out.display()))
        })?;
        if let Some(expected) = input_hash {
            if record.input_hash != expected {
                return Err(CliError::MissingArtifact(format!(
                    "stage `{stage}` output is stale for the current config; rerun `vnfmig {stage}`"
                )));
            }
        }
        for artifact in &record.artifacts {
            let path = out.join(&artifact.path);
            let actual = io::sha256_file(&path).map_err(|_| {
                CliError::MissingArtifact(format!("{} is missing; rerun `vnfmig {stage}`", path.display()))
            })?;
            if actual != artifact.sha256 {
                return Err(CliError::MissingArtifact(format!(
                    "{} changed since `vnfmig {stage}` wrote it; rerun the stage",
                    path.display()
                )));
            }
        }
        Ok(record)
    }

    pub fn artifact(&self, stage: &str, path: &str) -> Option<&Artifact> {
        self.stages.get(stage)?.artifacts.iter().find(|a| a.path == path)
    }
}
