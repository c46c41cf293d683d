//! Labeled migration scenarios and their encoding for the surrogate.
//!
//! Every non-empty subset of a snapshot's instances is solved exactly; feasible
//! outcomes become records whose label is the one-hot optimal placement of all
//! instances (`n_instances` blocks of `n_servers` bits).
//!
//! Raw feature layout, in order:
//! 1. migration flag per instance;
//! 2. initial-server one-hot per instance;
//! 3. demand per instance and resource (instance-major);
//! 4. delay tolerance, recovery delay and migration overhead per instance;
//! 5. capacity per server and resource (server-major);
//! 6. upper triangle of the inter-server delay matrix (row-major, `s < d`);
//! 7. controller delay per server.
//!
//! Columns that are constant over the training split are dropped; remaining
//! numeric columns are z-scored with training statistics. Flag and one-hot
//! columns pass through unchanged.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::optimizer::{check_feasible, MigrationProblem, MigrationSet, SolveRecord, SolveResult};
use crate::topology::NetworkSnapshot;

pub const SCHEMA_FORMAT_VERSION: u32 = 1;

/// All non-empty subsets of `n_instances` instances, ordered by bitmask.
pub fn enumerate_migration_sets(n_instances: usize) -> Result<Vec<MigrationSet>> {
    if !(1..=20).contains(&n_instances) {
        return Err(Error::InvalidConfig(format!(
            "cannot enumerate subsets of {n_instances} instances (supported: 1..=20)"
        )));
    }
    Ok((1..(1u32 << n_instances)).map(MigrationSet::from_bits).collect())
}

/// One-hot encoding of a placement, instance-major.
pub fn one_hot_label(placement: &[usize], n_servers: usize) -> Vec<u8> {
    let mut label = vec![0u8; placement.len() * n_servers];
    for (i, &s) in placement.iter().enumerate() {
        label[i * n_servers + s] = 1;
    }
    label
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub snapshot_id: u64,
    pub migration_bitmask: MigrationSet,
    /// Optimal post-migration server of every instance.
    pub placement: Vec<usize>,
    pub total_downtime_ms: f64,
    pub label: Vec<u8>,
}

impl LabeledRecord {
    pub fn migrated(&self) -> usize {
        self.migration_bitmask.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub migrated: usize,
    pub attempted: u64,
    pub succeeded: u64,
}

impl ProfileRow {
    pub fn success_rate(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.succeeded as f64 / self.attempted as f64
        }
    }
}

/// Solve outcomes bucketed by migration-set size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityProfile {
    pub rows: Vec<ProfileRow>,
}

impl FeasibilityProfile {
    fn new(n_instances: usize) -> Self {
        Self {
            rows: (1..=n_instances)
                .map(|migrated| ProfileRow { migrated, attempted: 0, succeeded: 0 })
                .collect(),
        }
    }

    pub fn attempted(&self) -> u64 {
        self.rows.iter().map(|r| r.attempted).sum()
    }

    pub fn succeeded(&self) -> u64 {
        self.rows.iter().map(|r| r.succeeded).sum()
    }

    pub fn success_rate(&self) -> f64 {
        self.succeeded() as f64 / self.attempted().max(1) as f64
    }

    pub fn row(&self, migrated: usize) -> Option<&ProfileRow> {
        self.rows.iter().find(|r| r.migrated == migrated)
    }
}

#[derive(Debug, Clone)]
pub struct RawDataset {
    pub records: Vec<LabeledRecord>,
    pub profile: FeasibilityProfile,
    /// Every solve attempt, ordered by `(snapshot_id, bitmask)`.
    pub solves: Vec<SolveRecord>,
    /// Optimal results whose label failed re-verification.
    pub rejected: usize,
}

/// Solves every non-empty migration subset of every snapshot.
///
/// Solves run in parallel; results come back in `(snapshot, bitmask)` order
/// regardless of scheduling. Infeasible outcomes are counted in the profile
/// but produce no record. Labels are re-checked for feasibility and rejected
/// (logged and counted) if the check fails.
pub fn build_raw_dataset<F>(snapshots: &[NetworkSnapshot], solver: F) -> Result<RawDataset>
where
    F: Fn(&MigrationProblem<'_>) -> SolveResult + Sync,
{
    let n_instances = snapshots.first().map_or(0, NetworkSnapshot::n_instances);
    if snapshots.iter().any(|s| s.n_instances() != n_instances) {
        return Err(Error::InvalidConfig("snapshots disagree on instance count".into()));
    }
    let sets = enumerate_migration_sets(n_instances)?;
    let jobs: Vec<(usize, MigrationSet)> = (0..snapshots.len())
        .flat_map(|s| sets.iter().map(move |&m| (s, m)))
        .collect();

    let outcomes: Vec<(SolveRecord, Option<LabeledRecord>, bool)> = jobs
        .par_iter()
        .map(|&(s, set)| {
            let snapshot = &snapshots[s];
            let problem = MigrationProblem { snapshot, migration_set: set };
            let result = solver(&problem);
            let solve_record = SolveRecord::new(snapshot.snapshot_id, set, &result);
            let mut rejected = false;
            let record = result.solution().and_then(|solution| {
                if check_feasible(snapshot, &solution.placement, set).is_feasible() {
                    Some(LabeledRecord {
                        snapshot_id: snapshot.snapshot_id,
                        migration_bitmask: set,
                        placement: solution.placement.clone(),
                        total_downtime_ms: solution.total_downtime_ms,
                        label: one_hot_label(&solution.placement, snapshot.n_servers()),
                    })
                } else {
                    log::warn!(
                        "snapshot {} set {set}: solver placement failed re-verification",
                        snapshot.snapshot_id
                    );
                    rejected = true;
                    None
                }
            });
            (solve_record, record, rejected)
        })
        .collect();

    let mut profile = FeasibilityProfile::new(n_instances);
    let mut records = Vec::new();
    let mut solves = Vec::with_capacity(outcomes.len());
    let mut rejected = 0;
    for (solve_record, record, was_rejected) in outcomes {
        let row = &mut profile.rows[MigrationSet::from_bits(solve_record.migration_bitmask).len() - 1];
        row.attempted += 1;
        if let Some(record) = record {
            row.succeeded += 1;
            records.push(record);
        }
        rejected += usize::from(was_rejected);
        solves.push(solve_record);
    }
    Ok(RawDataset { records, profile, solves, rejected })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    Flag,
    OneHot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub name: String,
    pub kind: FeatureKind,
    /// Model symbol the column is read from.
    pub source: String,
}

/// A raw column removed because it was constant over the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedFeature {
    pub column: usize,
    pub value: f64,
}

/// Column layout plus the statistics fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub format_version: u32,
    pub n_instances: usize,
    pub n_servers: usize,
    pub n_resources: usize,
    /// Every raw column, in encoding order.
    pub features: Vec<FeatureDescriptor>,
    /// Raw column index of every encoded column.
    pub active: Vec<usize>,
    pub dropped: Vec<DroppedFeature>,
    /// Per active column; `0` and `1` for pass-through columns.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureSchema {
    /// Unfitted schema: every raw column active, identity statistics.
    pub fn raw(n_instances: usize, n_servers: usize, n_resources: usize) -> Self {
        let mut features = Vec::new();
        let mut push = |name: String, kind: FeatureKind, source: &str| {
            features.push(FeatureDescriptor { name, kind, source: source.to_owned() });
        };
        for i in 0..n_instances {
            push(format!("migrate_{i}"), FeatureKind::Flag, "Y_M");
        }
        for i in 0..n_instances {
            for s in 0..n_servers {
                push(format!("initial_{i}_server_{s}"), FeatureKind::OneHot, "X_initial");
            }
        }
        for i in 0..n_instances {
            for r in 0..n_resources {
                push(format!("demand_{i}_r{r}"), FeatureKind::Numeric, "R_ir");
            }
        }
        for i in 0..n_instances {
            push(format!("tolerance_{i}"), FeatureKind::Numeric, "D_t");
        }
        for i in 0..n_instances {
            push(format!("recovery_{i}"), FeatureKind::Numeric, "D_rec");
        }
        for i in 0..n_instances {
            push(format!("overhead_{i}"), FeatureKind::Numeric, "D_M");
        }
        for s in 0..n_servers {
            for r in 0..n_resources {
                push(format!("capacity_{s}_r{r}"), FeatureKind::Numeric, "R_sr");
            }
        }
        for s in 0..n_servers {
            for d in (s + 1)..n_servers {
                push(format!("delay_{s}_{d}"), FeatureKind::Numeric, "D_ss");
            }
        }
        for s in 0..n_servers {
            push(format!("controller_{s}"), FeatureKind::Numeric, "D_NC");
        }
        let width = features.len();
        Self {
            format_version: SCHEMA_FORMAT_VERSION,
            n_instances,
            n_servers,
            n_resources,
            features,
            active: (0..width).collect(),
            dropped: Vec::new(),
            mean: vec![0.0; width],
            std: vec![1.0; width],
        }
    }

    pub fn for_snapshot(snapshot: &NetworkSnapshot) -> Self {
        Self::raw(snapshot.n_instances(), snapshot.n_servers(), snapshot.n_resources())
    }

    pub fn raw_width(&self) -> usize {
        self.features.len()
    }

    /// Width of an encoded row.
    pub fn width(&self) -> usize {
        self.active.len()
    }

    pub fn label_width(&self) -> usize {
        self.n_instances * self.n_servers
    }

    /// Drops training-constant columns and fits z-score statistics.
    fn fit(&self, train: &Array2<f64>) -> Self {
        let mut active = Vec::new();
        let mut dropped = Vec::new();
        let mut mean = Vec::new();
        let mut std = Vec::new();
        for (c, descriptor) in self.features.iter().enumerate() {
            let column = train.column(c);
            let first = column[0];
            if column.iter().all(|&v| v == first) {
                dropped.push(DroppedFeature { column: c, value: first });
                continue;
            }
            active.push(c);
            if descriptor.kind == FeatureKind::Numeric {
                let n = column.len() as f64;
                let m = column.sum() / n;
                let var = column.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
                mean.push(m);
                std.push(var.sqrt());
            } else {
                mean.push(0.0);
                std.push(1.0);
            }
        }
        Self { active, dropped, mean, std, ..self.clone() }
    }

    /// Encodes a raw row with this schema's column selection and statistics.
    pub fn apply(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.raw_width() {
            return Err(Error::DimensionMismatch {
                context: "raw feature row",
                expected: self.raw_width(),
                actual: raw.len(),
            });
        }
        Ok(self
            .active
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&c, (m, s))| (raw[c] - m) / s)
            .collect())
    }

    /// Recovers the initial placement from an encoded row.
    pub fn decode_initial_placement(&self, row: &[f64]) -> Option<Vec<usize>> {
        let position: HashMap<usize, usize> = self.active.iter().enumerate().map(|(k, &c)| (c, k)).collect();
        let constant: HashMap<usize, f64> = self.dropped.iter().map(|d| (d.column, d.value)).collect();
        let base = self.n_instances;
        (0..self.n_instances)
            .map(|i| {
                (0..self.n_servers).find(|&s| {
                    let c = base + i * self.n_servers + s;
                    let value = match position.get(&c) {
                        Some(&k) => row[k] * self.std[k] + self.mean[k],
                        None => constant.get(&c).copied().unwrap_or(0.0),
                    };
                    value > 0.5
                })
            })
            .collect()
    }
}

/// Raw, unnormalized feature row for one migration scenario.
pub fn raw_features(snapshot: &NetworkSnapshot, set: MigrationSet) -> Vec<f64> {
    let n_servers = snapshot.n_servers();
    let mut row = Vec::new();
    row.extend(set.flags(snapshot.n_instances()).into_iter().map(f64::from));
    for &s in &snapshot.initial_placement {
        row.extend((0..n_servers).map(|k| if k == s { 1.0 } else { 0.0 }));
    }
    for inst in &snapshot.instances {
        row.extend(inst.demand.iter().map(|&d| f64::from(d)));
    }
    row.extend(snapshot.instances.iter().map(|i| i.delay_tolerance_ms));
    row.extend(snapshot.instances.iter().map(|i| i.recovery_delay_ms));
    row.extend(snapshot.instances.iter().map(|i| i.migration_overhead_ms));
    for server in &snapshot.servers {
        row.extend(server.capacity.iter().map(|&c| f64::from(c)));
    }
    for s in 0..n_servers {
        row.extend(((s + 1)..n_servers).map(|d| snapshot.delay_ms(s, d)));
    }
    row.extend(snapshot.controller_delay_ms.iter().copied());
    row
}

/// Encodes one scenario with a fitted schema.
pub fn encode_features(snapshot: &NetworkSnapshot, set: MigrationSet, schema: &FeatureSchema) -> Result<Vec<f64>> {
    let expected = (schema.n_instances, schema.n_servers, schema.n_resources);
    let actual = (snapshot.n_instances(), snapshot.n_servers(), snapshot.n_resources());
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context: "snapshot shape vs schema",
            expected: schema.raw_width(),
            actual: FeatureSchema::raw(actual.0, actual.1, actual.2).raw_width(),
        });
    }
    schema.apply(&raw_features(snapshot, set))
}

/// Identifies the scenario behind a dataset row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RecordKey {
    pub snapshot_id: u64,
    pub migration_bitmask: MigrationSet,
}

/// Unnormalized rows ready to be split.
#[derive(Debug, Clone)]
pub struct RawMatrix {
    pub schema: FeatureSchema,
    pub keys: Vec<RecordKey>,
    pub features: Array2<f64>,
    pub labels: Array2<f64>,
}

impl RawMatrix {
    pub fn from_records(snapshots: &[NetworkSnapshot], records: &[LabeledRecord]) -> Result<Self> {
        let first = snapshots
            .first()
            .ok_or_else(|| Error::DegenerateDataset("no snapshots".into()))?;
        let schema = FeatureSchema::for_snapshot(first);
        let by_id: HashMap<u64, &NetworkSnapshot> = snapshots.iter().map(|s| (s.snapshot_id, s)).collect();
        let mut features = Array2::zeros((records.len(), schema.raw_width()));
        let mut labels = Array2::zeros((records.len(), schema.label_width()));
        let mut keys = Vec::with_capacity(records.len());
        for (row, record) in records.iter().enumerate() {
            let snapshot = by_id.get(&record.snapshot_id).ok_or_else(|| {
                Error::DegenerateDataset(format!("record references unknown snapshot {}", record.snapshot_id))
            })?;
            let raw = raw_features(snapshot, record.migration_bitmask);
            if raw.len() != schema.raw_width() || record.label.len() != schema.label_width() {
                return Err(Error::DimensionMismatch {
                    context: "record vs schema",
                    expected: schema.raw_width(),
                    actual: raw.len(),
                });
            }
            features.row_mut(row).assign(&ndarray::ArrayView1::from(&raw));
            for (k, &bit) in record.label.iter().enumerate() {
                labels[[row, k]] = f64::from(bit);
            }
            keys.push(RecordKey {
                snapshot_id: record.snapshot_id,
                migration_bitmask: record.migration_bitmask,
            });
        }
        Ok(Self { schema, keys, features, labels })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub ratio: f64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Normalized dataset with its split. Rows keep the order of the records.
#[derive(Debug, Clone)]
pub struct EncodedDataset {
    pub schema: FeatureSchema,
    pub keys: Vec<RecordKey>,
    pub features: Array2<f64>,
    pub labels: Array2<f64>,
    pub split: Split,
}

/// Seeded shuffle-and-split, then schema fitting on the training rows.
pub fn split_and_normalize(raw: &RawMatrix, ratio: f64, seed: u64) -> Result<EncodedDataset> {
    let n = raw.len();
    if n < 10 {
        return Err(Error::DegenerateDataset(format!("{n} rows, need at least 10")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidConfig(format!("split ratio {ratio} outside (0, 1)")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (ratio * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::DegenerateDataset(format!(
            "ratio {ratio} leaves an empty split of {n} rows"
        )));
    }
    let test = order.split_off(n_train);
    let train = order;

    let schema = raw.schema.fit(&raw.features.select(Axis(0), &train));
    let mut features = Array2::zeros((n, schema.width()));
    for (row, raw_row) in raw.features.outer_iter().enumerate() {
        let encoded = schema.apply(raw_row.as_slice().expect("standard layout"))?;
        features.row_mut(row).assign(&ndarray::ArrayView1::from(&encoded));
    }
    Ok(EncodedDataset {
        schema,
        keys: raw.keys.clone(),
        features,
        labels: raw.labels.clone(),
        split: Split { seed, ratio, train, test },
    })
}

fn format_row(values: impl IntoIterator<Item = f64>) -> Vec<String> {
    values.into_iter().map(|v| v.to_string()).collect()
}

impl EncodedDataset {
    pub fn train_features(&self) -> Array2<f64> {
        self.features.select(Axis(0), &self.split.train)
    }

    pub fn train_labels(&self) -> Array2<f64> {
        self.labels.select(Axis(0), &self.split.train)
    }

    pub fn test_features(&self) -> Array2<f64> {
        self.features.select(Axis(0), &self.split.test)
    }

    pub fn test_labels(&self) -> Array2<f64> {
        self.labels.select(Axis(0), &self.split.test)
    }

    /// Writes `schema.json`, `features.csv`, `labels.csv` and `splits.json`.
    ///
    /// Both CSVs lead with `snapshot_id,migration_bitmask`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        io::write_json(&dir.join("schema.json"), &self.schema)?;
        let mut header = vec!["snapshot_id".to_owned(), "migration_bitmask".to_owned()];
        header.extend(self.schema.active.iter().map(|&c| self.schema.features[c].name.clone()));
        let key_cols = |k: &RecordKey| vec![k.snapshot_id.to_string(), k.migration_bitmask.bits().to_string()];
        let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
        io::write_csv(
            &dir.join("features.csv"),
            &header_refs,
            self.keys.iter().zip(self.features.outer_iter()).map(|(k, row)| {
                let mut cols = key_cols(k);
                cols.extend(format_row(row.iter().copied()));
                cols
            }),
        )?;
        let mut label_header = vec!["snapshot_id".to_owned(), "migration_bitmask".to_owned()];
        for i in 0..self.schema.n_instances {
            for s in 0..self.schema.n_servers {
                label_header.push(format!("instance_{i}_server_{s}"));
            }
        }
        let label_refs: Vec<&str> = label_header.iter().map(String::as_str).collect();
        io::write_csv(
            &dir.join("labels.csv"),
            &label_refs,
            self.keys.iter().zip(self.labels.outer_iter()).map(|(k, row)| {
                let mut cols = key_cols(k);
                cols.extend(row.iter().map(|&v| if v > 0.5 { "1".to_owned() } else { "0".to_owned() }));
                cols
            }),
        )?;
        io::write_json(&dir.join("splits.json"), &self.split)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let schema: FeatureSchema = io::read_json(&dir.join("schema.json"))?;
        if schema.format_version != SCHEMA_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: schema.format_version,
                expected: SCHEMA_FORMAT_VERSION,
            });
        }
        let (keys, features) = read_keyed_matrix(&dir.join("features.csv"), schema.width())?;
        let (label_keys, labels) = read_keyed_matrix(&dir.join("labels.csv"), schema.label_width())?;
        if keys != label_keys {
            return Err(Error::DegenerateDataset("features.csv and labels.csv rows disagree".into()));
        }
        let split: Split = io::read_json(&dir.join("splits.json"))?;
        Ok(Self { schema, keys, features, labels, split })
    }
}

fn read_keyed_matrix(path: &Path, width: usize) -> Result<(Vec<RecordKey>, Array2<f64>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut keys = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != width + 2 {
            return Err(Error::DimensionMismatch {
                context: "csv row",
                expected: width + 2,
                actual: record.len(),
            });
        }
        let parse_err = |field: &str| Error::DegenerateDataset(format!("unparseable value {field:?} in {}", path.display()));
        let snapshot_id = record[0].parse().map_err(|_| parse_err(&record[0]))?;
        let bits = record[1].parse().map_err(|_| parse_err(&record[1]))?;
        keys.push(RecordKey { snapshot_id, migration_bitmask: MigrationSet::from_bits(bits) });
        for field in record.iter().skip(2) {
            values.push(field.parse::<f64>().map_err(|_| parse_err(field))?);
        }
    }
    let rows = keys.len();
    let matrix = Array2::from_shape_vec((rows, width), values).map_err(|_| Error::DimensionMismatch {
        context: "csv matrix",
        expected: rows * width,
        actual: 0,
    })?;
    Ok((keys, matrix))
}
