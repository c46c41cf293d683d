//! Seeded generation of network snapshots.
//!
//! A snapshot is a set of servers with per-resource capacities, a symmetric
//! inter-server delay matrix, controller delays, and a service chain of VNF
//! instances. Instances are grouped into chain types; every instance depends on
//! all instances of the neighbouring types, so a chain with type counts
//! `[2, 2, 1, 1]` yields `2 * 2 * 1 * 1 = 4` computational paths.
//!
//! Snapshot `index` of a corpus is a pure function of `(config, index)`: the
//! random stream is a ChaCha8 generator seeded with `config.seed` on stream
//! `index`.

use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;

/// Resampling attempts before snapshot generation gives up.
pub const MAX_GENERATION_ATTEMPTS: u32 = 64;

/// Delays are drawn on a 0.01 ms grid so every value is a short finite decimal.
const DELAY_GRID_MS: f64 = 0.01;

/// Converts milliseconds to integer microseconds, the unit used for exact
/// objective comparisons.
pub fn to_micros(ms: f64) -> i64 {
    (ms * 1000.0).round() as i64
}

/// Inclusive closed interval used for every sampled parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds<T> {
    pub min: T,
    pub max: T,
}

impl<T> Bounds<T> {
    pub const fn new(min: T, max: T) -> Self {
        Self { min, max }
    }
}

impl<T: PartialOrd + std::fmt::Debug> Bounds<T> {
    fn check(&self, name: &str) -> Result<()> {
        if self.min > self.max {
            return Err(Error::InvalidConfig(format!(
                "{name}: min {:?} exceeds max {:?}",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

impl Bounds<f64> {
    fn sample_ms(&self, rng: &mut ChaCha8Rng) -> f64 {
        let raw = if self.min == self.max {
            self.min
        } else {
            rng.gen_range(self.min..=self.max)
        };
        let snapped = (raw / DELAY_GRID_MS).round() * DELAY_GRID_MS;
        // keep two decimals exactly representable as a short decimal string
        let snapped = (snapped * 100.0).round() / 100.0;
        snapped.clamp(self.min, self.max)
    }
}

impl Bounds<u32> {
    fn sample_units(&self, rng: &mut ChaCha8Rng) -> u32 {
        rng.gen_range(self.min..=self.max)
    }
}

/// Parameters of the snapshot generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_servers: usize,
    pub n_instances: usize,
    /// Instances per chain type, in chain order.
    pub chain_type_counts: Vec<usize>,
    pub n_resources: usize,
    /// Per-resource units available on a server.
    pub server_capacity: Bounds<u32>,
    /// Per-resource units required by an instance.
    pub instance_demand: Bounds<u32>,
    pub inter_server_delay_ms: Bounds<f64>,
    pub controller_delay_ms: Bounds<f64>,
    pub delay_tolerance_ms: Bounds<f64>,
    pub recovery_delay_ms: Bounds<f64>,
    pub migration_overhead_ms: Bounds<f64>,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_servers: 15,
            n_instances: 6,
            chain_type_counts: vec![2, 2, 1, 1],
            n_resources: 2,
            server_capacity: Bounds::new(0, 10),
            instance_demand: Bounds::new(4, 8),
            inter_server_delay_ms: Bounds::new(1.0, 20.0),
            controller_delay_ms: Bounds::new(1.0, 5.0),
            delay_tolerance_ms: Bounds::new(5.0, 25.0),
            recovery_delay_ms: Bounds::new(5.0, 25.0),
            migration_overhead_ms: Bounds::new(1.0, 10.0),
            seed: 0x5EED_2020,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_servers < 2 {
            return Err(Error::InvalidConfig("n_servers must be at least 2".into()));
        }
        if self.n_instances < 1 {
            return Err(Error::InvalidConfig("n_instances must be at least 1".into()));
        }
        if self.n_resources < 1 {
            return Err(Error::InvalidConfig("n_resources must be at least 1".into()));
        }
        if self.chain_type_counts.contains(&0) {
            return Err(Error::InvalidConfig(
                "chain_type_counts entries must be positive".into(),
            ));
        }
        let total: usize = self.chain_type_counts.iter().sum();
        if total != self.n_instances {
            return Err(Error::InvalidConfig(format!(
                "chain_type_counts sum to {total}, expected n_instances = {}",
                self.n_instances
            )));
        }
        self.server_capacity.check("server_capacity")?;
        self.instance_demand.check("instance_demand")?;
        for (name, b) in [
            ("inter_server_delay_ms", &self.inter_server_delay_ms),
            ("controller_delay_ms", &self.controller_delay_ms),
            ("delay_tolerance_ms", &self.delay_tolerance_ms),
            ("recovery_delay_ms", &self.recovery_delay_ms),
            ("migration_overhead_ms", &self.migration_overhead_ms),
        ] {
            b.check(name)?;
            if !(b.min.is_finite() && b.max.is_finite()) || b.min < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name}: bounds must be finite and non-negative"
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        io::sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    /// Chain type of every instance, instances of a type being contiguous.
    pub fn instance_types(&self) -> Vec<usize> {
        self.chain_type_counts
            .iter()
            .enumerate()
            .flat_map(|(t, &count)| std::iter::repeat_n(t, count))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Server {
    /// Units available per resource.
    pub capacity: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    /// Position of this instance's type in the chain.
    pub type_index: usize,
    /// Units required per resource.
    pub demand: Vec<u32>,
    pub delay_tolerance_ms: f64,
    pub recovery_delay_ms: f64,
    pub migration_overhead_ms: f64,
    /// Instances of the chain-adjacent types, ascending.
    pub dependents: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSnapshot {
    pub format_version: u32,
    pub snapshot_id: u64,
    pub seed: u64,
    pub chain_type_counts: Vec<usize>,
    pub servers: Vec<Server>,
    /// Symmetric, zero diagonal.
    pub inter_server_delay_ms: Vec<Vec<f64>>,
    pub controller_delay_ms: Vec<f64>,
    pub instances: Vec<InstanceSpec>,
    /// Server index of every instance before migration.
    pub initial_placement: Vec<usize>,
}

impl NetworkSnapshot {
    pub fn n_servers(&self) -> usize {
        self.servers.len()
    }

    pub fn n_instances(&self) -> usize {
        self.instances.len()
    }

    pub fn n_resources(&self) -> usize {
        self.servers.first().map_or(0, |s| s.capacity.len())
    }

    /// Whether `instance` and its dependent `dependent` must not share a server.
    ///
    /// Co-location is allowed only while the dependent's delay tolerance is
    /// strictly below the instance's recovery delay; equality is anti-affine.
    pub fn anti_affine(&self, instance: usize, dependent: usize) -> bool {
        self.instances[dependent].delay_tolerance_ms >= self.instances[instance].recovery_delay_ms
    }

    pub fn delay_ms(&self, from: usize, to: usize) -> f64 {
        self.inter_server_delay_ms[from][to]
    }

    /// Instances grouped by chain type, in chain order.
    pub fn chain_groups(&self) -> Vec<Vec<usize>> {
        let n_types = self.chain_type_counts.len();
        let mut groups = vec![Vec::new(); n_types];
        for (i, inst) in self.instances.iter().enumerate() {
            groups[inst.type_index].push(i);
        }
        groups
    }

    /// Checks the structural invariants every snapshot must satisfy.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != SNAPSHOT_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: self.format_version,
                expected: SNAPSHOT_FORMAT_VERSION,
            });
        }
        let n = self.n_servers();
        let bad = |msg: String| Err(Error::InvalidConfig(format!("snapshot {}: {msg}", self.snapshot_id)));
        if self.inter_server_delay_ms.len() != n || self.controller_delay_ms.len() != n {
            return bad("delay dimensions do not match server count".into());
        }
        for s in 0..n {
            if self.inter_server_delay_ms[s].len() != n {
                return bad(format!("delay row {s} has wrong length"));
            }
            if self.inter_server_delay_ms[s][s] != 0.0 {
                return bad(format!("non-zero diagonal at {s}"));
            }
            for d in 0..n {
                let v = self.inter_server_delay_ms[s][d];
                if v < 0.0 || !v.is_finite() || v != self.inter_server_delay_ms[d][s] {
                    return bad(format!("delay matrix not symmetric/non-negative at ({s},{d})"));
                }
            }
            if self.controller_delay_ms[s] < 0.0 {
                return bad(format!("negative controller delay at {s}"));
            }
        }
        if self.initial_placement.len() != self.n_instances() {
            return bad("initial placement length mismatch".into());
        }
        let mut load = vec![vec![0u64; self.n_resources()]; n];
        for (i, inst) in self.instances.iter().enumerate() {
            let s = self.initial_placement[i];
            if s >= n {
                return bad(format!("instance {i} placed on unknown server {s}"));
            }
            for j in &inst.dependents {
                if !self.instances[*j].dependents.contains(&i) {
                    return bad(format!("dependency {i}->{j} not symmetric"));
                }
            }
            for (r, &d) in inst.demand.iter().enumerate() {
                load[s][r] += u64::from(d);
            }
        }
        for (s, server) in self.servers.iter().enumerate() {
            for (r, &cap) in server.capacity.iter().enumerate() {
                if load[s][r] > u64::from(cap) {
                    return bad(format!("server {s} over capacity in resource {r}"));
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let snapshot: Self = io::read_json(path)?;
        snapshot.validate()?;
        Ok(snapshot)
    }
}

/// Dependents of every instance: all instances of the neighbouring chain types.
pub fn chain_dependents(types: &[usize]) -> Vec<Vec<usize>> {
    types
        .iter()
        .map(|&t| {
            types
                .iter()
                .enumerate()
                .filter(|(_, &u)| u + 1 == t || t + 1 == u)
                .map(|(j, _)| j)
                .collect()
        })
        .collect()
}

/// Generates snapshot `index` of the corpus described by `config`.
pub fn generate_snapshot(config: &GeneratorConfig, index: u64) -> Result<NetworkSnapshot> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index);
    for _ in 0..MAX_GENERATION_ATTEMPTS {
        let mut snapshot = sample_unplaced(config, index, &mut rng);
        match initial_placement(&snapshot) {
            Ok(placement) => {
                snapshot.initial_placement = placement;
                return Ok(snapshot);
            }
            Err(Error::NoFeasiblePlacement { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::GenerationFailed {
        seed: config.seed,
        index,
        attempts: MAX_GENERATION_ATTEMPTS,
    })
}

fn sample_unplaced(config: &GeneratorConfig, index: u64, rng: &mut ChaCha8Rng) -> NetworkSnapshot {
    let n = config.n_servers;
    let servers = (0..n)
        .map(|_| Server {
            capacity: (0..config.n_resources)
                .map(|_| config.server_capacity.sample_units(rng))
                .collect(),
        })
        .collect();
    let mut delays = vec![vec![0.0; n]; n];
    for s in 0..n {
        for d in (s + 1)..n {
            let v = config.inter_server_delay_ms.sample_ms(rng);
            delays[s][d] = v;
            delays[d][s] = v;
        }
    }
    let controller = (0..n).map(|_| config.controller_delay_ms.sample_ms(rng)).collect();
    let types = config.instance_types();
    let dependents = chain_dependents(&types);
    let instances = types
        .iter()
        .zip(dependents)
        .map(|(&type_index, dependents)| InstanceSpec {
            type_index,
            demand: (0..config.n_resources)
                .map(|_| config.instance_demand.sample_units(rng))
                .collect(),
            delay_tolerance_ms: config.delay_tolerance_ms.sample_ms(rng),
            recovery_delay_ms: config.recovery_delay_ms.sample_ms(rng),
            migration_overhead_ms: config.migration_overhead_ms.sample_ms(rng),
            dependents,
        })
        .collect();
    NetworkSnapshot {
        format_version: SNAPSHOT_FORMAT_VERSION,
        snapshot_id: index,
        seed: config.seed,
        chain_type_counts: config.chain_type_counts.clone(),
        servers,
        inter_server_delay_ms: delays,
        controller_delay_ms: controller,
        instances,
        initial_placement: Vec::new(),
    }
}

/// Greedy chain-order placement used as the pre-migration state.
///
/// Instances are placed in chain order. Each goes to the server with enough
/// residual capacity, not shared with an already-placed anti-affine dependent,
/// that minimizes the delay to its already-placed dependents plus the controller
/// delay. Ties go to the lowest server index. `snapshot.initial_placement` is
/// ignored.
pub fn initial_placement(snapshot: &NetworkSnapshot) -> Result<Vec<usize>> {
    let n_servers = snapshot.n_servers();
    let mut order: Vec<usize> = (0..snapshot.n_instances()).collect();
    order.sort_by_key(|&i| (snapshot.instances[i].type_index, i));

    let mut residual: Vec<Vec<u32>> = snapshot.servers.iter().map(|s| s.capacity.clone()).collect();
    let mut placed: Vec<Option<usize>> = vec![None; snapshot.n_instances()];

    for &i in &order {
        let inst = &snapshot.instances[i];
        let mut best: Option<(i64, usize)> = None;
        for s in 0..n_servers {
            if inst.demand.iter().zip(&residual[s]).any(|(d, r)| d > r) {
                continue;
            }
            let clashes = inst
                .dependents
                .iter()
                .any(|&j| placed[j] == Some(s) && snapshot.anti_affine(i, j));
            if clashes {
                continue;
            }
            let cost = inst
                .dependents
                .iter()
                .filter_map(|&j| placed[j])
                .map(|t| to_micros(snapshot.delay_ms(s, t)))
                .sum::<i64>()
                + to_micros(snapshot.controller_delay_ms[s]);
            if best.is_none_or(|(c, _)| cost < c) {
                best = Some((cost, s));
            }
        }
        let (_, s) = best.ok_or(Error::NoFeasiblePlacement { instance: i })?;
        for (r, d) in residual[s].iter_mut().zip(&inst.demand) {
            *r -= d;
        }
        placed[i] = Some(s);
    }
    Ok(placed.into_iter().map(|p| p.expect("every instance placed")).collect())
}

/// Generates `count` snapshots starting at index 0, in parallel.
pub fn generate_corpus(config: &GeneratorConfig, count: u64) -> Result<Vec<NetworkSnapshot>> {
    use rayon::prelude::*;
    (0..count)
        .into_par_iter()
        .map(|index| generate_snapshot(config, index))
        .collect()
}

/// Index of a persisted snapshot corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub format_version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub count: u64,
    pub files: Vec<String>,
}

pub fn snapshot_file_name(index: u64) -> String {
    format!("snapshot_{index:06}.json")
}

/// Writes one JSON file per snapshot plus `manifest.json` into `dir`.
pub fn save_corpus(
    dir: &Path,
    config: &GeneratorConfig,
    snapshots: &[NetworkSnapshot],
) -> Result<SnapshotManifest> {
    let mut files = Vec::with_capacity(snapshots.len());
    for snapshot in snapshots {
        let name = snapshot_file_name(snapshot.snapshot_id);
        snapshot.save(&dir.join(&name))?;
        files.push(name);
    }
    let manifest = SnapshotManifest {
        format_version: SNAPSHOT_FORMAT_VERSION,
        seed: config.seed,
        config_hash: config.hash(),
        count: snapshots.len() as u64,
        files,
    };
    io::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn load_corpus(dir: &Path) -> Result<(SnapshotManifest, Vec<NetworkSnapshot>)> {
    let manifest: SnapshotManifest = io::read_json(&dir.join("manifest.json"))?;
    let snapshots = manifest
        .files
        .iter()
        .map(|f| NetworkSnapshot::load(&dir.join(f)))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, snapshots))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bare_snapshot(controller: Vec<f64>, delays: Vec<Vec<f64>>, instances: Vec<InstanceSpec>) -> NetworkSnapshot {
        let n = controller.len();
        NetworkSnapshot {
            format_version: SNAPSHOT_FORMAT_VERSION,
            snapshot_id: 0,
            seed: 0,
            chain_type_counts: vec![1; instances.len()],
            servers: vec![Server { capacity: vec![10] }; n],
            inter_server_delay_ms: delays,
            controller_delay_ms: controller,
            instances,
            initial_placement: Vec::new(),
        }
    }

    fn inst(type_index: usize, dependents: Vec<usize>, tol: f64, rec: f64) -> InstanceSpec {
        InstanceSpec {
            type_index,
            demand: vec![1],
            delay_tolerance_ms: tol,
            recovery_delay_ms: rec,
            migration_overhead_ms: 1.0,
            dependents,
        }
    }

    #[test]
    fn default_config_shape() {
        let snap = generate_snapshot(&GeneratorConfig::default(), 0).unwrap();
        assert_eq!(snap.n_instances(), 6);
        assert_eq!(snap.n_servers(), 15);
        assert_eq!(snap.chain_type_counts.len(), 4);
        snap.validate().unwrap();
    }

    #[test]
    fn generation_is_deterministic() {
        let config = GeneratorConfig::default();
        let a = serde_json::to_vec(&generate_snapshot(&config, 7).unwrap()).unwrap();
        let b = serde_json::to_vec(&generate_snapshot(&config, 7).unwrap()).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_vec(&generate_snapshot(&config, 8).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn dependents_follow_chain_adjacency() {
        let snap = generate_snapshot(&GeneratorConfig::default(), 3).unwrap();
        // types [0, 0, 1, 1, 2, 3]
        assert_eq!(snap.instances[0].dependents, vec![2, 3]);
        assert_eq!(snap.instances[1].dependents, vec![2, 3]);
        assert_eq!(snap.instances[2].dependents, vec![0, 1, 4]);
        assert_eq!(snap.instances[4].dependents, vec![2, 3, 5]);
        assert_eq!(snap.instances[5].dependents, vec![4]);
    }

    #[test]
    fn invalid_range_is_rejected() {
        let config = GeneratorConfig {
            instance_demand: Bounds::new(5, 2),
            ..GeneratorConfig::default()
        };
        assert!(matches!(config.validate(), Err(Error::InvalidConfig(_))));
        let config = GeneratorConfig {
            chain_type_counts: vec![2, 2, 1],
            ..GeneratorConfig::default()
        };
        assert!(config.validate().is_err());
    }

    #[test]
    fn single_instance_goes_to_lowest_controller_delay() {
        let delays = vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]];
        let snap = bare_snapshot(vec![3.0, 1.0, 2.0], delays, vec![inst(0, vec![], 5.0, 5.0)]);
        assert_eq!(initial_placement(&snap).unwrap(), vec![1]);
    }

    #[test]
    fn anti_affine_dependent_is_never_colocated() {
        // Server 0 is best for both by controller delay, but the second
        // instance is anti-affine to the first (tolerance 9 >= recovery 4).
        let delays = vec![vec![0.0, 5.0], vec![5.0, 0.0]];
        let snap = bare_snapshot(
            vec![1.0, 2.0],
            delays,
            vec![inst(0, vec![1], 9.0, 9.0), inst(1, vec![0], 9.0, 4.0)],
        );
        let placement = initial_placement(&snap).unwrap();
        assert_eq!(placement[0], 0);
        assert_eq!(placement[1], 1);
    }

    #[test]
    fn affine_dependent_is_colocated_when_cheapest() {
        let delays = vec![vec![0.0, 5.0], vec![5.0, 0.0]];
        // tolerance of 0 (2.0) < recovery of 1 (4.0): co-location allowed
        let snap = bare_snapshot(
            vec![1.0, 2.0],
            delays,
            vec![inst(0, vec![1], 2.0, 9.0), inst(1, vec![0], 9.0, 4.0)],
        );
        assert_eq!(initial_placement(&snap).unwrap(), vec![0, 0]);
    }

    #[test]
    fn capacity_exhaustion_reports_instance() {
        let delays = vec![vec![0.0, 5.0], vec![5.0, 0.0]];
        let mut snap = bare_snapshot(vec![1.0, 2.0], delays, vec![inst(0, vec![], 1.0, 1.0)]);
        snap.instances[0].demand = vec![11];
        assert!(matches!(
            initial_placement(&snap),
            Err(Error::NoFeasiblePlacement { instance: 0 })
        ));
    }

    #[test]
    fn impossible_config_fails_generation() {
        let config = GeneratorConfig {
            server_capacity: Bounds::new(1, 1),
            instance_demand: Bounds::new(2, 2),
            ..GeneratorConfig::default()
        };
        match generate_snapshot(&config, 0) {
            Err(Error::GenerationFailed { attempts, .. }) => assert_eq!(attempts, MAX_GENERATION_ATTEMPTS),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn corpus_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let config = GeneratorConfig::default();
        let corpus = generate_corpus(&config, 3).unwrap();
        let manifest = save_corpus(dir.path(), &config, &corpus).unwrap();
        assert_eq!(manifest.count, 3);
        let (loaded_manifest, loaded) = load_corpus(dir.path()).unwrap();
        assert_eq!(loaded_manifest, manifest);
        assert_eq!(loaded, corpus);
    }
}
