//! Accuracy, path-delay and run-time analyses of the surrogate against the
//! exact solver.

use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{encode_features, FeasibilityProfile, FeatureSchema};
use crate::error::{Error, Result};
use crate::io;
use crate::mlp::{decode_rows, MlpModel};
use crate::optimizer::{check_feasible, solve, MigrationProblem, MigrationSet};
use crate::topology::{to_micros, NetworkSnapshot};

/// Fraction of components where `p >= threshold` agrees with the label.
pub fn binary_accuracy(probabilities: &Array2<f64>, labels: &Array2<f64>, threshold: f64) -> Result<f64> {
    if probabilities.dim() != labels.dim() {
        return Err(Error::DimensionMismatch {
            context: "binary accuracy",
            expected: labels.len(),
            actual: probabilities.len(),
        });
    }
    let hits = probabilities
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (p >= threshold) == (y >= 0.5))
        .count();
    Ok(hits as f64 / labels.len().max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyBucket {
    pub migrated: usize,
    pub records: usize,
    pub instances_correct: usize,
    pub instances_total: usize,
    pub complete_correct: usize,
}

impl AccuracyBucket {
    pub fn categorical(&self) -> f64 {
        self.instances_correct as f64 / self.instances_total.max(1) as f64
    }

    pub fn complete(&self) -> f64 {
        self.complete_correct as f64 / self.records.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalAccuracy {
    pub overall: AccuracyBucket,
    /// One bucket per migration-set size that occurs, ascending.
    pub by_size: Vec<AccuracyBucket>,
}

pub fn categorical_and_complete_accuracy(
    decoded: &[Vec<usize>],
    optimal: &[Vec<usize>],
    sizes: &[usize],
) -> Result<CategoricalAccuracy> {
    if decoded.len() != optimal.len() || decoded.len() != sizes.len() {
        return Err(Error::DimensionMismatch {
            context: "accuracy records",
            expected: optimal.len(),
            actual: decoded.len(),
        });
    }
    let max_size = sizes.iter().copied().max().unwrap_or(0);
    let empty = |migrated| AccuracyBucket {
        migrated,
        records: 0,
        instances_correct: 0,
        instances_total: 0,
        complete_correct: 0,
    };
    let mut buckets: Vec<AccuracyBucket> = (0..=max_size).map(empty).collect();
    let mut overall = empty(0);
    for ((pred, opt), &size) in decoded.iter().zip(optimal).zip(sizes) {
        if pred.len() != opt.len() {
            return Err(Error::DimensionMismatch { context: "placement", expected: opt.len(), actual: pred.len() });
        }
        let correct = pred.iter().zip(opt).filter(|(a, b)| a == b).count();
        for bucket in [&mut buckets[size], &mut overall] {
            bucket.records += 1;
            bucket.instances_correct += correct;
            bucket.instances_total += opt.len();
            bucket.complete_correct += usize::from(correct == opt.len());
        }
    }
    Ok(CategoricalAccuracy { overall, by_size: buckets.into_iter().filter(|b| b.records > 0).collect() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub train_binary: f64,
    pub test_binary: f64,
    /// Binary accuracy of the all-zero predictor on the test labels.
    pub baseline_binary: f64,
    pub categorical: CategoricalAccuracy,
}

fn path_delays_us(snapshot: &NetworkSnapshot, placement: &[usize]) -> Vec<i64> {
    let groups = snapshot.chain_groups();
    let mut paths: Vec<(usize, i64)> = groups.first().map_or_else(Vec::new, |g| g.iter().map(|&i| (i, 0)).collect());
    for group in groups.iter().skip(1) {
        paths = paths
            .iter()
            .flat_map(|&(last, acc)| {
                group
                    .iter()
                    .map(move |&next| (next, acc + to_micros(snapshot.delay_ms(placement[last], placement[next]))))
            })
            .collect();
    }
    paths.into_iter().map(|(_, d)| d).collect()
}

/// Delay along every computational path, one per combination of instances
/// (one per chain type, in chain order).
pub fn path_delay(snapshot: &NetworkSnapshot, placement: &[usize]) -> Vec<f64> {
    path_delays_us(snapshot, placement).into_iter().map(|d| d as f64 / 1000.0).collect()
}

/// One scenario compared between the solver and the surrogate.
#[derive(Debug, Clone, Copy)]
pub struct EvalCase<'a> {
    pub snapshot: &'a NetworkSnapshot,
    pub migration_set: MigrationSet,
    pub optimal: &'a [usize],
    pub predicted: &'a [usize],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub center_ms: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependentPairDelay {
    pub snapshot_id: u64,
    pub migration_bitmask: MigrationSet,
    pub instance: usize,
    pub dependent: usize,
    pub optimal_ms: f64,
    pub predicted_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayReport {
    pub records: usize,
    /// Optimal minus predicted path delay, paths of each record consecutive.
    pub differences_ms: Vec<f64>,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub mean_optimal_path_ms: f64,
    pub bin_width_ms: f64,
    pub histogram: Vec<HistogramBin>,
    pub dependent_pairs: Vec<DependentPairDelay>,
    pub feasible_predictions: usize,
    pub feasibility_rate: f64,
}

/// Path-delay differences, dependent-pair delays of mismatched records, and
/// feasibility of the predicted placements.
pub fn delay_difference_report(cases: &[EvalCase<'_>], bin_width_ms: f64) -> Result<DelayReport> {
    if !(bin_width_ms > 0.0) {
        return Err(Error::InvalidConfig(format!("histogram bin width {bin_width_ms} must be positive")));
    }
    let mut differences_us = Vec::new();
    let mut optimal_total_us = 0i64;
    let mut optimal_paths = 0usize;
    let mut dependent_pairs = Vec::new();
    let mut feasible = 0;
    for case in cases {
        let optimal = path_delays_us(case.snapshot, case.optimal);
        let predicted = path_delays_us(case.snapshot, case.predicted);
        optimal_total_us += optimal.iter().sum::<i64>();
        optimal_paths += optimal.len();
        differences_us.extend(optimal.iter().zip(&predicted).map(|(o, p)| o - p));
        if check_feasible(case.snapshot, case.predicted, case.migration_set).is_feasible() {
            feasible += 1;
        }
        if case.optimal != case.predicted {
            for (i, inst) in case.snapshot.instances.iter().enumerate() {
                for &j in inst.dependents.iter().filter(|&&j| j > i) {
                    dependent_pairs.push(DependentPairDelay {
                        snapshot_id: case.snapshot.snapshot_id,
                        migration_bitmask: case.migration_set,
                        instance: i,
                        dependent: j,
                        optimal_ms: case.snapshot.delay_ms(case.optimal[i], case.optimal[j]),
                        predicted_ms: case.snapshot.delay_ms(case.predicted[i], case.predicted[j]),
                    });
                }
            }
        }
    }
    let differences_ms: Vec<f64> = differences_us.iter().map(|&d| d as f64 / 1000.0).collect();
    let n = differences_ms.len().max(1) as f64;
    let mean_ms = differences_us.iter().sum::<i64>() as f64 / 1000.0 / n;
    let std_ms = (differences_ms.iter().map(|d| (d - mean_ms).powi(2)).sum::<f64>() / n).sqrt();

    let index = |d: f64| (d / bin_width_ms).round() as i64;
    let histogram = match (
        differences_ms.iter().map(|&d| index(d)).min(),
        differences_ms.iter().map(|&d| index(d)).max(),
    ) {
        (Some(lo), Some(hi)) => {
            let mut counts = vec![0usize; (hi - lo + 1) as usize];
            for &d in &differences_ms {
                counts[(index(d) - lo) as usize] += 1;
            }
            counts
                .into_iter()
                .enumerate()
                .map(|(k, count)| HistogramBin { center_ms: (lo + k as i64) as f64 * bin_width_ms, count })
                .collect()
        }
        _ => Vec::new(),
    };
    Ok(DelayReport {
        records: cases.len(),
        differences_ms,
        mean_ms,
        std_ms,
        mean_optimal_path_ms: optimal_total_us as f64 / 1000.0 / optimal_paths.max(1) as f64,
        bin_width_ms,
        histogram,
        dependent_pairs,
        feasible_predictions: feasible,
        feasibility_rate: feasible as f64 / cases.len().max(1) as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRow {
    pub requests: usize,
    pub solver_s: f64,
    pub surrogate_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeTable {
    pub rows: Vec<RuntimeRow>,
    pub machine: String,
}

impl RuntimeTable {
    pub fn row(&self, requests: usize) -> Option<&RuntimeRow> {
        self.rows.iter().find(|r| r.requests == requests)
    }
}

/// CPU model, logical core count and OS of the current machine.
pub fn machine_descriptor() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|text| {
            text.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|s| s.trim().to_owned())
        })
        .unwrap_or_else(|| "unknown cpu".to_owned());
    let cores = std::thread::available_parallelism().map_or(1, usize::from);
    format!("{cpu}; {cores} logical cores; {} {}", std::env::consts::OS, std::env::consts::ARCH)
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

pub const BENCH_REPETITIONS: usize = 3;

/// Wall-clock comparison of `n` independent solver calls against one batched
/// surrogate prediction (encode, predict, decode) of the same `n` requests.
/// Requests are seeded draws of a pool snapshot and a non-empty migration set;
/// each timing is the median of three repetitions.
pub fn runtime_benchmark(
    pool: &[NetworkSnapshot],
    model: &MlpModel,
    schema: &FeatureSchema,
    counts: &[usize],
    seed: u64,
) -> Result<RuntimeTable> {
    if pool.is_empty() {
        return Err(Error::DegenerateDataset("empty snapshot pool".into()));
    }
    if counts.is_empty() || counts.windows(2).any(|w| w[0] >= w[1]) || counts[0] == 0 {
        return Err(Error::InvalidConfig(format!("request counts must be positive and increasing: {counts:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(counts.len());
    for &n in counts {
        let requests: Vec<(&NetworkSnapshot, MigrationSet)> = (0..n)
            .map(|_| {
                let snapshot = &pool[rng.gen_range(0..pool.len())];
                let bits = rng.gen_range(1..(1u32 << snapshot.n_instances()));
                (snapshot, MigrationSet::from_bits(bits))
            })
            .collect();
        let mut solver_times = Vec::with_capacity(BENCH_REPETITIONS);
        let mut surrogate_times = Vec::with_capacity(BENCH_REPETITIONS);
        for _ in 0..BENCH_REPETITIONS {
            let start = Instant::now();
            for &(snapshot, set) in &requests {
                let problem = MigrationProblem::new(snapshot, set)?;
                std::hint::black_box(solve(&problem));
            }
            solver_times.push(start.elapsed().as_secs_f64());

            let start = Instant::now();
            let mut x = Array2::zeros((n, schema.width()));
            for (row, &(snapshot, set)) in requests.iter().enumerate() {
                let encoded = encode_features(snapshot, set, schema)?;
                x.row_mut(row).assign(&ndarray::ArrayView1::from(&encoded));
            }
            let p = model.predict(&x)?;
            std::hint::black_box(decode_rows(&p, schema.n_instances, schema.n_servers));
            surrogate_times.push(start.elapsed().as_secs_f64());
        }
        rows.push(RuntimeRow { requests: n, solver_s: median(solver_times), surrogate_s: median(surrogate_times) });
    }
    Ok(RuntimeTable { rows, machine: machine_descriptor() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: AccuracyReport,
    pub delay: DelayReport,
    pub feasibility_profile: FeasibilityProfile,
    pub runtime: Option<RuntimeTable>,
}

pub const ACCURACY_CSV: &str = "accuracy_by_migration_count.csv";
pub const HISTOGRAM_CSV: &str = "delay_difference_histogram.csv";
pub const DEPENDENT_CSV: &str = "dependent_pair_delays.csv";
pub const RUNTIME_CSV: &str = "runtime_table.csv";
pub const PROFILE_CSV: &str = "feasibility_profile.csv";

pub fn write_accuracy_csv(path: &Path, accuracy: &CategoricalAccuracy) -> Result<()> {
    io::write_csv(
        path,
        &["migrated", "records", "categorical_accuracy", "complete_accuracy"],
        accuracy.by_size.iter().map(|b| {
            [b.migrated.to_string(), b.records.to_string(), b.categorical().to_string(), b.complete().to_string()]
        }),
    )
}

pub fn write_histogram_csv(path: &Path, delay: &DelayReport) -> Result<()> {
    let total = delay.differences_ms.len().max(1) as f64;
    io::write_csv(
        path,
        &["bin_center_ms", "count", "density"],
        delay.histogram.iter().map(|b| {
            [
                b.center_ms.to_string(),
                b.count.to_string(),
                (b.count as f64 / total / delay.bin_width_ms).to_string(),
            ]
        }),
    )
}

pub fn write_dependent_csv(path: &Path, delay: &DelayReport) -> Result<()> {
    io::write_csv(
        path,
        &["snapshot_id", "migration_bitmask", "instance", "dependent", "optimal_ms", "predicted_ms"],
        delay.dependent_pairs.iter().map(|p| {
            [
                p.snapshot_id.to_string(),
                p.migration_bitmask.bits().to_string(),
                p.instance.to_string(),
                p.dependent.to_string(),
                p.optimal_ms.to_string(),
                p.predicted_ms.to_string(),
            ]
        }),
    )
}

pub fn write_runtime_csv(path: &Path, table: &RuntimeTable) -> Result<()> {
    io::write_csv(
        path,
        &["requests", "solver_s", "surrogate_s", "machine"],
        table.rows.iter().map(|r| {
            [r.requests.to_string(), r.solver_s.to_string(), r.surrogate_s.to_string(), table.machine.clone()]
        }),
    )
}

pub fn write_profile_csv(path: &Path, profile: &FeasibilityProfile) -> Result<()> {
    io::write_csv(
        path,
        &["migrated", "attempted", "succeeded", "success_rate"],
        profile.rows.iter().map(|r| {
            [
                r.migrated.to_string(),
                r.attempted.to_string(),
                r.succeeded.to_string(),
                r.success_rate().to_string(),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{generate_snapshot, GeneratorConfig};
    use ndarray::Array2;

    fn label_row(placement: &[usize], n_servers: usize) -> Vec<f64> {
        crate::dataset::one_hot_label(placement, n_servers).into_iter().map(f64::from).collect()
    }

    #[test]
    fn trivial_baseline_accuracy() {
        let labels = Array2::from_shape_vec((1, 90), label_row(&[0, 3, 5, 7, 9, 14], 15)).unwrap();
        let zeros = Array2::zeros((1, 90));
        assert!((binary_accuracy(&zeros, &labels, 0.5).unwrap() - 84.0 / 90.0).abs() < 1e-12);
        assert_eq!(binary_accuracy(&labels, &labels, 0.5).unwrap(), 1.0);
        let ones = Array2::ones((1, 90));
        assert!((binary_accuracy(&ones, &labels, 0.5).unwrap() - 6.0 / 90.0).abs() < 1e-12);
        assert!(binary_accuracy(&Array2::zeros((1, 89)), &labels, 0.5).is_err());
    }

    #[test]
    fn five_of_six_correct() {
        let optimal = vec![vec![0, 1, 2, 3, 4, 5]; 4];
        let decoded = vec![vec![0, 1, 2, 3, 4, 9]; 4];
        let report = categorical_and_complete_accuracy(&decoded, &optimal, &[1, 2, 2, 6]).unwrap();
        assert!((report.overall.categorical() - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(report.overall.complete(), 0.0);
        assert_eq!(report.by_size.iter().map(|b| b.migrated).collect::<Vec<_>>(), vec![1, 2, 6]);
        let perfect = categorical_and_complete_accuracy(&optimal, &optimal, &[1, 1, 1, 1]).unwrap();
        assert_eq!((perfect.overall.categorical(), perfect.overall.complete()), (1.0, 1.0));
    }

    #[test]
    fn co_located_paths_are_zero() {
        let snap = generate_snapshot(&GeneratorConfig::default(), 0).unwrap();
        let delays = path_delay(&snap, &[4; 6]);
        assert_eq!(delays, vec![0.0; 4]);
    }

    #[test]
    fn two_hop_chain() {
        let config = GeneratorConfig { n_instances: 2, chain_type_counts: vec![1, 1], ..GeneratorConfig::default() };
        let snap = generate_snapshot(&config, 0).unwrap();
        assert_eq!(path_delay(&snap, &[2, 7]), vec![snap.delay_ms(2, 7)]);
    }

    #[test]
    fn identical_placements_give_zero_differences() {
        let snap = generate_snapshot(&GeneratorConfig::default(), 1).unwrap();
        let placement = snap.initial_placement.clone();
        let case = EvalCase {
            snapshot: &snap,
            migration_set: MigrationSet::empty(),
            optimal: &placement,
            predicted: &placement,
        };
        let report = delay_difference_report(&[case, case], 1.0).unwrap();
        assert_eq!(report.differences_ms, vec![0.0; 8]);
        assert_eq!(report.histogram, vec![HistogramBin { center_ms: 0.0, count: 8 }]);
        assert!(report.dependent_pairs.is_empty());
        assert_eq!(report.feasibility_rate, 1.0);
    }

    #[test]
    fn mismatched_record_emits_dependent_pairs() {
        let snap = generate_snapshot(&GeneratorConfig::default(), 2).unwrap();
        let optimal = snap.initial_placement.clone();
        let mut predicted = optimal.clone();
        predicted[0] = (predicted[0] + 1) % snap.n_servers();
        let case = EvalCase { snapshot: &snap, migration_set: MigrationSet::empty(), optimal: &optimal, predicted: &predicted };
        let report = delay_difference_report(&[case], 0.5).unwrap();
        // chain [2,2,1,1]: 4 + 2 + 1 dependent pairs
        assert_eq!(report.dependent_pairs.len(), 7);
        assert_eq!(report.histogram.iter().map(|b| b.count).sum::<usize>(), 4);
        let opt: f64 = path_delay(&snap, &optimal).iter().sum();
        let pred: f64 = path_delay(&snap, &predicted).iter().sum();
        let diff: f64 = report.differences_ms.iter().sum();
        assert!((diff - (opt - pred)).abs() < 1e-9);
        assert_eq!(report.feasibility_rate, 0.0);
    }

    #[test]
    fn runtime_table_shape() {
        let snaps: Vec<_> = (0..3).map(|i| generate_snapshot(&GeneratorConfig::default(), i).unwrap()).collect();
        let schema = FeatureSchema::for_snapshot(&snaps[0]);
        let spec = crate::mlp::ModelSpec::with_hidden(schema.width(), &[8], 6, 15);
        let model = MlpModel::new(spec, 0).unwrap();
        let table = runtime_benchmark(&snaps, &model, &schema, &[1, 10], 0).unwrap();
        assert_eq!(table.rows.iter().map(|r| r.requests).collect::<Vec<_>>(), vec![1, 10]);
        assert!(table.rows.iter().all(|r| r.solver_s > 0.0 && r.surrogate_s > 0.0));
        assert!(runtime_benchmark(&snaps, &model, &schema, &[10, 1], 0).is_err());
    }
}
