use std::sync::OnceLock;

use proptest::prelude::*;
use vnfmig::dataset::{build_raw_dataset, split_and_normalize, EncodedDataset, RawDataset, RawMatrix};
use vnfmig::mlp::decode_placement;
use vnfmig::topology::generate_corpus;
use vnfmig::{check_feasible, solve, GeneratorConfig, NetworkSnapshot};

struct Fixture {
    snapshots: Vec<NetworkSnapshot>,
    raw: RawDataset,
    encoded: EncodedDataset,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let snapshots = generate_corpus(&GeneratorConfig::default(), 60).unwrap();
        let raw = build_raw_dataset(&snapshots, solve).unwrap();
        let matrix = RawMatrix::from_records(&snapshots, &raw.records).unwrap();
        let encoded = split_and_normalize(&matrix, 0.8, 21).unwrap();
        Fixture { snapshots, raw, encoded }
    })
}

#[test]
fn every_subset_is_attempted() {
    let f = fixture();
    assert_eq!(f.raw.solves.len(), 63 * 60);
    assert_eq!(f.raw.profile.rows.iter().map(|r| r.attempted).collect::<Vec<_>>(), vec![6 * 60, 15 * 60, 20 * 60, 15 * 60, 6 * 60, 60]);
    let keys: Vec<(u64, u32)> = f.raw.solves.iter().map(|s| (s.snapshot_id, s.migration_bitmask)).collect();
    let mut sorted = keys.clone();
    sorted.sort_unstable();
    assert_eq!(keys, sorted);
}

#[test]
fn labels_are_one_hot_and_feasible() {
    let f = fixture();
    for record in &f.raw.records {
        for block in record.label.chunks(15) {
            assert_eq!(block.iter().filter(|&&b| b == 1).count(), 1);
        }
        let snapshot = &f.snapshots[record.snapshot_id as usize];
        assert!(check_feasible(snapshot, &record.placement, record.migration_bitmask).is_feasible());
        let row: Vec<f64> = record.label.iter().map(|&b| f64::from(b)).collect();
        assert_eq!(decode_placement(&row, 6, 15), record.placement);
    }
}

#[test]
fn label_matrix_rows_decode_to_solver_placements() {
    let f = fixture();
    for (row, record) in f.encoded.labels.outer_iter().zip(&f.raw.records) {
        assert_eq!(decode_placement(&row.to_vec(), 6, 15), record.placement);
    }
}

#[test]
fn solving_is_reproducible_across_runs() {
    let f = fixture();
    let again = build_raw_dataset(&f.snapshots[..10], solve).unwrap();
    let prefix: Vec<_> = f.raw.records.iter().filter(|r| r.snapshot_id < 10).cloned().collect();
    assert_eq!(again.records, prefix);
}

proptest! {
    #[test]
    fn initial_placement_round_trips_through_encoding(k in any::<prop::sample::Index>()) {
        let f = fixture();
        let row = f.encoded.split.train[k.index(f.encoded.split.train.len())];
        let key = f.encoded.keys[row];
        let features = f.encoded.features.row(row).to_vec();
        let decoded = f.encoded.schema.decode_initial_placement(&features).unwrap();
        prop_assert_eq!(&decoded, &f.snapshots[key.snapshot_id as usize].initial_placement);
    }

    #[test]
    fn dropped_and_active_columns_partition_the_schema(seed in 0u64..50) {
        let f = fixture();
        let matrix = RawMatrix::from_records(&f.snapshots[..8], &f.raw.records.iter().filter(|r| r.snapshot_id < 8).cloned().collect::<Vec<_>>()).unwrap();
        let encoded = split_and_normalize(&matrix, 0.8, seed).unwrap();
        let schema = &encoded.schema;
        let mut all: Vec<usize> = schema.active.iter().copied().chain(schema.dropped.iter().map(|d| d.column)).collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..schema.raw_width()).collect::<Vec<_>>());
        prop_assert!(schema.std.iter().all(|&s| s > 0.0));
        prop_assert_eq!(encoded.split.train.len() + encoded.split.test.len(), matrix.len());
    }
}
