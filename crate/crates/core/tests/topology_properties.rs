use proptest::prelude::*;
use vnfmig::topology::{generate_snapshot, initial_placement, Bounds, GeneratorConfig};
use vnfmig::{check_feasible, MigrationSet, NetworkSnapshot};

/// Step-by-step exhaustive minimization of the greedy criterion.
fn greedy_oracle(snapshot: &NetworkSnapshot) -> Option<Vec<usize>> {
    let n = snapshot.n_instances();
    let mut placed: Vec<Option<usize>> = vec![None; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| snapshot.instances[i].type_index);
    for i in order {
        let inst = &snapshot.instances[i];
        let candidates = (0..snapshot.n_servers()).filter(|&s| {
            let fits = (0..snapshot.n_resources()).all(|r| {
                let used: u32 = (0..n)
                    .filter(|&j| placed[j] == Some(s))
                    .map(|j| snapshot.instances[j].demand[r])
                    .sum();
                used + inst.demand[r] <= snapshot.servers[s].capacity[r]
            });
            let separated = inst.dependents.iter().all(|&j| {
                placed[j] != Some(s)
                    || snapshot.instances[j].delay_tolerance_ms < inst.recovery_delay_ms
            });
            fits && separated
        });
        let cost = |s: usize| {
            let to_dependents: f64 = inst
                .dependents
                .iter()
                .filter_map(|&j| placed[j])
                .map(|t| snapshot.inter_server_delay_ms[s][t])
                .sum();
            ((to_dependents + snapshot.controller_delay_ms[s]) * 1000.0).round() as i64
        };
        let best = candidates.map(|s| (cost(s), s)).min()?;
        placed[i] = Some(best.1);
    }
    placed.into_iter().collect()
}

fn micro_config(seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        n_servers: 3,
        n_instances: 3,
        chain_type_counts: vec![1, 2],
        server_capacity: Bounds::new(4, 12),
        instance_demand: Bounds::new(2, 6),
        seed,
        ..GeneratorConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 300, ..ProptestConfig::default() })]

    #[test]
    fn greedy_matches_exhaustive_step_minimum(seed in any::<u64>(), index in 0u64..100) {
        if let Ok(snapshot) = generate_snapshot(&micro_config(seed), index) {
            prop_assert_eq!(Some(snapshot.initial_placement.clone()), greedy_oracle(&snapshot));
            prop_assert_eq!(initial_placement(&snapshot).unwrap(), snapshot.initial_placement);
        }
    }

    #[test]
    fn generated_snapshots_are_valid(index in 0u64..20_000) {
        let config = GeneratorConfig::default();
        let snapshot = generate_snapshot(&config, index).unwrap();
        prop_assert!(snapshot.validate().is_ok());
        let d = &snapshot.inter_server_delay_ms;
        for s in 0..snapshot.n_servers() {
            prop_assert_eq!(d[s][s], 0.0);
            for t in 0..snapshot.n_servers() {
                prop_assert_eq!(d[s][t], d[t][s]);
                prop_assert!(d[s][t] >= 0.0);
            }
        }
        for (i, inst) in snapshot.instances.iter().enumerate() {
            for &j in &inst.dependents {
                prop_assert!(snapshot.instances[j].dependents.contains(&i));
                prop_assert_eq!(inst.type_index.abs_diff(snapshot.instances[j].type_index), 1);
            }
        }
        prop_assert!(check_feasible(&snapshot, &snapshot.initial_placement, MigrationSet::empty()).is_feasible());
        let again = generate_snapshot(&config, index).unwrap();
        prop_assert_eq!(serde_json::to_vec(&snapshot).unwrap(), serde_json::to_vec(&again).unwrap());
    }
}
