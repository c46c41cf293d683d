use proptest::prelude::*;
use vnfmig::optimizer::{downtime_us, SolveResult};
use vnfmig::topology::{generate_snapshot, Bounds, GeneratorConfig};
use vnfmig::{brute_force_oracle, check_feasible, solve, MigrationProblem, MigrationSet, NetworkSnapshot};

fn chain_counts(n_instances: usize, cuts: u8) -> Vec<usize> {
    let mut counts = vec![1usize];
    for k in 1..n_instances {
        if cuts & (1 << k) != 0 {
            counts.push(1);
        } else {
            *counts.last_mut().unwrap() += 1;
        }
    }
    counts
}

fn small_snapshot(n_servers: usize, n_instances: usize, cuts: u8, cap_max: u32, seed: u64) -> Option<NetworkSnapshot> {
    let config = GeneratorConfig {
        n_servers,
        n_instances,
        chain_type_counts: chain_counts(n_instances, cuts),
        server_capacity: Bounds::new(2, cap_max),
        instance_demand: Bounds::new(1, 6),
        seed,
        ..GeneratorConfig::default()
    };
    generate_snapshot(&config, seed % 7).ok()
}

fn small_case() -> impl Strategy<Value = (NetworkSnapshot, MigrationSet)> {
    (2usize..=4, 1usize..=4, any::<u8>(), 6u32..=14, any::<u64>(), any::<u32>()).prop_filter_map(
        "generator rejected config",
        |(servers, instances, cuts, cap, seed, bits)| {
            let snapshot = small_snapshot(servers, instances, cuts, cap, seed)?;
            let set = MigrationSet::from_bits(bits & ((1 << instances) - 1));
            Some((snapshot, set))
        },
    )
}

fn default_case() -> impl Strategy<Value = (NetworkSnapshot, MigrationSet)> {
    (0u64..5000, 1u32..64).prop_map(|(index, bits)| {
        let snapshot = generate_snapshot(&GeneratorConfig::default(), index).unwrap();
        (snapshot, MigrationSet::from_bits(bits))
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 600, max_global_rejects: 20_000, ..ProptestConfig::default() })]

    #[test]
    fn branch_and_bound_matches_oracle((snapshot, set) in small_case()) {
        let problem = MigrationProblem::new(&snapshot, set).unwrap();
        let fast = solve(&problem);
        let oracle = brute_force_oracle(&problem).unwrap();
        match (&fast, &oracle) {
            (SolveResult::Optimal(a), SolveResult::Optimal(b)) => {
                prop_assert_eq!(&a.placement, &b.placement);
                prop_assert_eq!(a.total_downtime_ms, b.total_downtime_ms);
                prop_assert!(check_feasible(&snapshot, &a.placement, set).is_feasible());
            }
            (SolveResult::Infeasible { .. }, SolveResult::Infeasible { .. }) => {}
            _ => prop_assert!(false, "solver {:?} vs oracle {:?}", fast, oracle),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn no_single_move_improves_an_optimum((snapshot, set) in default_case()) {
        let problem = MigrationProblem::new(&snapshot, set).unwrap();
        if let SolveResult::Optimal(solution) = solve(&problem) {
            prop_assert!(check_feasible(&snapshot, &solution.placement, set).is_feasible());
            let (_, best) = downtime_us(&snapshot, &solution.placement, set);
            for i in set.iter() {
                for s in 0..snapshot.n_servers() {
                    let mut moved = solution.placement.clone();
                    moved[i] = s;
                    if check_feasible(&snapshot, &moved, set).is_feasible() {
                        prop_assert!(downtime_us(&snapshot, &moved, set).1 >= best);
                    }
                }
            }
        }
    }

    #[test]
    fn adding_a_migrant_never_lowers_the_optimum((snapshot, set) in default_case(), extra in 0usize..6) {
        prop_assume!(!set.contains(extra));
        let mut larger = set;
        larger.insert(extra);
        let small = solve(&MigrationProblem::new(&snapshot, set).unwrap());
        let big = solve(&MigrationProblem::new(&snapshot, larger).unwrap());
        if let (Some(small), Some(big)) = (small.solution(), big.solution()) {
            // The larger optimum with `extra` sent home is a candidate for the smaller set.
            let mut restricted = big.placement.clone();
            restricted[extra] = snapshot.initial_placement[extra];
            prop_assume!(check_feasible(&snapshot, &restricted, set).is_feasible());
            prop_assert!(small.total_downtime_ms <= big.total_downtime_ms);
        }
    }
}

#[test]
fn infeasible_small_cases_are_confirmed() {
    let mut confirmed = 0;
    for seed in 0..400u64 {
        let Some(snapshot) = small_snapshot(3, 3, 0b010, 7, seed) else { continue };
        for bits in 1..8 {
            let problem = MigrationProblem::new(&snapshot, MigrationSet::from_bits(bits)).unwrap();
            if !solve(&problem).is_optimal() {
                assert!(!brute_force_oracle(&problem).unwrap().is_optimal());
                confirmed += 1;
            }
        }
    }
    assert!(confirmed > 0);
}
