//! Exact downtime-minimizing migration solver.
//!
//! A migrated instance `i` placed on server `s` experiences a placement delay
//! equal to the controller delay of `s` plus the delay from `s` to the initial
//! server of every dependent of `i`. Its downtime adds the migration overhead.
//! The objective is the total downtime of the migrated instances.
//!
//! Constraints, as checked by [`check_feasible`]:
//! * one server per instance, non-migrated instances stay where they are;
//! * a migrated instance leaves its initial server;
//! * a migrated instance and its dependent may share a server only when the
//!   dependent's delay tolerance is strictly below the instance's recovery
//!   delay (the dependent's post-migration server is used when it co-migrates);
//! * per-server, per-resource capacity.
//!
//! All objective arithmetic is done in integer microseconds, so comparisons and
//! tie-breaks are exact.

use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{to_micros, NetworkSnapshot};

/// Largest `n_servers ^ |migration set|` the enumeration oracle accepts.
pub const ORACLE_LIMIT: f64 = 1e7;

/// Set of instances selected for migration, bit `i` standing for instance `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MigrationSet(u32);

impl MigrationSet {
    pub const fn empty() -> Self {
        Self(0)
    }

    pub const fn from_bits(bits: u32) -> Self {
        Self(bits)
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        Self(indices.into_iter().fold(0, |acc, i| acc | (1 << i)))
    }

    pub const fn bits(self) -> u32 {
        self.0
    }

    pub const fn contains(self, instance: usize) -> bool {
        instance < 32 && self.0 & (1 << instance) != 0
    }

    pub const fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub const fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn insert(&mut self, instance: usize) {
        self.0 |= 1 << instance;
    }

    /// Member indices in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..32).filter(move |&i| self.contains(i))
    }

    /// Per-instance 0/1 flags, instance 0 first.
    pub fn flags(self, n_instances: usize) -> Vec<u8> {
        (0..n_instances).map(|i| u8::from(self.contains(i))).collect()
    }
}

impl fmt::Display for MigrationSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MigrationProblem<'a> {
    pub snapshot: &'a NetworkSnapshot,
    pub migration_set: MigrationSet,
}

impl<'a> MigrationProblem<'a> {
    pub fn new(snapshot: &'a NetworkSnapshot, migration_set: MigrationSet) -> Result<Self> {
        let n = snapshot.n_instances();
        if n > 32 || (n < 32 && migration_set.bits() >> n != 0) {
            return Err(Error::InvalidConfig(format!(
                "migration set {migration_set} references instances beyond {n}"
            )));
        }
        Ok(Self { snapshot, migration_set })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementSolution {
    /// Server index per instance.
    pub placement: Vec<usize>,
    pub downtime_per_instance_ms: Vec<f64>,
    pub total_downtime_ms: f64,
    pub nodes_explored: u64,
    pub solve_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasibleReason {
    /// Some migrated instance has no admissible server even in isolation.
    NoCandidateServer,
    /// Every combination of candidate servers violates a constraint.
    SearchExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveResult {
    Optimal(PlacementSolution),
    Infeasible {
        reason: InfeasibleReason,
        nodes_explored: u64,
        solve_time_s: f64,
    },
}

impl SolveResult {
    pub fn solution(&self) -> Option<&PlacementSolution> {
        match self {
            Self::Optimal(s) => Some(s),
            Self::Infeasible { .. } => None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        matches!(self, Self::Optimal(_))
    }

    pub fn solve_time_s(&self) -> f64 {
        match self {
            Self::Optimal(s) => s.solve_time_s,
            Self::Infeasible { solve_time_s, .. } => *solve_time_s,
        }
    }

    pub fn nodes_explored(&self) -> u64 {
        match self {
            Self::Optimal(s) => s.nodes_explored,
            Self::Infeasible { nodes_explored, .. } => *nodes_explored,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
}

/// Flat, line-oriented form of a solve outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub snapshot_id: u64,
    pub migration_bitmask: u32,
    pub status: SolveStatus,
    pub placement: Option<Vec<usize>>,
    pub total_downtime_ms: Option<f64>,
    pub reason: Option<InfeasibleReason>,
    pub nodes_explored: u64,
    pub solve_time_s: f64,
}

impl SolveRecord {
    pub fn new(snapshot_id: u64, set: MigrationSet, result: &SolveResult) -> Self {
        let (status, placement, total, reason) = match result {
            SolveResult::Optimal(s) => (
                SolveStatus::Optimal,
                Some(s.placement.clone()),
                Some(s.total_downtime_ms),
                None,
            ),
            SolveResult::Infeasible { reason, .. } => (SolveStatus::Infeasible, None, None, Some(*reason)),
        };
        Self {
            snapshot_id,
            migration_bitmask: set.bits(),
            status,
            placement,
            total_downtime_ms: total,
            reason,
            nodes_explored: result.nodes_explored(),
            solve_time_s: result.solve_time_s(),
        }
    }
}

/// Placement delay in microseconds of `instance` on `candidate_server`,
/// dependents taken at their initial servers.
pub fn placement_delay_us(snapshot: &NetworkSnapshot, candidate_server: usize, instance: usize) -> i64 {
    let dependents: i64 = snapshot.instances[instance]
        .dependents
        .iter()
        .map(|&j| to_micros(snapshot.delay_ms(candidate_server, snapshot.initial_placement[j])))
        .sum();
    dependents + to_micros(snapshot.controller_delay_ms[candidate_server])
}

/// Placement delay in milliseconds.
pub fn placement_delay(snapshot: &NetworkSnapshot, candidate_server: usize, instance: usize) -> f64 {
    placement_delay_us(snapshot, candidate_server, instance) as f64 / 1000.0
}

/// Per-instance and total downtime in microseconds. Only migrated instances
/// contribute.
pub fn downtime_us(snapshot: &NetworkSnapshot, placement: &[usize], migration_set: MigrationSet) -> (Vec<i64>, i64) {
    let per: Vec<i64> = placement
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            if migration_set.contains(i) {
                placement_delay_us(snapshot, s, i) + to_micros(snapshot.instances[i].migration_overhead_ms)
            } else {
                0
            }
        })
        .collect();
    let total = per.iter().sum();
    (per, total)
}

/// Per-instance and total downtime in milliseconds.
pub fn downtime(snapshot: &NetworkSnapshot, placement: &[usize], migration_set: MigrationSet) -> (Vec<f64>, f64) {
    let (per, total) = downtime_us(snapshot, placement, migration_set);
    (per.into_iter().map(|v| v as f64 / 1000.0).collect(), total as f64 / 1000.0)
}

/// Constraint families reported by [`check_feasible`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// Exactly one valid server per instance (binary placement variables).
    Assignment,
    /// A non-migrated instance must stay on its initial server.
    Pinned,
    /// A migrated instance must leave its initial server.
    Relocation,
    /// Downtime is never negative.
    NonNegativeDowntime,
    /// Anti-affinity between a migrated instance and a co-migrating dependent.
    AntiAffinityComigrated,
    /// Anti-affinity between a migrated instance and a dependent left in place.
    AntiAffinityResident,
    /// Per-server, per-resource capacity.
    Capacity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub constraint: Constraint,
    pub instance: Option<usize>,
    pub other: Option<usize>,
    pub server: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Feasible,
    Violated(Violation),
}

impl Verdict {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Self::Feasible)
    }

    pub fn constraint(&self) -> Option<Constraint> {
        match self {
            Self::Feasible => None,
            Self::Violated(v) => Some(v.constraint),
        }
    }
}

fn violated(constraint: Constraint, instance: Option<usize>, other: Option<usize>, server: Option<usize>) -> Verdict {
    Verdict::Violated(Violation { constraint, instance, other, server })
}

/// Checks a complete placement against every constraint and reports the first
/// violation found.
pub fn check_feasible(snapshot: &NetworkSnapshot, placement: &[usize], migration_set: MigrationSet) -> Verdict {
    let n_servers = snapshot.n_servers();
    if placement.len() != snapshot.n_instances() {
        return violated(Constraint::Assignment, None, None, None);
    }
    if let Some(i) = placement.iter().position(|&s| s >= n_servers) {
        return violated(Constraint::Assignment, Some(i), None, Some(placement[i]));
    }
    for (i, &s) in placement.iter().enumerate() {
        let initial = snapshot.initial_placement[i];
        if migration_set.contains(i) {
            if s == initial {
                return violated(Constraint::Relocation, Some(i), None, Some(s));
            }
        } else if s != initial {
            return violated(Constraint::Pinned, Some(i), None, Some(s));
        }
    }
    let (per, _) = downtime_us(snapshot, placement, migration_set);
    if let Some(i) = per.iter().position(|&d| d < 0) {
        return violated(Constraint::NonNegativeDowntime, Some(i), None, Some(placement[i]));
    }
    for i in migration_set.iter() {
        for &dep in &snapshot.instances[i].dependents {
            // a pinned dependent sits at its initial server, which `placement` already holds
            if placement[dep] == placement[i] && snapshot.anti_affine(i, dep) {
                let constraint = if migration_set.contains(dep) {
                    Constraint::AntiAffinityComigrated
                } else {
                    Constraint::AntiAffinityResident
                };
                return violated(constraint, Some(i), Some(dep), Some(placement[i]));
            }
        }
    }
    let n_resources = snapshot.n_resources();
    let mut load = vec![vec![0u64; n_resources]; n_servers];
    for (i, &s) in placement.iter().enumerate() {
        for (r, &d) in snapshot.instances[i].demand.iter().enumerate() {
            load[s][r] += u64::from(d);
        }
    }
    for (s, server) in snapshot.servers.iter().enumerate() {
        if server.capacity.iter().zip(&load[s]).any(|(&cap, &used)| used > u64::from(cap)) {
            return violated(Constraint::Capacity, None, None, Some(s));
        }
    }
    Verdict::Feasible
}

fn solution_from(
    snapshot: &NetworkSnapshot,
    placement: Vec<usize>,
    set: MigrationSet,
    nodes: u64,
    started: Instant,
) -> PlacementSolution {
    let (per, total) = downtime(snapshot, &placement, set);
    PlacementSolution {
        placement,
        downtime_per_instance_ms: per,
        total_downtime_ms: total,
        nodes_explored: nodes,
        solve_time_s: started.elapsed().as_secs_f64(),
    }
}

/// Precomputed view of one problem for the depth-first search.
struct SearchState<'a> {
    snapshot: &'a NetworkSnapshot,
    migrants: Vec<usize>,
    /// Downtime of migrant `k` on server `s`, `None` when `s` is excluded by
    /// relocation, a resident anti-affine dependent, or residual capacity.
    cost: Vec<Vec<Option<i64>>>,
    /// `conflict[k][l]`: migrants `k` and `l` may not share a server.
    conflict: Vec<Vec<bool>>,
    residual: Vec<Vec<i64>>,
    assigned: Vec<usize>,
    best: Option<(i64, Vec<usize>)>,
    nodes: u64,
}

impl SearchState<'_> {
    fn descend(&mut self, depth: usize, partial: i64) {
        self.nodes += 1;
        if depth == self.migrants.len() {
            if self.best.as_ref().is_none_or(|(b, _)| partial < *b) {
                self.best = Some((partial, self.assigned.clone()));
            }
            return;
        }
        let instance = self.migrants[depth];
        for s in 0..self.snapshot.n_servers() {
            let Some(c) = self.cost[depth][s] else { continue };
            let next = partial + c;
            if self.best.as_ref().is_some_and(|(b, _)| next >= *b) {
                continue;
            }
            let demand = &self.snapshot.instances[instance].demand;
            if demand.iter().zip(&self.residual[s]).any(|(&d, &r)| i64::from(d) > r) {
                continue;
            }
            if (0..depth).any(|l| self.assigned[l] == s && self.conflict[depth][l]) {
                continue;
            }
            for (r, &d) in self.residual[s].iter_mut().zip(demand) {
                *r -= i64::from(d);
            }
            self.assigned.push(s);
            self.descend(depth + 1, next);
            self.assigned.pop();
            for (r, &d) in self.residual[s].iter_mut().zip(demand) {
                *r += i64::from(d);
            }
        }
    }
}

/// Depth-first branch-and-bound over the servers of the migrated instances.
///
/// Non-migrated instances are fixed at their initial servers. Branches are
/// cut on any partial constraint violation and whenever the partial downtime
/// reaches the incumbent. Migrants are branched in index order and servers in
/// ascending order, so the first optimum found is the lexicographically
/// smallest placement among equal-downtime optima.
pub fn solve(problem: &MigrationProblem<'_>) -> SolveResult {
    let started = Instant::now();
    let snapshot = problem.snapshot;
    let set = problem.migration_set;
    let n_servers = snapshot.n_servers();
    let migrants: Vec<usize> = set.iter().collect();

    let mut residual: Vec<Vec<i64>> = snapshot
        .servers
        .iter()
        .map(|s| s.capacity.iter().map(|&c| i64::from(c)).collect())
        .collect();
    for (i, &s) in snapshot.initial_placement.iter().enumerate() {
        if !set.contains(i) {
            for (r, &d) in residual[s].iter_mut().zip(&snapshot.instances[i].demand) {
                *r -= i64::from(d);
            }
        }
    }

    let cost: Vec<Vec<Option<i64>>> = migrants
        .iter()
        .map(|&i| {
            let inst = &snapshot.instances[i];
            let overhead = to_micros(inst.migration_overhead_ms);
            (0..n_servers)
                .map(|s| {
                    if s == snapshot.initial_placement[i] {
                        return None;
                    }
                    let resident_clash = inst.dependents.iter().any(|&dep| {
                        !set.contains(dep) && snapshot.initial_placement[dep] == s && snapshot.anti_affine(i, dep)
                    });
                    let too_big = inst.demand.iter().zip(&residual[s]).any(|(&d, &r)| i64::from(d) > r);
                    if resident_clash || too_big {
                        None
                    } else {
                        Some(placement_delay_us(snapshot, s, i) + overhead)
                    }
                })
                .collect()
        })
        .collect();

    if cost.iter().any(|row| row.iter().all(Option::is_none)) {
        return SolveResult::Infeasible {
            reason: InfeasibleReason::NoCandidateServer,
            nodes_explored: 1,
            solve_time_s: started.elapsed().as_secs_f64(),
        };
    }

    let conflict = migrants
        .iter()
        .map(|&a| {
            migrants
                .iter()
                .map(|&b| {
                    snapshot.instances[a].dependents.contains(&b)
                        && (snapshot.anti_affine(a, b) || snapshot.anti_affine(b, a))
                })
                .collect()
        })
        .collect();

    let mut state = SearchState {
        snapshot,
        migrants,
        cost,
        conflict,
        residual,
        assigned: Vec::with_capacity(set.len()),
        best: None,
        nodes: 0,
    };
    state.descend(0, 0);

    match state.best.take() {
        Some((_, assigned)) => {
            let mut placement = snapshot.initial_placement.clone();
            for (&i, s) in state.migrants.iter().zip(assigned) {
                placement[i] = s;
            }
            SolveResult::Optimal(solution_from(snapshot, placement, set, state.nodes, started))
        }
        None => SolveResult::Infeasible {
            reason: InfeasibleReason::SearchExhausted,
            nodes_explored: state.nodes,
            solve_time_s: started.elapsed().as_secs_f64(),
        },
    }
}

/// Full enumeration of every server assignment of the migrated instances,
/// without pruning, using [`check_feasible`] on each complete placement.
pub fn brute_force_oracle(problem: &MigrationProblem<'_>) -> Result<SolveResult> {
    let started = Instant::now();
    let snapshot = problem.snapshot;
    let set = problem.migration_set;
    let n_servers = snapshot.n_servers();
    let migrants: Vec<usize> = set.iter().collect();
    let size = (n_servers as f64).powi(migrants.len() as i32);
    if size > ORACLE_LIMIT {
        return Err(Error::SearchSpaceTooLarge { size, limit: ORACLE_LIMIT });
    }

    let mut placement = snapshot.initial_placement.clone();
    for &i in &migrants {
        placement[i] = 0;
    }
    let mut best: Option<(i64, Vec<usize>)> = None;
    let mut nodes = 0u64;
    loop {
        nodes += 1;
        if check_feasible(snapshot, &placement, set).is_feasible() {
            let (_, total) = downtime_us(snapshot, &placement, set);
            // odometer order is lexicographic, so strict improvement keeps the smallest tie
            if best.as_ref().is_none_or(|(b, _)| total < *b) {
                best = Some((total, placement.clone()));
            }
        }
        // advance the odometer, last migrant fastest
        let mut k = migrants.len();
        loop {
            if k == 0 {
                let result = match best {
                    Some((_, p)) => SolveResult::Optimal(solution_from(snapshot, p, set, nodes, started)),
                    None => SolveResult::Infeasible {
                        reason: InfeasibleReason::SearchExhausted,
                        nodes_explored: nodes,
                        solve_time_s: started.elapsed().as_secs_f64(),
                    },
                };
                return Ok(result);
            }
            k -= 1;
            let i = migrants[k];
            placement[i] += 1;
            if placement[i] < n_servers {
                break;
            }
            placement[i] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{InstanceSpec, Server, SNAPSHOT_FORMAT_VERSION};

    fn inst(type_index: usize, dependents: Vec<usize>, tol: f64, rec: f64, overhead: f64) -> InstanceSpec {
        InstanceSpec {
            type_index,
            demand: vec![1],
            delay_tolerance_ms: tol,
            recovery_delay_ms: rec,
            migration_overhead_ms: overhead,
            dependents,
        }
    }

    /// Three servers, two dependent instances initially on servers 0 and 1.
    fn pair_snapshot() -> NetworkSnapshot {
        NetworkSnapshot {
            format_version: SNAPSHOT_FORMAT_VERSION,
            snapshot_id: 0,
            seed: 0,
            chain_type_counts: vec![1, 1],
            servers: vec![Server { capacity: vec![4] }; 3],
            inter_server_delay_ms: vec![vec![0.0, 3.0, 4.0], vec![3.0, 0.0, 5.0], vec![4.0, 5.0, 0.0]],
            controller_delay_ms: vec![1.0, 1.5, 2.0],
            instances: vec![inst(0, vec![1], 9.0, 9.0, 3.0), inst(1, vec![0], 9.0, 9.0, 2.0)],
            initial_placement: vec![0, 1],
        }
    }

    #[test]
    fn placement_delay_substitution() {
        let snap = pair_snapshot();
        // instance 0 on server 2: dependent 1 initially on server 1, D[2][1] = 5, controller 2
        assert_eq!(placement_delay(&snap, 2, 0), 7.0);
    }

    #[test]
    fn placement_delay_without_dependents_is_controller_delay() {
        let mut snap = pair_snapshot();
        snap.instances[0].dependents.clear();
        snap.instances[1].dependents.clear();
        snap.controller_delay_ms[2] = 4.0;
        assert_eq!(placement_delay(&snap, 2, 0), 4.0);
    }

    #[test]
    fn colocated_dependent_adds_nothing() {
        let snap = pair_snapshot();
        // instance 0 on server 1 where its dependent sits: only controller delay
        assert_eq!(placement_delay(&snap, 1, 0), 1.5);
    }

    #[test]
    fn downtime_sums_migrated_instances() {
        let snap = pair_snapshot();
        let (per, total) = downtime(&snap, &[0, 1], MigrationSet::empty());
        assert_eq!(per, vec![0.0, 0.0]);
        assert_eq!(total, 0.0);

        let (per, total) = downtime(&snap, &[2, 1], MigrationSet::from_indices([0]));
        assert_eq!(per, vec![10.0, 0.0]);
        assert_eq!(total, 10.0);

        let set = MigrationSet::from_indices([0, 1]);
        let (per, total) = downtime(&snap, &[2, 0], set);
        assert_eq!(total, per.iter().sum::<f64>());
        assert_eq!(per[1], placement_delay(&snap, 0, 1) + 2.0);
    }

    #[test]
    fn comigrated_anti_affine_pair_is_rejected() {
        let snap = pair_snapshot();
        let set = MigrationSet::from_indices([0, 1]);
        let verdict = check_feasible(&snap, &[2, 2], set);
        assert_eq!(verdict.constraint(), Some(Constraint::AntiAffinityComigrated));
    }

    #[test]
    fn resident_anti_affine_dependent_is_rejected() {
        let snap = pair_snapshot();
        let verdict = check_feasible(&snap, &[1, 1], MigrationSet::from_indices([0]));
        assert_eq!(verdict.constraint(), Some(Constraint::AntiAffinityResident));
    }

    #[test]
    fn tolerance_below_recovery_permits_colocation() {
        let mut snap = pair_snapshot();
        snap.instances[1].delay_tolerance_ms = 8.99;
        assert!(check_feasible(&snap, &[1, 1], MigrationSet::from_indices([0])).is_feasible());
        // equality is anti-affine
        snap.instances[1].delay_tolerance_ms = 9.0;
        assert!(!check_feasible(&snap, &[1, 1], MigrationSet::from_indices([0])).is_feasible());
    }

    #[test]
    fn capacity_violation_is_tagged() {
        let mut snap = pair_snapshot();
        snap.instances[0].dependents.clear();
        snap.instances[1].dependents.clear();
        snap.instances[0].demand = vec![3];
        snap.instances[1].demand = vec![2];
        let verdict = check_feasible(&snap, &[1, 1], MigrationSet::from_indices([0]));
        assert_eq!(verdict.constraint(), Some(Constraint::Capacity));
    }

    #[test]
    fn structural_violations() {
        let snap = pair_snapshot();
        let set = MigrationSet::from_indices([0]);
        assert_eq!(check_feasible(&snap, &[2], set).constraint(), Some(Constraint::Assignment));
        assert_eq!(check_feasible(&snap, &[7, 1], set).constraint(), Some(Constraint::Assignment));
        assert_eq!(check_feasible(&snap, &[2, 2], set).constraint(), Some(Constraint::Pinned));
        assert_eq!(check_feasible(&snap, &[0, 1], set).constraint(), Some(Constraint::Relocation));
    }

    #[test]
    fn empty_set_keeps_initial_placement() {
        let snap = pair_snapshot();
        let problem = MigrationProblem::new(&snap, MigrationSet::empty()).unwrap();
        let solution = solve(&problem).solution().cloned().unwrap();
        assert_eq!(solution.placement, snap.initial_placement);
        assert_eq!(solution.total_downtime_ms, 0.0);
    }

    #[test]
    fn lone_instance_takes_cheapest_controller() {
        let mut snap = pair_snapshot();
        snap.instances[0].dependents.clear();
        snap.instances[1].dependents.clear();
        snap.controller_delay_ms = vec![0.5, 3.0, 2.0];
        // instance 1 starts on server 1; server 0 has the lowest controller delay
        let problem = MigrationProblem::new(&snap, MigrationSet::from_indices([1])).unwrap();
        let solution = solve(&problem).solution().cloned().unwrap();
        assert_eq!(solution.placement, vec![0, 0]);
        assert_eq!(solution.total_downtime_ms, 0.5 + 2.0);
    }

    #[test]
    fn ties_resolve_to_smallest_placement() {
        let mut snap = pair_snapshot();
        snap.instances[0].dependents.clear();
        snap.instances[1].dependents.clear();
        snap.controller_delay_ms = vec![2.0, 2.0, 2.0];
        let problem = MigrationProblem::new(&snap, MigrationSet::from_indices([0])).unwrap();
        assert_eq!(solve(&problem).solution().unwrap().placement, vec![1, 1]);
        assert_eq!(brute_force_oracle(&problem).unwrap().solution().unwrap().placement, vec![1, 1]);
    }

    #[test]
    fn single_server_cannot_host_a_migration() {
        let mut snap = pair_snapshot();
        snap.servers.truncate(1);
        snap.inter_server_delay_ms = vec![vec![0.0]];
        snap.controller_delay_ms = vec![1.0];
        snap.instances.truncate(1);
        snap.instances[0].dependents.clear();
        snap.chain_type_counts = vec![1];
        snap.initial_placement = vec![0];
        // the only server is the initial one
        let problem = MigrationProblem::new(&snap, MigrationSet::from_indices([0])).unwrap();
        assert!(!solve(&problem).is_optimal());
        assert!(!brute_force_oracle(&problem).unwrap().is_optimal());
        // nothing to move: the single candidate is kept
        let problem = MigrationProblem::new(&snap, MigrationSet::empty()).unwrap();
        assert_eq!(brute_force_oracle(&problem).unwrap().solution().unwrap().placement, vec![0]);
    }

    #[test]
    fn oracle_guard() {
        let config = crate::topology::GeneratorConfig::default();
        let snap = crate::topology::generate_snapshot(&config, 0).unwrap();
        let problem = MigrationProblem::new(&snap, MigrationSet::from_bits(0b11_1111)).unwrap();
        assert!(matches!(
            brute_force_oracle(&problem),
            Err(Error::SearchSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn migration_set_basics() {
        let set = MigrationSet::from_bits(0b000001);
        assert_eq!(set.flags(6), vec![1, 0, 0, 0, 0, 0]);
        let set = MigrationSet::from_indices([1, 4]);
        assert_eq!(set.iter().collect::<Vec<_>>(), vec![1, 4]);
        assert_eq!(set.len(), 2);
        assert_eq!(set.to_string(), "{1,4}");
    }
}
