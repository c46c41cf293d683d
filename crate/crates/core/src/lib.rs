//! VNF instance-migration laboratory.
//!
//! * [`topology`]: seeded network snapshots and the greedy pre-migration placement.
//! * [`optimizer`]: exact downtime-minimizing migration solver and its enumeration oracle.
//! * [`dataset`]: labeled migration scenarios, feature encoding, split and normalization.
//! * [`mlp`]: dense + batch-norm network trained with binary cross-entropy.
//! * [`pso`]: particle swarm tuning of the learning rate over cross-validated loss.
//! * [`eval`]: accuracy, delay-difference and run-time analyses.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod io;
pub mod mlp;
pub mod optimizer;
pub mod pso;
pub mod topology;

pub use error::{Error, Result};
pub use optimizer::{
    brute_force_oracle, check_feasible, solve, Constraint, MigrationProblem, MigrationSet, PlacementSolution,
    SolveResult, Verdict,
};
pub use topology::{generate_snapshot, GeneratorConfig, NetworkSnapshot};
