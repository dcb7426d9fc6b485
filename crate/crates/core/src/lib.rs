//! Episodic linear-MDP reinforcement learning with limited adaptivity.
//!
//! Least-squares value iteration with UCB bonuses (LSVI-UCB) under three
//! refit schedules: every episode, a uniform batch grid fixed in advance, and
//! a determinant-growth trigger that bounds the number of policy switches.
//! Finite instances come with exact dynamic-programming oracles so regret is
//! computed without Monte-Carlo noise, and [`diagnostics`] replays recorded
//! runs to check the supporting inequalities numerically.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`, which is what the CLI uses.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adaptivity;
pub mod diagnostics;
pub mod env;
pub mod error;
pub mod gram;
pub mod harness;
pub mod linalg;
pub mod lsvi;
pub mod scalar;

pub use adaptivity::{
    batch_grid, det_switch_decision, eta_from_budget, log_eta_from_budget, switch_count_bound, BatchGrid, Scheduler,
    SchedulerKind,
};
pub use env::{
    build_random_spec, build_random_spec_with, build_tabular_embedding, optimal_values, policy_q_values,
    policy_values, realizability_check, EpisodeTrace, FeatureMap, InitialState, LinearMDPSpec, OptimalValues, Policy,
    RandomSpecConfig, SpecDocument,
};
pub use error::{Error, Result};
pub use gram::GramState;
pub use harness::{
    run_episode, run_experiment, EpisodeRecord, RunConfig, RunReport, RunStatus, Runner, SchedulerConfig,
};
pub use linalg::Matrix;
pub use lsvi::{fit_q_snapshot, fit_with_grams, QSnapshot};
pub use scalar::Scalar;

pub type Gram = GramState<f64>;
pub type Spec = LinearMDPSpec<f64>;
pub type Features = FeatureMap<f64>;
pub type Trace = EpisodeTrace<f64>;
pub type Snapshot = QSnapshot<f64>;
pub type Config = RunConfig<f64>;
pub type Report = RunReport<f64>;

pub type Gram32 = GramState<f32>;
pub type Spec32 = LinearMDPSpec<f32>;
pub type Snapshot32 = QSnapshot<f32>;
pub type Report32 = RunReport<f32>;
