//! Overhang Tower: a sequential block-stacking task where the goal is to
//! maximize horizontal overhang while keeping the tower stable after every
//! placement.
//!
//! The crate covers the task rules ([`model`]), a deterministic stability
//! oracle ([`stability`]), noisy-simulation and learned-heuristic stability
//! predictors ([`predictors`]), myopic and beam-lookahead planners
//! ([`planners`]), order-dependency and likelihood metrics ([`metrics`]),
//! the batch experiment harness ([`experiment`]) and the interactive
//! session state machine used by the HTTP service ([`session`]).

pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod planners;
pub mod predictors;
pub mod rng;
pub mod sampling;
pub mod session;
pub mod stability;
pub mod trace;

pub use error::{Error, Result};
pub use model::{
    block_mass, episode_reward, overhang, Action, BlockSpec, DecisionState, Legality,
    PlacedBlock, TaskSpec, TowerGeometry,
};

/// Version tag carried by every file this crate reads or writes.
pub const FORMAT_TAG: &str = "overhang/v1";
