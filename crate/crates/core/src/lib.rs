//! Monte-Carlo planning for patient follow-up.
//!
//! The disease is a controlled piecewise-deterministic Markov process
//! ([`pdmp`]); beliefs over the hidden state are kept either by a particle
//! filter or by a fixed-support conditional filter ([`filters`]); decisions
//! come from an adapted POMCP tree search ([`planner`]); [`harness`] runs
//! closed-loop trajectories and aggregates the metrics.

pub mod config;
pub mod error;
pub mod filters;
pub mod harness;
pub mod pdmp;
pub mod planner;
pub mod rng;
pub mod stats;

pub use error::{ConfigError, DynamicsError, FilterError, HarnessError, PlanError, ReportError};
