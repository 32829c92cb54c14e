use thiserror::Error;

use crate::pdmp::{Mode, Treatment};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read configuration: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed configuration: {0}")]
    Json(#[from] serde_json::Error),
}

impl ConfigError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        ConfigError::Invalid(msg.into())
    }
}

/// Contract violations of the PDMP generator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("the patient is dead; no further visits can be simulated")]
    DeadPatient,
    #[error(
        "no jump is possible from mode {mode:?} under treatment {treatment} at marker {marker}"
    )]
    InvalidJump {
        mode: Mode,
        treatment: Treatment,
        marker: f64,
    },
}

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("filter size must be at least 1")]
    EmptyFilter,
    #[error("grid sizes must be positive, got {0:?}")]
    BadGrid([usize; 3]),
    #[error("transition row {row} for decision {decision} received no mass")]
    EmptyRow { decision: usize, row: usize },
    #[error("conditional filter needs a positive observation noise variance")]
    NoiselessModel,
    #[error("transition cache mismatch: {0}")]
    CacheMismatch(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("cache I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache format error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("cannot plan for a dead patient")]
    DeadPatient,
    #[error("the belief has no states to sample from")]
    EmptyBelief,
    #[error("the follow-up horizon is reached; no decision is needed")]
    HorizonReached,
    #[error("invalid planner parameters: {0}")]
    InvalidParams(String),
    #[error("decision {0} is not a child of the current root")]
    UnknownDecision(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no strategies to report")]
    NoStrategies,
    #[error("normalization undefined: {0}")]
    Normalization(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
