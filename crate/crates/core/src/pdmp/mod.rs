//! The controlled piecewise-deterministic disease model.

mod dynamics;
mod params;
mod state;

pub use dynamics::{Model, StepOutcome};
pub use params::{
    default_relapse_total, CostParams, EscapeRisk, ModelParams, PiecewiseLinear, Slopes,
    DEFAULT_HORIZON,
};
pub use state::{Decision, Delay, Mode, Observation, PatientState, Treatment};
