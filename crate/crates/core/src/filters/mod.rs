//! Beliefs over the hidden patient state.
//!
//! Two representations are offered: a [`ParticleFilter`] (uniform weights,
//! moving support) updated by simulation and rejection, and a
//! [`ConditionalFilter`] (fixed grid support, moving weights) updated by
//! weighted sums over a precomputed transition tensor.

mod conditional;
mod grid;
mod particle;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use conditional::{ConditionalFilter, ConditionalReport};
pub use grid::{tensor_key, Grid, GridPoint, GridSpec, Projection, TransitionTensor, CACHE_FORMAT};
pub use particle::{Mitigation, ParticleBudget, ParticleFilter, ParticleReport};

use crate::error::ConfigError;
use crate::pdmp::{Observation, PatientState};

/// Observation acceptance radius and tree bin width `𝒟`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Precision(f64);

impl Precision {
    pub fn new(width: f64) -> Result<Self, ConfigError> {
        if width > 0.0 && width.is_finite() {
            Ok(Self(width))
        } else {
            Err(ConfigError::invalid(format!(
                "precision must be positive, got {width}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Precision {
    type Error = ConfigError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<Precision> for f64 {
    fn from(p: Precision) -> f64 {
        p.0
    }
}

/// Distance between a received and a simulated observation. Times agree by
/// construction, so only readings are compared; the death sentinel is at
/// distance zero from itself and infinitely far from any reading.
pub fn observation_distance(a: &Observation, b: &Observation) -> f64 {
    match (a.terminal, b.terminal) {
        (true, true) => 0.0,
        (false, false) => (a.reading - b.reading).abs(),
        _ => f64::INFINITY,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Particle,
    Conditional,
}

#[derive(Debug, Clone)]
pub enum BeliefFilter {
    Particle(ParticleFilter),
    Conditional(ConditionalFilter),
}

impl BeliefFilter {
    pub fn kind(&self) -> FilterKind {
        match self {
            BeliefFilter::Particle(_) => FilterKind::Particle,
            BeliefFilter::Conditional(_) => FilterKind::Conditional,
        }
    }

    /// `k` i.i.d. states drawn from the belief.
    pub fn sample_states<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<PatientState> {
        match self {
            BeliefFilter::Particle(f) => f.sample_states(k, rng),
            BeliefFilter::Conditional(f) => f.sample_states(k, rng),
        }
    }

    /// Probability of each mode, indexed by [`crate::pdmp::Mode::index`].
    pub fn mode_marginal(&self) -> [f64; 4] {
        match self {
            BeliefFilter::Particle(f) => f.mode_marginal(),
            BeliefFilter::Conditional(f) => f.mode_marginal(),
        }
    }

    pub fn clock(&self) -> f64 {
        match self {
            BeliefFilter::Particle(f) => f.clock(),
            BeliefFilter::Conditional(f) => f.clock(),
        }
    }

    /// Probability that the patient is dead.
    pub fn death_probability(&self) -> f64 {
        self.mode_marginal()[3]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precision_must_be_positive() {
        assert!(Precision::new(0.01).is_ok());
        assert!(Precision::new(0.0).is_err());
        assert!(Precision::new(-1.0).is_err());
        assert!(serde_json::from_str::<Precision>("0").is_err());
        assert_eq!(serde_json::from_str::<Precision>("0.1").unwrap().get(), 0.1);
    }

    #[test]
    fn distance_treats_sentinel_apart() {
        let a = Observation::reading(2.0, 15.0);
        let b = Observation::reading(2.5, 15.0);
        let dead = Observation::death(40.0, 12.0);
        assert_eq!(observation_distance(&a, &b), 0.5);
        assert_eq!(observation_distance(&dead, &dead), 0.0);
        assert!(observation_distance(&a, &dead).is_infinite());
    }
}
