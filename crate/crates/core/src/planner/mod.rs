//! Adapted POMCP: a history-indexed search tree over decisions and binned
//! observations, explored by UCB selection and evaluated by rollouts through
//! the PDMP generator.
//!
//! The tree survives between real visits: after a decision is applied and
//! its observation received, [`SearchTree::commit_and_prune`] re-roots it at
//! the matching child so earlier simulations keep contributing.

mod search;
mod tree;

use serde::{Deserialize, Serialize};

pub use search::{plan, rollout, tree_simulate, ucb_select, PlanContext};
pub use tree::{ActionNode, HistoryKey, HistoryToken, ObservationNode, SearchTree};

use crate::error::PlanError;
use crate::filters::{BeliefFilter, Precision};
use crate::pdmp::{Decision, Delay, Mode, Observation, Treatment};

/// Observation interval `[k𝒟, (k+1)𝒟)`, or the death sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationBin {
    Interval(i64),
    Terminal,
}

pub fn bin_observation(observation: &Observation, precision: Precision) -> ObservationBin {
    if observation.terminal {
        ObservationBin::Terminal
    } else {
        ObservationBin::Interval((observation.reading / precision.get()).floor() as i64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutPolicy {
    /// Uniform over the nine decisions.
    Uniform,
    /// Treat the simulated hidden mode and revisit after 15 days.
    Mode,
}

impl RolloutPolicy {
    /// Decision of the mode policy for a live state.
    pub fn mode_decision(mode: Mode) -> Decision {
        let treatment = match mode {
            Mode::Disease1 => Treatment::A,
            Mode::Disease2 => Treatment::B,
            Mode::Remission | Mode::Death => Treatment::None,
        };
        Decision::new(treatment, Delay::Days15)
    }
}

/// Entropy-driven choices of the tradeoff `α′`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdaptiveRule {
    Entropy,
    RevEntropy,
    #[serde(rename = "rev-entropy-2")]
    RevEntropy2,
}

/// Tradeoff `α′ ∈ (0, 1]`: a number, or one of `"entropy"`, `"rev-entropy"`,
/// `"rev-entropy-2"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Fixed(f64),
    Adaptive(AdaptiveRule),
}

/// Mode-marginal entropy `E = Σ_{m<3} p_m ln p_m` of the live modes, mapped
/// through `rule` with `E_max = ln(1/3)`.
pub fn adaptive_alpha(filter: &BeliefFilter, rule: AdaptiveRule) -> f64 {
    alpha_from_marginal(filter.mode_marginal(), rule)
}

pub fn alpha_from_marginal(marginal: [f64; 4], rule: AdaptiveRule) -> f64 {
    let live: f64 = marginal[..3].iter().sum();
    let entropy = if live > 0.0 {
        marginal[..3]
            .iter()
            .map(|&p| p / live)
            .filter(|&p| p > 0.0)
            .map(|p| p * p.ln())
            .sum()
    } else {
        0.0
    };
    let ratio = entropy / (1.0f64 / 3.0).ln();
    match rule {
        AdaptiveRule::Entropy => ratio,
        AdaptiveRule::RevEntropy => 1.0 - ratio,
        AdaptiveRule::RevEntropy2 => 1.0 - ratio / 2.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerParams {
    /// Root simulations per planning call.
    pub n_search: usize,
    /// Filter size K; node supports are capped at `10·K`.
    pub particles: usize,
    pub alpha: AlphaSpec,
    /// Bin width and particle acceptance radius `𝒟`.
    pub precision: Precision,
    pub rollout: RolloutPolicy,
    pub n_init: u64,
    pub v_init: f64,
    /// Root-parallel workers; 1 keeps a single tree.
    pub workers: usize,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            n_search: 500,
            particles: 500,
            alpha: AlphaSpec::Fixed(0.99),
            precision: Precision::new(0.01).expect("positive"),
            rollout: RolloutPolicy::Mode,
            n_init: 1,
            v_init: 0.0,
            workers: 1,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), PlanError> {
        let bad = |m: &str| Err(PlanError::InvalidParams(m.to_string()));
        if self.n_search == 0 {
            return bad("n_search must be at least 1");
        }
        if self.particles == 0 {
            return bad("particles must be at least 1");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if let AlphaSpec::Fixed(a) = self.alpha {
            if !(a > 0.0 && a <= 1.0) {
                return bad("alpha must lie in (0, 1]");
            }
        }
        if !self.v_init.is_finite() {
            return bad("v_init must be finite");
        }
        Ok(())
    }

    /// Capacity of each node particle support.
    pub fn support_cap(&self) -> usize {
        self.particles.saturating_mul(10)
    }

    /// `α′` in force for `filter`.
    pub fn tradeoff(&self, filter: &BeliefFilter) -> f64 {
        match self.alpha {
            AlphaSpec::Fixed(a) => a,
            AlphaSpec::Adaptive(rule) => adaptive_alpha(filter, rule),
        }
    }
}

/// Record of one planning call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDiagnostics {
    pub decision: Decision,
    /// `V(h_n d)` in [`Decision::ALL`] order.
    pub values: [f64; 9],
    /// `N(h_n d)` in [`Decision::ALL`] order, `N_init` included.
    pub visits: [u64; 9],
    pub root_visits: u64,
    pub simulations: usize,
    pub tradeoff: f64,
    /// Exploration constant `α = (1 − α′) Ĉ` at the end of the search.
    pub exploration: f64,
    pub elapsed_ms: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binning_examples() {
        let p = |w| Precision::new(w).unwrap();
        assert_eq!(
            bin_observation(&Observation::reading(1.04, 15.0), p(0.1)),
            ObservationBin::Interval(10)
        );
        assert_eq!(
            bin_observation(&Observation::reading(1.04, 15.0), p(1.0)),
            ObservationBin::Interval(1)
        );
        assert_eq!(
            bin_observation(&Observation::reading(-0.2, 15.0), p(1.0)),
            ObservationBin::Interval(-1)
        );
        for w in [0.01, 1.0, 7.0] {
            assert_eq!(
                bin_observation(&Observation::death(40.0, 3.0), p(w)),
                ObservationBin::Terminal
            );
        }
    }

    #[test]
    fn adaptive_rules() {
        let dirac = [0.0, 1.0, 0.0, 0.0];
        assert_eq!(alpha_from_marginal(dirac, AdaptiveRule::Entropy), 0.0);
        assert_eq!(alpha_from_marginal(dirac, AdaptiveRule::RevEntropy), 1.0);
        let uniform = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0];
        assert!((alpha_from_marginal(uniform, AdaptiveRule::Entropy) - 1.0).abs() < 1e-12);
        assert!((alpha_from_marginal(uniform, AdaptiveRule::RevEntropy2) - 0.5).abs() < 1e-12);
        // Death mass is excluded before normalizing.
        let with_death = [0.25, 0.25, 0.25, 0.25];
        assert!((alpha_from_marginal(with_death, AdaptiveRule::Entropy) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn params_parse_and_validate() {
        let p: PlannerParams =
            serde_json::from_str(r#"{"alpha": "rev-entropy-2", "n_search": 100}"#).unwrap();
        assert_eq!(p.alpha, AlphaSpec::Adaptive(AdaptiveRule::RevEntropy2));
        assert_eq!(p.particles, 500);
        let p: PlannerParams =
            serde_json::from_str(r#"{"alpha": 0.5, "rollout": "uniform"}"#).unwrap();
        assert_eq!(p.alpha, AlphaSpec::Fixed(0.5));
        assert_eq!(p.rollout, RolloutPolicy::Uniform);
        assert!(PlannerParams {
            n_search: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(PlannerParams {
            alpha: AlphaSpec::Fixed(0.0),
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(serde_json::from_str::<PlannerParams>(r#"{"alpha": "greedy"}"#).is_err());
    }

    #[test]
    fn mode_policy_table() {
        assert_eq!(
            RolloutPolicy::mode_decision(Mode::Remission).to_string(),
            "(none, 15)"
        );
        assert_eq!(
            RolloutPolicy::mode_decision(Mode::Disease1).to_string(),
            "(a, 15)"
        );
        assert_eq!(
            RolloutPolicy::mode_decision(Mode::Disease2).to_string(),
            "(b, 15)"
        );
    }
}
