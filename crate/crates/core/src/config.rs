//! JSON run configuration shared by the CLI and the session service. Every
//! section and field is optional and falls back to the reference values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ConfigError;
use crate::filters::{FilterKind, GridSpec, ParticleBudget};
use crate::pdmp::{CostParams, Model, ModelParams};
use crate::planner::PlannerParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub kind: FilterKind,
    pub grid: GridSpec,
    /// Directory of cached transition tensors; `None` rebuilds in memory.
    pub cache_dir: Option<PathBuf>,
    pub budget: ParticleBudget,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            kind: FilterKind::Particle,
            grid: GridSpec::default(),
            cache_dir: None,
            budget: ParticleBudget::default(),
        }
    }
}

/// Closed-loop policy under evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum PolicyConfig {
    /// Tree search; missing fields come from the top-level sections.
    Pomcp {
        #[serde(default)]
        filter: Option<FilterKind>,
        #[serde(default)]
        planner: Option<PlannerParams>,
    },
    /// Treats the true hidden mode, revisiting every 15 days.
    ModeOracle,
    /// Uniform over the nine decisions.
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub name: String,
    #[serde(flatten)]
    pub policy: PolicyConfig,
}

/// Reference values for the normalized metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// Death rate of the uniform-random strategy.
    pub random_death_rate: f64,
    /// Mean cost of the uniform-random strategy; estimated when absent.
    pub random_cost: Option<f64>,
    /// Lower reference cost `v0`; 0 when absent.
    pub v0: Option<f64>,
    /// Trajectories used to estimate `random_cost`.
    pub random_runs: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            random_death_rate: 0.05,
            random_cost: None,
            v0: None,
            random_runs: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    pub n: usize,
    pub seed: u64,
    pub strategies: Vec<StrategyConfig>,
    pub baselines: BaselineConfig,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            n: 100,
            seed: 1,
            strategies: vec![StrategyConfig {
                name: "pomcp".into(),
                policy: PolicyConfig::Pomcp {
                    filter: None,
                    planner: None,
                },
            }],
            baselines: BaselineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub model: ModelParams,
    pub cost: CostParams,
    pub planner: PlannerParams,
    pub filter: FilterConfig,
    pub evaluation: EvaluationConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: Config = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate()?;
        self.cost.validate()?;
        self.planner
            .validate()
            .map_err(|e| ConfigError::invalid(e.to_string()))?;
        let g = &self.filter.grid;
        if g.remission < 2 || g.disease1 < 2 || g.disease2 < 2 || g.samples_per_row == 0 {
            return Err(ConfigError::invalid(
                "grid needs at least 2 states per mode and 1 sample per row",
            ));
        }
        let b = &self.filter.budget;
        if b.rejection == 0 || b.fallback == 0 {
            return Err(ConfigError::invalid("particle budgets must be positive"));
        }
        let e = &self.evaluation;
        if e.n == 0 {
            return Err(ConfigError::invalid("evaluation.n must be at least 1"));
        }
        for s in &e.strategies {
            if let PolicyConfig::Pomcp {
                planner: Some(p), ..
            } = &s.policy
            {
                p.validate()
                    .map_err(|err| ConfigError::invalid(format!("strategy {}: {err}", s.name)))?;
            }
        }
        let r = e.baselines.random_death_rate;
        if !(r > 0.0 && r <= 1.0) {
            return Err(ConfigError::invalid(
                "baselines.random_death_rate must lie in (0, 1]",
            ));
        }
        Ok(())
    }

    pub fn compile_model(&self) -> Result<Model, ConfigError> {
        Model::new(self.model.clone(), self.cost)
    }

    /// SHA-256 of the canonical JSON form; recorded in run manifests.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("configuration serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{AdaptiveRule, AlphaSpec};

    #[test]
    fn empty_document_gives_defaults() {
        let c = Config::from_json("{}").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.model.horizon, 2400.0);
        assert_eq!(c.planner.n_search, 500);
    }

    #[test]
    fn strategies_parse() {
        let c = Config::from_json(
            r#"{"evaluation": {"n": 5, "strategies": [
                {"name": "cf", "policy": "pomcp", "filter": "conditional", "planner": {"n_search": 100, "alpha": "rev-entropy"}},
                {"name": "oracle", "policy": "mode_oracle"},
                {"name": "random", "policy": "uniform_random"}
            ]}}"#,
        )
        .unwrap();
        let s = &c.evaluation.strategies;
        assert_eq!(s.len(), 3);
        let PolicyConfig::Pomcp { filter, planner } = &s[0].policy else {
            panic!()
        };
        assert_eq!(*filter, Some(FilterKind::Conditional));
        assert_eq!(
            planner.as_ref().unwrap().alpha,
            AlphaSpec::Adaptive(AdaptiveRule::RevEntropy)
        );
        assert_eq!(s[2].policy, PolicyConfig::UniformRandom);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(Config::from_json(r#"{"model": {"death_level": 0.5}}"#).is_err());
        assert!(Config::from_json(r#"{"planner": {"n_search": 0}}"#).is_err());
        assert!(Config::from_json(r#"{"evaluation": {"n": 0}}"#).is_err());
        assert!(Config::from_json(r#"{"model": {"noise_variance": -1}}"#).is_err());
        assert!(Config::from_json("[1]").is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = Config::default();
        let mut b = Config::default();
        assert_eq!(a.digest(), b.digest());
        b.evaluation.seed = 2;
        assert_ne!(a.digest(), b.digest());
    }
}
