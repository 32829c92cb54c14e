use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Config, FilterConfig, PolicyConfig};
use crate::error::HarnessError;
use crate::filters::{FilterKind, Mitigation, TransitionTensor};
use crate::pdmp::{Decision, Model, Observation, PatientState};
use crate::planner::{PlanDiagnostics, PlannerParams, RolloutPolicy};
use crate::rng::{stream, SimRng};

use super::agent::Agent;

/// Stream index of the hidden patient under a trajectory seed.
pub const PATIENT_STREAM: u64 = 0;
/// Stream index shared by the planner, the filters and the random policy.
pub const POLICY_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum Policy {
    Pomcp {
        filter: FilterKind,
        planner: PlannerParams,
    },
    ModeOracle,
    UniformRandom,
}

impl Policy {
    /// Resolves a strategy entry against the top-level config sections.
    pub fn from_config(policy: &PolicyConfig, config: &Config) -> Self {
        match policy {
            PolicyConfig::Pomcp { filter, planner } => Policy::Pomcp {
                filter: filter.unwrap_or(config.filter.kind),
                planner: planner.clone().unwrap_or_else(|| config.planner.clone()),
            },
            PolicyConfig::ModeOracle => Policy::ModeOracle,
            PolicyConfig::UniformRandom => Policy::UniformRandom,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Horizon,
    Death,
}

/// One decision epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitRecord {
    /// Observation `ω_n` available when deciding.
    pub observation: Observation,
    pub decision: Decision,
    /// Hidden state at the visit.
    pub state: PatientState,
    pub cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanDiagnostics>,
    /// Particle-filter mitigation used to absorb the next observation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mitigation: Option<Mitigation>,
    /// Conditional-filter update that fell back to the likelihood.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate_update: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub visits: Vec<VisitRecord>,
    pub final_state: PatientState,
    pub terminal: TerminalStatus,
    pub total_cost: f64,
    /// Time of the first relapse, or `H` without relapse.
    pub pfs_days: f64,
    /// Days with an active treatment in force, up to `H` or death.
    pub treatment_days: f64,
    pub runtime_s: f64,
}

impl TrajectoryRecord {
    pub fn n_visits(&self) -> usize {
        self.visits.len()
    }

    pub fn died(&self) -> bool {
        self.terminal == TerminalStatus::Death
    }

    /// Re-derives the record's bookkeeping: every step cost from the visit
    /// states, the total, visit spacing, the horizon and the metric ranges.
    pub fn verify(&self, model: &Model) -> Result<(), String> {
        let horizon = model.horizon();
        let mut total = 0.0;
        for (n, v) in self.visits.iter().enumerate() {
            let after = self.state_after(n);
            let expected = model.step_cost(v.state.marker, v.decision, after.marker);
            if (v.cost - expected).abs() > 1e-9 {
                return Err(format!(
                    "seed {}: visit {n} cost {} != {expected}",
                    self.seed, v.cost
                ));
            }
            if v.state.clock >= horizon {
                return Err(format!(
                    "seed {}: visit {n} at t = {} is past the horizon",
                    self.seed, v.state.clock
                ));
            }
            if !after.is_dead() && (after.clock - v.state.clock - v.decision.days()).abs() > 1e-9 {
                return Err(format!(
                    "seed {}: visit {n} gap differs from its delay",
                    self.seed
                ));
            }
            total += v.cost;
        }
        if (total - self.total_cost).abs() > 1e-9 {
            return Err(format!(
                "seed {}: total {} != sum of steps {total}",
                self.seed, self.total_cost
            ));
        }
        if !(0.0..=horizon).contains(&self.pfs_days)
            || !(0.0..=horizon).contains(&self.treatment_days)
        {
            return Err(format!(
                "seed {}: PFS or treatment time outside [0, H]",
                self.seed
            ));
        }
        if !self.died() && !(40..=160).contains(&self.n_visits()) {
            return Err(format!(
                "seed {}: {} visits for a survivor",
                self.seed,
                self.n_visits()
            ));
        }
        Ok(())
    }

    /// Hidden state right after visit `n`.
    pub fn state_after(&self, n: usize) -> &PatientState {
        self.visits
            .get(n + 1)
            .map(|v| &v.state)
            .unwrap_or(&self.final_state)
    }
}

/// Model plus whatever the filters need, shared by every trajectory.
#[derive(Debug, Clone)]
pub struct Harness {
    model: Model,
    filter: FilterConfig,
    tensor: Option<Arc<TransitionTensor>>,
}

impl Harness {
    pub fn new(model: Model, filter: FilterConfig) -> Self {
        Self {
            model,
            filter,
            tensor: None,
        }
    }

    pub fn from_config(config: &Config) -> Result<Self, HarnessError> {
        Ok(Self::new(config.compile_model()?, config.filter.clone()))
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn filter_config(&self) -> &FilterConfig {
        &self.filter
    }

    pub fn with_tensor(mut self, tensor: Arc<TransitionTensor>) -> Self {
        self.tensor = Some(tensor);
        self
    }

    /// The conditional-filter tensor, loaded from the cache directory or
    /// built on first use.
    pub fn tensor(&mut self) -> Result<Arc<TransitionTensor>, HarnessError> {
        if let Some(t) = &self.tensor {
            return Ok(Arc::clone(t));
        }
        let t = match &self.filter.cache_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(crate::error::FilterError::from)?;
                TransitionTensor::load_or_build(dir, &self.model, &self.filter.grid)?
            }
            None => TransitionTensor::build(&self.model, &self.filter.grid)?,
        };
        let t = Arc::new(t);
        self.tensor = Some(Arc::clone(&t));
        Ok(t)
    }

    /// Loads what `policies` need ahead of a parallel run.
    pub fn prepare<'a>(
        &mut self,
        policies: impl IntoIterator<Item = &'a Policy>,
    ) -> Result<(), HarnessError> {
        let conditional = policies.into_iter().any(|p| {
            matches!(
                p,
                Policy::Pomcp {
                    filter: FilterKind::Conditional,
                    ..
                }
            )
        });
        if conditional {
            self.tensor()?;
        }
        Ok(())
    }

    /// Planning agent starting from `s0` with this harness's filter settings.
    pub fn agent(
        &self,
        kind: FilterKind,
        planner: PlannerParams,
        rng: SimRng,
    ) -> Result<Agent, HarnessError> {
        let s0 = self.model.initial_state();
        Agent::new(
            kind,
            planner,
            self.filter.budget,
            &self.model,
            self.tensor.clone(),
            &s0,
            rng,
        )
    }

    /// Simulates one closed-loop follow-up from `s0` until `H` or death.
    pub fn run_trajectory(
        &self,
        policy: &Policy,
        seed: u64,
    ) -> Result<TrajectoryRecord, HarnessError> {
        let started = Instant::now();
        let model = &self.model;
        let horizon = model.horizon();
        let mut patient_rng = stream(seed, PATIENT_STREAM);
        let mut policy_rng = stream(seed, POLICY_STREAM);

        let mut agent = match policy {
            Policy::Pomcp { filter, planner } => {
                Some(self.agent(*filter, planner.clone(), stream(seed, POLICY_STREAM))?)
            }
            _ => None,
        };

        let mut state = model.initial_state();
        let mut observation = model.initial_observation();
        let mut visits = Vec::new();
        let mut first_relapse: Option<f64> = None;
        let mut treatment_days = 0.0;

        while !state.is_dead() && state.clock < horizon {
            let (decision, diagnostics) = match (&mut agent, policy) {
                (Some(agent), _) => {
                    let d = agent.recommend(model)?;
                    (d.decision, Some(d))
                }
                (None, Policy::ModeOracle) => (RolloutPolicy::mode_decision(state.mode), None),
                (None, _) => (
                    Decision::ALL[policy_rng.random_range(0..Decision::COUNT)],
                    None,
                ),
            };
            let step = model
                .generate_with(&state, decision, &mut patient_rng, |jump| {
                    if first_relapse.is_none() && jump.mode.is_disease() {
                        first_relapse = Some(jump.clock);
                    }
                })
                .map_err(crate::error::PlanError::from)?;
            if decision.treatment.is_active() {
                treatment_days += step.next_state.clock.min(horizon) - state.clock;
            }

            let mut visit = VisitRecord {
                observation,
                decision,
                state,
                cost: step.cost,
                plan: diagnostics,
                mitigation: None,
                degenerate_update: false,
            };
            let continues = !step.next_state.is_dead() && step.next_state.clock < horizon;
            if let (true, Some(agent)) = (continues, &mut agent) {
                let outcome = agent.observe(model, decision, &step.observation);
                visit.mitigation = outcome.mitigation;
                visit.degenerate_update = outcome.degenerate;
            }
            visits.push(visit);
            state = step.next_state;
            observation = step.observation;
        }

        let total_cost = visits.iter().map(|v| v.cost).sum();
        Ok(TrajectoryRecord {
            seed,
            visits,
            final_state: state,
            terminal: if state.is_dead() {
                TerminalStatus::Death
            } else {
                TerminalStatus::Horizon
            },
            total_cost,
            pfs_days: first_relapse.map_or(horizon, |t| t.min(horizon)),
            treatment_days,
            runtime_s: started.elapsed().as_secs_f64(),
        })
    }
}

/// Runs trajectories with seeds `seed, seed + 1, …, seed + n − 1` in
/// parallel. Records come back in seed order.
pub fn evaluate(
    harness: &Harness,
    policy: &Policy,
    n: usize,
    seed: u64,
) -> Result<Vec<TrajectoryRecord>, HarnessError> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| harness.run_trajectory(policy, seed.wrapping_add(i)))
        .collect()
}
