use std::sync::Arc;

use crate::error::HarnessError;
use crate::filters::{
    BeliefFilter, ConditionalFilter, FilterKind, Mitigation, ParticleBudget, ParticleFilter,
    TransitionTensor,
};
use crate::pdmp::{Decision, Model, Observation, PatientState};
use crate::planner::{bin_observation, plan, PlanDiagnostics, PlannerParams, SearchTree};
use crate::rng::SimRng;

/// What one belief update did.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateOutcome {
    /// Particle-filter mitigation stage, if the belief is particle-based.
    pub mitigation: Option<Mitigation>,
    /// Conditional-filter update fell back to the likelihood.
    pub degenerate: bool,
}

/// The practitioner side of a follow-up: belief, search tree and the random
/// stream both consume. Calls alternate [`Agent::recommend`] and
/// [`Agent::observe`]; the sequence of rng draws depends only on that call
/// sequence, so replaying the same calls reproduces every output.
#[derive(Debug, Clone)]
pub struct Agent {
    filter: BeliefFilter,
    tree: SearchTree,
    planner: PlannerParams,
    budget: ParticleBudget,
    rng: SimRng,
}

impl Agent {
    /// Belief concentrated on `initial`. The conditional filter needs `tensor`.
    pub fn new(
        kind: FilterKind,
        planner: PlannerParams,
        budget: ParticleBudget,
        model: &Model,
        tensor: Option<Arc<TransitionTensor>>,
        initial: &PatientState,
        rng: SimRng,
    ) -> Result<Self, HarnessError> {
        planner.validate()?;
        let filter = match kind {
            FilterKind::Particle => {
                BeliefFilter::Particle(ParticleFilter::new(*initial, planner.particles)?)
            }
            FilterKind::Conditional => {
                let tensor = tensor.ok_or_else(|| {
                    crate::error::ConfigError::invalid(
                        "conditional filter used before the tensor was prepared",
                    )
                })?;
                BeliefFilter::Conditional(ConditionalFilter::new(tensor, model, initial)?)
            }
        };
        let tree = SearchTree::new(planner.n_init, planner.v_init, planner.support_cap());
        Ok(Self {
            filter,
            tree,
            planner,
            budget,
            rng,
        })
    }

    pub fn filter(&self) -> &BeliefFilter {
        &self.filter
    }

    pub fn tree(&self) -> &SearchTree {
        &self.tree
    }

    pub fn planner(&self) -> &PlannerParams {
        &self.planner
    }

    /// Plans from the current belief, growing the retained tree.
    pub fn recommend(&mut self, model: &Model) -> Result<PlanDiagnostics, HarnessError> {
        Ok(plan(
            &mut self.tree,
            &self.filter,
            model,
            &self.planner,
            &mut self.rng,
        )?)
    }

    /// Commits `decision`, then absorbs the observation of the next visit.
    pub fn observe(
        &mut self,
        model: &Model,
        decision: Decision,
        observation: &Observation,
    ) -> UpdateOutcome {
        self.tree.commit_and_prune(
            decision,
            bin_observation(observation, self.planner.precision),
        );
        match &self.filter {
            BeliefFilter::Particle(pf) => {
                let seeds: Vec<PatientState> = self.tree.root().particles.iter().copied().collect();
                let (next, report) = pf.update_seeded(
                    model,
                    decision,
                    observation,
                    self.planner.precision,
                    &self.budget,
                    &seeds,
                    &mut self.rng,
                );
                self.filter = BeliefFilter::Particle(next);
                UpdateOutcome {
                    mitigation: Some(report.stage),
                    degenerate: false,
                }
            }
            BeliefFilter::Conditional(cf) => {
                let (next, report) = cf.update(decision, observation);
                self.filter = BeliefFilter::Conditional(next);
                UpdateOutcome {
                    mitigation: None,
                    degenerate: report.degenerate,
                }
            }
        }
    }
}
