use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{observation_distance, Precision};
use crate::error::FilterError;
use crate::pdmp::{Decision, Model, Observation, PatientState};

/// Most severe deprivation mitigation that fired during an update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mitigation {
    None,
    Backstep,
    Revigoration,
    BestK,
}

/// Simulation budgets of a particle update, in draws per target particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParticleBudget {
    pub rejection: usize,
    pub backstep: usize,
    /// Transitions sampled by the best-K fallback (1000 per particle).
    pub fallback: usize,
}

impl Default for ParticleBudget {
    fn default() -> Self {
        Self {
            rejection: 400,
            backstep: 200,
            fallback: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleReport {
    pub stage: Mitigation,
    /// Particles taken over from the search tree.
    pub seeded: usize,
    pub accepted: usize,
    pub accepted_backstep: usize,
    pub simulations: usize,
}

#[derive(Debug, Clone)]
struct PreviousStep {
    particles: Vec<PatientState>,
    decision: Decision,
    observation: Observation,
}

/// Uniform empirical belief over `K` simulated states.
#[derive(Debug, Clone)]
pub struct ParticleFilter {
    particles: Vec<PatientState>,
    target: usize,
    previous: Option<Arc<PreviousStep>>,
}

impl ParticleFilter {
    /// `k` copies of the known initial state.
    pub fn new(initial: PatientState, k: usize) -> Result<Self, FilterError> {
        if k == 0 {
            return Err(FilterError::EmptyFilter);
        }
        Ok(Self {
            particles: vec![initial; k],
            target: k,
            previous: None,
        })
    }

    pub fn from_particles(particles: Vec<PatientState>) -> Result<Self, FilterError> {
        if particles.is_empty() {
            return Err(FilterError::EmptyFilter);
        }
        Ok(Self {
            target: particles.len(),
            particles,
            previous: None,
        })
    }

    pub fn particles(&self) -> &[PatientState] {
        &self.particles
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn clock(&self) -> f64 {
        self.particles[0].clock
    }

    pub fn sample_states<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<PatientState> {
        (0..k)
            .map(|_| self.particles[rng.random_range(0..self.particles.len())])
            .collect()
    }

    pub fn mode_marginal(&self) -> [f64; 4] {
        let mut counts = [0.0; 4];
        for p in &self.particles {
            counts[p.mode.index()] += 1.0;
        }
        let n = self.particles.len() as f64;
        counts.map(|c| c / n)
    }

    /// Rejection update with the three-stage deprivation mitigation.
    pub fn update<R: Rng + ?Sized>(
        &self,
        model: &Model,
        decision: Decision,
        observation: &Observation,
        precision: Precision,
        budget: &ParticleBudget,
        rng: &mut R,
    ) -> (ParticleFilter, ParticleReport) {
        self.update_seeded(model, decision, observation, precision, budget, &[], rng)
    }

    /// Like [`ParticleFilter::update`], starting from `seeds`: states already
    /// known to be compatible with `observation` (for instance those gathered
    /// by the search tree under the committed history).
    #[allow(clippy::too_many_arguments)]
    pub fn update_seeded<R: Rng + ?Sized>(
        &self,
        model: &Model,
        decision: Decision,
        observation: &Observation,
        precision: Precision,
        budget: &ParticleBudget,
        seeds: &[PatientState],
        rng: &mut R,
    ) -> (ParticleFilter, ParticleReport) {
        let k = self.target;
        let radius = precision.get();
        let mut accepted: Vec<PatientState> = seeds.iter().take(k).copied().collect();
        let mut report = ParticleReport {
            stage: Mitigation::None,
            seeded: accepted.len(),
            accepted: 0,
            accepted_backstep: 0,
            simulations: 0,
        };

        let alive: Vec<&PatientState> = self.particles.iter().filter(|p| !p.is_dead()).collect();
        let draw = |rng: &mut R| -> Option<PatientState> {
            (!alive.is_empty()).then(|| *alive[rng.random_range(0..alive.len())])
        };

        for _ in 0..budget.rejection * k {
            if accepted.len() >= k {
                break;
            }
            let Some(s) = draw(rng) else { break };
            let out = model.generate(&s, decision, rng).expect("alive particle");
            report.simulations += 1;
            if observation_distance(&out.observation, observation) < radius {
                accepted.push(out.next_state);
                report.accepted += 1;
            }
        }

        if accepted.len() < k {
            if let Some(prev) = &self.previous {
                report.stage = Mitigation::Backstep;
                let before: Vec<&PatientState> =
                    prev.particles.iter().filter(|p| !p.is_dead()).collect();
                if !before.is_empty() {
                    for _ in 0..budget.backstep * k {
                        if accepted.len() >= k {
                            break;
                        }
                        let s = *before[rng.random_range(0..before.len())];
                        let first = model
                            .generate(&s, prev.decision, rng)
                            .expect("alive particle");
                        report.simulations += 1;
                        if first.next_state.is_dead()
                            || observation_distance(&first.observation, &prev.observation) >= radius
                        {
                            continue;
                        }
                        let second = model
                            .generate(&first.next_state, decision, rng)
                            .expect("alive particle");
                        report.simulations += 1;
                        if observation_distance(&second.observation, observation) < radius {
                            accepted.push(second.next_state);
                            report.accepted_backstep += 1;
                        }
                    }
                }
            }
        }

        if !accepted.is_empty() && accepted.len() < k {
            report.stage = Mitigation::Revigoration;
            let pool = accepted.len();
            while accepted.len() < k {
                let dup = accepted[rng.random_range(0..pool)];
                accepted.push(dup);
            }
        }

        if accepted.is_empty() {
            report.stage = Mitigation::BestK;
            accepted = self.best_k(
                model,
                decision,
                observation,
                budget.fallback * k,
                rng,
                &mut report,
            );
        }

        accepted.truncate(k);
        let next = ParticleFilter {
            particles: accepted,
            target: k,
            previous: Some(Arc::new(PreviousStep {
                particles: self.particles.clone(),
                decision,
                observation: *observation,
            })),
        };
        (next, report)
    }

    /// Keeps the `K` simulated successors whose observations are closest.
    fn best_k<R: Rng + ?Sized>(
        &self,
        model: &Model,
        decision: Decision,
        observation: &Observation,
        draws: usize,
        rng: &mut R,
        report: &mut ParticleReport,
    ) -> Vec<PatientState> {
        let k = self.target;
        let alive: Vec<&PatientState> = self.particles.iter().filter(|p| !p.is_dead()).collect();
        if alive.is_empty() {
            return self.particles.clone();
        }
        let mut pool: Vec<(f64, PatientState)> = Vec::with_capacity(draws.max(k));
        for _ in 0..draws.max(k) {
            let s = *alive[rng.random_range(0..alive.len())];
            let out = model.generate(&s, decision, rng).expect("alive particle");
            report.simulations += 1;
            pool.push((
                observation_distance(&out.observation, observation),
                out.next_state,
            ));
        }
        if pool.len() > k {
            pool.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0));
            pool.truncate(k);
        }
        pool.into_iter().map(|(_, s)| s).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdmp::{CostParams, Delay, Mode, ModelParams, Treatment};
    use crate::rng::seeded;

    fn noiseless_quiet() -> Model {
        Model::new(
            ModelParams::default()
                .without_risk()
                .with_noise_variance(0.0),
            CostParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn init_is_dirac() {
        let s0 = PatientState::initial(1.0);
        let f = ParticleFilter::new(s0, 100).unwrap();
        assert_eq!(f.particles().len(), 100);
        let mut rng = seeded(0);
        assert!(f.sample_states(50, &mut rng).iter().all(|s| *s == s0));
        assert_eq!(f.mode_marginal(), [1.0, 0.0, 0.0, 0.0]);
        assert!(ParticleFilter::new(s0, 0).is_err());
        assert!(f.sample_states(0, &mut rng).is_empty());
    }

    #[test]
    fn consistent_noiseless_observation_needs_no_mitigation() {
        let model = noiseless_quiet();
        let s = PatientState::new(Mode::Disease1, 2.0, 0.0, 0.0);
        let f = ParticleFilter::new(s, 50).unwrap();
        let d = Decision::new(Treatment::None, Delay::Days30);
        let expected = model.flow(&s, Treatment::None, 30.0);
        let obs = Observation::reading(expected.marker, 30.0);
        let mut rng = seeded(1);
        let (next, report) = f.update(
            &model,
            d,
            &obs,
            Precision::new(0.01).unwrap(),
            &ParticleBudget::default(),
            &mut rng,
        );
        assert_eq!(report.stage, Mitigation::None);
        assert_eq!(report.simulations, 50);
        assert_eq!(report.accepted, 50);
        assert_eq!(next.particles().len(), 50);
    }

    #[test]
    fn far_observation_triggers_best_k() {
        let model = Model::new(ModelParams::default(), CostParams::default()).unwrap();
        let f = ParticleFilter::new(PatientState::initial(1.0), 20).unwrap();
        let d = Decision::new(Treatment::None, Delay::Days15);
        // Ten standard deviations away from every prediction.
        let obs = Observation::reading(1.0 - 10.0, 15.0);
        let mut rng = seeded(2);
        let (next, report) = f.update(
            &model,
            d,
            &obs,
            Precision::new(0.01).unwrap(),
            &ParticleBudget::default(),
            &mut rng,
        );
        assert_eq!(report.stage, Mitigation::BestK);
        assert_eq!(next.particles().len(), 20);
        assert!(next.particles().iter().all(|p| p.clock == 15.0));
    }

    #[test]
    fn shortfall_is_revigorated_to_full_size() {
        let model = Model::new(ModelParams::default(), CostParams::default()).unwrap();
        let f = ParticleFilter::new(PatientState::initial(1.0), 200).unwrap();
        let d = Decision::new(Treatment::None, Delay::Days15);
        let obs = Observation::reading(2.5, 15.0);
        let budget = ParticleBudget {
            rejection: 1,
            backstep: 1,
            fallback: 10,
        };
        let mut rng = seeded(3);
        let (next, report) = f.update(
            &model,
            d,
            &obs,
            Precision::new(0.2).unwrap(),
            &budget,
            &mut rng,
        );
        assert_eq!(report.stage, Mitigation::Revigoration);
        assert!(report.accepted > 0 && report.accepted < 200);
        assert_eq!(next.particles().len(), 200);
    }

    #[test]
    fn backstep_uses_previous_belief() {
        let model = Model::new(ModelParams::default(), CostParams::default()).unwrap();
        let mut rng = seeded(4);
        let d = Decision::new(Treatment::None, Delay::Days15);
        let p = Precision::new(0.5).unwrap();
        let budget = ParticleBudget {
            rejection: 2,
            backstep: 50,
            fallback: 10,
        };
        let f = ParticleFilter::new(PatientState::initial(1.0), 30).unwrap();
        let (f1, _) = f.update(
            &model,
            d,
            &Observation::reading(1.0, 15.0),
            p,
            &budget,
            &mut rng,
        );
        let (_, report) = f1.update(
            &model,
            d,
            &Observation::reading(2.6, 30.0),
            p,
            &budget,
            &mut rng,
        );
        assert!(report.stage >= Mitigation::Backstep);
        assert!(report.accepted_backstep > 0);
    }

    #[test]
    fn seeds_count_as_accepted() {
        let model = noiseless_quiet();
        let s = PatientState::initial(1.0);
        let f = ParticleFilter::new(s, 10).unwrap();
        let d = Decision::new(Treatment::None, Delay::Days15);
        let seeds = vec![model.flow(&s, Treatment::None, 15.0); 10];
        let mut rng = seeded(5);
        let (next, report) = f.update_seeded(
            &model,
            d,
            &Observation::reading(1.0, 15.0),
            Precision::new(0.01).unwrap(),
            &ParticleBudget::default(),
            &seeds,
            &mut rng,
        );
        assert_eq!(report.seeded, 10);
        assert_eq!(report.simulations, 0);
        assert_eq!(next.particles(), &seeds[..]);
    }
}
