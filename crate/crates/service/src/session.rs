//! One follow-up session: the practitioner's belief and search tree, an
//! optional simulated patient, and the alternating event log they derive
//! from. Everything here is synchronous; the HTTP layer serializes access.

use followup_core::config::Config;
use followup_core::filters::{BeliefFilter, FilterKind, Mitigation};
use followup_core::harness::{Agent, Harness, PATIENT_STREAM, POLICY_STREAM};
use followup_core::pdmp::{Decision, Model, Observation, PatientState};
use followup_core::planner::PlanDiagnostics;
use followup_core::rng::{stream, SimRng};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

/// Scheduled and received visit times must agree to this many days.
const TIME_TOLERANCE: f64 = 1e-6;
const HISTOGRAM_BINS: usize = 12;

/// Who produces the observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PatientSpec {
    /// A hidden patient drawn from the model with this seed.
    Simulated {
        #[serde(default)]
        seed: u64,
    },
    /// Readings typed in by the practitioner. `seed` drives the planner.
    External {
        #[serde(default)]
        seed: u64,
    },
}

impl Default for PatientSpec {
    fn default() -> Self {
        PatientSpec::Simulated { seed: 0 }
    }
}

impl PatientSpec {
    pub fn seed(&self) -> u64 {
        match *self {
            PatientSpec::Simulated { seed } | PatientSpec::External { seed } => seed,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    #[serde(default)]
    pub patient: PatientSpec,
    /// Replaces the service configuration for this session.
    #[serde(default)]
    pub config: Option<Config>,
}

/// Body of `POST /sessions/{id}/observations`. Empty for simulated patients.
#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationInput {
    pub y: Option<f64>,
    pub t: Option<f64>,
    #[serde(default)]
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionInput {
    pub decision: Decision,
}

/// One entry of the alternating log `ω0, d0, ω1, d1, …`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Observation {
        t: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        y: Option<f64>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        terminal: bool,
    },
    Decision {
        decision: Decision,
        recommended: Decision,
        #[serde(rename = "override")]
        overridden: bool,
    },
}

impl Event {
    fn observation(o: &Observation) -> Self {
        if o.terminal {
            Event::Observation {
                t: o.time,
                y: None,
                terminal: true,
            }
        } else {
            Event::Observation {
                t: o.time,
                y: Some(o.reading),
                terminal: false,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Death,
    Horizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Phase {
    AwaitingDecision,
    AwaitingObservation { next_visit_time: f64 },
    Finished { reason: EndReason },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionValue {
    pub decision: Decision,
    pub value: f64,
    pub visits: u64,
}

/// Planner output shown to the practitioner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub decision: Decision,
    /// `V(h d)` and `N(h d)` for all nine decisions, in canonical order.
    pub options: Vec<DecisionValue>,
    pub root_visits: u64,
    pub tradeoff: f64,
    pub exploration: f64,
    pub elapsed_ms: f64,
}

impl From<&PlanDiagnostics> for Recommendation {
    fn from(d: &PlanDiagnostics) -> Self {
        Self {
            decision: d.decision,
            options: Decision::ALL
                .iter()
                .map(|&decision| DecisionValue {
                    decision,
                    value: d.values[decision.index()],
                    visits: d.visits[decision.index()],
                })
                .collect(),
            root_visits: d.root_visits,
            tradeoff: d.tradeoff,
            exploration: d.exploration,
            elapsed_ms: d.elapsed_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
}

/// Belief snapshot for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefView {
    pub filter: FilterKind,
    pub clock: f64,
    pub mode_marginal: [f64; 4],
    /// Live-state marker mass on log-spaced bins over `[ζ0, D]`.
    pub marker_histogram: Vec<HistogramBin>,
    /// Conditional-filter weights over the grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

/// Response to create and to every observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub session_id: String,
    /// Index `n` of the visit the recommendation is for.
    pub step: usize,
    pub time: f64,
    pub terminal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<EndReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recommendation: Option<Recommendation>,
    pub belief: BeliefView,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mitigation: Option<Mitigation>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate_update: bool,
    /// Total cost, revealed for simulated patients once the follow-up ends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitAck {
    pub session_id: String,
    pub decision: Decision,
    #[serde(rename = "override")]
    pub overridden: bool,
    pub next_visit_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub patient: PatientSpec,
    pub phase: Phase,
    pub visits: usize,
    pub time: f64,
}

/// Full read-only view: summary, log, latest recommendation and belief.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    #[serde(flatten)]
    pub summary: SessionSummary,
    pub history_len: usize,
    pub log: Vec<Event>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recommendation: Option<Recommendation>,
    pub belief: BeliefView,
}

/// Ground truth of a simulated patient; never serialized.
#[derive(Debug, Clone)]
struct HiddenPatient {
    state: PatientState,
    rng: SimRng,
    pending: Option<Observation>,
    total_cost: f64,
}

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    patient: PatientSpec,
    config: Config,
    model: Model,
    agent: Agent,
    hidden: Option<HiddenPatient>,
    log: Vec<Event>,
    phase: Phase,
    recommendation: Option<Recommendation>,
    last_decision: Option<Decision>,
    time: f64,
}

impl Session {
    /// Starts at `s0` with `ω0 = (ζ0, 0)` logged and the first decision planned.
    /// `harness` must already hold the tensor when the filter is conditional.
    pub fn create(
        id: String,
        patient: PatientSpec,
        config: Config,
        harness: &Harness,
    ) -> Result<(Self, StepResponse), ServiceError> {
        let model = harness.model().clone();
        let seed = patient.seed();
        let agent = harness.agent(
            config.filter.kind,
            config.planner.clone(),
            stream(seed, POLICY_STREAM),
        )?;
        let hidden = matches!(patient, PatientSpec::Simulated { .. }).then(|| HiddenPatient {
            state: model.initial_state(),
            rng: stream(seed, PATIENT_STREAM),
            pending: None,
            total_cost: 0.0,
        });
        let mut session = Session {
            id,
            patient,
            config,
            log: vec![Event::observation(&model.initial_observation())],
            model,
            agent,
            hidden,
            phase: Phase::AwaitingDecision,
            recommendation: None,
            last_decision: None,
            time: 0.0,
        };
        let response = session.plan_next(None, false)?;
        Ok((session, response))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn patient(&self) -> PatientSpec {
        self.patient
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn log(&self) -> &[Event] {
        &self.log
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    fn visits(&self) -> usize {
        self.log
            .iter()
            .filter(|e| matches!(e, Event::Decision { .. }))
            .count()
    }

    fn plan_next(
        &mut self,
        mitigation: Option<Mitigation>,
        degenerate: bool,
    ) -> Result<StepResponse, ServiceError> {
        let diagnostics = self.agent.recommend(&self.model)?;
        let recommendation = Recommendation::from(&diagnostics);
        self.recommendation = Some(recommendation.clone());
        self.phase = Phase::AwaitingDecision;
        Ok(StepResponse {
            session_id: self.id.clone(),
            step: self.visits(),
            time: self.time,
            terminal: false,
            reason: None,
            recommendation: Some(recommendation),
            belief: self.belief(),
            mitigation,
            degenerate_update: degenerate,
            total_cost: None,
        })
    }

    /// Records `decision` (the recommendation or an override). A simulated
    /// patient is advanced to the next visit.
    pub fn commit(&mut self, decision: Decision) -> Result<CommitAck, ServiceError> {
        match self.phase {
            Phase::AwaitingDecision => {}
            Phase::AwaitingObservation { .. } => {
                return Err(ServiceError::conflict(
                    "a decision is already committed; post the next observation",
                ))
            }
            Phase::Finished { .. } => return Err(ServiceError::ended("the follow-up has ended")),
        }
        let recommended = self
            .recommendation
            .as_ref()
            .map_or(decision, |r| r.decision);
        let next_visit_time = self.time + decision.days();
        if let Some(h) = self.hidden.as_mut() {
            let step = self
                .model
                .generate(&h.state, decision, &mut h.rng)
                .map_err(followup_core::PlanError::from)
                .map_err(followup_core::HarnessError::from)?;
            h.state = step.next_state;
            h.total_cost += step.cost;
            h.pending = Some(step.observation);
        }
        let overridden = decision != recommended;
        self.log.push(Event::Decision {
            decision,
            recommended,
            overridden,
        });
        self.last_decision = Some(decision);
        self.phase = Phase::AwaitingObservation { next_visit_time };
        Ok(CommitAck {
            session_id: self.id.clone(),
            decision,
            overridden,
            next_visit_time,
        })
    }

    /// Absorbs the next observation, then plans unless the follow-up ended.
    pub fn observe(&mut self, input: ObservationInput) -> Result<StepResponse, ServiceError> {
        let scheduled = match self.phase {
            Phase::AwaitingObservation { next_visit_time } => next_visit_time,
            Phase::AwaitingDecision => {
                return Err(ServiceError::conflict(
                    "commit a decision before posting the next observation",
                ))
            }
            Phase::Finished { .. } => return Err(ServiceError::ended("the follow-up has ended")),
        };
        let observation = match self.hidden.as_mut() {
            Some(h) => {
                if input.y.is_some() || input.t.is_some() || input.terminal {
                    return Err(ServiceError::BadRequest(
                        "observations of a simulated patient are drawn by the service; send an empty body".into(),
                    ));
                }
                h.pending
                    .take()
                    .expect("a committed decision leaves a pending observation")
            }
            None => self.external_observation(input, scheduled)?,
        };
        let decision = self.last_decision.expect("observation follows a decision");
        self.log.push(Event::observation(&observation));
        self.time = observation.time;

        let ended = if observation.terminal {
            Some(EndReason::Death)
        } else if observation.time >= self.model.horizon() {
            Some(EndReason::Horizon)
        } else {
            None
        };
        if let Some(reason) = ended {
            self.phase = Phase::Finished { reason };
            self.recommendation = None;
            return Ok(StepResponse {
                session_id: self.id.clone(),
                step: self.visits(),
                time: self.time,
                terminal: true,
                reason: Some(reason),
                recommendation: None,
                belief: self.belief(),
                mitigation: None,
                degenerate_update: false,
                total_cost: self.hidden.as_ref().map(|h| h.total_cost),
            });
        }
        let outcome = self.agent.observe(&self.model, decision, &observation);
        self.plan_next(outcome.mitigation, outcome.degenerate)
    }

    fn external_observation(
        &self,
        input: ObservationInput,
        scheduled: f64,
    ) -> Result<Observation, ServiceError> {
        let t = input
            .t
            .ok_or_else(|| ServiceError::BadRequest("field `t` is required".into()))?;
        if !t.is_finite() {
            return Err(ServiceError::BadRequest("`t` must be finite".into()));
        }
        if (t - scheduled).abs() > TIME_TOLERANCE {
            return Err(ServiceError::conflict(format!(
                "observation at t = {t}, but the visit is scheduled at {scheduled}"
            )));
        }
        if input.terminal {
            if input.y.is_some() {
                return Err(ServiceError::BadRequest(
                    "a terminal observation carries no reading".into(),
                ));
            }
            return Ok(Observation::death(self.model.death_level(), scheduled));
        }
        match input.y {
            Some(y) if y.is_finite() => Ok(Observation::reading(y, scheduled)),
            Some(_) => Err(ServiceError::BadRequest("`y` must be finite".into())),
            None => Err(ServiceError::BadRequest(
                "field `y` is required unless `terminal` is true".into(),
            )),
        }
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            id: self.id.clone(),
            patient: self.patient,
            phase: self.phase,
            visits: self.visits(),
            time: self.time,
        }
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            summary: self.summary(),
            history_len: self.log.len(),
            log: self.log.clone(),
            recommendation: self.recommendation.clone(),
            belief: self.belief(),
        }
    }

    pub fn belief(&self) -> BeliefView {
        let filter = self.agent.filter();
        let (lo, hi) = (self.model.nominal_level(), self.model.death_level());
        let ratio = (hi / lo).ln() / HISTOGRAM_BINS as f64;
        let mut bins: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
            .map(|i| HistogramBin {
                lo: lo * (ratio * i as f64).exp(),
                hi: lo * (ratio * (i + 1) as f64).exp(),
                mass: 0.0,
            })
            .collect();
        let mut add = |marker: f64, mass: f64| {
            let i =
                (((marker / lo).ln() / ratio).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
            bins[i].mass += mass;
        };
        let weights = match filter {
            BeliefFilter::Particle(pf) => {
                let share = 1.0 / pf.particles().len() as f64;
                for p in pf.particles().iter().filter(|p| !p.is_dead()) {
                    add(p.marker, share);
                }
                None
            }
            BeliefFilter::Conditional(cf) => {
                let grid = cf.tensor().grid();
                for (j, (p, &w)) in grid.points().iter().zip(cf.weights()).enumerate() {
                    if j != grid.death_index() && w > 0.0 {
                        add(p.marker, w);
                    }
                }
                Some(cf.weights().to_vec())
            }
        };
        BeliefView {
            filter: filter.kind(),
            clock: filter.clock(),
            mode_marginal: filter.mode_marginal(),
            marker_histogram: bins,
            weights,
        }
    }

    /// Rebuilds a session by re-running its log. Simulated observations are
    /// regenerated and must match the logged ones exactly.
    pub fn replay(
        id: String,
        patient: PatientSpec,
        config: Config,
        harness: &Harness,
        events: &[Event],
    ) -> Result<Self, ServiceError> {
        let (mut session, _) = Self::create(id, patient, config, harness)?;
        let Some((first, rest)) = events.split_first() else {
            return Err(ServiceError::CorruptLog("empty event log".into()));
        };
        if *first != session.log[0] {
            return Err(ServiceError::CorruptLog(
                "initial observation differs".into(),
            ));
        }
        for event in rest {
            match *event {
                Event::Decision { decision, .. } => {
                    session.commit(decision)?;
                }
                Event::Observation { t, y, terminal } => {
                    let input = if session.hidden.is_some() {
                        ObservationInput::default()
                    } else {
                        ObservationInput {
                            y,
                            t: Some(t),
                            terminal,
                        }
                    };
                    session.observe(input)?;
                }
            }
            if session.log.last() != Some(event) {
                return Err(ServiceError::CorruptLog(format!(
                    "replayed event {event:?} diverged"
                )));
            }
        }
        Ok(session)
    }
}
