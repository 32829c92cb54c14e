//! Flow, risk, jump kernel and the one-visit generator of the controlled PDMP.
//!
//! Jump times are drawn by inverting the integrated risk along the flow. Both
//! risk families integrate in closed form:
//!
//! - remission: the standard-relapse risk is piecewise linear in `u`, so the
//!   integrated risk is piecewise quadratic;
//! - treated disease: the escape risk `(β̃ ζ e^{vτ})^α̃` is exponential in `τ`,
//!   giving `c (e^{kτ} - 1) / k` with `c = (β̃ζ)^α̃` and `k = α̃ v`.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use super::params::{CostParams, ModelParams, PiecewiseLinear};
use super::state::{Decision, Mode, Observation, PatientState, Treatment};
use crate::error::{ConfigError, DynamicsError};

/// Result of one call to the generator `(s', ω, c) ~ G(s, d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub next_state: PatientState,
    pub observation: Observation,
    pub cost: f64,
}

/// Compiled controlled PDMP: model parameters, cost weights and derived tables.
#[derive(Debug, Clone)]
pub struct Model {
    params: ModelParams,
    cost: CostParams,
    relapse_total: PiecewiseLinear,
    slopes: [[f64; 3]; 4],
    noise_sd: f64,
}

impl Model {
    pub fn new(params: ModelParams, cost: CostParams) -> Result<Self, ConfigError> {
        params.validate()?;
        cost.validate()?;
        let mut slopes = [[0.0; 3]; 4];
        for m in Mode::ALL {
            for l in Treatment::ALL {
                slopes[m.index()][l.index()] = params.slopes.slope(m, l);
            }
        }
        Ok(Self {
            relapse_total: params.relapse1.sum(&params.relapse2),
            noise_sd: params.noise_variance.sqrt(),
            slopes,
            params,
            cost,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn cost_params(&self) -> &CostParams {
        &self.cost
    }

    pub fn horizon(&self) -> f64 {
        self.params.horizon
    }

    pub fn nominal_level(&self) -> f64 {
        self.params.nominal_level
    }

    pub fn death_level(&self) -> f64 {
        self.params.death_level
    }

    pub fn initial_state(&self) -> PatientState {
        PatientState::initial(self.params.nominal_level)
    }

    /// Observation available at inclusion: the nominal level at time zero.
    pub fn initial_observation(&self) -> Observation {
        Observation::reading(self.params.nominal_level, 0.0)
    }

    #[inline]
    pub fn slope(&self, mode: Mode, treatment: Treatment) -> f64 {
        self.slopes[mode.index()][treatment.index()]
    }

    /// Deterministic evolution for `dt` days without jumps. The marker is
    /// kept inside `[ζ0, D]`; a dead patient only advances its clock.
    pub fn flow(&self, state: &PatientState, treatment: Treatment, dt: f64) -> PatientState {
        if state.is_dead() {
            return PatientState {
                clock: state.clock + dt,
                ..*state
            };
        }
        let v = self.slope(state.mode, treatment);
        let marker = if v == 0.0 {
            state.marker
        } else {
            (state.marker * (v * dt).exp())
                .clamp(self.params.nominal_level, self.params.death_level)
        };
        PatientState {
            mode: state.mode,
            marker,
            since_jump: state.since_jump + dt,
            clock: state.clock + dt,
        }
    }

    /// Jump intensity `λ_m^ℓ(ζ, u)`.
    pub fn risk_intensity(&self, state: &PatientState, treatment: Treatment) -> f64 {
        let p = &self.params;
        match (state.mode, treatment) {
            (Mode::Remission, Treatment::None) => self.relapse_total.value(state.since_jump),
            (Mode::Remission, Treatment::A) => p.relapse2.value(state.since_jump),
            (Mode::Remission, Treatment::B) => p.relapse1.value(state.since_jump),
            (Mode::Disease1, Treatment::A) | (Mode::Disease2, Treatment::B) => {
                p.escape.map_or(0.0, |e| e.rate(state.marker))
            }
            _ => 0.0,
        }
    }

    /// Time for the flow to reach ζ0 (decreasing marker) or D (increasing).
    pub fn hitting_time(&self, state: &PatientState, treatment: Treatment) -> f64 {
        let v = self.slope(state.mode, treatment);
        if v > 0.0 {
            ((self.params.death_level / state.marker).ln() / v).max(0.0)
        } else if v < 0.0 {
            ((self.params.nominal_level / state.marker).ln() / v).max(0.0)
        } else {
            f64::INFINITY
        }
    }

    /// Integrated risk `∫_0^t λ(m, ζ e^{vτ}, u + τ) dτ` along the flow.
    pub fn cumulative_hazard(&self, state: &PatientState, treatment: Treatment, t: f64) -> f64 {
        let u = state.since_jump;
        match (state.mode, treatment) {
            (Mode::Remission, Treatment::None) => self.relapse_total.integral(u, u + t),
            (Mode::Remission, Treatment::A) => self.params.relapse2.integral(u, u + t),
            (Mode::Remission, Treatment::B) => self.params.relapse1.integral(u, u + t),
            (Mode::Disease1, Treatment::A) | (Mode::Disease2, Treatment::B) => {
                match self.params.escape {
                    Some(e) => {
                        let c = e.rate(state.marker);
                        let k = e.shape * self.slope(state.mode, treatment);
                        if k == 0.0 {
                            c * t
                        } else {
                            c * (k * t).exp_m1() / k
                        }
                    }
                    None => 0.0,
                }
            }
            _ => 0.0,
        }
    }

    /// Time at which the integrated risk reaches `exposure`; `+inf` if never.
    pub fn jump_time_for_exposure(
        &self,
        state: &PatientState,
        treatment: Treatment,
        exposure: f64,
    ) -> f64 {
        let u = state.since_jump;
        let curve = match (state.mode, treatment) {
            (Mode::Remission, Treatment::None) => Some(&self.relapse_total),
            (Mode::Remission, Treatment::A) => Some(&self.params.relapse2),
            (Mode::Remission, Treatment::B) => Some(&self.params.relapse1),
            _ => None,
        };
        if let Some(curve) = curve {
            return curve
                .time_to_accumulate(u, exposure)
                .unwrap_or(f64::INFINITY);
        }
        match (state.mode, treatment, self.params.escape) {
            (Mode::Disease1, Treatment::A, Some(e)) | (Mode::Disease2, Treatment::B, Some(e)) => {
                let c = e.rate(state.marker);
                let k = e.shape * self.slope(state.mode, treatment);
                if k == 0.0 {
                    exposure / c
                } else {
                    let arg = k * exposure / c;
                    if arg <= -1.0 {
                        f64::INFINITY
                    } else {
                        arg.ln_1p() / k
                    }
                }
            }
            _ => f64::INFINITY,
        }
    }

    /// Draws the next risk-clock time by inversion of the integrated risk.
    pub fn sample_jump_time<R: Rng + ?Sized>(
        &self,
        state: &PatientState,
        treatment: Treatment,
        rng: &mut R,
    ) -> f64 {
        let exposure: f64 = rng.sample(Exp1);
        self.jump_time_for_exposure(state, treatment, exposure)
    }

    /// Distribution of the post-jump mode at a jump epoch, indexed by mode.
    pub fn jump_probabilities(
        &self,
        state: &PatientState,
        treatment: Treatment,
    ) -> Result<[f64; 4], DynamicsError> {
        let invalid = || DynamicsError::InvalidJump {
            mode: state.mode,
            treatment,
            marker: state.marker,
        };
        let p = &self.params;
        match state.mode {
            Mode::Death => Err(invalid()),
            Mode::Remission => match treatment {
                Treatment::None => {
                    let u = state.since_jump;
                    let (a, b) = (p.relapse1.value(u), p.relapse2.value(u));
                    if a + b <= 0.0 {
                        return Err(invalid());
                    }
                    Ok([0.0, a / (a + b), b / (a + b), 0.0])
                }
                Treatment::A => Ok([0.0, 0.0, 1.0, 0.0]),
                Treatment::B => Ok([0.0, 1.0, 0.0, 0.0]),
            },
            Mode::Disease1 | Mode::Disease2 => {
                if state.marker >= p.death_level {
                    Ok([0.0, 0.0, 0.0, 1.0])
                } else if state.marker <= p.nominal_level {
                    // Recovery wins over an escape ringing exactly at ζ0.
                    Ok([1.0, 0.0, 0.0, 0.0])
                } else {
                    match (state.mode, treatment, p.escape.is_some()) {
                        (Mode::Disease1, Treatment::A, true) => Ok([0.0, 0.0, 1.0, 0.0]),
                        (Mode::Disease2, Treatment::B, true) => Ok([0.0, 1.0, 0.0, 0.0]),
                        _ => Err(invalid()),
                    }
                }
            }
        }
    }

    /// Post-jump state: same marker, `u` reset, new mode drawn from the kernel.
    pub fn jump_kernel<R: Rng + ?Sized>(
        &self,
        state: &PatientState,
        treatment: Treatment,
        rng: &mut R,
    ) -> Result<PatientState, DynamicsError> {
        let probs = self.jump_probabilities(state, treatment)?;
        let mode = if probs[1] > 0.0 && probs[2] > 0.0 {
            if rng.random::<f64>() < probs[1] {
                Mode::Disease1
            } else {
                Mode::Disease2
            }
        } else {
            let i = probs
                .iter()
                .position(|&q| q == 1.0)
                .expect("degenerate kernel row");
            Mode::ALL[i]
        };
        let marker = match mode {
            Mode::Death => self.params.death_level,
            Mode::Remission => self.params.nominal_level,
            _ => state.marker,
        };
        Ok(PatientState {
            mode,
            marker,
            since_jump: 0.0,
            clock: state.clock,
        })
    }

    /// State `r` days after a decision, or the death state (clock stopped at
    /// the death time) when the marker reaches D first.
    pub fn simulate_segment<R: Rng + ?Sized>(
        &self,
        state: &PatientState,
        decision: Decision,
        rng: &mut R,
    ) -> PatientState {
        self.simulate_segment_with(state, decision, rng, |_| {})
    }

    /// [`Model::simulate_segment`] reporting every post-jump state.
    pub fn simulate_segment_with<R, F>(
        &self,
        state: &PatientState,
        decision: Decision,
        rng: &mut R,
        mut on_jump: F,
    ) -> PatientState
    where
        R: Rng + ?Sized,
        F: FnMut(&PatientState),
    {
        if state.is_dead() {
            return *state;
        }
        let treatment = decision.treatment;
        let r = decision.days();
        let mut s = *state;
        let mut elapsed = 0.0;
        loop {
            let risk_time = self.sample_jump_time(&s, treatment, rng);
            let hit_time = self.hitting_time(&s, treatment);
            let boundary = hit_time <= risk_time;
            let dt = if boundary { hit_time } else { risk_time };
            if elapsed + dt > r {
                return self.flow(&s, treatment, r - elapsed);
            }
            s = self.flow(&s, treatment, dt);
            elapsed += dt;
            if boundary {
                s.marker = if self.slope(s.mode, treatment) > 0.0 {
                    self.params.death_level
                } else {
                    self.params.nominal_level
                };
            }
            s = self
                .jump_kernel(&s, treatment, rng)
                .expect("jump epochs produced by the simulator satisfy the kernel guards");
            on_jump(&s);
            if s.is_dead() {
                return s;
            }
        }
    }

    /// Noisy reading of the marker; not clamped to `[ζ0, D]`.
    pub fn observe<R: Rng + ?Sized>(&self, state: &PatientState, rng: &mut R) -> Observation {
        let noise: f64 = if self.noise_sd > 0.0 {
            rng.sample::<f64, _>(StandardNormal) * self.noise_sd
        } else {
            0.0
        };
        Observation::reading(state.marker + noise, state.clock)
    }

    /// Visit cost `C_V + κ|ζ'-ζ0| r + β r 1{ζ=ζ0, ℓ≠∅} + M 1{ζ'=D}`.
    pub fn step_cost(&self, marker: f64, decision: Decision, next_marker: f64) -> f64 {
        let c = &self.cost;
        let r = decision.days();
        let mut cost = c.visit + c.marker * (next_marker - self.params.nominal_level).abs() * r;
        if marker == self.params.nominal_level && decision.treatment.is_active() {
            cost += c.overtreatment * r;
        }
        if next_marker == self.params.death_level {
            cost += c.death;
        }
        cost
    }

    /// The generator `(s', ω, c) ~ G(s, d)`.
    pub fn generate<R: Rng + ?Sized>(
        &self,
        state: &PatientState,
        decision: Decision,
        rng: &mut R,
    ) -> Result<StepOutcome, DynamicsError> {
        self.generate_with(state, decision, rng, |_| {})
    }

    pub fn generate_with<R, F>(
        &self,
        state: &PatientState,
        decision: Decision,
        rng: &mut R,
        on_jump: F,
    ) -> Result<StepOutcome, DynamicsError>
    where
        R: Rng + ?Sized,
        F: FnMut(&PatientState),
    {
        if state.is_dead() {
            return Err(DynamicsError::DeadPatient);
        }
        let next_state = self.simulate_segment_with(state, decision, rng, on_jump);
        let observation = if next_state.is_dead() {
            Observation::death(self.params.death_level, next_state.clock)
        } else {
            self.observe(&next_state, rng)
        };
        let cost = self.step_cost(state.marker, decision, next_state.marker);
        Ok(StepOutcome {
            next_state,
            observation,
            cost,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdmp::{Delay, EscapeRisk};
    use crate::rng::seeded;

    fn model() -> Model {
        Model::new(ModelParams::default(), CostParams::default()).unwrap()
    }

    fn quiet() -> Model {
        Model::new(ModelParams::default().without_risk(), CostParams::default()).unwrap()
    }

    fn d(t: Treatment, r: Delay) -> Decision {
        Decision::new(t, r)
    }

    #[test]
    fn flow_examples() {
        let m = model();
        let s = m.flow(
            &PatientState::new(Mode::Disease1, 1.0, 0.0, 0.0),
            Treatment::None,
            100.0,
        );
        assert!((s.marker - 2f64.exp()).abs() < 1e-12);
        assert!((s.marker - 7.3891).abs() < 1e-4);
        assert_eq!(s.since_jump, 100.0);
        assert_eq!(s.clock, 100.0);
        for l in Treatment::ALL {
            let s = m.flow(&PatientState::new(Mode::Remission, 1.0, 5.0, 5.0), l, 60.0);
            assert_eq!(s.marker, 1.0);
        }
        let s = m.flow(
            &PatientState::new(Mode::Disease2, 10.0, 0.0, 0.0),
            Treatment::B,
            30.0,
        );
        assert!((s.marker - 10.0 * (-0.75f64).exp()).abs() < 1e-12);
        assert!((s.marker - 4.7237).abs() < 1e-4);
    }

    #[test]
    fn flow_clamps_and_freezes_death() {
        let m = model();
        let s = m.flow(
            &PatientState::new(Mode::Disease1, 30.0, 0.0, 0.0),
            Treatment::None,
            1000.0,
        );
        assert_eq!(s.marker, 40.0);
        let s = m.flow(
            &PatientState::new(Mode::Disease1, 3.0, 0.0, 0.0),
            Treatment::A,
            1000.0,
        );
        assert_eq!(s.marker, 1.0);
        let dead = PatientState::new(Mode::Death, 40.0, 3.0, 100.0);
        let s = m.flow(&dead, Treatment::A, 20.0);
        assert_eq!(
            (s.mode, s.marker, s.since_jump, s.clock),
            (Mode::Death, 40.0, 3.0, 120.0)
        );
    }

    #[test]
    fn risk_examples() {
        let m = model();
        let p = m.params().clone();
        assert_eq!(
            m.risk_intensity(
                &PatientState::new(Mode::Disease1, 5.0, 0.0, 0.0),
                Treatment::None
            ),
            0.0
        );
        let r = m.risk_intensity(
            &PatientState::new(Mode::Disease1, 1.0, 0.0, 0.0),
            Treatment::A,
        );
        assert!((r - 1000f64.powf(-0.8)).abs() < 1e-15);
        assert!((r - 0.003981).abs() < 1e-6);
        let s = PatientState::new(Mode::Remission, 1.0, 700.0, 700.0);
        assert_eq!(m.risk_intensity(&s, Treatment::A), p.relapse2.value(700.0));
        assert_eq!(m.risk_intensity(&s, Treatment::B), p.relapse1.value(700.0));
        let both = m.risk_intensity(&s, Treatment::None);
        assert!((both - p.relapse1.value(700.0) - p.relapse2.value(700.0)).abs() < 1e-15);
        for l in Treatment::ALL {
            assert_eq!(
                m.risk_intensity(&PatientState::new(Mode::Death, 40.0, 0.0, 0.0), l),
                0.0
            );
        }
    }

    #[test]
    fn hitting_time_examples() {
        let m = model();
        let t = m.hitting_time(
            &PatientState::new(Mode::Disease1, 1.0, 0.0, 0.0),
            Treatment::None,
        );
        assert!((t - 40f64.ln() / 0.02).abs() < 1e-9);
        assert!((t - 184.44).abs() < 0.01);
        assert!(m
            .hitting_time(&PatientState::initial(1.0), Treatment::None)
            .is_infinite());
        assert_eq!(
            m.hitting_time(
                &PatientState::new(Mode::Disease1, 40.0, 0.0, 0.0),
                Treatment::None
            ),
            0.0
        );
        let t = m.hitting_time(
            &PatientState::new(Mode::Disease1, 3.0, 0.0, 0.0),
            Treatment::A,
        );
        assert!((t - 3f64.ln() / 0.077).abs() < 1e-9);
    }

    #[test]
    fn no_risk_means_infinite_jump_time() {
        let m = quiet();
        let mut rng = seeded(1);
        for l in Treatment::ALL {
            assert!(m
                .sample_jump_time(&PatientState::initial(1.0), l, &mut rng)
                .is_infinite());
        }
    }

    #[test]
    fn constant_intensity_gives_exponential_mean() {
        let p = ModelParams {
            relapse1: PiecewiseLinear::constant(0.004),
            relapse2: PiecewiseLinear::constant(0.006),
            ..ModelParams::default()
        };
        let m = Model::new(p, CostParams::default()).unwrap();
        let mut rng = seeded(7);
        let n = 100_000;
        let s = PatientState::initial(1.0);
        let mean: f64 = (0..n)
            .map(|_| m.sample_jump_time(&s, Treatment::None, &mut rng))
            .sum::<f64>()
            / n as f64;
        assert!((mean / 100.0 - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn kernel_examples() {
        let m = model();
        let mut rng = seeded(3);
        let s = PatientState::new(Mode::Remission, 1.0, 800.0, 800.0);
        let probs = m.jump_probabilities(&s, Treatment::None).unwrap();
        let p = m.params();
        let (a, b) = (p.relapse1.value(800.0), p.relapse2.value(800.0));
        assert!((probs[1] - a / (a + b)).abs() < 1e-15);
        assert!((probs[2] - b / (a + b)).abs() < 1e-15);
        let n = 20_000;
        let ones = (0..n)
            .filter(|_| {
                m.jump_kernel(&s, Treatment::None, &mut rng).unwrap().mode == Mode::Disease1
            })
            .count();
        assert!((ones as f64 / n as f64 - 0.22).abs() < 0.015);

        let at_nominal = PatientState::new(Mode::Disease1, 1.0, 10.0, 50.0);
        let j = m.jump_kernel(&at_nominal, Treatment::A, &mut rng).unwrap();
        assert_eq!(
            (j.mode, j.marker, j.since_jump, j.clock),
            (Mode::Remission, 1.0, 0.0, 50.0)
        );
        let at_death = PatientState::new(Mode::Disease2, 40.0, 10.0, 50.0);
        assert_eq!(
            m.jump_kernel(&at_death, Treatment::A, &mut rng)
                .unwrap()
                .mode,
            Mode::Death
        );
        let escape = PatientState::new(Mode::Disease1, 5.0, 10.0, 50.0);
        let j = m.jump_kernel(&escape, Treatment::A, &mut rng).unwrap();
        assert_eq!((j.mode, j.marker), (Mode::Disease2, 5.0));
    }

    #[test]
    fn kernel_rejects_inconsistent_jumps() {
        let m = model();
        let mut rng = seeded(3);
        let inside = PatientState::new(Mode::Disease1, 5.0, 0.0, 0.0);
        assert!(m.jump_kernel(&inside, Treatment::None, &mut rng).is_err());
        assert!(m.jump_kernel(&inside, Treatment::B, &mut rng).is_err());
        let dead = PatientState::new(Mode::Death, 40.0, 0.0, 0.0);
        assert!(m.jump_kernel(&dead, Treatment::None, &mut rng).is_err());
        let no_escape = Model::new(
            ModelParams {
                escape: None,
                ..ModelParams::default()
            },
            CostParams::default(),
        )
        .unwrap();
        assert!(no_escape
            .jump_kernel(&inside, Treatment::A, &mut rng)
            .is_err());
    }

    #[test]
    fn segment_examples() {
        let m = quiet();
        let mut rng = seeded(5);
        let s = PatientState::new(Mode::Disease1, 1.0, 0.0, 0.0);
        let out = m.simulate_segment(&s, d(Treatment::None, Delay::Days60), &mut rng);
        assert_eq!(out.mode, Mode::Disease1);
        assert!((out.marker - 1.2f64.exp()).abs() < 1e-12);
        assert!((out.marker - 3.3201).abs() < 1e-4);
        assert_eq!(out.since_jump, 60.0);

        let dead = PatientState::new(Mode::Death, 40.0, 0.0, 30.0);
        assert_eq!(
            m.simulate_segment(&dead, d(Treatment::A, Delay::Days15), &mut rng),
            dead
        );

        let near = PatientState::new(Mode::Disease1, 39.0, 0.0, 100.0);
        let out = m.simulate_segment(&near, d(Treatment::None, Delay::Days60), &mut rng);
        assert_eq!(out.mode, Mode::Death);
        assert_eq!(out.marker, 40.0);
        let expected = 100.0 + (40.0f64 / 39.0).ln() / 0.02;
        assert!((out.clock - expected).abs() < 1e-9);
    }

    #[test]
    fn segment_recovers_at_nominal() {
        let m = quiet();
        let mut rng = seeded(5);
        let s = PatientState::new(Mode::Disease1, 3.0, 0.0, 0.0);
        let out = m.simulate_segment(&s, d(Treatment::A, Delay::Days60), &mut rng);
        let t_hit = 3f64.ln() / 0.077;
        assert_eq!(out.mode, Mode::Remission);
        assert_eq!(out.marker, 1.0);
        assert!((out.since_jump - (60.0 - t_hit)).abs() < 1e-9);
        assert!((out.clock - 60.0).abs() < 1e-12);
    }

    #[test]
    fn observe_examples() {
        let m = Model::new(
            ModelParams::default().with_noise_variance(0.0),
            CostParams::default(),
        )
        .unwrap();
        let mut rng = seeded(9);
        let o = m.observe(&PatientState::new(Mode::Disease1, 5.0, 0.0, 45.0), &mut rng);
        assert_eq!((o.reading, o.time, o.terminal), (5.0, 45.0, false));

        let m = model();
        let s = PatientState::new(Mode::Disease1, 10.0, 0.0, 0.0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| m.observe(&s, &mut rng).reading).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 10.0).abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn cost_examples() {
        let m = model();
        assert_eq!(
            m.step_cost(1.0, d(Treatment::None, Delay::Days30), 1.0),
            1.0
        );
        assert!((m.step_cost(5.0, d(Treatment::A, Delay::Days30), 2.0) - 6.0).abs() < 1e-12);
        assert!((m.step_cost(1.0, d(Treatment::A, Delay::Days15), 40.0) - 210.0).abs() < 1e-12);
    }

    #[test]
    fn generate_examples() {
        let m = Model::new(
            ModelParams::default()
                .without_risk()
                .with_noise_variance(0.0),
            CostParams::default(),
        )
        .unwrap();
        let mut rng = seeded(2);
        let s = PatientState::new(Mode::Disease2, 10.0, 0.0, 300.0);
        let dec = d(Treatment::B, Delay::Days30);
        let out = m.generate(&s, dec, &mut rng).unwrap();
        let expected = m.flow(&s, Treatment::B, 30.0);
        assert_eq!(out.next_state, expected);
        assert_eq!(
            out.observation,
            Observation::reading(expected.marker, 330.0)
        );
        assert_eq!(out.cost, m.step_cost(10.0, dec, expected.marker));

        let dead = PatientState::new(Mode::Death, 40.0, 0.0, 0.0);
        assert_eq!(
            m.generate(&dead, dec, &mut rng),
            Err(DynamicsError::DeadPatient)
        );

        let near = PatientState::new(Mode::Disease1, 39.5, 0.0, 0.0);
        let out = m
            .generate(&near, d(Treatment::None, Delay::Days15), &mut rng)
            .unwrap();
        assert!(out.observation.terminal);
        assert!(out.cost >= 110.0);
    }

    #[test]
    fn escape_hazard_closed_form_matches_derivative() {
        let p = ModelParams {
            escape: Some(EscapeRisk::default()),
            ..ModelParams::default()
        };
        let m = Model::new(p, CostParams::default()).unwrap();
        let s = PatientState::new(Mode::Disease2, 12.0, 0.0, 0.0);
        let h = 1e-4;
        for t in [0.0, 10.0, 50.0] {
            let deriv = (m.cumulative_hazard(&s, Treatment::B, t + h)
                - m.cumulative_hazard(&s, Treatment::B, t))
                / h;
            let flowed = m.flow(&s, Treatment::B, t + h / 2.0);
            let rate = m.risk_intensity(&flowed, Treatment::B);
            assert!((deriv - rate).abs() < 1e-8 * rate.max(1e-3), "t={t}");
        }
    }
}
