//! Reference computations that share no code path with the library: hazards
//! are re-derived from the parameter values and integrated numerically,
//! posteriors come from quadrature and optimal plans from enumeration.

#![allow(dead_code)]

use followup_core::pdmp::{
    CostParams, Decision, Mode, Model, ModelParams, PatientState, PiecewiseLinear, Treatment,
};
use followup_core::rng::seeded;

/// Linear interpolation through `knots`, flat outside them.
pub fn interpolate(knots: &[(f64, f64)], x: f64) -> f64 {
    let (first, last) = (knots[0], knots[knots.len() - 1]);
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let k = knots
        .windows(2)
        .find(|w| x <= w[1].0)
        .expect("x lies inside the knots");
    let (a, b) = (k[0], k[1]);
    a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
}

/// Composite Simpson rule with `2 * halves` subintervals.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, halves: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = 2 * halves.max(1);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Hazard of the first jump along the unclamped flow, `τ ↦ λ(m, ζ e^{vτ}, u + τ)`,
/// rebuilt from the raw parameter values.
pub fn hazard_along_flow(
    params: &ModelParams,
    state: &PatientState,
    treatment: Treatment,
) -> Box<dyn Fn(f64) -> f64> {
    let u = state.since_jump;
    let k1 = params.relapse1.knots().to_vec();
    let k2 = params.relapse2.knots().to_vec();
    let s = &params.slopes;
    match (state.mode, treatment) {
        (Mode::Remission, Treatment::None) => {
            Box::new(move |t| interpolate(&k1, u + t) + interpolate(&k2, u + t))
        }
        (Mode::Remission, Treatment::A) => Box::new(move |t| interpolate(&k2, u + t)),
        (Mode::Remission, Treatment::B) => Box::new(move |t| interpolate(&k1, u + t)),
        (Mode::Disease1, Treatment::A) | (Mode::Disease2, Treatment::B) => {
            let e = params.escape.expect("escape risk enabled");
            let v = if state.mode == Mode::Disease1 {
                -s.disease1_efficiency_a
            } else {
                -s.disease2_efficiency_b
            };
            let z = state.marker;
            Box::new(move |t| (e.scale * z * (v * t).exp()).powf(e.shape))
        }
        _ => Box::new(|_| 0.0),
    }
}

/// Kolmogorov-Smirnov distance between `samples` (infinite values allowed:
/// "never") and the first-jump law with hazard `rate`.
pub fn ks_against_hazard(samples: &mut [f64], rate: &dyn Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut cumulative = 0.0;
    let mut prev = 0.0;
    let mut worst: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        if !x.is_finite() {
            break;
        }
        // Fine steps keep Simpson accurate across the kinks of the hazard.
        let halves = ((x - prev) / 0.5).ceil() as usize + 1;
        cumulative += simpson(rate, prev, x, halves);
        prev = x;
        let cdf = 1.0 - (-cumulative).exp();
        worst = worst
            .max((i as f64 / n - cdf).abs())
            .max(((i + 1) as f64 / n - cdf).abs());
    }
    worst
}

/// Each `(mode, treatment)` pair with a nonzero risk, with a starting state.
pub fn risk_cells() -> Vec<(PatientState, Treatment)> {
    vec![
        (
            PatientState::new(Mode::Remission, 1.0, 0.0, 0.0),
            Treatment::None,
        ),
        (
            PatientState::new(Mode::Remission, 1.0, 700.0, 700.0),
            Treatment::None,
        ),
        (
            PatientState::new(Mode::Remission, 1.0, 0.0, 0.0),
            Treatment::A,
        ),
        (
            PatientState::new(Mode::Remission, 1.0, 200.0, 200.0),
            Treatment::B,
        ),
        (
            PatientState::new(Mode::Disease1, 5.0, 0.0, 100.0),
            Treatment::A,
        ),
        (
            PatientState::new(Mode::Disease2, 10.0, 0.0, 100.0),
            Treatment::B,
        ),
    ]
}

pub const TOY_RELAPSE_RATE: f64 = 0.01;
pub const TOY_NOISE_SD: f64 = 0.3;

/// Two live modes: remission relapses into disease 1 at a constant rate,
/// disease 1 never escapes.
pub fn toy_params() -> ModelParams {
    let mut p = ModelParams::default()
        .without_risk()
        .with_noise_variance(TOY_NOISE_SD * TOY_NOISE_SD);
    p.relapse1 = PiecewiseLinear::constant(TOY_RELAPSE_RATE);
    p
}

pub fn toy_model() -> Model {
    Model::new(toy_params(), CostParams::default()).unwrap()
}

/// Exact `P(disease 1 | y)` after an untreated visit of `days` from `s0`.
pub fn toy_posterior_disease(params: &ModelParams, days: f64, y: f64) -> f64 {
    let c = TOY_RELAPSE_RATE;
    let v = params.slopes.disease1_untreated;
    let sd = params.noise_variance.sqrt();
    let lik = |z: f64| (-(y - z).powi(2) / (2.0 * sd * sd)).exp();
    // Marker at the visit after a relapse at τ, clamped at D.
    let marker =
        |tau: f64| (params.nominal_level * (v * (days - tau)).exp()).min(params.death_level);
    let relapsed = simpson(
        &|tau| c * (-c * tau).exp() * lik(marker(tau)),
        0.0,
        days,
        4000,
    );
    let quiet = (-c * days).exp() * lik(params.nominal_level);
    relapsed / (relapsed + quiet)
}

/// Optimal expected cost and first decision over every decision sequence
/// until death or the horizon, on a model without randomness. Ties keep the
/// earlier decision.
pub fn brute_force(model: &Model, state: &PatientState) -> (Option<Decision>, f64) {
    if state.is_dead() || state.clock >= model.horizon() {
        return (None, 0.0);
    }
    let mut best: (Option<Decision>, f64) = (None, f64::INFINITY);
    for d in Decision::ALL {
        let step = model.generate(state, d, &mut seeded(0)).unwrap();
        let total = step.cost + brute_force(model, &step.next_state).1;
        if total < best.1 {
            best = (Some(d), total);
        }
    }
    best
}

/// All nine first decisions with their optimal continuation cost.
pub fn brute_force_values(model: &Model, state: &PatientState) -> [f64; 9] {
    Decision::ALL.map(|d| {
        let step = model.generate(state, d, &mut seeded(0)).unwrap();
        step.cost + brute_force(model, &step.next_state).1
    })
}

/// Noiseless model without random jumps, stopped after `horizon` days.
pub fn deterministic_model(horizon: f64) -> Model {
    let mut p = ModelParams::default()
        .without_risk()
        .with_noise_variance(0.0);
    p.horizon = horizon;
    Model::new(p, CostParams::default()).unwrap()
}

/// Mode-marginal errors of both filters against the exact posterior on the
/// toy model after one untreated 60-day visit reading `y`.
#[derive(Debug, Clone, Copy)]
pub struct ToyComparison {
    pub y: f64,
    pub exact: f64,
    pub particle: f64,
    pub conditional: f64,
}

impl ToyComparison {
    /// Total variation of a two-point marginal is the gap on either point.
    pub fn tv_particle(&self) -> f64 {
        (self.particle - self.exact).abs()
    }

    pub fn tv_conditional(&self) -> f64 {
        (self.conditional - self.exact).abs()
    }
}

pub const TOY_READINGS: [f64; 4] = [0.9, 1.2, 1.5, 2.2];

/// Runs both filters at `particles` and grid refinement `refinement`.
pub fn toy_filter_comparison(particles: usize, refinement: usize, seed: u64) -> Vec<ToyComparison> {
    use followup_core::filters::{
        ConditionalFilter, GridSpec, ParticleBudget, ParticleFilter, Precision, TransitionTensor,
    };
    use followup_core::pdmp::{Delay, Observation};
    use std::sync::Arc;

    let model = toy_model();
    let s0 = model.initial_state();
    let d = Decision::new(Treatment::None, Delay::Days60);
    let spec = GridSpec::default().refined(refinement);
    let tensor = Arc::new(TransitionTensor::build(&model, &spec).unwrap());
    let cf = ConditionalFilter::new(tensor, &model, &s0).unwrap();
    let pf = ParticleFilter::new(s0, particles).unwrap();
    let precision = Precision::new(0.01).unwrap();
    TOY_READINGS
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let obs = Observation::reading(y, 60.0);
            let (pf_next, _) = pf.update(
                &model,
                d,
                &obs,
                precision,
                &ParticleBudget::default(),
                &mut followup_core::rng::stream(seed, i as u64),
            );
            let (cf_next, _) = cf.update(d, &obs);
            ToyComparison {
                y,
                exact: toy_posterior_disease(model.params(), 60.0, y),
                particle: pf_next.mode_marginal()[1],
                conditional: cf_next.mode_marginal()[1],
            }
        })
        .collect()
}
