use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grid::TransitionTensor;
use crate::error::FilterError;
use crate::pdmp::{Decision, Model, Observation, PatientState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalReport {
    /// The prediction put no mass where the observation is possible; weights
    /// were rebuilt from the likelihood alone.
    pub degenerate: bool,
}

/// Fixed-support belief updated by weighted sums. Updates are deterministic.
#[derive(Debug, Clone)]
pub struct ConditionalFilter {
    tensor: Arc<TransitionTensor>,
    weights: Vec<f64>,
    clock: f64,
    noise_variance: f64,
}

impl ConditionalFilter {
    /// Dirac mass on the grid state closest to `initial`.
    pub fn new(
        tensor: Arc<TransitionTensor>,
        model: &Model,
        initial: &PatientState,
    ) -> Result<Self, FilterError> {
        if model.params().noise_variance <= 0.0 {
            return Err(FilterError::NoiselessModel);
        }
        let grid = tensor.grid();
        let mut weights = vec![0.0; grid.len()];
        for (j, p) in grid.project(initial, tensor.spec().projection) {
            weights[j] += p;
        }
        Ok(Self {
            weights,
            clock: initial.clock,
            noise_variance: model.params().noise_variance,
            tensor,
        })
    }

    /// Filter with explicit weights; they are normalized here.
    pub fn with_weights(
        tensor: Arc<TransitionTensor>,
        model: &Model,
        weights: Vec<f64>,
        clock: f64,
    ) -> Result<Self, FilterError> {
        if model.params().noise_variance <= 0.0 {
            return Err(FilterError::NoiselessModel);
        }
        let total: f64 = weights.iter().sum();
        if weights.len() != tensor.grid().len() || !total.is_finite() || total <= 0.0 {
            return Err(FilterError::EmptyFilter);
        }
        Ok(Self {
            weights: weights.into_iter().map(|w| w / total).collect(),
            clock,
            noise_variance: model.params().noise_variance,
            tensor,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn tensor(&self) -> &Arc<TransitionTensor> {
        &self.tensor
    }

    pub fn mode_marginal(&self) -> [f64; 4] {
        let mut m = [0.0; 4];
        for (p, w) in self.tensor.grid().points().iter().zip(&self.weights) {
            m[p.mode.index()] += w;
        }
        m
    }

    /// One-step prediction `Σ_i T[d][i][j] w_i`.
    pub fn predict(&self, decision: Decision) -> Vec<f64> {
        let n = self.weights.len();
        let mut out = vec![0.0; n];
        for (i, &w) in self.weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, &t) in out.iter_mut().zip(self.tensor.row(decision, i)) {
                *o += t * w;
            }
        }
        out
    }

    fn log_likelihood(&self, observation: &Observation) -> Vec<f64> {
        let grid = self.tensor.grid();
        let death = grid.death_index();
        grid.points()
            .iter()
            .enumerate()
            .map(|(j, p)| match (observation.terminal, j == death) {
                (true, true) => 0.0,
                (false, false) => {
                    let z = observation.reading - p.marker;
                    -z * z / (2.0 * self.noise_variance)
                }
                _ => f64::NEG_INFINITY,
            })
            .collect()
    }

    /// Bayes update `w'_j ∝ g(y | ζ_j) Σ_i T[d][i][j] w_i`.
    pub fn update(
        &self,
        decision: Decision,
        observation: &Observation,
    ) -> (ConditionalFilter, ConditionalReport) {
        let predicted = self.predict(decision);
        let loglik = self.log_likelihood(observation);
        let peak = loglik
            .iter()
            .zip(&predicted)
            .filter(|(_, &p)| p > 0.0)
            .map(|(&l, _)| l)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut post: Vec<f64> = if peak.is_finite() {
            loglik
                .iter()
                .zip(&predicted)
                .map(|(&l, &p)| if p > 0.0 { p * (l - peak).exp() } else { 0.0 })
                .collect()
        } else {
            vec![0.0; predicted.len()]
        };
        let mut total: f64 = post.iter().sum();
        let degenerate = !(total > 0.0 && total.is_finite());
        if degenerate {
            tracing::debug!("conditional filter prediction incompatible with observation; using likelihood only");
            let peak = loglik.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            post = loglik.iter().map(|&l| (l - peak).exp()).collect();
            total = post.iter().sum();
        }
        for w in &mut post {
            *w /= total;
        }
        let next = ConditionalFilter {
            tensor: Arc::clone(&self.tensor),
            weights: post,
            clock: observation.time,
            noise_variance: self.noise_variance,
        };
        (next, ConditionalReport { degenerate })
    }

    /// `k` i.i.d. grid states drawn with the filter weights.
    pub fn sample_states<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<PatientState> {
        if k == 0 {
            return Vec::new();
        }
        let index = WeightedIndex::new(&self.weights).expect("weights are normalized");
        let grid = self.tensor.grid();
        (0..k)
            .map(|_| grid.state(index.sample(rng), self.clock))
            .collect()
    }
}
