use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use super::tree::{ObservationNode, SearchTree};
use super::{bin_observation, PlanDiagnostics, PlannerParams, RolloutPolicy};
use crate::error::PlanError;
use crate::filters::BeliefFilter;
use crate::pdmp::{Decision, Model, PatientState};
use crate::rng::seeded;

/// Fixed inputs of one search.
#[derive(Debug, Clone, Copy)]
pub struct PlanContext<'a> {
    pub model: &'a Model,
    pub params: &'a PlannerParams,
    /// `α′`; the exploration constant is `(1 − α′) Ĉ`.
    pub tradeoff: f64,
}

struct Walk<'a> {
    model: &'a Model,
    policy: RolloutPolicy,
    precision: crate::filters::Precision,
    exploration: f64,
    n_init: u64,
    v_init: f64,
    cap: usize,
    audit: bool,
}

/// Penalized argmin `V(hd) − α √(ln N(h) / N(hd))`. Children without any
/// backed-up cost come first, in [`Decision::ALL`] order; remaining ties
/// keep the earliest decision.
///
/// # Panics
/// If `node` is not expanded.
pub fn ucb_select(node: &ObservationNode, exploration: f64, n_init: u64) -> Decision {
    let actions = node
        .actions
        .as_ref()
        .expect("selection needs an expanded node");
    if let Some(i) = actions.iter().position(|a| a.backups(n_init) == 0) {
        return Decision::ALL[i];
    }
    let log_n = (node.visits.max(1) as f64).ln();
    let mut best = 0;
    let mut best_score = f64::INFINITY;
    for (i, a) in actions.iter().enumerate() {
        let score = a.value - exploration * (log_n / a.visits as f64).sqrt();
        if score < best_score {
            best = i;
            best_score = score;
        }
    }
    Decision::ALL[best]
}

/// Cost of following `policy` from `s` until the horizon or death.
pub fn rollout<R: Rng + ?Sized>(
    model: &Model,
    state: &PatientState,
    policy: RolloutPolicy,
    rng: &mut R,
) -> f64 {
    let horizon = model.horizon();
    let mut s = *state;
    let mut total = 0.0;
    while !s.is_dead() && s.clock < horizon {
        let d = match policy {
            RolloutPolicy::Mode => RolloutPolicy::mode_decision(s.mode),
            RolloutPolicy::Uniform => Decision::ALL[rng.random_range(0..Decision::COUNT)],
        };
        let step = model.generate(&s, d, rng).expect("state is alive");
        total += step.cost;
        s = step.next_state;
    }
    total
}

fn simulate<R: Rng + ?Sized>(
    node: &mut ObservationNode,
    s: &PatientState,
    w: &Walk<'_>,
    rng: &mut R,
) -> f64 {
    if s.is_dead() || s.clock >= w.model.horizon() {
        return 0.0;
    }
    if !node.is_expanded() {
        node.expand(w.n_init, w.v_init, w.audit);
        node.visits += 1;
        node.expansions += 1;
        node.remember(*s, w.cap);
        return rollout(w.model, s, w.policy, rng);
    }
    let d = ucb_select(node, w.exploration, w.n_init);
    let step = w.model.generate(s, d, rng).expect("state is alive");
    let action = &mut node.actions.as_mut().expect("expanded")[d.index()];
    let child = action
        .children
        .entry(bin_observation(&step.observation, w.precision))
        .or_default();
    let total = step.cost + simulate(child, &step.next_state, w, rng);

    node.remember(*s, w.cap);
    node.visits += 1;
    let action = &mut node.actions.as_mut().expect("expanded")[d.index()];
    action.visits += 1;
    action.value += (total - action.value) / action.backups(w.n_init) as f64;
    if let Some(ledger) = action.ledger.as_mut() {
        ledger.push(total);
    }
    total
}

fn walk<'a>(tree: &SearchTree, cx: &PlanContext<'a>) -> Walk<'a> {
    Walk {
        model: cx.model,
        policy: cx.params.rollout,
        precision: cx.params.precision,
        exploration: (1.0 - cx.tradeoff) * tree.cost_scale(),
        n_init: tree.n_init(),
        v_init: tree.v_init(),
        cap: tree.cap(),
        audit: tree.is_audited(),
    }
}

/// One simulation from the root with start state `s`; returns its cost.
pub fn tree_simulate<R: Rng + ?Sized>(
    tree: &mut SearchTree,
    s: &PatientState,
    cx: &PlanContext<'_>,
    rng: &mut R,
) -> f64 {
    let w = walk(tree, cx);
    let live = !s.is_dead() && s.clock < cx.model.horizon();
    let cost = simulate(tree.root_mut(), s, &w, rng);
    if live {
        tree.record_root_cost(cost);
    }
    cost
}

fn search<R: Rng + ?Sized>(
    tree: &mut SearchTree,
    starts: &[PatientState],
    cx: &PlanContext<'_>,
    rng: &mut R,
) {
    let (n_init, v_init, audit) = (tree.n_init(), tree.v_init(), tree.is_audited());
    tree.root_mut().expand(n_init, v_init, audit);
    for s in starts {
        tree_simulate(tree, s, cx, rng);
    }
}

/// Runs `n_search` root simulations from states drawn from `filter` and
/// returns the decision minimizing `V(h_n d)` among the tried decisions.
pub fn plan<R: Rng + ?Sized>(
    tree: &mut SearchTree,
    filter: &BeliefFilter,
    model: &Model,
    params: &PlannerParams,
    rng: &mut R,
) -> Result<PlanDiagnostics, PlanError> {
    params.validate()?;
    if filter.death_probability() >= 1.0 {
        return Err(PlanError::DeadPatient);
    }
    if filter.clock() >= model.horizon() {
        return Err(PlanError::HorizonReached);
    }
    let started = Instant::now();
    let cx = PlanContext {
        model,
        params,
        tradeoff: params.tradeoff(filter),
    };
    let starts = filter.sample_states(params.n_search, rng);
    if starts.is_empty() {
        return Err(PlanError::EmptyBelief);
    }

    let workers = params.workers.min(starts.len());
    if workers <= 1 {
        search(tree, &starts, &cx, rng);
    } else {
        let seeds: Vec<u64> = (0..workers).map(|_| rng.random()).collect();
        let at_fork = tree.cost_snapshot();
        let mut trees: Vec<SearchTree> = (1..workers).map(|_| tree.fork()).collect();
        let placeholder = tree.fork();
        trees.insert(0, std::mem::replace(tree, placeholder));
        let chunk = starts.len().div_ceil(workers);
        trees
            .par_iter_mut()
            .zip(starts.par_chunks(chunk))
            .zip(seeds)
            .for_each(|((t, part), seed)| {
                search(t, part, &cx, &mut seeded(seed));
            });
        let mut trees = trees.into_iter();
        *tree = trees.next().expect("at least one worker");
        for t in trees {
            tree.absorb(t, at_fork);
        }
    }

    let root = tree.root();
    let actions = root.actions.as_ref().expect("root expanded by the search");
    let tried = |i: usize| actions[i].backups(tree.n_init()) > 0;
    let any_tried = (0..Decision::COUNT).any(tried);
    let mut best = None::<usize>;
    for i in 0..Decision::COUNT {
        if any_tried && !tried(i) {
            continue;
        }
        if best.is_none_or(|b| actions[i].value < actions[b].value) {
            best = Some(i);
        }
    }
    let decision = Decision::ALL[best.expect("nine children")];
    tracing::debug!(%decision, root_visits = root.visits, "planned");
    Ok(PlanDiagnostics {
        decision,
        values: std::array::from_fn(|i| actions[i].value),
        visits: std::array::from_fn(|i| actions[i].visits),
        root_visits: root.visits,
        simulations: starts.len(),
        tradeoff: cx.tradeoff,
        exploration: (1.0 - cx.tradeoff) * tree.cost_scale(),
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}
