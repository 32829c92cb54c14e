use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::ObservationBin;
use crate::pdmp::{Decision, PatientState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryToken {
    Decision(Decision),
    Observation(ObservationBin),
}

/// Path below the current root, alternating decisions and observation bins.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HistoryKey(Vec<HistoryToken>);

impl HistoryKey {
    pub fn root() -> Self {
        Self::default()
    }

    /// Extends the key by one decision and the bin of its observation.
    pub fn then(mut self, decision: Decision, bin: ObservationBin) -> Self {
        self.0.push(HistoryToken::Decision(decision));
        self.0.push(HistoryToken::Observation(bin));
        self
    }

    pub fn tokens(&self) -> &[HistoryToken] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Statistics of `hd`: visit count including `N_init`, and the mean cost.
#[derive(Debug, Clone)]
pub struct ActionNode {
    pub visits: u64,
    pub value: f64,
    pub children: HashMap<ObservationBin, ObservationNode>,
    /// Every backed-up cost, kept only on audited trees.
    pub ledger: Option<Vec<f64>>,
}

impl ActionNode {
    fn fresh(n_init: u64, v_init: f64, audit: bool) -> Self {
        Self {
            visits: n_init,
            value: v_init,
            children: HashMap::new(),
            ledger: audit.then(Vec::new),
        }
    }

    /// Number of costs averaged into `value`.
    pub fn backups(&self, n_init: u64) -> u64 {
        self.visits.saturating_sub(n_init)
    }
}

/// Node for a history ending with an observation.
#[derive(Debug, Clone, Default)]
pub struct ObservationNode {
    pub visits: u64,
    /// Rollouts started here when the node was first reached.
    pub expansions: u64,
    pub particles: VecDeque<PatientState>,
    /// The nine `hd` children once the node is expanded.
    pub actions: Option<Box<[ActionNode; 9]>>,
}

impl ObservationNode {
    pub fn is_expanded(&self) -> bool {
        self.actions.is_some()
    }

    pub fn action(&self, decision: Decision) -> Option<&ActionNode> {
        self.actions.as_ref().map(|a| &a[decision.index()])
    }

    pub(crate) fn expand(&mut self, n_init: u64, v_init: f64, audit: bool) {
        if self.actions.is_none() {
            self.actions = Some(Box::new(std::array::from_fn(|_| {
                ActionNode::fresh(n_init, v_init, audit)
            })));
        }
    }

    pub(crate) fn remember(&mut self, state: PatientState, cap: usize) {
        if cap == 0 {
            return;
        }
        while self.particles.len() >= cap {
            self.particles.pop_front();
        }
        self.particles.push_back(state);
    }

    fn count(&self) -> usize {
        1 + self
            .actions
            .iter()
            .flat_map(|a| a.iter())
            .flat_map(|a| a.children.values())
            .map(ObservationNode::count)
            .sum::<usize>()
    }

    fn merge(&mut self, other: ObservationNode, n_init: u64, cap: usize) {
        self.visits += other.visits;
        self.expansions += other.expansions;
        for p in other.particles {
            self.remember(p, cap);
        }
        let Some(theirs) = other.actions else { return };
        let Some(ours) = self.actions.as_mut() else {
            self.actions = Some(theirs);
            return;
        };
        for (mine, their) in ours.iter_mut().zip(*theirs) {
            let (a, b) = (mine.backups(n_init), their.backups(n_init));
            if a + b > 0 {
                mine.value = (mine.value * a as f64 + their.value * b as f64) / (a + b) as f64;
            }
            mine.visits += b;
            if let (Some(l), Some(r)) = (mine.ledger.as_mut(), their.ledger) {
                l.extend(r);
            }
            for (bin, child) in their.children {
                match mine.children.get_mut(&bin) {
                    Some(c) => c.merge(child, n_init, cap),
                    None => {
                        mine.children.insert(bin, child);
                    }
                }
            }
        }
    }
}

/// Search tree rooted at the current real history.
#[derive(Debug, Clone)]
pub struct SearchTree {
    root: ObservationNode,
    n_init: u64,
    v_init: f64,
    cap: usize,
    audit: bool,
    history: HistoryKey,
    cost_total: f64,
    cost_count: u64,
}

impl SearchTree {
    /// Empty tree; node supports hold at most `cap` states.
    pub fn new(n_init: u64, v_init: f64, cap: usize) -> Self {
        Self {
            root: ObservationNode::default(),
            n_init,
            v_init,
            cap,
            audit: false,
            history: HistoryKey::root(),
            cost_total: 0.0,
            cost_count: 0,
        }
    }

    /// Keeps every backed-up cost so node means can be recomputed.
    pub fn audited(mut self) -> Self {
        self.audit = true;
        self
    }

    pub fn is_audited(&self) -> bool {
        self.audit
    }

    pub fn n_init(&self) -> u64 {
        self.n_init
    }

    pub fn v_init(&self) -> f64 {
        self.v_init
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn root(&self) -> &ObservationNode {
        &self.root
    }

    pub(crate) fn root_mut(&mut self) -> &mut ObservationNode {
        &mut self.root
    }

    /// Real history committed since the tree was created.
    pub fn history(&self) -> &HistoryKey {
        &self.history
    }

    pub fn node(&self, key: &HistoryKey) -> Option<&ObservationNode> {
        let mut node = &self.root;
        let mut tokens = key.tokens().iter();
        while let Some(token) = tokens.next() {
            let (HistoryToken::Decision(d), Some(HistoryToken::Observation(bin))) =
                (token, tokens.next())
            else {
                return None;
            };
            node = node.action(*d)?.children.get(bin)?;
        }
        Some(node)
    }

    pub fn node_count(&self) -> usize {
        self.root.count()
    }

    /// Running mean of the absolute root simulation costs, `Ĉ`.
    pub fn cost_scale(&self) -> f64 {
        if self.cost_count == 0 {
            0.0
        } else {
            self.cost_total / self.cost_count as f64
        }
    }

    pub(crate) fn record_root_cost(&mut self, cost: f64) {
        self.cost_total += cost.abs();
        self.cost_count += 1;
    }

    /// Re-roots the tree at `h d bin`, discarding every sibling subtree.
    /// An unseen child yields an empty root.
    pub fn commit_and_prune(&mut self, decision: Decision, bin: ObservationBin) {
        let child = self
            .root
            .actions
            .as_mut()
            .and_then(|a| a[decision.index()].children.remove(&bin))
            .unwrap_or_default();
        self.root = child;
        self.history.0.push(HistoryToken::Decision(decision));
        self.history.0.push(HistoryToken::Observation(bin));
    }

    /// Empty tree with the same settings and cost scale, for a parallel
    /// worker; fold it back with [`SearchTree::absorb`].
    pub(crate) fn fork(&self) -> Self {
        Self {
            root: ObservationNode::default(),
            n_init: self.n_init,
            v_init: self.v_init,
            cap: self.cap,
            audit: self.audit,
            history: self.history.clone(),
            cost_total: self.cost_total,
            cost_count: self.cost_count,
        }
    }

    pub(crate) fn cost_snapshot(&self) -> (f64, u64) {
        (self.cost_total, self.cost_count)
    }

    /// Adds the simulations of `other`, forked when the cost accumulators
    /// stood at `at_fork`.
    pub(crate) fn absorb(&mut self, other: SearchTree, at_fork: (f64, u64)) {
        self.cost_total += other.cost_total - at_fork.0;
        self.cost_count += other.cost_count - at_fork.1;
        self.root.merge(other.root, self.n_init, self.cap);
    }
}
