//! Memory tree: a layered Monte Carlo tree over the search-space axes.
//!
//! Layer `d` of the tree assigns the `d`-th axis of the [`SearchSpace`];
//! every leaf at the last layer is a complete configuration. Selection uses
//! a prior-weighted UCT score
//!
//! ```text
//! Q(s,a) + λ·π(a|s)·sqrt(ln N(s) / N(s,a))
//! ```
//!
//! with unvisited actions scoring +∞. Rewards are back-propagated as running
//! means along the root-to-leaf path.
//!
//! Proposals that have been simulated but not yet back-propagated count as
//! pending visits in the selection counts, so a batch of simulations made
//! before any training finishes spreads over distinct branches. Pending
//! visits never touch `Q` and are cleared by the matching back-propagation.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{ActionDistribution, PriorSource};
use crate::space::{Axis, AxisValue, HyperConfig, SearchSpace, Snap};

pub const DEFAULT_LAMBDA: f64 = 1.4;
/// Reward floor of the log transform, and the reward of a failed run under it.
pub const LOG_MSE_FLOOR: f64 = 1e-12;
pub const LOG_DIVERGED_REWARD: f64 = -12.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("node {0} has not been expanded")]
    NotExpanded(usize),
    #[error("node {0} is already expanded")]
    AlreadyExpanded(usize),
    #[error("node {0} is not a terminal state")]
    NotTerminal(usize),
    #[error("node {0} does not exist in this tree")]
    UnknownNode(usize),
    #[error("prior has {got} entries for {expected} actions")]
    PriorShape { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardTransform {
    /// `-MSE`
    Raw,
    /// `-log10(max(MSE, 1e-12))`
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reward {
    pub value: f64,
    pub transform: RewardTransform,
}

impl RewardTransform {
    pub fn reward(self, mse: f64) -> Reward {
        let value = match self {
            RewardTransform::Raw => -mse,
            RewardTransform::Log => -mse.max(LOG_MSE_FLOOR).log10(),
        };
        Reward { value, transform: self }
    }

    /// Reward assigned to a diverged or failed training.
    pub fn divergence_penalty(self, worst_so_far: Option<f64>) -> Reward {
        let value = match self {
            RewardTransform::Raw => worst_so_far.unwrap_or(0.0) - 1.0,
            RewardTransform::Log => LOG_DIVERGED_REWARD,
        };
        Reward { value, transform: self }
    }
}

/// Partial assignment from the root, in axis order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeState {
    pub path: Vec<(Axis, AxisValue)>,
}

impl TreeState {
    pub fn depth(&self) -> usize {
        self.path.len()
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub child: NodeId,
    pub visits: u64,
    pub q: f64,
    #[serde(skip)]
    pending: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub parent: Option<NodeId>,
    /// Grid index chosen on each axis so far.
    pub choices: Vec<usize>,
    pub visits: u64,
    /// `None` until expanded; otherwise one edge per value of the next axis.
    pub edges: Option<Vec<Edge>>,
    #[serde(skip)]
    pending: u64,
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        self.choices.len()
    }
    pub fn is_expanded(&self) -> bool {
        self.edges.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerSource {
    Simulation,
    Seed,
}

/// One back-propagated outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub leaf: NodeId,
    pub config: HyperConfig,
    pub mse: Option<f64>,
    pub reward: f64,
    pub source: LedgerSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expansion {
    Expanded(usize),
    /// Terminal node: nothing to add.
    Skipped,
}

/// A leaf reached by [`MemoryTree::simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub leaf: NodeId,
    pub config: HyperConfig,
}

/// Prior-weighted UCT over explicit statistics.
///
/// `edges` holds `(Q(s,a), N(s,a))`. Unvisited actions win first, ordered by
/// prior and then index; otherwise the maximum score wins, lowest index on
/// exact ties.
pub fn uct_select(parent_visits: u64, edges: &[(f64, u64)], prior: &[f64], lambda: f64) -> usize {
    assert_eq!(edges.len(), prior.len());
    assert!(!edges.is_empty());
    let mut best_unvisited: Option<usize> = None;
    for (i, &(_, n)) in edges.iter().enumerate() {
        if n == 0 && best_unvisited.is_none_or(|b| prior[i] > prior[b]) {
            best_unvisited = Some(i);
        }
    }
    if let Some(i) = best_unvisited {
        return i;
    }
    let ln_n = (parent_visits as f64).ln();
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, &(q, n)) in edges.iter().enumerate() {
        let score = q + lambda * prior[i] * (ln_n / n as f64).sqrt();
        if score > best_score {
            best = i;
            best_score = score;
        }
    }
    best
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemoryTree {
    space: SearchSpace,
    transform: RewardTransform,
    nodes: Vec<TreeNode>,
    ledger: Vec<LedgerEntry>,
    #[serde(default)]
    snaps: Vec<Snap>,
}

/// JSON export consumed by reports and tests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeSnapshot {
    pub axis_order: Vec<Axis>,
    pub transform: RewardTransform,
    pub nodes: Vec<SnapshotNode>,
    pub ledger: Vec<LedgerEntry>,
    pub snaps: Vec<Snap>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub state: TreeState,
    pub visits: u64,
    pub edges: Vec<SnapshotEdge>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotEdge {
    pub value: AxisValue,
    pub child: NodeId,
    pub visits: u64,
    pub q: f64,
}

impl MemoryTree {
    pub fn new(space: SearchSpace, transform: RewardTransform) -> Self {
        let root = TreeNode {
            parent: None,
            choices: Vec::new(),
            visits: 0,
            edges: None,
            pending: 0,
        };
        Self {
            space,
            transform,
            nodes: vec![root],
            ledger: Vec::new(),
            snaps: Vec::new(),
        }
    }

    pub const ROOT: NodeId = 0;

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn transform(&self) -> RewardTransform {
        self.transform
    }

    pub fn node(&self, id: NodeId) -> Result<&TreeNode, TreeError> {
        self.nodes.get(id).ok_or(TreeError::UnknownNode(id))
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn ledger(&self) -> &[LedgerEntry] {
        &self.ledger
    }

    /// Grid snaps applied while inserting external configurations.
    pub fn snaps(&self) -> &[Snap] {
        &self.snaps
    }

    pub fn is_terminal(&self, id: NodeId) -> bool {
        self.nodes[id].depth() == self.space.axis_count()
    }

    pub fn state(&self, id: NodeId) -> Result<TreeState, TreeError> {
        let node = self.node(id)?;
        let path = node
            .choices
            .iter()
            .enumerate()
            .map(|(d, &i)| {
                let g = &self.space.axes[d];
                (g.axis, g.values[i])
            })
            .collect();
        Ok(TreeState { path })
    }

    /// Axis assigned by the children of `id`, if it is not terminal.
    pub fn next_axis(&self, id: NodeId) -> Option<Axis> {
        self.space.axes.get(self.nodes[id].depth()).map(|g| g.axis)
    }

    pub fn actions(&self, id: NodeId) -> &[AxisValue] {
        self.space
            .axes
            .get(self.nodes[id].depth())
            .map(|g| g.values.as_slice())
            .unwrap_or(&[])
    }

    pub fn expand(&mut self, id: NodeId) -> Result<Expansion, TreeError> {
        let node = self.node(id)?;
        if self.is_terminal(id) {
            return Ok(Expansion::Skipped);
        }
        if node.is_expanded() {
            return Err(TreeError::AlreadyExpanded(id));
        }
        let n = self.actions(id).len();
        let base = self.nodes[id].choices.clone();
        let mut edges = Vec::with_capacity(n);
        for i in 0..n {
            let mut choices = base.clone();
            choices.push(i);
            let child = self.nodes.len();
            self.nodes.push(TreeNode {
                parent: Some(id),
                choices,
                visits: 0,
                edges: None,
                pending: 0,
            });
            edges.push(Edge {
                child,
                visits: 0,
                q: 0.0,
                pending: 0,
            });
        }
        self.nodes[id].edges = Some(edges);
        Ok(Expansion::Expanded(n))
    }

    /// UCT choice at an expanded node. Pending proposals count as visits.
    pub fn select(&self, id: NodeId, prior: &ActionDistribution, lambda: f64) -> Result<usize, TreeError> {
        let node = self.node(id)?;
        let edges = node.edges.as_ref().ok_or(TreeError::NotExpanded(id))?;
        if prior.probs.len() != edges.len() {
            return Err(TreeError::PriorShape {
                expected: edges.len(),
                got: prior.probs.len(),
            });
        }
        let stats: Vec<(f64, u64)> = edges.iter().map(|e| (e.q, e.visits + e.pending)).collect();
        Ok(uct_select(node.visits + node.pending, &stats, &prior.probs, lambda))
    }

    /// Walk select/expand from the root to a terminal state and return the
    /// completed configuration. The path is marked pending until
    /// [`Self::backpropagate`] is called for the leaf.
    pub fn simulate<R: Rng>(
        &mut self,
        prior: &dyn PriorSource,
        lambda: f64,
        rng: &mut R,
    ) -> Result<Proposal, TreeError> {
        let mut id = Self::ROOT;
        while !self.is_terminal(id) {
            if !self.nodes[id].is_expanded() {
                self.expand(id)?;
            }
            let state = self.state(id)?;
            let axis = self.next_axis(id).expect("non-terminal node has a next axis");
            let dist = prior.prior(&state, axis, self.actions(id));
            let a = self.select(id, &dist, lambda)?;
            self.nodes[id].pending += 1;
            let edge = &mut self.nodes[id].edges.as_mut().expect("expanded")[a];
            edge.pending += 1;
            id = edge.child;
        }
        self.nodes[id].pending += 1;
        let config = self.config_for(id, rng.random())?;
        Ok(Proposal { leaf: id, config })
    }

    /// Leaf configuration: path values plus space defaults and `seed`.
    pub fn config_for(&self, leaf: NodeId, seed: u64) -> Result<HyperConfig, TreeError> {
        if !self.is_terminal(leaf) {
            return Err(TreeError::NotTerminal(leaf));
        }
        let mut c = self.space.base_config();
        for (axis, value) in self.state(leaf)?.path {
            c.set(axis, value);
        }
        c.seed = seed;
        Ok(c)
    }

    /// Add one observation of `reward` to every edge on the path to `leaf`.
    pub fn backpropagate(&mut self, leaf: NodeId, reward: f64) -> Result<(), TreeError> {
        self.node(leaf)?;
        if !self.is_terminal(leaf) {
            return Err(TreeError::NotTerminal(leaf));
        }
        let leaf_node = &mut self.nodes[leaf];
        leaf_node.visits += 1;
        leaf_node.pending = leaf_node.pending.saturating_sub(1);
        let mut child = leaf;
        while let Some(parent) = self.nodes[child].parent {
            let a = *self.nodes[child].choices.last().expect("non-root node has a choice");
            let p = &mut self.nodes[parent];
            p.visits += 1;
            p.pending = p.pending.saturating_sub(1);
            let e = &mut p.edges.as_mut().expect("parent of a node is expanded")[a];
            e.visits += 1;
            e.pending = e.pending.saturating_sub(1);
            e.q += (reward - e.q) / e.visits as f64;
            child = parent;
        }
        Ok(())
    }

    /// Reward for an outcome under this tree's transform; failed runs get
    /// the divergence penalty relative to the worst reward seen so far.
    pub fn reward_for(&self, mse: Option<f64>, diverged: bool) -> Reward {
        match mse {
            Some(m) if !diverged && m.is_finite() => self.transform.reward(m),
            _ => {
                let worst = self.ledger.iter().map(|e| e.reward).reduce(f64::min);
                self.transform.divergence_penalty(worst)
            }
        }
    }

    /// Record an outcome for a simulated leaf and back-propagate its reward.
    pub fn record_outcome(
        &mut self,
        leaf: NodeId,
        config: HyperConfig,
        mse: Option<f64>,
        diverged: bool,
    ) -> Result<Reward, TreeError> {
        let reward = self.reward_for(mse, diverged);
        self.backpropagate(leaf, reward.value)?;
        self.ledger.push(LedgerEntry {
            leaf,
            config,
            mse: mse.filter(|m| !diverged && m.is_finite()),
            reward: reward.value,
            source: LedgerSource::Simulation,
        });
        Ok(reward)
    }

    /// Create (if needed) the path for `config` after conforming it to the
    /// space (see [`SearchSpace::conform`]).
    pub fn insert_path(&mut self, config: &HyperConfig) -> Result<(NodeId, HyperConfig, Vec<Snap>), TreeError> {
        let (snapped, snaps) = self.space.conform(config);
        let mut id = Self::ROOT;
        for d in 0..self.space.axis_count() {
            if !self.nodes[id].is_expanded() {
                self.expand(id)?;
            }
            let g = &self.space.axes[d];
            let value = snapped.get(g.axis);
            let a = g
                .values
                .iter()
                .position(|v| *v == value)
                .expect("snapped value is on the grid");
            id = self.nodes[id].edges.as_ref().expect("expanded")[a].child;
        }
        self.snaps.extend(snaps.iter().copied());
        Ok((id, snapped, snaps))
    }

    /// Warm-start with an externally obtained configuration and its outcome.
    /// Returns the snaps applied.
    pub fn seed_from_retrieval(
        &mut self,
        config: &HyperConfig,
        mse: Option<f64>,
        diverged: bool,
    ) -> Result<(Reward, Vec<Snap>), TreeError> {
        let (leaf, snapped, snaps) = self.insert_path(config)?;
        for s in &snaps {
            tracing::info!(axis = %s.axis, from = %s.from, to = %s.to, "snapped retrieved config to grid");
        }
        let reward = self.reward_for(mse, diverged);
        self.backpropagate(leaf, reward.value)?;
        self.ledger.push(LedgerEntry {
            leaf,
            config: snapped,
            mse: mse.filter(|m| !diverged && m.is_finite()),
            reward: reward.value,
            source: LedgerSource::Seed,
        });
        Ok((reward, snaps))
    }

    /// Seed with a raw reward value (for callers that already computed it).
    pub fn seed_with_reward(&mut self, config: &HyperConfig, reward: f64) -> Result<Vec<Snap>, TreeError> {
        let (leaf, snapped, snaps) = self.insert_path(config)?;
        self.backpropagate(leaf, reward)?;
        self.ledger.push(LedgerEntry {
            leaf,
            config: snapped,
            mse: None,
            reward,
            source: LedgerSource::Seed,
        });
        Ok(snaps)
    }

    /// Configuration with the highest observed raw reward.
    pub fn best_config(&self) -> Option<(HyperConfig, Option<f64>)> {
        let mut best: Option<&LedgerEntry> = None;
        for e in &self.ledger {
            if best.is_none_or(|b| e.reward > b.reward) {
                best = Some(e);
            }
        }
        best.map(|e| (e.config, e.mse))
    }

    pub fn snapshot(&self) -> TreeSnapshot {
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(id, n)| {
                let actions = self.actions(id);
                SnapshotNode {
                    id,
                    parent: n.parent,
                    state: self.state(id).expect("node exists"),
                    visits: n.visits,
                    edges: n
                        .edges
                        .iter()
                        .flatten()
                        .enumerate()
                        .map(|(i, e)| SnapshotEdge {
                            value: actions[i],
                            child: e.child,
                            visits: e.visits,
                            q: e.q,
                        })
                        .collect(),
                }
            })
            .collect();
        TreeSnapshot {
            axis_order: self.space.axes.iter().map(|g| g.axis).collect(),
            transform: self.transform,
            nodes,
            ledger: self.ledger.clone(),
            snaps: self.snaps.clone(),
        }
    }
}
