//! Planner priors over tree actions and the prompt sent to a chat planner.

mod llm;
mod prompt;

pub use llm::*;
pub use prompt::*;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::db::{self, PdeFilter, RunRecord, ValueStat};
use crate::space::{Axis, AxisValue, HyperConfig, SearchSpace};
use crate::tree::{RewardTransform, TreeState};

pub const SIMPLEX_TOL: f64 = 1e-9;
pub const DEFAULT_PRIOR_TEMPERATURE: f64 = 0.7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("distribution has no entries")]
    Empty,
    #[error("probability {0} at index {1} is negative or not finite")]
    BadEntry(f64, usize),
    #[error("probabilities sum to {0}")]
    NotNormalized(f64),
    #[error("temperature must be positive, got {0}")]
    Temperature(f64),
}

/// Probabilities over the child actions of one tree node, in action order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution {
    pub probs: Vec<f64>,
}

impl ActionDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, PolicyError> {
        if probs.is_empty() {
            return Err(PolicyError::Empty);
        }
        if let Some((i, &p)) = probs.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p >= 0.0)) {
            return Err(PolicyError::BadEntry(p, i));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(PolicyError::NotNormalized(sum));
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform distribution over no actions");
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    /// `softmax(scores / temperature)`, shifted by the maximum for stability.
    pub fn softmax(scores: &[f64], temperature: f64) -> Result<Self, PolicyError> {
        if scores.is_empty() {
            return Err(PolicyError::Empty);
        }
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(PolicyError::Temperature(temperature));
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
        let z: f64 = exps.iter().sum();
        Ok(Self {
            probs: exps.into_iter().map(|e| e / z).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }
}

/// Source of `π(a|s)` for the memory tree.
pub trait PriorSource: Sync {
    fn prior(&self, state: &TreeState, axis: Axis, actions: &[AxisValue]) -> ActionDistribution;
}

pub struct UniformPrior;

impl PriorSource for UniformPrior {
    fn prior(&self, _: &TreeState, _: Axis, actions: &[AxisValue]) -> ActionDistribution {
        ActionDistribution::uniform(actions.len())
    }
}

/// Softmax of historical mean reward per axis value.
///
/// Values never seen in the history score the mean of the seen values, so
/// they are neither favoured nor ruled out. An axis with no history is
/// uniform.
#[derive(Debug, Clone, Default)]
pub struct HeuristicPrior {
    pub stats: BTreeMap<Axis, Vec<ValueStat>>,
    pub temperature: f64,
}

impl HeuristicPrior {
    pub fn new(stats: BTreeMap<Axis, Vec<ValueStat>>, temperature: f64) -> Self {
        Self { stats, temperature }
    }

    /// Aggregate `records` over every axis of `space`. Rewards are recomputed
    /// under `transform`.
    pub fn from_records(
        records: &[RunRecord],
        filter: &PdeFilter,
        space: &SearchSpace,
        transform: RewardTransform,
        temperature: f64,
    ) -> Self {
        let stats = space
            .axes
            .iter()
            .map(|g| (g.axis, db::axis_stats(records, filter, g.axis, Some(transform))))
            .collect();
        Self { stats, temperature }
    }

    pub fn scores(&self, axis: Axis, actions: &[AxisValue]) -> Option<Vec<f64>> {
        let stats = self.stats.get(&axis).filter(|s| !s.is_empty())?;
        let seen: Vec<Option<f64>> = actions
            .iter()
            .map(|a| stats.iter().find(|s| s.value == *a).map(|s| s.mean_reward))
            .collect();
        let known: Vec<f64> = seen.iter().flatten().copied().collect();
        if known.is_empty() {
            return None;
        }
        let fill = known.iter().sum::<f64>() / known.len() as f64;
        Some(seen.into_iter().map(|s| s.unwrap_or(fill)).collect())
    }

    pub fn distribution(&self, axis: Axis, actions: &[AxisValue]) -> ActionDistribution {
        match self.scores(axis, actions) {
            Some(scores) => ActionDistribution::softmax(&scores, self.temperature)
                .unwrap_or_else(|_| ActionDistribution::uniform(actions.len())),
            None => ActionDistribution::uniform(actions.len()),
        }
    }
}

impl PriorSource for HeuristicPrior {
    fn prior(&self, _: &TreeState, axis: Axis, actions: &[AxisValue]) -> ActionDistribution {
        self.distribution(axis, actions)
    }
}

/// Draw every axis independently from `prior`, ignoring tree statistics.
pub fn sample_from_prior<R: Rng>(prior: &dyn PriorSource, space: &SearchSpace, rng: &mut R) -> HyperConfig {
    let mut c = space.base_config();
    let mut state = TreeState { path: Vec::new() };
    for g in &space.axes {
        let dist = prior.prior(&state, g.axis, &g.values);
        let v = g.values[dist.sample(rng)];
        c.set(g.axis, v);
        state.path.push((g.axis, v));
    }
    c.seed = rng.random();
    c
}
