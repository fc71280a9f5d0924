//! Random search and a per-axis categorical TPE, on the same budget and
//! seed hierarchy as the tree search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{run_record, space_for, training_seed, OptimizeOutcome, OrchestratorError, RewardTracker, Workers};
use crate::catalog::{self, PdeSpec};
use crate::db::{ExperimentDb, Provenance};
use crate::policy::ActionDistribution;
use crate::seed::derive_named;
use crate::space::{Axis, AxisValue, HyperConfig, SearchSpace, SpaceProfile};
use crate::tree::RewardTransform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMethod {
    Random,
    Tpe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSettings {
    pub pde_id: String,
    pub budget: usize,
    pub profile: SpaceProfile,
    pub reward: RewardTransform,
    pub train_iters: Option<u32>,
    pub workers: usize,
}

impl BaselineSettings {
    pub fn new(pde_id: impl Into<String>, budget: usize) -> Self {
        Self {
            pde_id: pde_id.into(),
            budget,
            profile: SpaceProfile::Tree,
            reward: RewardTransform::Raw,
            train_iters: None,
            workers: 1,
        }
    }
}

/// Random draws before TPE starts modelling: a quarter of the budget, at
/// least four.
pub fn tpe_warmup(budget: usize) -> usize {
    budget.div_ceil(4).max(4).min(budget)
}

/// `(good + 1) / (bad + 1)` per value of `axis`, where the good half is the
/// best `⌈n/2⌉` runs by reward (earlier runs first on ties).
pub fn tpe_scores(history: &[(HyperConfig, f64)], axis: Axis, values: &[AxisValue]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..history.len()).collect();
    order.sort_by(|&a, &b| history[b].1.total_cmp(&history[a].1));
    let n_good = history.len().div_ceil(2);
    let mut good = vec![0usize; values.len()];
    let mut bad = vec![0usize; values.len()];
    for (rank, &i) in order.iter().enumerate() {
        let v = history[i].0.get(axis);
        if let Some(j) = values.iter().position(|x| *x == v) {
            if rank < n_good {
                good[j] += 1;
            } else {
                bad[j] += 1;
            }
        }
    }
    good.iter()
        .zip(&bad)
        .map(|(&g, &b)| (g as f64 + 1.0) / (b as f64 + 1.0))
        .collect()
}

/// Sample every axis independently, proportionally to its TPE scores.
pub fn tpe_propose<R: Rng>(history: &[(HyperConfig, f64)], space: &SearchSpace, rng: &mut R) -> HyperConfig {
    let mut c = space.base_config();
    for g in &space.axes {
        let scores = tpe_scores(history, g.axis, &g.values);
        let total: f64 = scores.iter().sum();
        let dist = ActionDistribution::new(scores.iter().map(|s| s / total).collect())
            .unwrap_or_else(|_| ActionDistribution::uniform(g.values.len()));
        c.set(g.axis, g.values[dist.sample(rng)]);
    }
    c.seed = rng.random();
    c
}

struct Baseline<'a> {
    db: &'a ExperimentDb,
    pde: &'static PdeSpec,
    space: SearchSpace,
    workers: Workers,
    rewards: RewardTracker,
    provenance: Provenance,
    seed: u64,
    out: OptimizeOutcome,
    history: Vec<(HyperConfig, f64)>,
}

impl<'a> Baseline<'a> {
    fn new(
        db: &'a ExperimentDb,
        settings: &BaselineSettings,
        seed: u64,
        provenance: Provenance,
        min_budget: usize,
    ) -> Result<Self, OrchestratorError> {
        if settings.budget < min_budget {
            return Err(OrchestratorError::Settings(format!(
                "budget must be at least {min_budget}"
            )));
        }
        if settings.workers < 1 {
            return Err(OrchestratorError::Settings("workers must be at least 1".into()));
        }
        let pde = catalog::get(&settings.pde_id)?;
        Ok(Self {
            db,
            pde,
            space: space_for(pde, settings.profile, settings.train_iters),
            workers: Workers::new(settings.workers),
            rewards: RewardTracker::new(settings.reward),
            provenance,
            seed,
            out: OptimizeOutcome::new(pde.id, seed),
            history: Vec::new(),
        })
    }

    fn run(&mut self, mut configs: Vec<HyperConfig>) -> Result<(), OrchestratorError> {
        let start = self.out.total_trainings;
        for (i, c) in configs.iter_mut().enumerate() {
            c.seed = training_seed(self.seed, start + i);
        }
        for report in self.workers.train_all(self.pde, &configs) {
            let reward = self.rewards.reward(&report);
            self.history.push((report.config, reward.value));
            let iteration = self.out.total_trainings as u32;
            let r = run_record(self.pde, &report, reward, self.provenance, iteration, self.seed);
            self.db.append(r.clone())?;
            self.out.push(r);
            self.out.mark();
        }
        Ok(())
    }
}

pub fn baseline_random(
    db: &ExperimentDb,
    settings: &BaselineSettings,
    seed: u64,
) -> Result<OptimizeOutcome, OrchestratorError> {
    let mut b = Baseline::new(db, settings, seed, Provenance::Random, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_named(seed, "random"));
    let configs = (0..settings.budget)
        .map(|_| b.space.random_sample_with(&mut rng))
        .collect();
    b.run(configs)?;
    Ok(b.out)
}

pub fn baseline_tpe(
    db: &ExperimentDb,
    settings: &BaselineSettings,
    seed: u64,
) -> Result<OptimizeOutcome, OrchestratorError> {
    let mut b = Baseline::new(db, settings, seed, Provenance::Tpe, 4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_named(seed, "tpe"));
    let warm = tpe_warmup(settings.budget);
    let configs = (0..warm).map(|_| b.space.random_sample_with(&mut rng)).collect();
    b.run(configs)?;
    for _ in warm..settings.budget {
        let c = tpe_propose(&b.history, &b.space, &mut rng);
        b.run(vec![c])?;
    }
    Ok(b.out)
}
