//! End-to-end search: retrieval, tree seeding, the plan/train/revise loop,
//! baselines, ablations and reporting.

mod baseline;
mod report;

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{self, CatalogError, PdeSpec};
use crate::db::{new_run_id, now_rfc3339, DbError, ExperimentDb, PdeFilter, Provenance, RunRecord, SCHEMA_VERSION};
use crate::pgkr::{self, PgkrError, Retrieved, WeightScheme};
use crate::policy::LlmPlanner;
use crate::policy::{sample_from_prior, HeuristicPrior, DEFAULT_PRIOR_TEMPERATURE};
use crate::policy::{ContextError, CurveSummary, Feedback, PlannerContext};
use crate::seed::{derive, derive_named};
use crate::space::{HyperConfig, SearchSpace, SpaceProfile};
use crate::trainer::{train, TrainReport};
use crate::tree::{MemoryTree, NodeId, Reward, RewardTransform, TreeError, TreeState, DEFAULT_LAMBDA};

pub use baseline::{
    baseline_random, baseline_tpe, tpe_propose, tpe_scores, tpe_warmup, BaselineMethod, BaselineSettings,
};
pub use report::{report, report_csv, report_table, sci, ReportRow};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Retrieval(#[from] PgkrError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error("invalid settings: {0}")]
    Settings(String),
    #[error("llm policy selected but no planner was configured")]
    NoPlanner,
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PolicyMode {
    #[default]
    Heuristic,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeSettings {
    pub pde_id: String,
    pub iterations: u32,
    pub simulations: u32,
    pub top_k: usize,
    pub lambda: f64,
    pub policy: PolicyMode,
    pub reward: RewardTransform,
    /// One full search per master seed.
    pub seeds: Vec<u64>,
    pub db_path: PathBuf,
    /// Parallel trainings within one iteration. Results do not depend on it.
    pub workers: usize,
    pub profile: SpaceProfile,
    pub prior_temperature: f64,
    pub weights: WeightScheme,
    /// Replaces the profile's iteration count for every training.
    pub train_iters: Option<u32>,
    /// Where tree snapshots are written; none when unset.
    pub snapshot_dir: Option<PathBuf>,
}

impl OptimizeSettings {
    pub fn new(pde_id: impl Into<String>, db_path: impl Into<PathBuf>) -> Self {
        Self {
            pde_id: pde_id.into(),
            iterations: 5,
            simulations: 4,
            top_k: 1,
            lambda: DEFAULT_LAMBDA,
            policy: PolicyMode::Heuristic,
            reward: RewardTransform::Raw,
            seeds: (0..10).collect(),
            db_path: db_path.into(),
            workers: 1,
            profile: SpaceProfile::Tree,
            prior_temperature: DEFAULT_PRIOR_TEMPERATURE,
            weights: WeightScheme::default(),
            train_iters: None,
            snapshot_dir: None,
        }
    }

    pub fn check(&self) -> Result<(), OrchestratorError> {
        let bad = |m: &str| Err(OrchestratorError::Settings(m.to_string()));
        if self.iterations < 1 {
            return bad("iterations must be at least 1");
        }
        if self.simulations < 1 {
            return bad("simulations must be at least 1");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and non-negative");
        }
        if !(self.prior_temperature > 0.0) {
            return bad("prior temperature must be positive");
        }
        if self.workers < 1 {
            return bad("workers must be at least 1");
        }
        Ok(())
    }
}

/// Result of one search (or one baseline run) for one master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOutcome {
    pub pde_id: String,
    pub seed: u64,
    /// Minimum-MSE configuration; none when every training diverged.
    pub best_config: Option<HyperConfig>,
    pub best_mse: Option<f64>,
    /// Best MSE so far after each iteration (after each training for the
    /// baselines). Entries stay `None` until a training completes.
    pub best_so_far: Vec<Option<f64>>,
    pub total_trainings: usize,
    pub snapshot_path: Option<PathBuf>,
    /// Every record appended, in order.
    pub runs: Vec<RunRecord>,
}

impl OptimizeOutcome {
    fn new(pde_id: &str, seed: u64) -> Self {
        Self {
            pde_id: pde_id.to_string(),
            seed,
            best_config: None,
            best_mse: None,
            best_so_far: Vec::new(),
            total_trainings: 0,
            snapshot_path: None,
            runs: Vec::new(),
        }
    }

    fn push(&mut self, record: RunRecord) {
        if let Some(m) = record.completed_mse() {
            if self.best_mse.is_none_or(|b| m < b) {
                self.best_mse = Some(m);
                self.best_config = Some(record.config);
            }
        }
        self.total_trainings += 1;
        self.runs.push(record);
    }

    fn mark(&mut self) {
        self.best_so_far.push(self.best_mse);
    }
}

/// Runs trainings on a fixed number of threads, returning reports in input
/// order.
pub struct Workers {
    pool: Option<rayon::ThreadPool>,
}

impl Workers {
    pub fn new(n: usize) -> Self {
        let pool = (n > 1).then(|| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("thread pool")
        });
        Self { pool }
    }

    pub fn map<T: Sync, U: Send>(&self, items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
        use rayon::prelude::*;
        match &self.pool {
            None => items.iter().map(f).collect(),
            Some(pool) => pool.install(|| items.par_iter().map(f).collect()),
        }
    }

    pub fn train_all(&self, pde: &PdeSpec, configs: &[HyperConfig]) -> Vec<TrainReport> {
        self.map(configs, |c| train(pde, c))
    }
}

/// Divergence penalties relative to the worst reward seen in one experiment.
#[derive(Debug, Clone, Copy)]
pub struct RewardTracker {
    pub transform: RewardTransform,
    worst: Option<f64>,
}

impl RewardTracker {
    pub fn new(transform: RewardTransform) -> Self {
        Self { transform, worst: None }
    }

    pub fn reward(&mut self, report: &TrainReport) -> Reward {
        let r = match report.test_mse {
            Some(m) if !report.diverged && m.is_finite() => self.transform.reward(m),
            _ => self.transform.divergence_penalty(self.worst),
        };
        self.worst = Some(self.worst.map_or(r.value, |w| w.min(r.value)));
        r
    }
}

pub fn run_record(
    pde: &PdeSpec,
    report: &TrainReport,
    reward: Reward,
    provenance: Provenance,
    iteration: u32,
    master_seed: u64,
) -> RunRecord {
    RunRecord {
        schema_version: SCHEMA_VERSION,
        run_id: new_run_id(),
        pde_id: pde.id.to_string(),
        labels: pde.labels,
        config: report.config,
        mse: if report.diverged { None } else { report.test_mse },
        reward: reward.value,
        reward_transform: reward.transform,
        diverged: report.diverged,
        provenance,
        iteration,
        wall_time_s: report.wall_time_s,
        timestamp: now_rfc3339(),
        seed: master_seed,
    }
}

/// Seed of the `k`-th training of an experiment with master seed `seed`.
pub fn training_seed(seed: u64, k: usize) -> u64 {
    derive(derive_named(seed, "train"), k as u64)
}

/// The search space of `profile` for `pde`, with an optional iteration
/// override.
pub fn space_for(pde: &PdeSpec, profile: SpaceProfile, train_iters: Option<u32>) -> SearchSpace {
    let mut space = SearchSpace::new(profile, pde.time_dependent);
    if let Some(n) = train_iters {
        space.defaults.train_iters = n;
    }
    space
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSettings {
    /// Runs per catalog PDE.
    pub runs: usize,
    pub seed: u64,
    pub profile: SpaceProfile,
    pub train_iters: Option<u32>,
    pub workers: usize,
}

impl BootstrapSettings {
    pub fn new(runs: usize) -> Self {
        Self {
            runs,
            seed: 0,
            profile: SpaceProfile::Tree,
            train_iters: None,
            workers: 1,
        }
    }
}

/// Train `runs` random configurations on every catalog PDE and append them
/// with provenance `bootstrap`, PDE by PDE in catalog order.
pub fn bootstrap(db: &ExperimentDb, settings: &BootstrapSettings) -> Result<Vec<RunRecord>, OrchestratorError> {
    let (n_runs, seed) = (settings.runs, settings.seed);
    if n_runs < 1 {
        return Err(OrchestratorError::Settings(
            "bootstrap needs at least one run per PDE".into(),
        ));
    }
    if settings.workers < 1 {
        return Err(OrchestratorError::Settings("workers must be at least 1".into()));
    }
    let workers = Workers::new(settings.workers);
    let mut out = Vec::new();
    for pde in catalog::list_pdes() {
        let space = space_for(pde, settings.profile, settings.train_iters);
        let stream = derive_named(seed, pde.id);
        let configs: Vec<HyperConfig> = (0..n_runs)
            .map(|i| space.random_sample(derive(stream, i as u64)))
            .collect();
        let mut rewards = RewardTracker::new(RewardTransform::Raw);
        for (i, report) in workers.train_all(pde, &configs).iter().enumerate() {
            let r = run_record(
                pde,
                report,
                rewards.reward(report),
                Provenance::Bootstrap,
                i as u32,
                seed,
            );
            db.append(r.clone())?;
            out.push(r);
        }
        tracing::info!(pde = pde.id, runs = n_runs, "bootstrapped");
    }
    Ok(out)
}

/// How a search fills its budget.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Arm {
    /// Optional retrieval seeds, then tree simulations (or LLM proposals).
    Tree {
        retrieval: bool,
        provenance: Provenance,
        warm: usize,
    },
    /// Independent draws from the heuristic prior: `warm` first, then the
    /// usual iterations.
    PriorSample { warm: usize },
}

struct Search<'a> {
    settings: &'a OptimizeSettings,
    db: &'a ExperimentDb,
    planner: Option<&'a LlmPlanner>,
    workers: Workers,
    pde: &'static PdeSpec,
    space: SearchSpace,
}

impl<'a> Search<'a> {
    fn new(
        settings: &'a OptimizeSettings,
        db: &'a ExperimentDb,
        planner: Option<&'a LlmPlanner>,
    ) -> Result<Self, OrchestratorError> {
        settings.check()?;
        if settings.policy == PolicyMode::Llm && planner.is_none() {
            return Err(OrchestratorError::NoPlanner);
        }
        let pde = catalog::get(&settings.pde_id)?;
        Ok(Self {
            settings,
            db,
            planner,
            workers: Workers::new(settings.workers),
            pde,
            space: space_for(pde, settings.profile, settings.train_iters),
        })
    }

    fn prior(&self, records: &[RunRecord]) -> HeuristicPrior {
        HeuristicPrior::from_records(
            records,
            &PdeFilter::Except(self.pde.id.to_string()),
            &self.space,
            self.settings.reward,
            self.settings.prior_temperature,
        )
    }

    fn retrieve(&self, records: &[RunRecord]) -> Result<Vec<Retrieved>, OrchestratorError> {
        if self.settings.top_k == 0 {
            return Ok(Vec::new());
        }
        match pgkr::top_k(
            self.pde.id,
            &self.pde.labels,
            records,
            self.settings.top_k,
            &self.settings.weights,
        ) {
            Ok(r) => Ok(r),
            Err(PgkrError::EmptyRetrieval) => {
                tracing::warn!(pde = self.pde.id, "no solved PDEs to retrieve from; starting cold");
                Ok(Vec::new())
            }
            Err(e) => Err(e.into()),
        }
    }

    fn append(&self, out: &mut OptimizeOutcome, record: RunRecord) -> Result<(), OrchestratorError> {
        self.db.append(record.clone())?;
        out.push(record);
        Ok(())
    }

    fn run(&self, seed: u64, arm: Arm, tag: &str) -> Result<OptimizeOutcome, OrchestratorError> {
        let records = self.db.snapshot();
        let prior = self.prior(&records);
        let mut out = OptimizeOutcome::new(self.pde.id, seed);
        let mut policy_rng = ChaCha8Rng::seed_from_u64(derive_named(seed, "policy"));
        let mut k = 0usize;
        let mut next_seed = move || {
            k += 1;
            training_seed(seed, k - 1)
        };
        let n = self.settings.iterations;
        let sims = self.settings.simulations as usize;

        if let Arm::PriorSample { warm } = arm {
            let mut rewards = RewardTracker::new(self.settings.reward);
            let sizes = std::iter::once(warm).chain(std::iter::repeat_n(sims, n as usize));
            for (iteration, size) in sizes.enumerate() {
                let configs: Vec<HyperConfig> = (0..size)
                    .map(|_| {
                        let mut c = sample_from_prior(&prior, &self.space, &mut policy_rng);
                        c.seed = next_seed();
                        c
                    })
                    .collect();
                for report in self.workers.train_all(self.pde, &configs) {
                    let reward = rewards.reward(&report);
                    let r = run_record(
                        self.pde,
                        &report,
                        reward,
                        Provenance::PolicySample,
                        iteration as u32,
                        seed,
                    );
                    self.append(&mut out, r)?;
                }
                if iteration > 0 {
                    out.mark();
                }
            }
            return Ok(out);
        }
        let Arm::Tree {
            retrieval,
            provenance,
            warm,
        } = arm
        else {
            unreachable!()
        };

        let mut tree = MemoryTree::new(self.space.clone(), self.settings.reward);
        let retrieved = if retrieval {
            self.retrieve(&records)?
        } else {
            Vec::new()
        };
        if !retrieved.is_empty() {
            let mut raw = Vec::new();
            let mut configs = Vec::new();
            for r in &retrieved {
                let mut c = r.config;
                c.seed = next_seed();
                let (conformed, snaps) = self.space.conform(&c);
                for s in &snaps {
                    tracing::info!(from_pde = %r.pde_id, axis = %s.axis, from = %s.from, to = %s.to, "snapped retrieved value");
                }
                raw.push(c);
                configs.push(conformed);
            }
            for (c, report) in raw.iter().zip(self.workers.train_all(self.pde, &configs)) {
                let (reward, _) = tree.seed_from_retrieval(c, report.test_mse, report.diverged)?;
                let r = run_record(self.pde, &report, reward, Provenance::SeededRetrieval, 0, seed);
                self.append(&mut out, r)?;
            }
        }
        if warm > 0 {
            let proposals = (0..warm)
                .map(|_| {
                    tree.simulate(&prior, self.settings.lambda, &mut policy_rng)
                        .map(|p| (p.leaf, p.config, provenance))
                })
                .collect::<Result<Vec<_>, _>>()?;
            self.train_proposals(&mut tree, &mut out, proposals, &mut next_seed, 0, seed)?;
        }

        let mut feedback: Option<Feedback> = None;
        for t in 0..n {
            let mut proposals: Vec<(NodeId, HyperConfig, Provenance)> = Vec::with_capacity(sims);
            match (self.settings.policy, self.planner) {
                (PolicyMode::Llm, Some(planner)) => {
                    let path = match tree.best_config() {
                        Some((c, _)) => state_of(&self.space, &c),
                        None => TreeState { path: Vec::new() },
                    };
                    let ctx = PlannerContext::new(self.pde.summary(), retrieved.clone(), path, feedback.clone(), t, n)?;
                    let replies = self
                        .workers
                        .map(&[()].repeat(sims), |_| planner.propose(&ctx, &self.space));
                    for reply in replies {
                        match reply {
                            Ok(c) => {
                                let (leaf, conformed, _) = tree.insert_path(&c)?;
                                proposals.push((leaf, conformed, Provenance::Llm));
                            }
                            Err(fallback) => {
                                tracing::warn!(reason = %fallback.reason, "llm proposal failed; using the tree");
                                let p = tree.simulate(&prior, self.settings.lambda, &mut policy_rng)?;
                                proposals.push((p.leaf, p.config, provenance));
                            }
                        }
                    }
                }
                _ => {
                    for _ in 0..sims {
                        let p = tree.simulate(&prior, self.settings.lambda, &mut policy_rng)?;
                        proposals.push((p.leaf, p.config, provenance));
                    }
                }
            }
            let reports = self.train_proposals(&mut tree, &mut out, proposals, &mut next_seed, t + 1, seed)?;
            out.mark();
            feedback = Some(iteration_feedback(&reports));
            if let Some(f) = &feedback {
                tracing::debug!(iteration = t, mse = ?f.mse, diverged = f.diverged, "iteration feedback");
            }
        }

        if let Some(dir) = &self.settings.snapshot_dir {
            out.snapshot_path = Some(write_snapshot(dir, &tree, self.pde.id, seed, tag)?);
        }
        Ok(out)
    }

    /// Train proposals in parallel, then apply rewards in proposal order.
    fn train_proposals(
        &self,
        tree: &mut MemoryTree,
        out: &mut OptimizeOutcome,
        proposals: Vec<(NodeId, HyperConfig, Provenance)>,
        next_seed: &mut impl FnMut() -> u64,
        iteration: u32,
        seed: u64,
    ) -> Result<Vec<TrainReport>, OrchestratorError> {
        let mut configs: Vec<HyperConfig> = proposals.iter().map(|p| p.1).collect();
        for c in &mut configs {
            c.seed = next_seed();
        }
        let reports = self.workers.train_all(self.pde, &configs);
        for ((leaf, _, provenance), report) in proposals.iter().zip(&reports) {
            let reward = tree.record_outcome(*leaf, report.config, report.test_mse, report.diverged)?;
            self.append(out, run_record(self.pde, report, reward, *provenance, iteration, seed))?;
        }
        Ok(reports)
    }
}

fn state_of(space: &SearchSpace, config: &HyperConfig) -> TreeState {
    TreeState {
        path: space.axes.iter().map(|g| (g.axis, config.get(g.axis))).collect(),
    }
}

/// Feedback from the best (lowest-MSE) report of an iteration; the first
/// report when all diverged.
pub fn iteration_feedback(reports: &[TrainReport]) -> Feedback {
    let mut best = &reports[0];
    for r in reports {
        let better = match (
            r.test_mse.filter(|_| !r.diverged),
            best.test_mse.filter(|_| !best.diverged),
        ) {
            (Some(a), Some(b)) => a < b,
            (Some(_), None) => true,
            _ => false,
        };
        if better {
            best = r;
        }
    }
    Feedback {
        mse: best.test_mse.filter(|_| !best.diverged),
        diverged: best.diverged,
        curve: CurveSummary::from_losses(&best.curve_losses()),
    }
}

fn write_snapshot(
    dir: &Path,
    tree: &MemoryTree,
    pde: &str,
    seed: u64,
    tag: &str,
) -> Result<PathBuf, OrchestratorError> {
    let io = |path: &Path, source| OrchestratorError::Io {
        path: path.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let path = dir.join(format!("{pde}-{tag}-seed{seed}.tree.json"));
    let json = serde_json::to_string_pretty(&tree.snapshot()).expect("snapshot serializes");
    std::fs::write(&path, json).map_err(|e| io(&path, e))?;
    Ok(path)
}

fn mtrs_provenance(settings: &OptimizeSettings) -> Provenance {
    if settings.top_k == 0 {
        Provenance::MtrsNoPgkr
    } else {
        Provenance::Mtrs
    }
}

/// One search for one master seed against an open database.
pub fn optimize_seed(
    settings: &OptimizeSettings,
    db: &ExperimentDb,
    planner: Option<&LlmPlanner>,
    seed: u64,
) -> Result<OptimizeOutcome, OrchestratorError> {
    let search = Search::new(settings, db, planner)?;
    let arm = Arm::Tree {
        retrieval: true,
        provenance: mtrs_provenance(settings),
        warm: 0,
    };
    search.run(seed, arm, "optimize")
}

/// [`optimize_seed`] for every seed in the settings, in order.
pub fn optimize_with(
    settings: &OptimizeSettings,
    db: &ExperimentDb,
    planner: Option<&LlmPlanner>,
) -> Result<Vec<OptimizeOutcome>, OrchestratorError> {
    settings
        .seeds
        .iter()
        .map(|&s| optimize_seed(settings, db, planner, s))
        .collect()
}

/// Opens the database named in the settings and runs every seed.
pub fn optimize(
    settings: &OptimizeSettings,
    planner: Option<&LlmPlanner>,
) -> Result<Vec<OptimizeOutcome>, OrchestratorError> {
    let db = ExperimentDb::open(&settings.db_path)?;
    optimize_with(settings, &db, planner)
}

/// Outcomes of the three ablation arms for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ablation {
    /// Retrieval seeds plus tree search.
    pub full: OptimizeOutcome,
    /// Tree search only; the retrieval slots become extra simulations.
    pub no_retrieval: OptimizeOutcome,
    /// Independent draws from the heuristic prior, no tree statistics.
    pub prior_only: OptimizeOutcome,
}

impl Ablation {
    pub fn arms(&self) -> [(&'static str, &OptimizeOutcome); 3] {
        [
            ("full", &self.full),
            ("no-retrieval", &self.no_retrieval),
            ("prior-only", &self.prior_only),
        ]
    }
}

/// Run the three arms with equal training budgets for one seed. The budget
/// is whatever the full arm spends.
pub fn ablate_seed(
    settings: &OptimizeSettings,
    db: &ExperimentDb,
    planner: Option<&LlmPlanner>,
    seed: u64,
) -> Result<Ablation, OrchestratorError> {
    let mut full_settings = settings.clone();
    full_settings.top_k = settings.top_k.max(1);
    let full = Search::new(&full_settings, db, planner)?.run(
        seed,
        Arm::Tree {
            retrieval: true,
            provenance: Provenance::Mtrs,
            warm: 0,
        },
        "full",
    )?;
    let budget = full.total_trainings;
    let loop_budget = (settings.iterations * settings.simulations) as usize;

    let mut bare = settings.clone();
    bare.top_k = 0;
    bare.policy = PolicyMode::Heuristic;
    let search = Search::new(&bare, db, None)?;
    let no_retrieval = search.run(
        seed,
        Arm::Tree {
            retrieval: false,
            provenance: Provenance::MtrsNoPgkr,
            warm: budget - loop_budget,
        },
        "no-retrieval",
    )?;
    let prior_only = search.run(
        seed,
        Arm::PriorSample {
            warm: budget - loop_budget,
        },
        "prior-only",
    )?;
    Ok(Ablation {
        full,
        no_retrieval,
        prior_only,
    })
}

pub fn ablate(
    settings: &OptimizeSettings,
    db: &ExperimentDb,
    planner: Option<&LlmPlanner>,
) -> Result<Vec<Ablation>, OrchestratorError> {
    settings
        .seeds
        .iter()
        .map(|&s| ablate_seed(settings, db, planner, s))
        .collect()
}

#[cfg(test)]
mod tests;
