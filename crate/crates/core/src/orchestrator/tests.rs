use std::sync::Arc;

use super::*;
use crate::policy::{EndpointSettings, ScriptedTransport, TransportError};
use crate::space::yaml::to_yaml;

fn temp_db() -> (tempfile::TempDir, ExperimentDb) {
    let dir = tempfile::tempdir().unwrap();
    let db = ExperimentDb::open(dir.path().join("runs.jsonl")).unwrap();
    (dir, db)
}

fn quick(pde: &str, dir: &Path) -> OptimizeSettings {
    let mut s = OptimizeSettings::new(pde, dir.join("runs.jsonl"));
    s.profile = SpaceProfile::Desk;
    s.train_iters = Some(15);
    s.seeds = vec![0];
    s
}

fn quick_bootstrap(db: &ExperimentDb, runs: usize) -> Vec<RunRecord> {
    let mut b = BootstrapSettings::new(runs);
    b.profile = SpaceProfile::Desk;
    b.train_iters = Some(15);
    bootstrap(db, &b).unwrap()
}

fn non_increasing(curve: &[Option<f64>]) -> bool {
    let vals: Vec<f64> = curve.iter().flatten().copied().collect();
    vals.windows(2).all(|w| w[1] <= w[0])
}

fn stable(records: &[RunRecord]) -> Vec<RunRecord> {
    records.iter().map(RunRecord::stable).collect()
}

#[test]
fn cold_single_simulation() {
    let (dir, db) = temp_db();
    let mut s = quick("poisson1d", dir.path());
    s.iterations = 1;
    s.simulations = 1;
    let out = optimize_seed(&s, &db, None, 0).unwrap();
    assert_eq!(out.total_trainings, 1);
    assert_eq!(db.len(), 1);
    let run = &db.snapshot()[0];
    assert_eq!(run.provenance, Provenance::Mtrs);
    assert_eq!(out.best_mse, run.completed_mse());
    assert_eq!(out.best_config, Some(run.config));
    assert_eq!(out.best_so_far, vec![run.completed_mse()]);
}

#[test]
fn budget_and_seeding_order() {
    let (dir, db) = temp_db();
    quick_bootstrap(&db, 2);
    assert_eq!(db.len(), 12);
    let before = db.len();
    let s = quick("poisson1d", dir.path());
    let retrieved = pgkr::top_k(
        "poisson1d",
        &catalog::get("poisson1d").unwrap().labels,
        &db.snapshot(),
        1,
        &s.weights,
    )
    .unwrap();
    let out = optimize_seed(&s, &db, None, 4).unwrap();
    assert_eq!(out.total_trainings, 21);
    assert_eq!(db.len() - before, 21);
    assert_eq!(out.best_so_far.len(), 5);
    assert!(non_increasing(&out.best_so_far));

    let first = &out.runs[0];
    assert_eq!(first.provenance, Provenance::SeededRetrieval);
    assert_eq!(first.iteration, 0);
    let space = space_for(catalog::get("poisson1d").unwrap(), SpaceProfile::Desk, Some(15));
    let mut expected = space.conform(&retrieved[0].config).0;
    expected.seed = first.config.seed;
    assert_eq!(first.config, expected);
    assert!(out.runs[1..].iter().all(|r| r.provenance == Provenance::Mtrs));
    for t in 1..=5 {
        assert_eq!(out.runs.iter().filter(|r| r.iteration == t).count(), 4);
    }

    let best = out.best_mse.unwrap();
    let records = db.snapshot();
    assert!(records
        .iter()
        .any(|r| Some(r.config) == out.best_config && r.completed_mse() == Some(best)));
    assert!(out.runs.iter().filter_map(|r| r.completed_mse()).all(|m| m >= best));
}

#[test]
fn worker_count_does_not_change_the_ledger() {
    let mut ledgers = Vec::new();
    for workers in [1, 3] {
        let (dir, db) = temp_db();
        let mut b = BootstrapSettings::new(1);
        b.profile = SpaceProfile::Desk;
        b.train_iters = Some(10);
        b.workers = workers;
        bootstrap(&db, &b).unwrap();
        let mut s = quick("heat1d", dir.path());
        s.iterations = 2;
        s.simulations = 3;
        s.workers = workers;
        optimize_seed(&s, &db, None, 11).unwrap();
        ledgers.push(stable(&db.snapshot()));
    }
    assert_eq!(ledgers[0], ledgers[1]);
}

#[test]
fn bootstrap_is_reproducible() {
    let (_d1, a) = temp_db();
    let (_d2, b) = temp_db();
    let ra = quick_bootstrap(&a, 1);
    let rb = quick_bootstrap(&b, 1);
    assert_eq!(stable(&ra), stable(&rb));
    assert!(ra.iter().all(|r| r.provenance == Provenance::Bootstrap));
    for pde in catalog::list_pdes() {
        let hits = pgkr::top_k(pde.id, &pde.labels, &a.snapshot(), 1, &WeightScheme::default()).unwrap();
        assert!(!hits.is_empty());
    }
}

#[test]
fn ablation_arms_share_a_budget() {
    let (dir, db) = temp_db();
    quick_bootstrap(&db, 1);
    let mut s = quick("poisson1d", dir.path());
    s.iterations = 2;
    s.simulations = 2;
    let a = ablate_seed(&s, &db, None, 2).unwrap();
    assert_eq!(a.full.total_trainings, 5);
    assert_eq!(a.no_retrieval.total_trainings, 5);
    assert_eq!(a.prior_only.total_trainings, 5);
    let count = |o: &OptimizeOutcome, p: Provenance| o.runs.iter().filter(|r| r.provenance == p).count();
    assert_eq!(count(&a.full, Provenance::SeededRetrieval), 1);
    assert_eq!(count(&a.full, Provenance::Mtrs), 4);
    assert_eq!(count(&a.no_retrieval, Provenance::MtrsNoPgkr), 5);
    assert_eq!(count(&a.no_retrieval, Provenance::SeededRetrieval), 0);
    assert_eq!(count(&a.prior_only, Provenance::PolicySample), 5);
    for (_, o) in a.arms() {
        assert_eq!(o.best_so_far.len(), 2);
        assert!(non_increasing(&o.best_so_far));
    }
}

#[test]
fn baselines_spend_their_budget() {
    let (_dir, db) = temp_db();
    let mut b = BaselineSettings::new("poisson1d", 6);
    b.profile = SpaceProfile::Desk;
    b.train_iters = Some(10);
    let r = baseline_random(&db, &b, 5).unwrap();
    assert_eq!(r.total_trainings, 6);
    assert_eq!(r.best_so_far.len(), 6);
    assert!(non_increasing(&r.best_so_far));
    assert!(r.runs.iter().all(|x| x.provenance == Provenance::Random));
    let again = baseline_random(&db, &b, 5).unwrap();
    assert_eq!(stable(&r.runs), stable(&again.runs));

    let t = baseline_tpe(&db, &b, 5).unwrap();
    assert_eq!(t.total_trainings, 6);
    assert!(t.runs.iter().all(|x| x.provenance == Provenance::Tpe));
    assert!(non_increasing(&t.best_so_far));
    b.budget = 3;
    assert!(matches!(baseline_tpe(&db, &b, 5), Err(OrchestratorError::Settings(_))));
    b.budget = 0;
    assert!(matches!(
        baseline_random(&db, &b, 5),
        Err(OrchestratorError::Settings(_))
    ));
}

#[test]
fn contract_errors() {
    let (dir, db) = temp_db();
    let mut s = quick("poisson1d", dir.path());
    s.iterations = 0;
    assert!(matches!(
        optimize_seed(&s, &db, None, 0),
        Err(OrchestratorError::Settings(_))
    ));
    let mut s = quick("poisson1d", dir.path());
    s.policy = PolicyMode::Llm;
    assert!(matches!(
        optimize_seed(&s, &db, None, 0),
        Err(OrchestratorError::NoPlanner)
    ));
    let s = quick("navier-stokes", dir.path());
    assert!(matches!(
        optimize_seed(&s, &db, None, 0),
        Err(OrchestratorError::Catalog(_))
    ));
}

#[test]
fn snapshot_written_and_parsable() {
    let (dir, db) = temp_db();
    let mut s = quick("poisson1d", dir.path());
    s.iterations = 1;
    s.simulations = 2;
    s.snapshot_dir = Some(dir.path().join("trees"));
    let out = optimize_seed(&s, &db, None, 0).unwrap();
    let path = out.snapshot_path.unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(v["nodes"][0]["visits"], 2);
    assert_eq!(v["ledger"].as_array().unwrap().len(), 2);
}

fn fenced(c: &HyperConfig) -> String {
    format!("Here you go.\n```yaml\n{}```\n", to_yaml(c))
}

#[test]
fn llm_mode_threads_feedback_and_falls_back() {
    let (dir, db) = temp_db();
    let pde = catalog::get("poisson1d").unwrap();
    let mut good = SearchSpace::paper(false).base_config();
    good.width = 16;
    good.depth = 3;
    let mut bad = good;
    bad.width = 30;
    // iteration 0: one valid reply, one invalid twice (fallback)
    // iteration 1: two valid replies
    let replies = vec![
        Ok(fenced(&good)),
        Ok(fenced(&bad)),
        Ok(fenced(&bad)),
        Ok(fenced(&good)),
        Err(TransportError("timeout".into())),
    ];
    let transport = Arc::new(ScriptedTransport::new(replies));
    let settings = EndpointSettings::from_lookup(|k| match k {
        "PINNTUNE_LLM_URL" => Some("http://localhost:9".into()),
        "PINNTUNE_LLM_MODEL" => Some("test-model".into()),
        _ => None,
    })
    .unwrap();
    let log = dir.path().join("prompts.jsonl");
    let planner = LlmPlanner::new(settings, Box::new(transport.clone())).with_prompts_log(&log);
    let mut s = quick(pde.id, dir.path());
    s.policy = PolicyMode::Llm;
    s.iterations = 2;
    s.simulations = 2;
    let out = optimize_seed(&s, &db, Some(&planner), 1).unwrap();
    assert_eq!(out.total_trainings, 4);
    let provs: Vec<Provenance> = out.runs.iter().map(|r| r.provenance).collect();
    assert_eq!(
        provs,
        vec![Provenance::Llm, Provenance::Mtrs, Provenance::Llm, Provenance::Mtrs]
    );
    assert_eq!(out.runs[0].config.width, 16);
    assert_eq!(out.runs[0].config.train_iters, 15);

    let requests = transport.requests();
    assert_eq!(requests.len(), 5);
    let first_prompt = &requests[0][1].content;
    assert!(!first_prompt.contains("## Feedback"));
    let best0 = out.runs[..2]
        .iter()
        .filter_map(|r| r.completed_mse())
        .reduce(f64::min)
        .unwrap();
    let later = &requests[3][1].content;
    assert!(later.contains(&format!("mse: {best0:.4e}")), "{later}");
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 5);
}

#[test]
fn feedback_picks_the_best_report() {
    let pde = catalog::get("poisson1d").unwrap();
    let mut c = SearchSpace::new(SpaceProfile::Desk, false).base_config();
    c.train_iters = 5;
    let mut a = train(pde, &c);
    let mut b = a.clone();
    a.test_mse = Some(0.5);
    b.test_mse = Some(0.1);
    let mut d = a.clone();
    d.diverged = true;
    d.test_mse = None;
    assert_eq!(iteration_feedback(&[a.clone(), b.clone(), d.clone()]).mse, Some(0.1));
    let f = iteration_feedback(&[d.clone(), d.clone()]);
    assert!(f.diverged && f.mse.is_none());
    assert_eq!(iteration_feedback(&[d, a]).mse, Some(0.5));
}

#[test]
fn divergence_penalty_tracks_the_worst() {
    let pde = catalog::get("poisson1d").unwrap();
    let mut c = SearchSpace::new(SpaceProfile::Desk, false).base_config();
    c.train_iters = 1;
    let mut ok = train(pde, &c);
    ok.test_mse = Some(0.25);
    let mut bad = ok.clone();
    bad.diverged = true;
    bad.test_mse = None;
    let mut t = RewardTracker::new(RewardTransform::Raw);
    assert_eq!(t.reward(&bad).value, -1.0);
    assert_eq!(t.reward(&ok).value, -0.25);
    assert_eq!(t.reward(&bad).value, -2.0);
    let mut l = RewardTracker::new(RewardTransform::Log);
    assert_eq!(l.reward(&bad).value, -12.0);
}
