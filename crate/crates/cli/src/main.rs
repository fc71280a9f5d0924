use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use pinntune::catalog;
use pinntune::db::{ExperimentDb, PdeFilter};
use pinntune::orchestrator::{
    self, BaselineMethod, BaselineSettings, BootstrapSettings, OptimizeOutcome, OptimizeSettings, PolicyMode,
};
use pinntune::pgkr::{self, WeightScheme};
use pinntune::policy::{EndpointSettings, LlmPlanner};
use pinntune::space::yaml::from_yaml;
use pinntune::space::{SearchSpace, SpaceProfile};
use pinntune::trainer::train;
use pinntune::tree::{RewardTransform, DEFAULT_LAMBDA};

#[derive(Parser)]
#[command(
    name = "pinntune",
    version,
    about = "Hyperparameter search for physics-informed neural networks"
)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Benchmark PDEs.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
    /// Print the feature vector of a PDE.
    Encode {
        pde: String,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Rank solved PDEs by similarity to a target.
    Similar {
        pde: String,
        #[arg(long, default_value_t = 1)]
        top_k: usize,
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Train one configuration.
    Train {
        pde: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fill a database with random-configuration runs on every PDE.
    Bootstrap {
        /// Runs per PDE.
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long)]
        db: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Retrieval-seeded memory-tree search.
    Optimize(SearchArgs),
    /// Random or TPE search on the same budget.
    Baseline {
        pde: String,
        #[arg(long, value_enum, default_value_t = MethodArg::Random)]
        method: MethodArg,
        #[arg(long, default_value_t = 21)]
        budget: usize,
        #[arg(long)]
        db: PathBuf,
        /// Master seeds 0..N.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, value_enum, default_value_t = RewardArg::Raw)]
        reward: RewardArg,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        space: SpaceArgs,
    },
    /// Full search against two reduced variants on an equal budget.
    Ablate(SearchArgs),
    /// Mean and spread of per-seed best MSE.
    Report {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        pde: Option<String>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CatalogAction {
    List,
}

#[derive(Args)]
struct SpaceArgs {
    #[arg(long, value_enum, default_value_t = ProfileArg::Tree)]
    profile: ProfileArg,
    /// Override the profile's training iterations.
    #[arg(long)]
    train_iters: Option<u32>,
}

#[derive(Args)]
struct SearchArgs {
    pde: String,
    #[arg(long, default_value_t = 5)]
    iters: u32,
    #[arg(long, default_value_t = 4)]
    sims: u32,
    #[arg(long, default_value_t = 1)]
    top_k: usize,
    #[arg(long, value_enum, default_value_t = PolicyArg::Heuristic)]
    policy: PolicyArg,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, value_enum, default_value_t = RewardArg::Raw)]
    reward: RewardArg,
    #[arg(long)]
    db: PathBuf,
    /// Master seeds 0..N.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[command(flatten)]
    space: SpaceArgs,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Write the final tree of every seed here.
    #[arg(long)]
    snapshot_dir: Option<PathBuf>,
    /// Append every chat request and reply to this JSONL file.
    #[arg(long)]
    prompts_log: Option<PathBuf>,
    /// Endpoint settings file; falls back to PINNTUNE_LLM_* variables.
    #[arg(long)]
    llm_config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Heuristic,
    Llm,
}

#[derive(Clone, Copy, ValueEnum)]
enum RewardArg {
    Raw,
    Log,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Random,
    Tpe,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Paper,
    Tree,
    Desk,
}

impl From<RewardArg> for RewardTransform {
    fn from(r: RewardArg) -> Self {
        match r {
            RewardArg::Raw => RewardTransform::Raw,
            RewardArg::Log => RewardTransform::Log,
        }
    }
}

impl From<ProfileArg> for SpaceProfile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Paper => SpaceProfile::Paper,
            ProfileArg::Tree => SpaceProfile::Tree,
            ProfileArg::Desk => SpaceProfile::Desk,
        }
    }
}

fn weights(path: &Option<PathBuf>) -> Result<WeightScheme> {
    match path {
        Some(p) => Ok(WeightScheme::load(p)?),
        None => Ok(WeightScheme::default()),
    }
}

fn print_line(value: &serde_json::Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{value}")?;
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn summary(o: &OptimizeOutcome, arm: Option<&str>) -> serde_json::Value {
    let mut v = json!({
        "pde_id": o.pde_id,
        "seed": o.seed,
        "best_mse": o.best_mse,
        "best_config": o.best_config,
        "best_so_far": o.best_so_far,
        "total_trainings": o.total_trainings,
    });
    if let Some(p) = &o.snapshot_path {
        v["snapshot"] = json!(p);
    }
    if let Some(a) = arm {
        v["arm"] = json!(a);
    }
    v
}

fn search_settings(a: &SearchArgs) -> Result<(OptimizeSettings, Option<LlmPlanner>)> {
    let mut s = OptimizeSettings::new(&a.pde, &a.db);
    s.iterations = a.iters;
    s.simulations = a.sims;
    s.top_k = a.top_k;
    s.lambda = a.lambda;
    s.reward = a.reward.into();
    s.seeds = (0..a.seeds).collect();
    s.workers = a.workers;
    s.profile = a.space.profile.into();
    s.train_iters = a.space.train_iters;
    s.weights = weights(&a.weights)?;
    s.snapshot_dir = a.snapshot_dir.clone();
    s.policy = match a.policy {
        PolicyArg::Heuristic => PolicyMode::Heuristic,
        PolicyArg::Llm => PolicyMode::Llm,
    };
    s.check()?;
    let planner = match s.policy {
        PolicyMode::Heuristic => None,
        PolicyMode::Llm => {
            let endpoint = match &a.llm_config {
                Some(p) => EndpointSettings::load(p)?,
                None => EndpointSettings::from_env()?,
            };
            let mut planner = LlmPlanner::http(endpoint);
            if let Some(log) = &a.prompts_log {
                planner = planner.with_prompts_log(log);
            }
            Some(planner)
        }
    };
    Ok((s, planner))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Catalog {
            action: CatalogAction::List,
        } => {
            for pde in catalog::list_pdes() {
                print_line(&json!({ "id": pde.id, "labels": pde.labels, "domain": pde.domain }))?;
            }
        }
        Command::Encode { pde, weights: w } => {
            let spec = catalog::get(&pde)?;
            let v = pgkr::encode(&spec.labels, &weights(&w)?);
            print_line(&json!({ "id": spec.id, "dim": v.dim(), "values": v.values }))?;
        }
        Command::Similar {
            pde,
            top_k,
            db,
            weights: w,
        } => {
            let spec = catalog::get(&pde)?;
            let db = ExperimentDb::open(&db)?;
            for r in pgkr::top_k(spec.id, &spec.labels, &db.snapshot(), top_k, &weights(&w)?)? {
                print_line(&serde_json::to_value(&r)?)?;
            }
        }
        Command::Train { pde, config, out } => {
            let spec = catalog::get(&pde)?;
            let text = fs::read_to_string(&config).with_context(|| format!("cannot read {}", config.display()))?;
            let cfg = from_yaml(&text).with_context(|| format!("{}", config.display()))?;
            if let Err(violations) = SearchSpace::paper(spec.time_dependent).validate(&cfg) {
                let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
                bail!("{}: {}", config.display(), list.join("; "));
            }
            let report = train(spec, &cfg);
            let json = serde_json::to_string_pretty(&report)?;
            match out {
                Some(p) => write_file(&p, &(json + "\n"))?,
                None => println!("{json}"),
            }
        }
        Command::Bootstrap {
            runs,
            db,
            seed,
            space,
            workers,
        } => {
            let db = ExperimentDb::open(&db)?;
            let mut b = BootstrapSettings::new(runs);
            b.seed = seed;
            b.profile = space.profile.into();
            b.train_iters = space.train_iters;
            b.workers = workers;
            let records = orchestrator::bootstrap(&db, &b)?;
            print_line(&json!({ "appended": records.len(), "db": db.path() }))?;
        }
        Command::Optimize(args) => {
            let (settings, planner) = search_settings(&args)?;
            let db = ExperimentDb::open(&settings.db_path)?;
            for &seed in &settings.seeds {
                let o = orchestrator::optimize_seed(&settings, &db, planner.as_ref(), seed)?;
                print_line(&summary(&o, None))?;
            }
        }
        Command::Ablate(args) => {
            let (settings, planner) = search_settings(&args)?;
            let db = ExperimentDb::open(&settings.db_path)?;
            for &seed in &settings.seeds {
                let a = orchestrator::ablate_seed(&settings, &db, planner.as_ref(), seed)?;
                for (name, o) in a.arms() {
                    print_line(&summary(o, Some(name)))?;
                }
            }
        }
        Command::Baseline {
            pde,
            method,
            budget,
            db,
            seeds,
            reward,
            workers,
            space,
        } => {
            let db = ExperimentDb::open(&db)?;
            let mut b = BaselineSettings::new(pde, budget);
            b.reward = reward.into();
            b.workers = workers;
            b.profile = space.profile.into();
            b.train_iters = space.train_iters;
            let method = match method {
                MethodArg::Random => BaselineMethod::Random,
                MethodArg::Tpe => BaselineMethod::Tpe,
            };
            for seed in 0..seeds {
                let o = match method {
                    BaselineMethod::Random => orchestrator::baseline_random(&db, &b, seed)?,
                    BaselineMethod::Tpe => orchestrator::baseline_tpe(&db, &b, seed)?,
                };
                print_line(&summary(&o, None))?;
            }
        }
        Command::Report { db, pde, csv } => {
            let db = ExperimentDb::open(&db)?;
            let filter = match pde {
                Some(id) => PdeFilter::Only(id),
                None => PdeFilter::Any,
            };
            let rows = orchestrator::report(&db.snapshot(), &filter);
            print!("{}", orchestrator::report_table(&rows));
            if let Some(path) = csv {
                write_file(&path, &orchestrator::report_csv(&rows))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::new(format!("pinntune={level}")))
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
