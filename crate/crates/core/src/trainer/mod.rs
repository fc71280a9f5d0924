//! Fixed PINN trainer: the reward oracle of the search.

pub mod activation;
mod loss;
mod network;
mod optim;
mod points;

pub use loss::{total_loss, Field, LossComponents, LossProblem, ReferenceField};
pub use network::{ChannelPlan, Channels, Network, Tape, MIN_SLOPE};
pub use optim::*;
pub use points::{sample_points, PointSets};

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::PdeSpec;
use crate::seed;
use crate::space::HyperConfig;

/// Training loss above this counts as divergence.
pub const DIVERGENCE_LOSS: f64 = 1e6;
pub const CURVE_EVERY: u32 = 100;
pub const EVAL_GRID_VERSION: &str = "eval-grid/1";
pub const EVAL_POINTS_1D: usize = 256;
pub const EVAL_POINTS_2D: usize = 64;
pub const EVAL_TIME_SLICES: usize = 33;
pub const EVAL_POINTS_HALTON: usize = 4096;

const HALTON_BASES: [u32; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

fn halton(mut i: u64, base: u32) -> f64 {
    let b = f64::from(base);
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= b;
        r += f * (i % u64::from(base)) as f64;
        i /= u64::from(base);
    }
    r
}

/// Fixed evaluation points of a PDE and the reference values there.
#[derive(Debug, Clone)]
pub struct EvalGrid {
    pub points: Array2<f64>,
    pub reference: Vec<f64>,
}

fn build_grid(pde: &PdeSpec) -> EvalGrid {
    let dom = &pde.domain;
    let mid = |k: usize, i: usize, n: usize| dom[k].lo + dom[k].width() * (i as f64 + 0.5) / n as f64;
    let spatial: Vec<Vec<f64>> = match pde.spatial_dims {
        1 => (0..EVAL_POINTS_1D).map(|i| vec![mid(0, i, EVAL_POINTS_1D)]).collect(),
        2 => (0..EVAL_POINTS_2D)
            .flat_map(|i| (0..EVAL_POINTS_2D).map(move |j| (i, j)))
            .map(|(i, j)| vec![mid(0, i, EVAL_POINTS_2D), mid(1, j, EVAL_POINTS_2D)])
            .collect(),
        d => (1..=EVAL_POINTS_HALTON as u64)
            .map(|i| {
                (0..d)
                    .map(|k| dom[k].lo + dom[k].width() * halton(i, HALTON_BASES[k]))
                    .collect()
            })
            .collect(),
    };
    let rows: Vec<Vec<f64>> = match pde.time_axis() {
        None => spatial,
        Some(t) => {
            let iv = dom[t];
            (0..EVAL_TIME_SLICES)
                .flat_map(|s| {
                    let time = iv.lo + iv.width() * s as f64 / (EVAL_TIME_SLICES - 1) as f64;
                    spatial.iter().map(move |x| {
                        let mut p = x.clone();
                        p.push(time);
                        p
                    })
                })
                .collect()
        }
    };
    let d = pde.coords();
    let n = rows.len();
    let reference = rows.iter().map(|p| pde.reference_unchecked(p)).collect();
    let points = Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect()).expect("grid shape");
    EvalGrid { points, reference }
}

/// Cached evaluation grid for `pde`.
pub fn eval_grid(pde: &PdeSpec) -> Arc<EvalGrid> {
    static GRIDS: OnceLock<Mutex<HashMap<&'static str, Arc<EvalGrid>>>> = OnceLock::new();
    let grids = GRIDS.get_or_init(Mutex::default);
    if let Some(g) = grids.lock().unwrap().get(pde.id) {
        return Arc::clone(g);
    }
    let g = Arc::new(build_grid(pde));
    Arc::clone(grids.lock().unwrap().entry(pde.id).or_insert(g))
}

/// Mean squared error against the reference on the fixed evaluation grid.
pub fn test_mse(field: &dyn Field, pde: &PdeSpec) -> f64 {
    let grid = eval_grid(pde);
    let out = field.eval(grid.points.view(), &ChannelPlan::value_only());
    let n = grid.reference.len() as f64;
    out.u()
        .iter()
        .zip(&grid.reference)
        .map(|(u, r)| (u - r) * (u - r))
        .sum::<f64>()
        / n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: u32,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub pde_id: String,
    /// `None` when training diverged.
    pub test_mse: Option<f64>,
    /// `None` when the final loss is not finite.
    pub final_loss: Option<f64>,
    pub final_components: Option<LossComponents>,
    pub loss_curve: Vec<CurvePoint>,
    pub diverged: bool,
    pub iterations_run: u32,
    pub wall_time_s: f64,
    pub config: HyperConfig,
    pub seed: u64,
    pub eval_grid: String,
}

impl TrainReport {
    pub fn curve_losses(&self) -> Vec<f64> {
        self.loss_curve.iter().map(|c| c.loss).collect()
    }
}

fn is_divergent(loss: f64) -> bool {
    !loss.is_finite() || loss > DIVERGENCE_LOSS
}

/// Initial network for `config`. Deterministic in `config.seed`.
pub fn init_network(config: &HyperConfig, pde: &PdeSpec) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive_named(config.seed, "init"));
    Network::from_config(config, pde.coords(), &mut rng)
}

pub fn training_points(config: &HyperConfig, pde: &PdeSpec) -> PointSets {
    sample_points(pde, config, seed::derive_named(config.seed, "points"))
}

/// Full-batch training for `config.train_iters` iterations.
pub fn train(pde: &PdeSpec, config: &HyperConfig) -> TrainReport {
    train_network(pde, config).0
}

/// As [`train`], also returning the final network.
pub fn train_network(pde: &PdeSpec, config: &HyperConfig) -> (TrainReport, Network) {
    let start = Instant::now();
    let mut net = init_network(config, pde);
    let pts = training_points(config, pde);
    let mut problem = LossProblem::new(pde, &pts, config.loss_weights);
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, net.n_params());
    let mut curve = Vec::new();
    let mut diverged = false;
    let mut iterations_run = 0;

    for it in 0..config.train_iters {
        let (loss, grads) = problem.loss_and_grad(&net);
        if it % CURVE_EVERY == 0 {
            curve.push(CurvePoint {
                iteration: it,
                loss: loss.total,
            });
        }
        if is_divergent(loss.total) || grads.iter().any(|g| !g.is_finite()) {
            diverged = true;
            break;
        }
        opt.step(&mut net.params, &grads);
        net.clamp_slopes();
        iterations_run = it + 1;
    }

    let last = problem.loss(&net);
    if curve.last().is_none_or(|c| c.iteration != iterations_run) {
        curve.push(CurvePoint {
            iteration: iterations_run,
            loss: last.total,
        });
    }
    diverged |= is_divergent(last.total);
    let mut mse = None;
    if !diverged {
        let m = test_mse(&net, pde);
        if m.is_finite() {
            mse = Some(m);
        } else {
            diverged = true;
        }
    }
    if diverged {
        curve.retain(|c| c.loss.is_finite());
    }
    let report = TrainReport {
        pde_id: pde.id.to_string(),
        test_mse: mse,
        final_loss: last.total.is_finite().then_some(last.total),
        final_components: last.total.is_finite().then_some(last),
        loss_curve: curve,
        diverged,
        iterations_run,
        wall_time_s: start.elapsed().as_secs_f64(),
        config: *config,
        seed: config.seed,
        eval_grid: EVAL_GRID_VERSION.to_string(),
    };
    (report, net)
}
