//! Hyperparameter configurations, the grids they are searched over, and
//! their validation.
//!
//! Validation always checks the full published grid (width 8..=256 step 4,
//! depth 3..=10, learning rate in [1e-6, 1e-1], point counts 100..=9600 step
//! 500). Search spaces are finite subsets of that grid; the default
//! memory-tree space coarsens width and depth to keep branching small.

pub mod yaml;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use yaml::{from_yaml, to_yaml, ConfigError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetType {
    Fnn,
    Laaf,
    Gaaf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Elu,
    Selu,
    Sigmoid,
    Silu,
    Relu,
    Tanh,
    Swish,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Rmsprop,
    Adam,
    Adamw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initializer {
    GlorotNormal,
    GlorotUniform,
    HeNormal,
    HeUniform,
    Zeros,
}

pub const NET_TYPES: [NetType; 3] = [NetType::Fnn, NetType::Laaf, NetType::Gaaf];
pub const ACTIVATIONS: [Activation; 8] = [
    Activation::Elu,
    Activation::Selu,
    Activation::Sigmoid,
    Activation::Silu,
    Activation::Relu,
    Activation::Tanh,
    Activation::Swish,
    Activation::Gaussian,
];
pub const OPTIMIZERS: [OptimizerKind; 4] = [
    OptimizerKind::Sgd,
    OptimizerKind::Rmsprop,
    OptimizerKind::Adam,
    OptimizerKind::Adamw,
];
pub const INITIALIZERS: [Initializer; 5] = [
    Initializer::GlorotNormal,
    Initializer::GlorotUniform,
    Initializer::HeNormal,
    Initializer::HeUniform,
    Initializer::Zeros,
];

/// Half-decade learning-rate grid.
pub const LEARNING_RATES: [f64; 11] = [1e-6, 3e-6, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1];
pub const LR_MIN: f64 = 1e-6;
pub const LR_MAX: f64 = 1e-1;

pub const WIDTH_MIN: u32 = 8;
pub const WIDTH_MAX: u32 = 256;
pub const WIDTH_STEP: u32 = 4;
pub const DEPTH_MIN: u32 = 3;
pub const DEPTH_MAX: u32 = 10;
pub const POINTS_MIN: u32 = 100;
pub const POINTS_MAX: u32 = 9600;
pub const POINTS_STEP: u32 = 500;

pub const DEFAULT_TRAIN_ITERS: u32 = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub pde: f64,
    pub bc: f64,
    pub ic: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            pde: 1.0,
            bc: 1.0,
            ic: 1.0,
        }
    }
}

/// One point of the search space. Field order is the YAML key order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperConfig {
    pub net_type: NetType,
    pub activation: Activation,
    pub width: u32,
    pub depth: u32,
    pub optimizer: OptimizerKind,
    pub initializer: Initializer,
    pub learning_rate: f64,
    pub n_domain: u32,
    pub n_boundary: u32,
    pub n_initial: u32,
    pub loss_weights: LossWeights,
    pub train_iters: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    NetType,
    Activation,
    Depth,
    Width,
    Optimizer,
    Initializer,
    LearningRate,
    NDomain,
    NBoundary,
    NInitial,
    LossWeights,
}

impl Axis {
    pub fn key(self) -> &'static str {
        match self {
            Axis::NetType => "net_type",
            Axis::Activation => "activation",
            Axis::Depth => "depth",
            Axis::Width => "width",
            Axis::Optimizer => "optimizer",
            Axis::Initializer => "initializer",
            Axis::LearningRate => "learning_rate",
            Axis::NDomain => "n_domain",
            Axis::NBoundary => "n_boundary",
            Axis::NInitial => "n_initial",
            Axis::LossWeights => "loss_weights",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Default traversal order of the memory tree.
pub const DEFAULT_AXIS_ORDER: [Axis; 10] = [
    Axis::NetType,
    Axis::Activation,
    Axis::Depth,
    Axis::Width,
    Axis::Optimizer,
    Axis::Initializer,
    Axis::LearningRate,
    Axis::NDomain,
    Axis::NBoundary,
    Axis::NInitial,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum AxisValue {
    Net(NetType),
    Activation(Activation),
    Optimizer(OptimizerKind),
    Initializer(Initializer),
    Count(u32),
    Rate(f64),
    Weights(LossWeights),
}

impl fmt::Display for AxisValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn name<T: Serialize>(v: &T) -> String {
            serde_json::to_value(v)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default()
        }
        match self {
            AxisValue::Net(v) => f.write_str(&name(v)),
            AxisValue::Activation(v) => f.write_str(&name(v)),
            AxisValue::Optimizer(v) => f.write_str(&name(v)),
            AxisValue::Initializer(v) => f.write_str(&name(v)),
            AxisValue::Count(v) => write!(f, "{v}"),
            AxisValue::Rate(v) => write!(f, "{v:e}"),
            AxisValue::Weights(w) => write!(f, "{{pde: {}, bc: {}, ic: {}}}", w.pde, w.bc, w.ic),
        }
    }
}

impl HyperConfig {
    pub fn get(&self, axis: Axis) -> AxisValue {
        match axis {
            Axis::NetType => AxisValue::Net(self.net_type),
            Axis::Activation => AxisValue::Activation(self.activation),
            Axis::Depth => AxisValue::Count(self.depth),
            Axis::Width => AxisValue::Count(self.width),
            Axis::Optimizer => AxisValue::Optimizer(self.optimizer),
            Axis::Initializer => AxisValue::Initializer(self.initializer),
            Axis::LearningRate => AxisValue::Rate(self.learning_rate),
            Axis::NDomain => AxisValue::Count(self.n_domain),
            Axis::NBoundary => AxisValue::Count(self.n_boundary),
            Axis::NInitial => AxisValue::Count(self.n_initial),
            Axis::LossWeights => AxisValue::Weights(self.loss_weights),
        }
    }

    /// Assign `value` to `axis`. Panics when the value kind does not fit
    /// the axis, which only a malformed [`SearchSpace`] can produce.
    pub fn set(&mut self, axis: Axis, value: AxisValue) {
        match (axis, value) {
            (Axis::NetType, AxisValue::Net(v)) => self.net_type = v,
            (Axis::Activation, AxisValue::Activation(v)) => self.activation = v,
            (Axis::Depth, AxisValue::Count(v)) => self.depth = v,
            (Axis::Width, AxisValue::Count(v)) => self.width = v,
            (Axis::Optimizer, AxisValue::Optimizer(v)) => self.optimizer = v,
            (Axis::Initializer, AxisValue::Initializer(v)) => self.initializer = v,
            (Axis::LearningRate, AxisValue::Rate(v)) => self.learning_rate = v,
            (Axis::NDomain, AxisValue::Count(v)) => self.n_domain = v,
            (Axis::NBoundary, AxisValue::Count(v)) => self.n_boundary = v,
            (Axis::NInitial, AxisValue::Count(v)) => self.n_initial = v,
            (Axis::LossWeights, AxisValue::Weights(v)) => self.loss_weights = v,
            (axis, value) => panic!("value {value:?} does not belong to axis {axis}"),
        }
    }
}

/// A failed invariant, reported with the YAML key and offending value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub axis: String,
    pub value: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (got {})", self.message, self.value)
    }
}

/// Named presets for [`SearchSpace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceProfile {
    /// Every grid value the validator accepts.
    Paper,
    /// Coarsened width/depth for the memory tree.
    Tree,
    /// Small networks, few points, short training: searches finish in minutes on one core.
    Desk,
}

/// Non-searched fields filled into every emitted configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceDefaults {
    pub train_iters: u32,
    pub loss_weights: LossWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisGrid {
    pub axis: Axis,
    pub values: Vec<AxisValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    /// Ordered axes; this order is the memory-tree layer order.
    pub axes: Vec<AxisGrid>,
    pub time_dependent: bool,
    pub defaults: SpaceDefaults,
}

fn counts(values: impl IntoIterator<Item = u32>) -> Vec<AxisValue> {
    values.into_iter().map(AxisValue::Count).collect()
}

fn point_grid() -> Vec<u32> {
    (POINTS_MIN..=POINTS_MAX).step_by(POINTS_STEP as usize).collect()
}

/// Loss-weight presets used when loss weights are searched.
pub const LOSS_WEIGHT_PRESETS: [LossWeights; 4] = [
    LossWeights {
        pde: 1.0,
        bc: 1.0,
        ic: 1.0,
    },
    LossWeights {
        pde: 1.0,
        bc: 10.0,
        ic: 10.0,
    },
    LossWeights {
        pde: 1.0,
        bc: 100.0,
        ic: 100.0,
    },
    LossWeights {
        pde: 10.0,
        bc: 1.0,
        ic: 1.0,
    },
];

impl SearchSpace {
    pub fn new(profile: SpaceProfile, time_dependent: bool) -> Self {
        let points = point_grid();
        let (widths, depths, n_domain, n_boundary, n_initial, train_iters): (
            Vec<u32>,
            Vec<u32>,
            Vec<u32>,
            Vec<u32>,
            Vec<u32>,
            u32,
        ) = match profile {
            SpaceProfile::Paper => (
                (WIDTH_MIN..=WIDTH_MAX).step_by(WIDTH_STEP as usize).collect(),
                (DEPTH_MIN..=DEPTH_MAX).collect(),
                points.clone(),
                points.clone(),
                points,
                DEFAULT_TRAIN_ITERS,
            ),
            SpaceProfile::Tree => (
                vec![8, 16, 32, 64, 128, 256],
                vec![3, 4, 6, 8, 10],
                points.clone(),
                points.clone(),
                points,
                DEFAULT_TRAIN_ITERS,
            ),
            SpaceProfile::Desk => (
                vec![8, 16, 32],
                vec![3, 4],
                vec![100, 600],
                vec![100],
                vec![100],
                DESK_TRAIN_ITERS,
            ),
        };
        let n_initial = if time_dependent { n_initial } else { vec![0] };
        let grid = |axis: Axis| -> Vec<AxisValue> {
            match axis {
                Axis::NetType => NET_TYPES.iter().map(|&v| AxisValue::Net(v)).collect(),
                Axis::Activation => ACTIVATIONS.iter().map(|&v| AxisValue::Activation(v)).collect(),
                Axis::Depth => counts(depths.iter().copied()),
                Axis::Width => counts(widths.iter().copied()),
                Axis::Optimizer => OPTIMIZERS.iter().map(|&v| AxisValue::Optimizer(v)).collect(),
                Axis::Initializer => INITIALIZERS.iter().map(|&v| AxisValue::Initializer(v)).collect(),
                Axis::LearningRate => LEARNING_RATES.iter().map(|&v| AxisValue::Rate(v)).collect(),
                Axis::NDomain => counts(n_domain.iter().copied()),
                Axis::NBoundary => counts(n_boundary.iter().copied()),
                Axis::NInitial => counts(n_initial.iter().copied()),
                Axis::LossWeights => LOSS_WEIGHT_PRESETS.iter().map(|&w| AxisValue::Weights(w)).collect(),
            }
        };
        Self {
            axes: DEFAULT_AXIS_ORDER
                .iter()
                .map(|&axis| AxisGrid {
                    axis,
                    values: grid(axis),
                })
                .collect(),
            time_dependent,
            defaults: SpaceDefaults {
                train_iters,
                loss_weights: LossWeights::default(),
            },
        }
    }

    /// Default memory-tree space.
    pub fn tree(time_dependent: bool) -> Self {
        Self::new(SpaceProfile::Tree, time_dependent)
    }

    pub fn paper(time_dependent: bool) -> Self {
        Self::new(SpaceProfile::Paper, time_dependent)
    }

    /// Append the loss-weight presets as a final searched axis.
    pub fn with_loss_weight_axis(mut self) -> Self {
        if self.grid(Axis::LossWeights).is_none() {
            self.axes.push(AxisGrid {
                axis: Axis::LossWeights,
                values: LOSS_WEIGHT_PRESETS.iter().map(|&w| AxisValue::Weights(w)).collect(),
            });
        }
        self
    }

    pub fn with_train_iters(mut self, iters: u32) -> Self {
        self.defaults.train_iters = iters;
        self
    }

    pub fn grid(&self, axis: Axis) -> Option<&[AxisValue]> {
        self.axes.iter().find(|g| g.axis == axis).map(|g| g.values.as_slice())
    }

    pub fn axis_count(&self) -> usize {
        self.axes.len()
    }

    /// A configuration holding the first value of every axis plus defaults.
    pub fn base_config(&self) -> HyperConfig {
        let mut c = HyperConfig {
            net_type: NetType::Fnn,
            activation: Activation::Tanh,
            width: 32,
            depth: 4,
            optimizer: OptimizerKind::Adam,
            initializer: Initializer::GlorotNormal,
            learning_rate: 1e-3,
            n_domain: 600,
            n_boundary: 100,
            n_initial: if self.time_dependent { 100 } else { 0 },
            loss_weights: self.defaults.loss_weights,
            train_iters: self.defaults.train_iters,
            seed: 0,
        };
        for g in &self.axes {
            if let Some(&v) = g.values.first() {
                c.set(g.axis, v);
            }
        }
        c
    }

    /// Check the invariants of every field. Returns all violations at once.
    pub fn validate(&self, config: &HyperConfig) -> Result<(), Vec<Violation>> {
        let mut out = Vec::new();
        let mut bad = |axis: &str, value: String, message: String| {
            out.push(Violation {
                axis: axis.to_string(),
                value,
                message,
            })
        };
        let w = config.width;
        if !(WIDTH_MIN..=WIDTH_MAX).contains(&w) || (w - WIDTH_MIN) % WIDTH_STEP != 0 {
            bad("width", w.to_string(), "width not in {8,12,…,256}".into());
        }
        if !(DEPTH_MIN..=DEPTH_MAX).contains(&config.depth) {
            bad("depth", config.depth.to_string(), "depth not in {3,…,10}".into());
        }
        let lr = config.learning_rate;
        if !lr.is_finite() || lr < LR_MIN {
            bad("learning_rate", format!("{lr:e}"), "learning_rate below 1e-6".into());
        } else if lr > LR_MAX {
            bad("learning_rate", format!("{lr:e}"), "learning_rate above 1e-1".into());
        }
        let on_point_grid = |n: u32| (POINTS_MIN..=POINTS_MAX).contains(&n) && (n - POINTS_MIN) % POINTS_STEP == 0;
        for (key, n) in [("n_domain", config.n_domain), ("n_boundary", config.n_boundary)] {
            if !on_point_grid(n) {
                bad(key, n.to_string(), format!("{key} not in {{100,600,…,9600}}"));
            }
        }
        if self.time_dependent {
            if !on_point_grid(config.n_initial) {
                bad(
                    "n_initial",
                    config.n_initial.to_string(),
                    "n_initial not in {100,600,…,9600} for a time-dependent problem".into(),
                );
            }
        } else if config.n_initial != 0 {
            bad(
                "n_initial",
                config.n_initial.to_string(),
                "n_initial must be 0 for a time-independent problem".into(),
            );
        }
        let lw = config.loss_weights;
        for (key, v) in [
            ("loss_weights.pde", lw.pde),
            ("loss_weights.bc", lw.bc),
            ("loss_weights.ic", lw.ic),
        ] {
            if !(v.is_finite() && v > 0.0) {
                bad(key, v.to_string(), format!("{key} must be positive"));
            }
        }
        if config.train_iters == 0 {
            bad("train_iters", "0".into(), "train_iters must be positive".into());
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }

    /// Uniform independent draw per axis; deterministic in `seed`.
    pub fn random_sample(&self, seed: u64) -> HyperConfig {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.random_sample_with(&mut rng)
    }

    pub fn random_sample_with<R: Rng>(&self, rng: &mut R) -> HyperConfig {
        let mut c = self.base_config();
        for g in &self.axes {
            let i = rng.random_range(0..g.values.len());
            c.set(g.axis, g.values[i]);
        }
        c.seed = rng.random();
        c
    }

    /// Move every searched field onto its axis grid: nearest value for
    /// counts, nearest in log space for learning rates, first grid value
    /// for categorical values the grid lacks.
    pub fn snap(&self, config: &HyperConfig) -> (HyperConfig, Vec<Snap>) {
        let mut out = *config;
        let mut snaps = Vec::new();
        for g in &self.axes {
            let current = config.get(g.axis);
            if g.values.contains(&current) {
                continue;
            }
            let distance = |v: &AxisValue| -> f64 {
                match (current, v) {
                    (AxisValue::Count(a), AxisValue::Count(b)) => (a as f64 - *b as f64).abs(),
                    (AxisValue::Rate(a), AxisValue::Rate(b)) => (a.max(1e-300).ln() - b.ln()).abs(),
                    _ => f64::INFINITY,
                }
            };
            let mut best = g.values[0];
            let mut best_d = distance(&best);
            for v in &g.values[1..] {
                let d = distance(v);
                if d < best_d {
                    best = *v;
                    best_d = d;
                }
            }
            out.set(g.axis, best);
            snaps.push(Snap {
                axis: g.axis,
                from: current,
                to: best,
            });
        }
        (out, snaps)
    }

    /// `config` snapped onto the grid with every non-axis field except the
    /// seed reset to this space's defaults.
    pub fn conform(&self, config: &HyperConfig) -> (HyperConfig, Vec<Snap>) {
        let (snapped, snaps) = self.snap(config);
        let mut c = self.base_config();
        for g in &self.axes {
            c.set(g.axis, snapped.get(g.axis));
        }
        c.seed = config.seed;
        (c, snaps)
    }

    /// Human-readable grids, one line per axis.
    pub fn describe(&self) -> String {
        self.axes
            .iter()
            .map(|g| {
                let vals: Vec<String> = g.values.iter().map(|v| v.to_string()).collect();
                format!("{}: [{}]", g.axis, vals.join(", "))
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Training iterations used by the desk profile.
pub const DESK_TRAIN_ITERS: u32 = 300;

/// Record of one field moved onto the grid by [`SearchSpace::snap`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snap {
    pub axis: Axis,
    pub from: AxisValue,
    pub to: AxisValue,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn in_grid() -> HyperConfig {
        let mut c = SearchSpace::tree(false).base_config();
        c.width = 64;
        c.depth = 4;
        c.learning_rate = 1e-3;
        c.n_domain = 600;
        c.n_boundary = 600;
        c
    }

    #[test]
    fn in_grid_point_is_valid() {
        assert_eq!(SearchSpace::tree(false).validate(&in_grid()), Ok(()));
    }

    #[test]
    fn off_grid_width_is_reported() {
        let mut c = in_grid();
        c.width = 30;
        let v = SearchSpace::tree(false).validate(&c).unwrap_err();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].axis, "width");
        assert_eq!(v[0].value, "30");
        assert_eq!(v[0].message, "width not in {8,12,…,256}");
    }

    #[test]
    fn small_learning_rate_is_reported() {
        let mut c = in_grid();
        c.learning_rate = 1e-7;
        let v = SearchSpace::tree(false).validate(&c).unwrap_err();
        assert_eq!(v[0].message, "learning_rate below 1e-6");
    }

    #[test]
    fn every_violation_is_collected() {
        let mut c = in_grid();
        c.width = 300;
        c.depth = 2;
        c.n_initial = 600;
        c.loss_weights.bc = 0.0;
        let v = SearchSpace::tree(false).validate(&c).unwrap_err();
        let axes: Vec<_> = v.iter().map(|v| v.axis.as_str()).collect();
        assert_eq!(axes, ["width", "depth", "n_initial", "loss_weights.bc"]);
    }

    #[test]
    fn time_dependent_requires_initial_points() {
        let mut c = in_grid();
        let space = SearchSpace::tree(true);
        assert!(space.validate(&c).is_err());
        c.n_initial = 1100;
        assert!(space.validate(&c).is_ok());
    }

    #[test]
    fn grid_cardinalities() {
        let paper = SearchSpace::paper(true);
        assert_eq!(paper.grid(Axis::Width).unwrap().len(), 63);
        assert_eq!(paper.grid(Axis::Depth).unwrap().len(), 8);
        assert_eq!(paper.grid(Axis::NDomain).unwrap().len(), 20);
        assert_eq!(paper.grid(Axis::NBoundary).unwrap().len(), 20);
        assert_eq!(paper.grid(Axis::NInitial).unwrap().len(), 20);
        assert_eq!(
            SearchSpace::paper(false).grid(Axis::NInitial).unwrap(),
            &[AxisValue::Count(0)]
        );
        let tree = SearchSpace::tree(false);
        assert_eq!(tree.grid(Axis::Width).unwrap().len(), 6);
        assert_eq!(tree.grid(Axis::Depth).unwrap().len(), 5);
        assert_eq!(tree.grid(Axis::LearningRate).unwrap().len(), 11);
    }

    #[test]
    fn every_listed_value_validates() {
        for profile in [SpaceProfile::Paper, SpaceProfile::Tree, SpaceProfile::Desk] {
            for td in [false, true] {
                let space = SearchSpace::new(profile, td);
                for g in &space.axes {
                    for &v in &g.values {
                        let mut c = space.base_config();
                        c.set(g.axis, v);
                        assert_eq!(space.validate(&c), Ok(()), "{profile:?} {} {v}", g.axis);
                    }
                }
                let order: Vec<_> = space.axes.iter().map(|g| g.axis).collect();
                assert_eq!(order, DEFAULT_AXIS_ORDER);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_valid() {
        let space = SearchSpace::tree(true);
        assert_eq!(space.random_sample(9), space.random_sample(9));
        for s in 0..1000 {
            assert_eq!(space.validate(&space.random_sample(s)), Ok(()));
        }
    }

    #[test]
    fn width_draws_are_uniform() {
        let space = SearchSpace::paper(false);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut hist = std::collections::BTreeMap::new();
        for _ in 0..10_000 {
            *hist.entry(space.random_sample_with(&mut rng).width).or_insert(0usize) += 1;
        }
        assert_eq!(hist.len(), 63);
        let expected = 10_000.0 / 63.0;
        for (w, n) in hist {
            let n = n as f64;
            assert!((n - expected).abs() <= 0.4 * expected, "width {w}: {n}");
        }
    }

    #[test]
    fn snapping_moves_to_nearest() {
        let space = SearchSpace::tree(false);
        let mut c = in_grid();
        c.width = 60;
        c.depth = 5;
        c.learning_rate = 2e-3;
        let (s, snaps) = space.snap(&c);
        assert_eq!(s.width, 64);
        assert_eq!(s.learning_rate, 3e-3);
        assert!(s.depth == 4 || s.depth == 6);
        assert_eq!(snaps.len(), 3);
        assert_eq!(snaps[0].axis, Axis::Depth);
        let (same, none) = space.snap(&s);
        assert_eq!(same, s);
        assert!(none.is_empty());
    }

    #[test]
    fn snapping_forces_initial_points_for_steady_problems() {
        let mut c = in_grid();
        c.n_initial = 1100;
        let (s, _) = SearchSpace::tree(false).snap(&c);
        assert_eq!(s.n_initial, 0);
        c.n_initial = 0;
        let (t, _) = SearchSpace::tree(true).snap(&c);
        assert_eq!(t.n_initial, 100);
    }

    #[test]
    fn conform_resets_non_axis_fields() {
        let space = SearchSpace::new(SpaceProfile::Desk, false);
        let mut c = in_grid();
        c.width = 64;
        c.train_iters = 5000;
        c.loss_weights = LossWeights {
            pde: 3.0,
            bc: 2.0,
            ic: 1.0,
        };
        c.seed = 77;
        let (d, snaps) = space.conform(&c);
        assert_eq!(d.width, 32);
        assert_eq!(d.train_iters, DESK_TRAIN_ITERS);
        assert_eq!(d.loss_weights, space.defaults.loss_weights);
        assert_eq!(d.seed, 77);
        assert_eq!(snaps.iter().filter(|s| s.axis == Axis::Width).count(), 1);
    }
}
