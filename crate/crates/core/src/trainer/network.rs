//! Fully connected network with exact input derivatives.
//!
//! A forward pass carries, next to the value, the first partials along a
//! chosen set of input coordinates and the pure second partials along a
//! subset of those. Everything is stored as column blocks of one matrix per
//! layer (`width × channels·points`), so each layer is a single matmul:
//!
//! ```text
//! S  = a·(W H + b)          (b on the value block only)
//! H0 = σ(S0)
//! H1 = σ'(S0)·S1
//! H2 = σ''(S0)·S1² + σ'(S0)·S2
//! ```
//!
//! Reverse mode over these rules gives parameter gradients of any loss
//! built from the output channels.

use ndarray::{linalg::general_mat_mul, Array2, ArrayView2, ArrayViewMut2};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::activation;
use crate::catalog::DerivativeBundle;
use crate::space::{Activation, HyperConfig, Initializer, NetType};

/// Lower bound enforced on adaptive slopes after every update.
pub const MIN_SLOPE: f64 = 1e-3;

/// Which derivative channels a pass computes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChannelPlan {
    pub first: Vec<usize>,
    pub second: Vec<usize>,
    /// For each second-order coordinate, its position in `first`.
    second_src: Vec<usize>,
}

impl ChannelPlan {
    pub fn new(first: Vec<usize>, second: Vec<usize>) -> Self {
        let second_src = second
            .iter()
            .map(|c| {
                first
                    .iter()
                    .position(|f| f == c)
                    .expect("second-order coordinates need a first-order channel")
            })
            .collect();
        Self {
            first,
            second,
            second_src,
        }
    }

    pub fn value_only() -> Self {
        Self::new(Vec::new(), Vec::new())
    }

    /// Every first and pure second partial of an `n`-input function.
    pub fn full(n: usize) -> Self {
        Self::new((0..n).collect(), (0..n).collect())
    }

    pub fn channels(&self) -> usize {
        1 + self.first.len() + self.second.len()
    }

    pub fn first_index(&self, coord: usize) -> Option<usize> {
        self.first.iter().position(|&c| c == coord)
    }

    pub fn second_index(&self, coord: usize) -> Option<usize> {
        self.second.iter().position(|&c| c == coord)
    }
}

/// Channel-major output: block `c` holds channel `c` at every point.
#[derive(Debug, Clone, PartialEq)]
pub struct Channels {
    pub plan: ChannelPlan,
    pub points: usize,
    pub data: Vec<f64>,
}

impl Channels {
    pub fn zeros(plan: ChannelPlan, points: usize) -> Self {
        let n = plan.channels() * points;
        Self {
            plan,
            points,
            data: vec![0.0; n],
        }
    }

    fn block(&self, c: usize) -> &[f64] {
        &self.data[c * self.points..(c + 1) * self.points]
    }

    fn block_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.points..(c + 1) * self.points]
    }

    pub fn u(&self) -> &[f64] {
        self.block(0)
    }
    pub fn u_mut(&mut self) -> &mut [f64] {
        self.block_mut(0)
    }
    /// First partials along `plan.first[j]`.
    pub fn first(&self, j: usize) -> &[f64] {
        self.block(1 + j)
    }
    pub fn first_mut(&mut self, j: usize) -> &mut [f64] {
        self.block_mut(1 + j)
    }
    /// Pure second partials along `plan.second[k]`.
    pub fn second(&self, k: usize) -> &[f64] {
        self.block(1 + self.plan.first.len() + k)
    }
    pub fn second_mut(&mut self, k: usize) -> &mut [f64] {
        let off = 1 + self.plan.first.len();
        self.block_mut(off + k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerShape {
    rows: usize,
    cols: usize,
    offset: usize,
}

impl LayerShape {
    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.rows * self.cols
    }
    fn bias(&self) -> std::ops::Range<usize> {
        let s = self.offset + self.rows * self.cols;
        s..s + self.rows
    }
}

/// Parameters live in one flat vector: every layer's weights (row-major)
/// then biases, then the adaptive slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub input_dim: usize,
    pub width: usize,
    pub depth: usize,
    pub net_type: NetType,
    pub activation: Activation,
    pub params: Vec<f64>,
    layers: Vec<LayerShape>,
    slope_offset: usize,
}

fn ensure(bufs: &mut Vec<Array2<f64>>, i: usize, shape: (usize, usize)) {
    while bufs.len() <= i {
        bufs.push(Array2::zeros((0, 0)));
    }
    if bufs[i].dim() != shape {
        bufs[i] = Array2::zeros(shape);
    }
}

fn ensure_sig(bufs: &mut Vec<[Vec<f64>; 3]>, i: usize, n: usize) {
    while bufs.len() <= i {
        bufs.push(Default::default());
    }
    for v in &mut bufs[i] {
        v.resize(n, 0.0);
    }
}

/// Intermediates kept for the reverse pass, plus scratch space so repeated
/// passes of the same shape allocate nothing large.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    plan: ChannelPlan,
    points: usize,
    /// Input to every layer; `hs[0]` is the seeded input block.
    hs: Vec<Array2<f64>>,
    /// Slope-scaled affine output of every hidden layer.
    ss: Vec<Array2<f64>>,
    /// `σ', σ'', σ'''` at the value block of every hidden layer.
    sigs: Vec<[Vec<f64>; 3]>,
    gz: Vec<Array2<f64>>,
    gh: Vec<Array2<f64>>,
}

fn slope_count(net_type: NetType, depth: usize) -> usize {
    match net_type {
        NetType::Fnn => 0,
        NetType::Laaf => depth,
        NetType::Gaaf => 1,
    }
}

impl Network {
    /// All weights zero, slopes one.
    pub fn zeroed(input_dim: usize, width: usize, depth: usize, net_type: NetType, activation: Activation) -> Self {
        assert!(depth >= 1 && width >= 1 && input_dim >= 1);
        let mut layers = Vec::with_capacity(depth + 1);
        let mut offset = 0;
        let mut cols = input_dim;
        for l in 0..=depth {
            let rows = if l == depth { 1 } else { width };
            layers.push(LayerShape { rows, cols, offset });
            offset += rows * cols + rows;
            cols = rows;
        }
        let n_slopes = slope_count(net_type, depth);
        let mut params = vec![0.0; offset + n_slopes];
        params[offset..].iter_mut().for_each(|a| *a = 1.0);
        Self {
            input_dim,
            width,
            depth,
            net_type,
            activation,
            params,
            layers,
            slope_offset: offset,
        }
    }

    /// Weights drawn per `initializer`; biases zero.
    pub fn init<R: Rng>(
        input_dim: usize,
        width: usize,
        depth: usize,
        net_type: NetType,
        activation: Activation,
        initializer: Initializer,
        rng: &mut R,
    ) -> Self {
        let mut net = Self::zeroed(input_dim, width, depth, net_type, activation);
        for shape in net.layers.clone() {
            let (fi, fo) = (shape.cols as f64, shape.rows as f64);
            let w = &mut net.params[shape.weights()];
            match initializer {
                Initializer::Zeros => {}
                Initializer::GlorotNormal => fill_normal(w, (2.0 / (fi + fo)).sqrt(), rng),
                Initializer::HeNormal => fill_normal(w, (2.0 / fi).sqrt(), rng),
                Initializer::GlorotUniform => fill_uniform(w, (6.0 / (fi + fo)).sqrt(), rng),
                Initializer::HeUniform => fill_uniform(w, (6.0 / fi).sqrt(), rng),
            }
        }
        net
    }

    pub fn from_config<R: Rng>(config: &HyperConfig, input_dim: usize, rng: &mut R) -> Self {
        Self::init(
            input_dim,
            config.width as usize,
            config.depth as usize,
            config.net_type,
            config.activation,
            config.initializer,
            rng,
        )
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn slopes(&self) -> &[f64] {
        &self.params[self.slope_offset..]
    }

    pub fn slopes_mut(&mut self) -> &mut [f64] {
        &mut self.params[self.slope_offset..]
    }

    pub fn slope_range(&self) -> std::ops::Range<usize> {
        self.slope_offset..self.params.len()
    }

    pub fn clamp_slopes(&mut self) {
        for a in self.slopes_mut() {
            *a = a.max(MIN_SLOPE);
        }
    }

    /// Weight matrix of layer `l` (`rows × cols`).
    pub fn weights(&self, l: usize) -> ArrayView2<'_, f64> {
        let s = self.layers[l];
        ArrayView2::from_shape((s.rows, s.cols), &self.params[s.weights()]).expect("layer shape")
    }

    pub fn bias(&self, l: usize) -> &[f64] {
        &self.params[self.layers[l].bias()]
    }

    /// `(rows, cols)` of every layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|s| (s.rows, s.cols)).collect()
    }

    fn slope(&self, l: usize) -> Option<f64> {
        match self.net_type {
            NetType::Fnn => None,
            NetType::Laaf => Some(self.params[self.slope_offset + l]),
            NetType::Gaaf => Some(self.params[self.slope_offset]),
        }
    }

    fn seed_input(&self, points: ArrayView2<'_, f64>, plan: &ChannelPlan) -> Array2<f64> {
        let mut h = Array2::zeros((self.input_dim, points.nrows() * plan.channels()));
        self.seed_input_into(points, plan, &mut h);
        h
    }

    /// `points` is `P × input_dim`, one point per row.
    fn seed_input_into(&self, points: ArrayView2<'_, f64>, plan: &ChannelPlan, h: &mut Array2<f64>) {
        let p = points.nrows();
        assert_eq!(points.ncols(), self.input_dim, "point dimension");
        h.fill(0.0);
        for d in 0..self.input_dim {
            for i in 0..p {
                h[[d, i]] = points[[i, d]];
            }
        }
        for (j, &coord) in plan.first.iter().enumerate() {
            let base = (1 + j) * p;
            for i in 0..p {
                h[[coord, base + i]] = 1.0;
            }
        }
    }

    /// `out = W h + b`, bias on the value block only.
    fn affine_into(&self, l: usize, h: &Array2<f64>, p: usize, out: &mut Array2<f64>) {
        general_mat_mul(1.0, &self.weights(l), h, 0.0, out);
        for (r, &br) in self.bias(l).iter().enumerate() {
            out.row_mut(r).iter_mut().take(p).for_each(|v| *v += br);
        }
    }

    fn affine(&self, l: usize, h: &Array2<f64>, p: usize) -> Array2<f64> {
        let mut z = Array2::zeros((self.layers[l].rows, h.ncols()));
        self.affine_into(l, h, p, &mut z);
        z
    }

    /// Scales `s` by the layer slope in place, then fills `next` and `sig`.
    fn activate(
        &self,
        l: usize,
        s: &mut Array2<f64>,
        plan: &ChannelPlan,
        p: usize,
        next: &mut Array2<f64>,
        sig: &mut [Vec<f64>; 3],
    ) {
        if let Some(a) = self.slope(l) {
            s.mapv_inplace(|v| a * v);
        }
        let nf = plan.first.len();
        let ns = plan.second.len();
        let pc = p * plan.channels();
        let width = s.nrows();
        let ss = s.as_slice().expect("standard layout");
        let hn = next.as_slice_mut().expect("standard layout");
        let [sig1, sig2, sig3] = sig;
        for r in 0..width {
            let srow = &ss[r * pc..(r + 1) * pc];
            let hrow = &mut hn[r * pc..(r + 1) * pc];
            let d1 = &mut sig1[r * p..(r + 1) * p];
            let d2 = &mut sig2[r * p..(r + 1) * p];
            let d3 = &mut sig3[r * p..(r + 1) * p];
            let (h0, hrest) = hrow.split_at_mut(p);
            activation::fill(self.activation, &srow[..p], [h0, &mut *d1, &mut *d2, d3]);
            for j in 0..nf {
                let o = (j + 1) * p;
                let (src, dst) = (&srow[o..o + p], &mut hrest[o - p..o]);
                for i in 0..p {
                    dst[i] = d1[i] * src[i];
                }
            }
            for k in 0..ns {
                let o = (1 + nf + k) * p;
                let q = (1 + plan.second_src[k]) * p;
                let (s1, s2, dst) = (&srow[q..q + p], &srow[o..o + p], &mut hrest[o - p..o]);
                for i in 0..p {
                    dst[i] = d2[i] * s1[i] * s1[i] + d1[i] * s2[i];
                }
            }
        }
    }

    pub fn forward(&self, points: ArrayView2<'_, f64>, plan: &ChannelPlan) -> Channels {
        let p = points.nrows();
        let mut h = self.seed_input(points, plan);
        for l in 0..self.depth {
            let mut s = self.affine(l, &h, p);
            let mut next = Array2::zeros(s.raw_dim());
            let n = s.nrows() * p;
            let mut sig = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
            self.activate(l, &mut s, plan, p, &mut next, &mut sig);
            h = next;
        }
        let data = self.affine(self.depth, &h, p).into_raw_vec_and_offset().0;
        Channels {
            plan: plan.clone(),
            points: p,
            data,
        }
    }

    pub fn forward_tape(&self, points: ArrayView2<'_, f64>, plan: &ChannelPlan) -> (Channels, Tape) {
        let mut tape = Tape::default();
        let c = self.forward_into(points, plan, &mut tape);
        (c, tape)
    }

    /// Like [`Network::forward_tape`], reusing the buffers of `tape`.
    pub fn forward_into(&self, points: ArrayView2<'_, f64>, plan: &ChannelPlan, tape: &mut Tape) -> Channels {
        let p = points.nrows();
        let pc = p * plan.channels();
        if tape.plan != *plan {
            tape.plan = plan.clone();
        }
        tape.points = p;
        let hs = &mut tape.hs;
        ensure(hs, 0, (self.input_dim, pc));
        self.seed_input_into(points, plan, &mut hs[0]);
        for l in 0..self.depth {
            let shape = (self.layers[l].rows, pc);
            ensure(&mut tape.ss, l, shape);
            ensure(hs, l + 1, shape);
            ensure_sig(&mut tape.sigs, l, shape.0 * p);
            let (done, rest) = hs.split_at_mut(l + 1);
            self.affine_into(l, &done[l], p, &mut tape.ss[l]);
            self.activate(l, &mut tape.ss[l], plan, p, &mut rest[0], &mut tape.sigs[l]);
        }
        let mut out = Array2::zeros((1, pc));
        self.affine_into(self.depth, &hs[self.depth], p, &mut out);
        Channels {
            plan: plan.clone(),
            points: p,
            data: out.into_raw_vec_and_offset().0,
        }
    }

    /// Output values only.
    pub fn values(&self, points: ArrayView2<'_, f64>) -> Vec<f64> {
        self.forward(points, &ChannelPlan::value_only()).data
    }

    /// Value, every first partial and every pure second partial at one point.
    pub fn forward_with_derivatives(&self, point: &[f64]) -> DerivativeBundle {
        let n = self.input_dim;
        let x = ArrayView2::from_shape((1, n), point).expect("point dimension");
        let c = self.forward(x, &ChannelPlan::full(n));
        DerivativeBundle {
            u: c.u()[0],
            grad: (0..n).map(|j| c.first(j)[0]).collect(),
            diag_hess: (0..n).map(|k| c.second(k)[0]).collect(),
        }
    }

    /// Gradient of a scalar loss w.r.t. every parameter, given the loss
    /// gradient w.r.t. each output channel entry. `tape` must come from the
    /// latest forward pass of this network; its scratch space is reused.
    pub fn backward(&self, tape: &mut Tape, grad_out: &Channels) -> Vec<f64> {
        assert_eq!(grad_out.plan, tape.plan);
        assert_eq!(grad_out.points, tape.points);
        let p = tape.points;
        let plan = &tape.plan;
        let nf = plan.first.len();
        let ns = plan.second.len();
        let pc = p * plan.channels();
        let mut grads = vec![0.0; self.params.len()];

        let gzs = &mut tape.gz;
        ensure(gzs, self.depth, (1, pc));
        gzs[self.depth]
            .as_slice_mut()
            .expect("standard layout")
            .copy_from_slice(&grad_out.data);
        for l in (0..=self.depth).rev() {
            let shape = self.layers[l];
            {
                let gz = &gzs[l];
                let mut gw = ArrayViewMut2::from_shape((shape.rows, shape.cols), &mut grads[shape.weights()])
                    .expect("layer shape");
                general_mat_mul(1.0, gz, &tape.hs[l].t(), 0.0, &mut gw);
                for (r, gb) in grads[shape.bias()].iter_mut().enumerate() {
                    *gb = gz.row(r).iter().take(p).sum();
                }
            }
            if l == 0 {
                break;
            }
            ensure(&mut tape.gh, 0, (shape.cols, pc));
            let gh = &mut tape.gh[0];
            general_mat_mul(1.0, &self.weights(l).t(), &gzs[l], 0.0, gh);
            // back through the activation of hidden layer l - 1
            let hl = l - 1;
            let s = &tape.ss[hl];
            let [sig1, sig2, sig3] = &tape.sigs[hl];
            let width = s.nrows();
            ensure(gzs, hl, (width, pc));
            let gs = &mut gzs[hl];
            {
                let ss = s.as_slice().expect("standard layout");
                let ghs = gh.as_slice().expect("standard layout");
                let g = gs.as_slice_mut().expect("standard layout");
                for r in 0..width {
                    let srow = &ss[r * pc..(r + 1) * pc];
                    let ghrow = &ghs[r * pc..(r + 1) * pc];
                    let grow = &mut g[r * pc..(r + 1) * pc];
                    let d1 = &sig1[r * p..(r + 1) * p];
                    let d2 = &sig2[r * p..(r + 1) * p];
                    let d3 = &sig3[r * p..(r + 1) * p];
                    let (g0, grest) = grow.split_at_mut(p);
                    for i in 0..p {
                        g0[i] = ghrow[i] * d1[i];
                    }
                    for j in 0..nf {
                        let o = (j + 1) * p;
                        let (s1, gh1, dst) = (&srow[o..o + p], &ghrow[o..o + p], &mut grest[o - p..o]);
                        for i in 0..p {
                            g0[i] += gh1[i] * d2[i] * s1[i];
                            dst[i] = gh1[i] * d1[i];
                        }
                    }
                    for k in 0..ns {
                        let o = (1 + nf + k) * p;
                        let q = (1 + plan.second_src[k]) * p;
                        let (s1, s2, gh2) = (&srow[q..q + p], &srow[o..o + p], &ghrow[o..o + p]);
                        for i in 0..p {
                            g0[i] += gh2[i] * (d3[i] * s1[i] * s1[i] + d2[i] * s2[i]);
                            grest[q - p + i] += gh2[i] * 2.0 * d2[i] * s1[i];
                            grest[o - p + i] = gh2[i] * d1[i];
                        }
                    }
                }
            }
            if let Some(a) = self.slope(hl) {
                // S = a·Z, so dL/da = sum(dL/dS · S) / a
                let ga: f64 = gs.iter().zip(s.iter()).map(|(g, s)| g * s).sum::<f64>() / a;
                let slot = match self.net_type {
                    NetType::Laaf => self.slope_offset + hl,
                    _ => self.slope_offset,
                };
                grads[slot] += ga;
                gs.mapv_inplace(|v| a * v);
            }
        }
        grads
    }
}

fn fill_normal<R: Rng>(w: &mut [f64], std: f64, rng: &mut R) {
    let d = Normal::new(0.0, std).expect("finite std");
    w.iter_mut().for_each(|v| *v = d.sample(rng));
}

fn fill_uniform<R: Rng>(w: &mut [f64], limit: f64, rng: &mut R) {
    let d = Uniform::new_inclusive(-limit, limit).expect("finite limit");
    w.iter_mut().for_each(|v| *v = d.sample(rng));
}
