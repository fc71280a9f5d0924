//! PINN loss: mean squared residual plus boundary and initial mismatches.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::network::{ChannelPlan, Channels, Network, Tape};
use super::points::PointSets;
use crate::catalog::{ConditionKind, PdeSpec, Side};
use crate::space::LossWeights;

/// Anything that can be evaluated with derivative channels: the network,
/// or the reference solution injected in its place.
pub trait Field {
    fn eval(&self, points: ArrayView2<'_, f64>, plan: &ChannelPlan) -> Channels;
}

impl Field for Network {
    fn eval(&self, points: ArrayView2<'_, f64>, plan: &ChannelPlan) -> Channels {
        self.forward(points, plan)
    }
}

/// The PDE's reference solution as a [`Field`].
pub struct ReferenceField<'a>(pub &'a PdeSpec);

impl Field for ReferenceField<'_> {
    fn eval(&self, points: ArrayView2<'_, f64>, plan: &ChannelPlan) -> Channels {
        let p = points.nrows();
        let mut c = Channels::zeros(plan.clone(), p);
        for i in 0..p {
            let x = points.row(i).to_vec();
            let b = self.0.reference_bundle(&x).expect("point lies in the domain");
            c.u_mut()[i] = b.u;
            for (j, &k) in plan.first.iter().enumerate() {
                c.first_mut(j)[i] = b.grad[k];
            }
            for (j, &k) in plan.second.iter().enumerate() {
                c.second_mut(j)[i] = b.diag_hess[k];
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub pde: f64,
    pub bc: f64,
    pub ic: f64,
    pub total: f64,
}

/// One evaluation batch: points, the channels it needs, and how to turn the
/// field's channels into a mean squared mismatch (and its channel gradient).
struct Batch {
    points: Array2<f64>,
    plan: ChannelPlan,
}

fn domain_batch(pde: &PdeSpec, pts: &PointSets) -> Batch {
    let needs = pde.needs();
    Batch {
        points: pts.domain.clone(),
        plan: ChannelPlan::new(needs.first, needs.second),
    }
}

/// Boundary rows, followed by the opposite-face partner of every periodic row.
fn boundary_batch(pde: &PdeSpec, pts: &PointSets) -> (Batch, Vec<usize>) {
    let mut first: Vec<usize> = pde
        .boundary_conditions
        .iter()
        .filter(|bc| bc.kind == ConditionKind::Neumann)
        .map(|bc| bc.region.axis)
        .collect();
    first.sort_unstable();
    first.dedup();
    let mut rows: Vec<Vec<f64>> = pts.boundary.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut partner_of = Vec::new();
    for (i, &c) in pts.boundary_condition.iter().enumerate() {
        let bc = &pde.boundary_conditions[c];
        if bc.kind == ConditionKind::Periodic {
            let iv = pde.domain[bc.region.axis];
            let mut q = rows[i].clone();
            q[bc.region.axis] = match bc.region.side {
                Side::Lower => iv.hi,
                Side::Upper => iv.lo,
            };
            partner_of.push(i);
            rows.push(q);
        }
    }
    let d = pde.coords();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let n = flat.len() / d.max(1);
    let points = Array2::from_shape_vec((n, d), flat).expect("rows have the point dimension");
    (
        Batch {
            points,
            plan: ChannelPlan::new(first, Vec::new()),
        },
        partner_of,
    )
}

fn initial_batch(pde: &PdeSpec, pts: &PointSets) -> Batch {
    let first = match (pde.initial_condition, pde.time_axis()) {
        (Some(ic), Some(t)) if ic.velocity.is_some() => vec![t],
        _ => Vec::new(),
    };
    Batch {
        points: pts.initial.clone(),
        plan: ChannelPlan::new(first, Vec::new()),
    }
}

/// Mean squared residual over the domain batch and `∂L/∂channels`.
fn domain_term(pde: &PdeSpec, batch: &Batch, out: &Channels, grad: Option<&mut Channels>) -> f64 {
    let n = batch.points.nrows();
    if n == 0 {
        return 0.0;
    }
    let d = pde.coords();
    let plan = &batch.plan;
    let mut g = vec![0.0; d];
    let mut h = vec![0.0; d];
    let mut dg = vec![0.0; d];
    let mut dh = vec![0.0; d];
    let mut sum = 0.0;
    let mut rs = Vec::with_capacity(if grad.is_some() { n } else { 0 });
    let mut sens = Vec::new();
    for i in 0..n {
        let x = batch.points.row(i);
        let x = x.as_slice().expect("standard layout");
        for (j, &k) in plan.first.iter().enumerate() {
            g[k] = out.first(j)[i];
        }
        for (j, &k) in plan.second.iter().enumerate() {
            h[k] = out.second(j)[i];
        }
        let (r, du) = pde.kind.residual_terms(x, out.u()[i], &g, &h, &mut dg, &mut dh);
        sum += r * r;
        if grad.is_some() {
            rs.push(r);
            sens.push((
                du,
                plan.first.iter().map(|&k| dg[k]).collect::<Vec<_>>(),
                plan.second.iter().map(|&k| dh[k]).collect::<Vec<_>>(),
            ));
        }
    }
    if let Some(gc) = grad {
        let c = 2.0 / n as f64;
        for i in 0..n {
            let (du, d1, d2) = &sens[i];
            let s = c * rs[i];
            gc.u_mut()[i] = s * du;
            for (j, v) in d1.iter().enumerate() {
                gc.first_mut(j)[i] = s * v;
            }
            for (j, v) in d2.iter().enumerate() {
                gc.second_mut(j)[i] = s * v;
            }
        }
    }
    sum / n as f64
}

fn boundary_term(
    pde: &PdeSpec,
    pts: &PointSets,
    batch: &Batch,
    partner_of: &[usize],
    out: &Channels,
    mut grad: Option<&mut Channels>,
) -> f64 {
    let n = pts.boundary.nrows();
    if n == 0 {
        return 0.0;
    }
    let c = 2.0 / n as f64;
    let mut sum = 0.0;
    let mut partner = partner_of.iter().enumerate().map(|(k, &i)| (i, n + k));
    for i in 0..n {
        let bc = &pde.boundary_conditions[pts.boundary_condition[i]];
        let x = batch.points.row(i);
        let x = x.as_slice().expect("standard layout");
        match bc.kind {
            ConditionKind::Dirichlet => {
                let m = out.u()[i] - (bc.target)(x);
                sum += m * m;
                if let Some(g) = grad.as_deref_mut() {
                    g.u_mut()[i] = c * m;
                }
            }
            ConditionKind::Neumann => {
                let j = batch
                    .plan
                    .first_index(bc.region.axis)
                    .expect("neumann axis has a channel");
                let sign = if bc.region.side == Side::Upper { 1.0 } else { -1.0 };
                let m = sign * out.first(j)[i] - (bc.target)(x);
                sum += m * m;
                if let Some(g) = grad.as_deref_mut() {
                    g.first_mut(j)[i] = c * m * sign;
                }
            }
            ConditionKind::Periodic => {
                let (_, q) = partner.next().expect("periodic row has a partner");
                let m = out.u()[i] - out.u()[q];
                sum += m * m;
                if let Some(g) = grad.as_deref_mut() {
                    g.u_mut()[i] += c * m;
                    g.u_mut()[q] -= c * m;
                }
            }
        }
    }
    sum / n as f64
}

fn initial_term(pde: &PdeSpec, batch: &Batch, out: &Channels, mut grad: Option<&mut Channels>) -> f64 {
    let n = batch.points.nrows();
    let Some(ic) = pde.initial_condition else { return 0.0 };
    if n == 0 {
        return 0.0;
    }
    let c = 2.0 / n as f64;
    let mut sum = 0.0;
    for i in 0..n {
        let x = batch.points.row(i);
        let x = x.as_slice().expect("standard layout");
        let m = out.u()[i] - (ic.value)(x);
        sum += m * m;
        if let Some(g) = grad.as_deref_mut() {
            g.u_mut()[i] = c * m;
        }
        if let Some(vel) = ic.velocity {
            let mv = out.first(0)[i] - vel(x);
            sum += mv * mv;
            if let Some(g) = grad.as_deref_mut() {
                g.first_mut(0)[i] = c * mv;
            }
        }
    }
    sum / n as f64
}

fn combine(pde: f64, bc: f64, ic: f64, w: &LossWeights) -> LossComponents {
    LossComponents {
        pde,
        bc,
        ic,
        total: w.pde * pde + w.bc * bc + w.ic * ic,
    }
}

/// `w_pde·L_PDE + w_bc·L_BC + w_ic·L_IC` for any field.
pub fn total_loss(field: &dyn Field, pde: &PdeSpec, pts: &PointSets, weights: &LossWeights) -> LossComponents {
    let db = domain_batch(pde, pts);
    let dom = domain_term(pde, &db, &field.eval(db.points.view(), &db.plan), None);
    let (bb, partners) = boundary_batch(pde, pts);
    let bnd = boundary_term(pde, pts, &bb, &partners, &field.eval(bb.points.view(), &bb.plan), None);
    let ib = initial_batch(pde, pts);
    let ini = if ib.points.nrows() == 0 {
        0.0
    } else {
        initial_term(pde, &ib, &field.eval(ib.points.view(), &ib.plan), None)
    };
    combine(dom, bnd, ini, weights)
}

/// Precomputed batches for repeated loss/gradient evaluation.
pub struct LossProblem<'a> {
    pde: &'a PdeSpec,
    pts: &'a PointSets,
    domain: Batch,
    boundary: Batch,
    partners: Vec<usize>,
    initial: Batch,
    pub weights: LossWeights,
    tapes: [Tape; 3],
}

impl<'a> LossProblem<'a> {
    pub fn new(pde: &'a PdeSpec, pts: &'a PointSets, weights: LossWeights) -> Self {
        let (boundary, partners) = boundary_batch(pde, pts);
        Self {
            pde,
            pts,
            domain: domain_batch(pde, pts),
            boundary,
            partners,
            initial: initial_batch(pde, pts),
            weights,
            tapes: Default::default(),
        }
    }

    pub fn loss(&self, net: &Network) -> LossComponents {
        let dom = domain_term(
            self.pde,
            &self.domain,
            &net.forward(self.domain.points.view(), &self.domain.plan),
            None,
        );
        let bo = net.forward(self.boundary.points.view(), &self.boundary.plan);
        let bnd = boundary_term(self.pde, self.pts, &self.boundary, &self.partners, &bo, None);
        let ini = if self.initial.points.nrows() == 0 {
            0.0
        } else {
            initial_term(
                self.pde,
                &self.initial,
                &net.forward(self.initial.points.view(), &self.initial.plan),
                None,
            )
        };
        combine(dom, bnd, ini, &self.weights)
    }

    /// Loss components and the gradient of the weighted total.
    pub fn loss_and_grad(&mut self, net: &Network) -> (LossComponents, Vec<f64>) {
        let w = self.weights;
        let mut grads = vec![0.0; net.n_params()];
        let mut accumulate = |g: Vec<f64>, scale: f64| {
            for (a, b) in grads.iter_mut().zip(g) {
                *a += scale * b;
            }
        };

        let [td, tb, ti] = &mut self.tapes;
        let out = net.forward_into(self.domain.points.view(), &self.domain.plan, td);
        let mut g = Channels::zeros(self.domain.plan.clone(), out.points);
        let dom = domain_term(self.pde, &self.domain, &out, Some(&mut g));
        accumulate(net.backward(td, &g), w.pde);

        let out = net.forward_into(self.boundary.points.view(), &self.boundary.plan, tb);
        let mut g = Channels::zeros(self.boundary.plan.clone(), out.points);
        let bnd = boundary_term(self.pde, self.pts, &self.boundary, &self.partners, &out, Some(&mut g));
        accumulate(net.backward(tb, &g), w.bc);

        let mut ini = 0.0;
        if self.initial.points.nrows() > 0 {
            let out = net.forward_into(self.initial.points.view(), &self.initial.plan, ti);
            let mut g = Channels::zeros(self.initial.plan.clone(), out.points);
            ini = initial_term(self.pde, &self.initial, &out, Some(&mut g));
            accumulate(net.backward(ti, &g), w.ic);
        }
        (combine(dom, bnd, ini, &w), grads)
    }
}
