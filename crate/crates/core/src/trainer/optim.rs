//! First-order optimizers over a flat parameter vector.

use crate::space::OptimizerKind;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;
pub const RMSPROP_RHO: f64 = 0.9;
pub const ADAMW_WEIGHT_DECAY: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, n: usize) -> Self {
        Self {
            kind,
            lr,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let lr = self.lr;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Rmsprop => {
                for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.v) {
                    *v = RMSPROP_RHO * *v + (1.0 - RMSPROP_RHO) * g * g;
                    *p -= lr * g / (v.sqrt() + EPS);
                }
            }
            OptimizerKind::Adam | OptimizerKind::Adamw => {
                let t = self.step as i32;
                let c1 = 1.0 - ADAM_BETA1.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                let decay = if self.kind == OptimizerKind::Adamw {
                    ADAMW_WEIGHT_DECAY
                } else {
                    0.0
                };
                for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    let update = (*m / c1) / ((*v / c2).sqrt() + EPS);
                    *p -= lr * (update + decay * *p);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_is_exact() {
        let mut p = vec![1.0, -2.0];
        let mut o = Optimizer::new(OptimizerKind::Sgd, 0.1, 2);
        o.step(&mut p, &[0.5, -1.0]);
        assert_eq!(p, vec![1.0 - 0.1 * 0.5, -2.0 + 0.1 * 1.0]);
    }

    #[test]
    fn adam_first_step_by_hand() {
        let g = 0.3;
        let mut p = vec![1.0];
        let mut o = Optimizer::new(OptimizerKind::Adam, 1e-3, 1);
        o.step(&mut p, &[g]);
        // m̂ = g, v̂ = g², step = lr·g/(|g| + ε)
        let expected = 1.0 - 1e-3 * g / (g + 1e-8);
        assert!((p[0] - expected).abs() < 1e-12);
        assert!(((1.0 - p[0]) - 1e-3).abs() < 1e-10);
    }

    #[test]
    fn rmsprop_first_step_by_hand() {
        let mut p = vec![0.0];
        let mut o = Optimizer::new(OptimizerKind::Rmsprop, 0.01, 1);
        o.step(&mut p, &[2.0]);
        let v: f64 = 0.1 * 4.0;
        assert!((p[0] + 0.01 * 2.0 / (v.sqrt() + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradients() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Rmsprop, OptimizerKind::Adam] {
            let mut p = vec![0.7, -0.2];
            let mut o = Optimizer::new(kind, 0.01, 2);
            o.step(&mut p, &[0.0, 0.0]);
            assert_eq!(p, vec![0.7, -0.2], "{kind:?}");
        }
        let mut p = vec![0.7];
        let mut o = Optimizer::new(OptimizerKind::Adamw, 0.01, 1);
        o.step(&mut p, &[0.0]);
        assert!((p[0] - 0.7 * (1.0 - 0.01 * 1e-4)).abs() < 1e-15);
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut p = vec![3.0, -4.0];
        let mut o = Optimizer::new(OptimizerKind::Adam, 0.05, 2);
        for _ in 0..2000 {
            let g = [2.0 * p[0], 2.0 * p[1]];
            o.step(&mut p, &g);
        }
        assert!(p[0].abs() < 1e-2 && p[1].abs() < 1e-2);
    }
}
