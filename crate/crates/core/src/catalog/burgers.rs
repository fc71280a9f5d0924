//! Cole–Hopf reference solution for viscous Burgers with a sine initial state.
//!
//! For `u_t + u u_x = ν u_xx`, `u(x, 0) = -sin(πx)` the Cole–Hopf transform
//! gives
//!
//! ```text
//! u(x, t) = - ∫ sin(π(x - η)) f(x - η) e^{-η²/4νt} dη / ∫ f(x - η) e^{-η²/4νt} dη,
//! f(y) = exp(-cos(πy) / (2πν)).
//! ```
//!
//! Substituting `η = sqrt(4νt)·z` turns both integrals into Gauss–Hermite
//! form. The quadrature uses 64 nodes. Because `u = -2ν ∂_x ln φ` holds for
//! the discrete sum as well, evaluating on a [`Jet`](super::jet::Jet) yields
//! derivatives consistent with the quadrature value, which satisfy the PDE
//! to roughly 1e-8 even inside the shock layer.

use std::f64::consts::PI;
use std::sync::OnceLock;

use super::jet::Scalar;

pub const GAUSS_HERMITE_NODES: usize = 64;

/// Nodes and weights for `∫ g(z) e^{-z²} dz ≈ Σ w_i g(z_i)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Newton iteration on orthonormal Hermite polynomials with the usual
    /// asymptotic initial guesses.
    pub fn new(n: usize) -> Self {
        const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = PIM4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        Self { nodes: x, weights: w }
    }

    pub fn shared() -> &'static GaussHermite {
        static RULE: OnceLock<GaussHermite> = OnceLock::new();
        RULE.get_or_init(|| GaussHermite::new(GAUSS_HERMITE_NODES))
    }
}

/// Kinematic viscosity of the benchmark, `0.01/π`.
pub const NU: f64 = 0.01 / PI;

/// Evaluate the Cole–Hopf solution at `(x, t)`, `t ≥ 0`.
pub fn cole_hopf<S: Scalar>(x: S, t: S) -> S {
    if t.value() <= 0.0 {
        return -(x.scale(PI)).sin();
    }
    let rule = GaussHermite::shared();
    let spread = t.scale(4.0 * NU).sqrt();
    let inv = -1.0 / (2.0 * PI * NU);

    let ys: Vec<S> = rule.nodes.iter().map(|&z| x - spread.scale(z)).collect();
    let exponents: Vec<S> = ys.iter().map(|&y| y.scale(PI).cos().scale(inv)).collect();
    let shift = exponents.iter().map(|e| e.value()).fold(f64::NEG_INFINITY, f64::max);

    let mut num = S::constant(0.0);
    let mut den = S::constant(0.0);
    for ((&w, &y), &e) in rule.weights.iter().zip(&ys).zip(&exponents) {
        let f = (e - S::constant(shift)).exp().scale(w);
        num = num + y.scale(PI).sin() * f;
        den = den + f;
    }
    -(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_low_moments() {
        let r = GaussHermite::new(64);
        let sum: f64 = r.weights.iter().sum();
        assert!((sum - PI.sqrt()).abs() < 1e-13);
        let m2: f64 = r.weights.iter().zip(&r.nodes).map(|(w, z)| w * z * z).sum();
        assert!((m2 - PI.sqrt() / 2.0).abs() < 1e-13);
        let m4: f64 = r.weights.iter().zip(&r.nodes).map(|(w, z)| w * z.powi(4)).sum();
        assert!((m4 - 0.75 * PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn nodes_are_sorted_and_symmetric() {
        let r = GaussHermite::new(64);
        for i in 0..63 {
            assert!(r.nodes[i] > r.nodes[i + 1]);
        }
        for i in 0..32 {
            assert_eq!(r.nodes[i], -r.nodes[63 - i]);
        }
    }

    #[test]
    fn initial_state_and_antisymmetry() {
        assert!((cole_hopf(0.5, 0.0) + 1.0).abs() < 1e-15);
        for &t in &[0.1, 0.5, 0.9] {
            for &x in &[0.2, 0.6] {
                let a = cole_hopf(x, t);
                let b = cole_hopf(-x, t);
                assert!((a + b).abs() < 1e-12, "{a} {b}");
            }
            assert!(cole_hopf(0.0, t).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_dense_trapezoid() {
        // Independent check: dense trapezoid in z over [-12, 12].
        let dense = |x: f64, t: f64| {
            let s = (4.0 * NU * t).sqrt();
            let n = 20001;
            let mut lf = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            for i in 0..n {
                let z = -12.0 + 24.0 * i as f64 / (n - 1) as f64;
                let y = x - s * z;
                ys.push(y);
                lf.push(-(PI * y).cos() / (2.0 * PI * NU) - z * z);
            }
            let m = lf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let (mut num, mut den) = (0.0, 0.0);
            for (y, l) in ys.iter().zip(&lf) {
                let f = (l - m).exp();
                num += (PI * y).sin() * f;
                den += f;
            }
            -num / den
        };
        for &(x, t) in &[(0.3, 0.2), (0.05, 0.7), (-0.6, 0.4), (0.9, 0.95), (0.01, 0.35)] {
            let a = cole_hopf(x, t);
            let b = dense(x, t);
            assert!((a - b).abs() < 1e-9, "({x},{t}): {a} vs {b}");
        }
    }
}
