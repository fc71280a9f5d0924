//! Second-order truncated Taylor arithmetic in one direction.
//!
//! Reference solutions are written once, generic over [`Scalar`], and
//! evaluated either on plain `f64` or on a [`Jet`] seeded along one
//! coordinate to obtain the value, first and pure second partial exactly.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Minimal real-number interface used by reference solutions.
pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn sqrt(self) -> Self;

    fn scale(self, c: f64) -> Self {
        self * Self::constant(c)
    }
}

impl Scalar for f64 {
    fn constant(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

/// `v + d·ε + dd·ε²/2`, truncated after the second-order term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d: f64,
    pub dd: f64,
}

impl Jet {
    pub fn variable(v: f64) -> Self {
        Self { v, d: 1.0, dd: 0.0 }
    }

    /// Compose with a scalar function given its value and first two derivatives at `self.v`.
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        Self {
            v: f0,
            d: f1 * self.d,
            dd: f2 * self.d * self.d + f1 * self.dd,
        }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet {
            v: self.v + o.v,
            d: self.d + o.d,
            dd: self.dd + o.dd,
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet {
            v: self.v - o.v,
            d: self.d - o.d,
            dd: self.dd - o.dd,
        }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
            dd: self.dd * o.v + 2.0 * self.d * o.d + self.v * o.dd,
        }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        let inv = 1.0 / o.v;
        let r = Jet::chain(o, inv, -inv * inv, 2.0 * inv * inv * inv);
        self * r
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet {
            v: -self.v,
            d: -self.d,
            dd: -self.dd,
        }
    }
}

impl Scalar for Jet {
    fn constant(v: f64) -> Self {
        Jet { v, d: 0.0, dd: 0.0 }
    }
    fn value(self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        self.chain(r, 0.5 / r, -0.25 / (r * self.v))
    }
    fn scale(self, c: f64) -> Self {
        Jet {
            v: self.v * c,
            d: self.d * c,
            dd: self.dd * c,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_quotient_rules() {
        let x = Jet::variable(0.7);
        let f = (x * x.sin()) / x.exp();
        // f = x sin x e^{-x}
        let e = (-0.7f64).exp();
        let (s, c) = 0.7f64.sin_cos();
        let f0 = 0.7 * s * e;
        let f1 = (s + 0.7 * c - 0.7 * s) * e;
        let f2 = (2.0 * c - 0.7 * s - 2.0 * (s + 0.7 * c) + 0.7 * s) * e;
        assert!((f.v - f0).abs() < 1e-15);
        assert!((f.d - f1).abs() < 1e-14);
        assert!((f.dd - f2).abs() < 1e-14);
    }

    #[test]
    fn sqrt_second_derivative() {
        let x = Jet::variable(2.0);
        let r = x.sqrt();
        assert!((r.d - 0.5 / 2f64.sqrt()).abs() < 1e-15);
        assert!((r.dd + 0.25 / 2f64.powf(1.5)).abs() < 1e-15);
    }
}
