//! Second-order forward-mode jets in two variables.
//!
//! A `Jet2` carries a value together with its exact gradient and Hessian with
//! respect to two seed variables, so evaluating an expression on jets yields
//! analytic first and second partial derivatives in one pass.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Jet2 {
    pub v: f64,
    pub g: [f64; 2],
    /// Hessian entries `[h00, h01, h11]`.
    pub h: [f64; 3],
}

impl Jet2 {
    pub fn constant(v: f64) -> Self {
        Self {
            v,
            g: [0.0; 2],
            h: [0.0; 3],
        }
    }

    pub fn variable(v: f64, index: usize) -> Self {
        let mut g = [0.0; 2];
        g[index] = 1.0;
        Self { v, g, h: [0.0; 3] }
    }

    /// Chain rule for a scalar function with derivatives `(f, f', f'')` at `self.v`.
    fn chain(self, f: f64, df: f64, d2f: f64) -> Self {
        let [g0, g1] = self.g;
        let [h00, h01, h11] = self.h;
        Self {
            v: f,
            g: [df * g0, df * g1],
            h: [
                df * h00 + d2f * g0 * g0,
                df * h01 + d2f * g0 * g1,
                df * h11 + d2f * g1 * g1,
            ],
        }
    }

    pub fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }

    pub fn scale(self, k: f64) -> Self {
        Self {
            v: k * self.v,
            g: [k * self.g[0], k * self.g[1]],
            h: [k * self.h[0], k * self.h[1], k * self.h[2]],
        }
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        Jet2 {
            v: self.v + o.v,
            g: [self.g[0] + o.g[0], self.g[1] + o.g[1]],
            h: [self.h[0] + o.h[0], self.h[1] + o.h[1], self.h[2] + o.h[2]],
        }
    }
}

impl Add<f64> for Jet2 {
    type Output = Jet2;
    fn add(mut self, k: f64) -> Jet2 {
        self.v += k;
        self
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        self + (-o)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        let (a, b) = (self, o);
        Jet2 {
            v: a.v * b.v,
            g: [a.g[0] * b.v + a.v * b.g[0], a.g[1] * b.v + a.v * b.g[1]],
            h: [
                a.h[0] * b.v + 2.0 * a.g[0] * b.g[0] + a.v * b.h[0],
                a.h[1] * b.v + a.g[0] * b.g[1] + a.g[1] * b.g[0] + a.v * b.h[1],
                a.h[2] * b.v + 2.0 * a.g[1] * b.g[1] + a.v * b.h[2],
            ],
        }
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, k: f64) -> Jet2 {
        self.scale(k)
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    fn div(self, o: Jet2) -> Jet2 {
        self * o.recip()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_matches_closed_form() {
        // f(x, y) = x² y + sqrt(x) / y at (2, 3)
        let x = Jet2::variable(2.0, 0);
        let y = Jet2::variable(3.0, 1);
        let f = x * x * y + x.sqrt() / y;
        let s2 = 2f64.sqrt();
        assert!((f.v - (12.0 + s2 / 3.0)).abs() < 1e-14);
        assert!((f.g[0] - (12.0 + 0.5 / s2 / 3.0)).abs() < 1e-14);
        assert!((f.g[1] - (4.0 - s2 / 9.0)).abs() < 1e-14);
        assert!((f.h[0] - (6.0 - 0.25 / (2.0 * s2) / 3.0)).abs() < 1e-14);
        assert!((f.h[1] - (4.0 - 0.5 / s2 / 9.0)).abs() < 1e-14);
        assert!((f.h[2] - 2.0 * s2 / 27.0).abs() < 1e-14);
    }

    #[test]
    fn trig_second_derivatives() {
        let t = Jet2::variable(0.7, 1);
        let c = t.cos();
        assert!((c.h[2] + 0.7f64.cos()).abs() < 1e-15);
        let s = t.sin();
        assert!((s.g[1] - 0.7f64.cos()).abs() < 1e-15);
    }
}
