//! Second-order forward-mode automatic differentiation over a fixed number
//! of local variables.
//!
//! Branch flows depend on at most five variables (two voltages, two angles,
//! one tap), so a dense `N x N` Hessian per value is cheap and exact.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<const N: usize> {
    pub v: f64,
    pub g: [f64; N],
    pub h: [[f64; N]; N],
}

impl<const N: usize> Jet<N> {
    pub fn constant(v: f64) -> Self {
        Jet {
            v,
            g: [0.0; N],
            h: [[0.0; N]; N],
        }
    }

    /// The `slot`-th independent variable at value `v`.
    pub fn var(v: f64, slot: usize) -> Self {
        let mut j = Self::constant(v);
        j.g[slot] = 1.0;
        j
    }

    /// Chain rule for a scalar function with value `f`, slope `d1` and
    /// curvature `d2` at `self.v`.
    fn chain(self, f: f64, d1: f64, d2: f64) -> Self {
        let mut out = Self::constant(f);
        for a in 0..N {
            out.g[a] = d1 * self.g[a];
            for b in 0..N {
                out.h[a][b] = d1 * self.h[a][b] + d2 * self.g[a] * self.g[b];
            }
        }
        out
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }

    pub fn sqr(self) -> Self {
        self * self
    }

    pub fn scale(self, k: f64) -> Self {
        let mut out = self;
        out.v *= k;
        for a in 0..N {
            out.g[a] *= k;
            for b in 0..N {
                out.h[a][b] *= k;
            }
        }
        out
    }
}

impl<const N: usize> Add for Jet<N> {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for a in 0..N {
            self.g[a] += o.g[a];
            for b in 0..N {
                self.h[a][b] += o.h[a][b];
            }
        }
        self
    }
}

impl<const N: usize> Add<f64> for Jet<N> {
    type Output = Self;
    fn add(mut self, o: f64) -> Self {
        self.v += o;
        self
    }
}

impl<const N: usize> Neg for Jet<N> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl<const N: usize> Sub for Jet<N> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl<const N: usize> Mul for Jet<N> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut out = Self::constant(self.v * o.v);
        for a in 0..N {
            out.g[a] = self.v * o.g[a] + o.v * self.g[a];
            for b in 0..N {
                out.h[a][b] = self.v * o.h[a][b]
                    + o.v * self.h[a][b]
                    + self.g[a] * o.g[b]
                    + o.g[a] * self.g[b];
            }
        }
        out
    }
}

impl<const N: usize> Mul<f64> for Jet<N> {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        self.scale(k)
    }
}
