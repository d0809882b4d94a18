//! Feasibility restoration: minimizes the l1 constraint violation plus a
//! small proximal term that keeps the point near where restoration started.

use log::debug;

use super::{constraint_violation, ipm, SolverOptions};
use crate::nlp::Nlp;

const PENALTY: f64 = 1000.0;

/// Variables `[x, p_c, n_c, p_d, n_d]`; elastic versions of the original
/// constraints, `c(x) - p_c + n_c = 0` and `d_l <= d(x) - p_d + n_d <= d_u`.
struct Elastic<'a, P: Nlp + ?Sized> {
    p: &'a P,
    x_ref: Vec<f64>,
    dsq: Vec<f64>,
    zeta: f64,
}

impl<P: Nlp + ?Sized> Elastic<'_, P> {
    fn n(&self) -> usize {
        self.p.n_vars()
    }

    fn m(&self) -> usize {
        self.p.n_eq() + self.p.n_ineq()
    }

    /// Offset of the positive part for constraint row `r`; the negative part
    /// follows immediately.
    fn slot(&self, r: usize) -> usize {
        self.n() + 2 * r
    }
}

impl<P: Nlp + ?Sized> Nlp for Elastic<'_, P> {
    fn n_vars(&self) -> usize {
        self.n() + 2 * self.m()
    }
    fn n_eq(&self) -> usize {
        self.p.n_eq()
    }
    fn n_ineq(&self) -> usize {
        self.p.n_ineq()
    }
    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let (mut lo, mut up) = self.p.var_bounds();
        lo.resize(self.n_vars(), 0.0);
        up.resize(self.n_vars(), f64::INFINITY);
        (lo, up)
    }
    fn ineq_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.p.ineq_bounds()
    }
    fn objective(&self, v: &[f64]) -> f64 {
        let n = self.n();
        let mut f = PENALTY * v[n..].iter().sum::<f64>();
        for j in 0..n {
            f += 0.5 * self.zeta * self.dsq[j] * (v[j] - self.x_ref[j]).powi(2);
        }
        f
    }
    fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut g = vec![PENALTY; self.n_vars()];
        for j in 0..n {
            g[j] = self.zeta * self.dsq[j] * (v[j] - self.x_ref[j]);
        }
        g
    }
    fn constraints(&self, v: &[f64]) -> Vec<f64> {
        let mut c = self.p.constraints(&v[..self.n()]);
        for (r, cr) in c.iter_mut().enumerate() {
            let s = self.slot(r);
            *cr += v[s + 1] - v[s];
        }
        c
    }
    fn jacobian(&self, v: &[f64]) -> Vec<(usize, usize, f64)> {
        let mut j = self.p.jacobian(&v[..self.n()]);
        for r in 0..self.m() {
            let s = self.slot(r);
            j.push((r, s, -1.0));
            j.push((r, s + 1, 1.0));
        }
        j
    }
    fn hessian(&self, v: &[f64], obj_factor: f64, lambda: &[f64]) -> Vec<(usize, usize, f64)> {
        let mut h = self.p.hessian(&v[..self.n()], 0.0, lambda);
        for j in 0..self.n() {
            h.push((j, j, obj_factor * self.zeta * self.dsq[j]));
        }
        h
    }
}

/// Elastic parts `(p, n)` minimizing the barrier-augmented penalty for a
/// residual `r` with `p - n = r`.
fn elastic_start(r: f64, mu: f64) -> (f64, f64) {
    let a = (mu - PENALTY * r) / (2.0 * PENALTY);
    let n = a + (a * a + mu * r / (2.0 * PENALTY)).sqrt();
    (r + n, n)
}

/// Looks for a feasible point near `x_ref`. Returns the point reached and
/// whether its violation is within the infeasibility threshold.
pub(super) fn restore<P: Nlp + ?Sized>(p: &P, x_ref: &[f64], mu: f64, opts: &SolverOptions) -> (Vec<f64>, bool) {
    let theta0 = constraint_violation(p, x_ref);
    let mu_r = mu.max(theta0).min(1e3);
    let el = Elastic {
        p,
        x_ref: x_ref.to_vec(),
        dsq: x_ref.iter().map(|v| (1.0 / v.abs().max(1.0)).powi(2)).collect(),
        zeta: mu.sqrt(),
    };
    let c = p.constraints(x_ref);
    let me = p.n_eq();
    let (dl, du) = p.ineq_bounds();
    let mut v = x_ref.to_vec();
    for (r, cr) in c.iter().enumerate() {
        let res = if r < me { *cr } else { cr - cr.clamp(dl[r - me], du[r - me]) };
        let (pp, nn) = elastic_start(res, mu_r);
        v.push(pp);
        v.push(nn);
    }
    let inner = SolverOptions {
        mu_init: mu_r,
        tol_stat: opts.tol_stat.max(1e-8 * PENALTY),
        restoration: false,
        ..*opts
    };
    let r = ipm::run(&el as &dyn Nlp, &v, &inner, false);
    let x = r.x[..p.n_vars()].to_vec();
    let theta = constraint_violation(p, &x);
    debug!(
        "restoration {:?} in {} iterations, violation {:.3e} -> {:.3e}",
        r.status, r.iterations, theta0, theta
    );
    (x, theta <= opts.infeasibility_threshold)
}
