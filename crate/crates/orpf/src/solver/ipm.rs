use log::{debug, trace};
use nalgebra::{DMatrix, DVector};

use super::linalg::{Inertia, Ldlt};
use super::{constraint_violation, kkt_residuals, restoration};
use super::{Multipliers, SolveReport, SolverOptions, Status};
use crate::nlp::Nlp;

const KAPPA_EPS: f64 = 10.0;
const KAPPA_MU: f64 = 0.2;
const THETA_MU: f64 = 1.5;
const TAU_MIN: f64 = 0.99;
const MU_MIN: f64 = 1e-11;
const KAPPA_SIGMA: f64 = 1e10;
const BOUND_PUSH: f64 = 1e-2;
const BOUND_FRAC: f64 = 1e-2;
const ARMIJO_ETA: f64 = 1e-4;
const GAMMA_THETA: f64 = 1e-5;
const GAMMA_PHI: f64 = 1e-8;
const GAMMA_ALPHA: f64 = 0.05;
const DELTA_SWITCH: f64 = 1.0;
const S_THETA: f64 = 1.1;
const S_PHI: f64 = 2.3;
const THETA_MIN_FACTOR: f64 = 1e-4;
const THETA_MAX_FACTOR: f64 = 1e4;
const MAX_SOC: usize = 4;
const SOC_KAPPA: f64 = 0.99;
const LAMBDA_MAX: f64 = 1e3;
const DEGENERATE_WIDTH: f64 = 2e-8;
const MAX_RESTORATIONS: usize = 5;
const MIN_STEP: f64 = 1e-14;

/// Moves `v` strictly inside `[l, u]`.
fn push(v: f64, l: f64, u: f64) -> f64 {
    match (l.is_finite(), u.is_finite()) {
        (true, true) => {
            let pl = (BOUND_PUSH * l.abs().max(1.0)).min(BOUND_FRAC * (u - l));
            let pu = (BOUND_PUSH * u.abs().max(1.0)).min(BOUND_FRAC * (u - l));
            v.max(l + pl).min(u - pu)
        }
        (true, false) => v.max(l + BOUND_PUSH * l.abs().max(1.0)),
        (false, true) => v.min(u - BOUND_PUSH * u.abs().max(1.0)),
        (false, false) => v,
    }
}

/// Largest step in (0, 1] keeping `v + a dv` a fraction `tau` away from bounds.
fn max_step(v: &[f64], dv: &[f64], lo: &[f64], up: &[f64], tau: f64) -> f64 {
    let mut a: f64 = 1.0;
    for j in 0..v.len() {
        if dv[j] < 0.0 && lo[j].is_finite() {
            a = a.min(-tau * (v[j] - lo[j]) / dv[j]);
        }
        if dv[j] > 0.0 && up[j].is_finite() {
            a = a.min(tau * (up[j] - v[j]) / dv[j]);
        }
    }
    a
}

fn max_step_dual(z: &[f64], dz: &[f64], tau: f64) -> f64 {
    let mut a: f64 = 1.0;
    for j in 0..z.len() {
        if dz[j] < 0.0 && z[j] > 0.0 {
            a = a.min(-tau * z[j] / dz[j]);
        }
    }
    a
}

fn norm1(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Problem lifted to `w = [x; s]` with `h(w) = [c(x); d(x) - s] = 0`.
struct Lifted<'a, P: Nlp + ?Sized> {
    p: &'a P,
    n: usize,
    me: usize,
    mi: usize,
    lo: Vec<f64>,
    up: Vec<f64>,
}

impl<'a, P: Nlp + ?Sized> Lifted<'a, P> {
    fn new(p: &'a P) -> Self {
        let (mut lo, mut up) = p.var_bounds();
        let (dl, du) = p.ineq_bounds();
        lo.extend(dl);
        up.extend(du);
        for j in 0..lo.len() {
            if lo[j].is_finite() && up[j].is_finite() && up[j] - lo[j] < DEGENERATE_WIDTH {
                let mid = 0.5 * (lo[j] + up[j]);
                lo[j] = mid - 0.5 * DEGENERATE_WIDTH;
                up[j] = mid + 0.5 * DEGENERATE_WIDTH;
            }
        }
        Lifted {
            p,
            n: p.n_vars(),
            me: p.n_eq(),
            mi: p.n_ineq(),
            lo,
            up,
        }
    }

    fn nn(&self) -> usize {
        self.n + self.mi
    }

    fn mm(&self) -> usize {
        self.me + self.mi
    }

    fn push_x(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|j| push(x[j], self.lo[j], self.up[j])).collect()
    }

    /// Primal point for `x` with slacks at the pushed inequality bodies.
    fn lift(&self, x: &[f64]) -> Vec<f64> {
        let mut w = self.push_x(x);
        let c = self.p.constraints(&w);
        for i in 0..self.mi {
            let j = self.n + i;
            w.push(push(c[self.me + i], self.lo[j], self.up[j]));
        }
        w
    }

    fn eval_fc(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let x = &w[..self.n];
        let mut h = self.p.constraints(x);
        for i in 0..self.mi {
            h[self.me + i] -= w[self.n + i];
        }
        (self.p.objective(x), h)
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g = self.p.gradient(&w[..self.n]);
        g.resize(self.nn(), 0.0);
        g
    }

    fn jacobian(&self, w: &[f64]) -> Vec<(usize, usize, f64)> {
        let mut j = self.p.jacobian(&w[..self.n]);
        for i in 0..self.mi {
            j.push((self.me + i, self.n + i, -1.0));
        }
        j
    }

    fn barrier(&self, w: &[f64], f: f64, mu: f64) -> f64 {
        let mut b = f;
        for j in 0..w.len() {
            if self.lo[j].is_finite() {
                b -= mu * (w[j] - self.lo[j]).ln();
            }
            if self.up[j].is_finite() {
                b -= mu * (self.up[j] - w[j]).ln();
            }
        }
        b
    }

    fn barrier_gradient(&self, w: &[f64], g: &[f64], mu: f64) -> Vec<f64> {
        let mut gb = g.to_vec();
        for j in 0..w.len() {
            if self.lo[j].is_finite() {
                gb[j] -= mu / (w[j] - self.lo[j]);
            }
            if self.up[j].is_finite() {
                gb[j] += mu / (self.up[j] - w[j]);
            }
        }
        gb
    }

    /// Bound multipliers balanced with the current barrier parameter.
    fn central_z(&self, w: &[f64], mu: f64) -> (Vec<f64>, Vec<f64>) {
        let zl = (0..w.len())
            .map(|j| if self.lo[j].is_finite() { mu / (w[j] - self.lo[j]) } else { 0.0 })
            .collect();
        let zu = (0..w.len())
            .map(|j| if self.up[j].is_finite() { mu / (self.up[j] - w[j]) } else { 0.0 })
            .collect();
        (zl, zu)
    }

    /// Least-squares estimate of the constraint multipliers.
    fn initial_lambda(&self, w: &[f64], zl: &[f64], zu: &[f64]) -> Vec<f64> {
        let (nn, mm) = (self.nn(), self.mm());
        if mm == 0 {
            return vec![];
        }
        let mut k = DMatrix::zeros(nn + mm, nn + mm);
        for j in 0..nn {
            k[(j, j)] = 1.0;
        }
        for (r, c, v) in self.jacobian(w) {
            k[(nn + r, c)] += v;
            k[(c, nn + r)] += v;
        }
        let g = self.gradient(w);
        let mut rhs = vec![0.0; nn + mm];
        for j in 0..nn {
            rhs[j] = -(g[j] - zl[j] + zu[j]);
        }
        let sol = Ldlt::factor(k).solve(&rhs);
        let lam = sol[nn..].to_vec();
        if norm_inf(&lam) > LAMBDA_MAX || lam.iter().any(|v| !v.is_finite()) {
            vec![0.0; mm]
        } else {
            lam
        }
    }

    fn multipliers(&self, lam: &[f64], zl: &[f64], zu: &[f64]) -> Multipliers {
        let ld = &lam[self.me..];
        Multipliers {
            eq: lam[..self.me].to_vec(),
            ineq_lower: ld.iter().map(|v| (-v).max(0.0)).collect(),
            ineq_upper: ld.iter().map(|v| v.max(0.0)).collect(),
            z_lower: zl[..self.n].to_vec(),
            z_upper: zu[..self.n].to_vec(),
        }
    }

    /// Scaled optimality error of the barrier subproblem.
    #[allow(clippy::too_many_arguments)]
    fn barrier_error(
        &self,
        w: &[f64],
        g: &[f64],
        jt_lam: &[f64],
        h: &[f64],
        lam: &[f64],
        zl: &[f64],
        zu: &[f64],
        mu: f64,
    ) -> f64 {
        let (nn, mm) = (self.nn(), self.mm());
        let zsum = norm1(zl) + norm1(zu);
        let s_d = ((norm1(lam) + zsum) / (mm + 2 * nn).max(1) as f64).max(100.0) / 100.0;
        let s_c = (zsum / (2 * nn).max(1) as f64).max(100.0) / 100.0;
        let mut stat: f64 = 0.0;
        let mut comp: f64 = 0.0;
        for j in 0..nn {
            stat = stat.max((g[j] + jt_lam[j] - zl[j] + zu[j]).abs());
            if self.lo[j].is_finite() {
                comp = comp.max(((w[j] - self.lo[j]) * zl[j] - mu).abs());
            }
            if self.up[j].is_finite() {
                comp = comp.max(((self.up[j] - w[j]) * zu[j] - mu).abs());
            }
        }
        (stat / s_d).max(norm_inf(h)).max(comp / s_c)
    }
}

fn report<P: Nlp + ?Sized>(
    p: &P,
    status: Status,
    x: Vec<f64>,
    multipliers: Multipliers,
    stats: Stats,
) -> SolveReport {
    let kkt = kkt_residuals(p, &x, &multipliers);
    SolveReport {
        status,
        objective: p.objective(&x),
        x,
        multipliers,
        kkt,
        iterations: stats.iterations,
        mu_final: stats.mu,
        mu_reductions: stats.mu_reductions,
        restorations: stats.restorations,
        inertia_corrections: stats.inertia_corrections,
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Stats {
    iterations: usize,
    mu: f64,
    mu_reductions: usize,
    restorations: usize,
    inertia_corrections: usize,
}

/// Solves `p` from `x0`. Never panics on numerical trouble; the outcome is in
/// [`SolveReport::status`].
pub fn solve<P: Nlp + ?Sized>(p: &P, x0: &[f64], opts: &SolverOptions) -> SolveReport {
    run(p, x0, opts, opts.restoration)
}

struct Direction {
    dw: Vec<f64>,
    dlam: Vec<f64>,
}

pub(super) fn run<P: Nlp + ?Sized>(
    p: &P,
    x0: &[f64],
    opts: &SolverOptions,
    allow_restoration: bool,
) -> SolveReport {
    assert_eq!(x0.len(), p.n_vars(), "start point has wrong dimension");
    let lp = Lifted::new(p);
    let (n, nn, mm) = (lp.n, lp.nn(), lp.mm());
    let mut stats = Stats {
        mu: opts.mu_init,
        ..Default::default()
    };
    let mut mu = opts.mu_init;
    let mut tau = TAU_MIN.max(1.0 - mu);

    let mut x = lp.push_x(x0);
    let theta0 = constraint_violation(p, &x);
    if allow_restoration && theta0 > opts.restoration_threshold {
        debug!("initial violation {theta0:.3e}, restoring feasibility");
        stats.restorations += 1;
        let (xr, ok) = restoration::restore(p, &x, mu, opts);
        if !ok {
            let m = lp.multipliers(&vec![0.0; mm], &vec![0.0; nn], &vec![0.0; nn]);
            return report(p, Status::Infeasible, xr, m, stats);
        }
        x = lp.push_x(&xr);
    }

    let mut w = lp.lift(&x);
    let mut zl: Vec<f64> = (0..nn).map(|j| if lp.lo[j].is_finite() { 1.0 } else { 0.0 }).collect();
    let mut zu: Vec<f64> = (0..nn).map(|j| if lp.up[j].is_finite() { 1.0 } else { 0.0 }).collect();
    let mut lam = lp.initial_lambda(&w, &zl, &zu);
    let mut filter: Vec<(f64, f64)> = Vec::new();
    let mut theta_ref = constraint_violation(p, &w[..n]).max(1.0);
    let mut delta_last = 0.0;

    let status = loop {
        let mult = lp.multipliers(&lam, &zl, &zu);
        let kkt = kkt_residuals(p, &w[..n], &mult);
        trace!(
            "iter {} mu {:.2e} stat {:.2e} feas {:.2e} comp {:.2e}",
            stats.iterations,
            mu,
            kkt.stationarity,
            kkt.feasibility,
            kkt.complementarity
        );
        if kkt.within(opts) {
            break Status::Optimal;
        }
        if stats.iterations >= opts.max_iter {
            break Status::MaxIter;
        }
        stats.iterations += 1;

        let (f, h) = lp.eval_fc(&w);
        let g = lp.gradient(&w);
        let jac = lp.jacobian(&w);
        let mut jt_lam = vec![0.0; nn];
        for &(r, c, v) in &jac {
            jt_lam[c] += v * lam[r];
        }
        if !f.is_finite() || h.iter().chain(&g).any(|v| !v.is_finite()) {
            debug!("non-finite function values at iteration {}", stats.iterations);
            break Status::NumericalFailure;
        }

        while mu > MU_MIN && lp.barrier_error(&w, &g, &jt_lam, &h, &lam, &zl, &zu, mu) <= KAPPA_EPS * mu {
            mu = MU_MIN.max((KAPPA_MU * mu).min(mu.powf(THETA_MU)));
            tau = TAU_MIN.max(1.0 - mu);
            stats.mu_reductions += 1;
            filter.clear();
        }
        stats.mu = mu;

        // KKT matrix without regularization
        let dim = nn + mm;
        let mut base = DMatrix::zeros(dim, dim);
        for (r, c, v) in p.hessian(&w[..n], 1.0, &lam) {
            base[(r, c)] += v;
            if r != c {
                base[(c, r)] += v;
            }
        }
        let mut sigma = vec![0.0; nn];
        for j in 0..nn {
            if lp.lo[j].is_finite() {
                sigma[j] += zl[j] / (w[j] - lp.lo[j]);
            }
            if lp.up[j].is_finite() {
                sigma[j] += zu[j] / (lp.up[j] - w[j]);
            }
            base[(j, j)] += sigma[j];
        }
        for &(r, c, v) in &jac {
            base[(nn + r, c)] += v;
            base[(c, nn + r)] += v;
        }

        let want = Inertia {
            positive: nn,
            negative: mm,
            zero: 0,
        };
        let mut dw_reg = 0.0;
        let mut dc_reg = 0.0;
        let factored = loop {
            let mut k = base.clone();
            for j in 0..nn {
                k[(j, j)] += dw_reg;
            }
            for i in 0..mm {
                k[(nn + i, nn + i)] -= dc_reg;
            }
            let fac = Ldlt::factor(k.clone());
            if fac.inertia == want {
                break Some((fac, k));
            }
            stats.inertia_corrections += 1;
            trace!("  inertia {:?} with reg ({dw_reg:.1e}, {dc_reg:.1e})", fac.inertia);
            if fac.inertia.zero > 0 && dc_reg == 0.0 && mm > 0 {
                dc_reg = 1e-8 * mu.powf(0.25);
                continue;
            }
            dw_reg = if dw_reg == 0.0 {
                if delta_last == 0.0 {
                    1e-4
                } else {
                    (delta_last / 3.0f64).max(1e-20)
                }
            } else if delta_last == 0.0 {
                dw_reg * 100.0
            } else {
                dw_reg * 8.0
            };
            if dw_reg > 1e40 {
                break None;
            }
        };
        let Some((fac, kmat)) = factored else {
            debug!("inertia correction exhausted at iteration {}", stats.iterations);
            break Status::NumericalFailure;
        };
        if dw_reg > 0.0 {
            delta_last = dw_reg;
        }

        let gb = lp.barrier_gradient(&w, &g, mu);
        let solve_kkt = |r2: &[f64]| -> Direction {
            let mut rhs = vec![0.0; dim];
            for j in 0..nn {
                rhs[j] = -(gb[j] + jt_lam[j]);
            }
            for i in 0..mm {
                rhs[nn + i] = -r2[i];
            }
            let mut sol = fac.solve(&rhs);
            for _ in 0..2 {
                let res = DVector::from_column_slice(&rhs) - &kmat * DVector::from_column_slice(&sol);
                let corr = fac.solve(res.as_slice());
                for (s, c) in sol.iter_mut().zip(corr) {
                    *s += c;
                }
            }
            Direction {
                dw: sol[..nn].to_vec(),
                dlam: sol[nn..].to_vec(),
            }
        };
        let bound_steps = |dw: &[f64]| -> (Vec<f64>, Vec<f64>) {
            let mut dzl = vec![0.0; nn];
            let mut dzu = vec![0.0; nn];
            for j in 0..nn {
                if lp.lo[j].is_finite() {
                    let gap = w[j] - lp.lo[j];
                    dzl[j] = mu / gap - zl[j] - zl[j] / gap * dw[j];
                }
                if lp.up[j].is_finite() {
                    let gap = lp.up[j] - w[j];
                    dzu[j] = mu / gap - zu[j] + zu[j] / gap * dw[j];
                }
            }
            (dzl, dzu)
        };

        let mut dir = solve_kkt(&h);
        if dir.dw.iter().chain(&dir.dlam).any(|v| !v.is_finite()) {
            debug!("non-finite search direction at iteration {}", stats.iterations);
            break Status::NumericalFailure;
        }

        // filter line search on (violation, barrier objective)
        let theta = norm1(&h);
        let phi = lp.barrier(&w, f, mu);
        let dphi: f64 = gb.iter().zip(&dir.dw).map(|(a, b)| a * b).sum();
        let theta_min = THETA_MIN_FACTOR * theta_ref;
        let theta_max = THETA_MAX_FACTOR * theta_ref;
        let switching = |alpha: f64| dphi < 0.0 && alpha * (-dphi).powf(S_PHI) > DELTA_SWITCH * theta.powf(S_THETA);
        let alpha_min = if dphi < 0.0 && theta > 0.0 {
            GAMMA_ALPHA
                * GAMMA_THETA
                    .min(GAMMA_PHI * theta / -dphi)
                    .min(DELTA_SWITCH * theta.powf(S_THETA) / (-dphi).powf(S_PHI))
        } else {
            GAMMA_ALPHA * GAMMA_THETA
        };
        // Some(true) when accepted by the Armijo branch, which leaves the filter alone
        let accept = |wt: &[f64], alpha: f64| -> Option<bool> {
            let (ft, ht) = lp.eval_fc(wt);
            let phi_t = lp.barrier(wt, ft, mu);
            let theta_t = norm1(&ht);
            if !phi_t.is_finite() || !theta_t.is_finite() || theta_t > theta_max {
                return None;
            }
            if filter.iter().any(|&(tf, pf)| theta_t >= tf && phi_t >= pf) {
                return None;
            }
            let slack = 10.0 * f64::EPSILON * phi.abs().max(1.0);
            if theta <= theta_min && switching(alpha) {
                return (phi_t <= phi + ARMIJO_ETA * alpha * dphi + slack).then_some(true);
            }
            let ok = theta_t <= (1.0 - GAMMA_THETA) * theta || phi_t <= phi - GAMMA_PHI * theta + slack;
            ok.then_some(false)
        };

        let alpha_max = max_step(&w, &dir.dw, &lp.lo, &lp.up, tau);
        let tiny = dir
            .dw
            .iter()
            .zip(&w)
            .all(|(d, v)| d.abs() / (1.0 + v.abs()) < 10.0 * f64::EPSILON);
        let mut alpha = alpha_max;
        let mut accepted: Option<(f64, bool)> = None;
        if tiny {
            accepted = Some((alpha_max, true));
        }
        let mut first = true;
        while accepted.is_none() && alpha >= alpha_min && alpha > MIN_STEP {
            let wt: Vec<f64> = w.iter().zip(&dir.dw).map(|(a, b)| a + alpha * b).collect();
            if let Some(armijo) = accept(&wt, alpha) {
                accepted = Some((alpha, armijo));
                break;
            }
            if first {
                first = false;
                let (_, ht) = lp.eval_fc(&wt);
                let mut theta_soc_old = theta;
                let mut theta_t = norm1(&ht);
                let mut hsoc: Vec<f64> = h.iter().zip(&ht).map(|(a, b)| alpha * a + b).collect();
                for _ in 0..MAX_SOC {
                    if theta_t < theta || theta_t > SOC_KAPPA * theta_soc_old {
                        break;
                    }
                    let soc = solve_kkt(&hsoc);
                    if soc.dw.iter().any(|v| !v.is_finite()) {
                        break;
                    }
                    let a_soc = max_step(&w, &soc.dw, &lp.lo, &lp.up, tau);
                    let ws: Vec<f64> = w.iter().zip(&soc.dw).map(|(a, b)| a + a_soc * b).collect();
                    if let Some(armijo) = accept(&ws, alpha) {
                        dir = soc;
                        accepted = Some((a_soc, armijo));
                        break;
                    }
                    let (_, hs) = lp.eval_fc(&ws);
                    theta_soc_old = theta_t;
                    theta_t = norm1(&hs);
                    hsoc = hsoc.iter().zip(&hs).map(|(a, b)| a_soc * a + b).collect();
                }
                if accepted.is_some() {
                    break;
                }
            }
            alpha *= 0.5;
        }
        let accepted = accepted.map(|(a, armijo)| {
            if !armijo {
                filter.push(((1.0 - GAMMA_THETA) * theta, phi - GAMMA_PHI * theta));
            }
            a
        });

        let Some(alpha) = accepted else {
            if allow_restoration && stats.restorations < MAX_RESTORATIONS {
                debug!("line search failed at iteration {}, restoring", stats.iterations);
                stats.restorations += 1;
                let (xr, ok) = restoration::restore(p, &w[..n], mu, opts);
                if !ok {
                    let m = lp.multipliers(&lam, &zl, &zu);
                    return report(p, Status::Infeasible, xr, m, stats);
                }
                w = lp.lift(&xr);
                filter.clear();
                theta_ref = constraint_violation(p, &w[..n]).max(1.0);
                (zl, zu) = lp.central_z(&w, mu);
                lam = lp.initial_lambda(&w, &zl, &zu);
                continue;
            }
            debug!("line search failed at iteration {}", stats.iterations);
            break Status::NumericalFailure;
        };

        trace!(
            "  step {alpha:.3e} of max {alpha_max:.3e}, |dw| {:.3e}, reg {dw_reg:.1e}, filter {}",
            norm_inf(&dir.dw),
            filter.len()
        );
        let (dzl, dzu) = bound_steps(&dir.dw);
        let alpha_z = max_step_dual(&zl, &dzl, tau).min(max_step_dual(&zu, &dzu, tau));
        for j in 0..nn {
            w[j] += alpha * dir.dw[j];
        }
        for i in 0..mm {
            lam[i] += alpha * dir.dlam[i];
        }
        for j in 0..nn {
            if lp.lo[j].is_finite() {
                let gap = w[j] - lp.lo[j];
                zl[j] = (zl[j] + alpha_z * dzl[j]).clamp(mu / (KAPPA_SIGMA * gap), KAPPA_SIGMA * mu / gap);
            }
            if lp.up[j].is_finite() {
                let gap = lp.up[j] - w[j];
                zu[j] = (zu[j] + alpha_z * dzu[j]).clamp(mu / (KAPPA_SIGMA * gap), KAPPA_SIGMA * mu / gap);
            }
        }
    };

    let m = lp.multipliers(&lam, &zl, &zu);
    let r = report(p, status, w[..n].to_vec(), m, stats);
    debug!(
        "{:?} after {} iterations, f = {:.6e}, kkt = {:?}",
        r.status, r.iterations, r.objective, r.kkt
    );
    r
}
