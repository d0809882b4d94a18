//! Independent measurements of power-flow and NLP results.

use num_complex::Complex64;
use orpf::admittance::build_ybus;
use orpf::netmodel::{PuCase, PuNetwork};
use orpf::nlp::{Nlp, OperatingPoint, OrpfProblem};
use orpf::powerflow::PfSolution;

/// Largest |dP| or |dQ| over all buses, from `U conj(Y U)` against the
/// scheduled generation, load and external-grid exchange.
pub fn nodal_mismatch(net: &PuNetwork, case: &PuCase, sol: &PfSolution) -> f64 {
    let y = build_ybus(net, &sol.psi).unwrap();
    let u = sol.voltages();
    let i = y.mul(&u);
    let mut sched = vec![Complex64::new(0.0, 0.0); net.n_bus()];
    for (g, gen) in net.gens.iter().enumerate() {
        sched[gen.bus] += Complex64::new(case.p_g[g], sol.q_g[g]);
    }
    for (m, load) in net.loads.iter().enumerate() {
        sched[load.bus] -= Complex64::new(case.p_m[m], case.q_m[m]);
    }
    for (e, ext) in net.ext_grids.iter().enumerate() {
        sched[ext.bus] += sol.s_e[e];
    }
    (0..net.n_bus())
        .map(|k| {
            let d = u[k] * i[k].conj() - sched[k];
            d.re.abs().max(d.im.abs())
        })
        .fold(0.0, f64::max)
}

/// Residual of `slack = load - generation + losses`.
pub fn conservation_residual(case: &PuCase, sol: &PfSolution) -> f64 {
    let load: Complex64 = case.p_m.iter().zip(&case.q_m).map(|(&p, &q)| Complex64::new(p, q)).sum();
    let generation: Complex64 = case.p_g.iter().zip(&sol.q_g).map(|(&p, &q)| Complex64::new(p, q)).sum();
    let losses: Complex64 = sol.branches.iter().map(|b| b.s_from + b.s_to).sum();
    (sol.slack() - (load - generation + losses)).norm()
}

/// Neutral setpoints plus points with generators at a share of their limits
/// and taps spread over the range.
pub fn operating_points(net: &PuNetwork) -> Vec<OperatingPoint> {
    let mut ops = vec![OperatingPoint::initial(net)];
    for (share, step) in [(0.5, 1.0), (-0.5, -1.0), (1.0, 2.0)] {
        let mut op = OperatingPoint::initial(net);
        for (g, gen) in net.gens.iter().enumerate() {
            op.q_g[g] = if share > 0.0 { share * gen.q_max } else { -share * gen.q_min };
        }
        for (t, tr) in net.trafos.iter().enumerate() {
            op.psi[t] = (tr.tap.neutral as f64 + step).clamp(tr.tap.min as f64, tr.tap.max as f64);
        }
        ops.push(op);
    }
    ops
}

/// Largest relative disagreement between analytic first and second
/// derivatives and central differences.
#[derive(Debug, Clone, Copy, Default)]
pub struct DerivativeErrors {
    pub gradient: f64,
    pub jacobian: f64,
    pub hessian: f64,
    /// Hessian entries reported above the diagonal.
    pub upper_entries: usize,
}

impl DerivativeErrors {
    pub fn max(&self) -> f64 {
        self.gradient.max(self.jacobian).max(self.hessian)
    }

    pub fn merge(&mut self, o: DerivativeErrors) {
        self.gradient = self.gradient.max(o.gradient);
        self.jacobian = self.jacobian.max(o.jacobian);
        self.hessian = self.hessian.max(o.hessian);
        self.upper_entries += o.upper_entries;
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn dense(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; n_cols]; n_rows];
    for &(r, c, v) in triplets {
        m[r][c] += v;
    }
    m
}

/// Gradient of `sigma f + lambda' c` assembled from first derivatives.
fn lagrangian_gradient(p: &OrpfProblem, x: &[f64], sigma: f64, lambda: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = p.gradient(x).iter().map(|v| sigma * v).collect();
    for (r, c, v) in p.jacobian(x) {
        g[c] += lambda[r] * v;
    }
    g
}

/// Compares gradient, Jacobian and Lagrangian Hessian (with fixed
/// pseudo-random multipliers) against central differences at `x`.
pub fn derivative_errors(p: &OrpfProblem, x: &[f64]) -> DerivativeErrors {
    let n = p.n_vars();
    let m = p.n_eq() + p.n_ineq();
    let grad = p.gradient(x);
    let jac = dense(m, n, &p.jacobian(x));
    let sigma = 0.7;
    let lambda: Vec<f64> = (0..m).map(|i| (0.9 * i as f64 + 0.2).cos()).collect();
    let h_triplets = p.hessian(x, sigma, &lambda);
    let hess = dense(n, n, &h_triplets);
    let mut out = DerivativeErrors {
        upper_entries: h_triplets.iter().filter(|(r, c, _)| r < c).count(),
        ..Default::default()
    };

    let mut fd_hess = vec![vec![0.0; n]; n];
    for j in 0..n {
        let h = 1e-6 * x[j].abs().max(1.0);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let fd = (p.objective(&xp) - p.objective(&xm)) / (2.0 * h);
        out.gradient = out.gradient.max(rel(grad[j], fd));
        let (cp, cm) = (p.constraints(&xp), p.constraints(&xm));
        for r in 0..m {
            out.jacobian = out.jacobian.max(rel(jac[r][j], (cp[r] - cm[r]) / (2.0 * h)));
        }
        let gp = lagrangian_gradient(p, &xp, sigma, &lambda);
        let gm = lagrangian_gradient(p, &xm, sigma, &lambda);
        for i in 0..n {
            fd_hess[i][j] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    for i in 0..n {
        for j in 0..=i {
            let fd = 0.5 * (fd_hess[i][j] + fd_hess[j][i]);
            out.hessian = out.hessian.max(rel(hess[i][j], fd));
        }
    }
    out
}

/// Deterministic interior perturbation so derivatives are not only checked
/// at a power-flow solution.
pub fn perturbed(p: &OrpfProblem, x: &[f64]) -> Vec<f64> {
    let (lo, hi) = p.var_bounds();
    x.iter()
        .enumerate()
        .map(|(i, &v)| (v + 0.01 * (1.7 * i as f64 + 0.3).sin()).clamp(lo[i], hi[i]))
        .collect()
}
