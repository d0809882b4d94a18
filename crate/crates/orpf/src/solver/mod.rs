//! Primal-dual interior-point solver for [`Nlp`] problems.
//!
//! Inequalities get slack variables, bounds are handled by a logarithmic
//! barrier with Fiacco-McCormick reduction, search directions come from the
//! regularized KKT system with inertia correction, and steps are accepted by
//! a backtracking filter line search with second-order corrections. A
//! feasibility-restoration phase handles infeasible starts and line-search
//! breakdowns.

mod ipm;
pub mod linalg;
mod restoration;

use serde::{Deserialize, Serialize};

use crate::nlp::Nlp;

pub use ipm::solve;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub tol_stat: f64,
    pub tol_feas: f64,
    pub tol_comp: f64,
    pub max_iter: usize,
    pub mu_init: f64,
    /// Initial constraint violation above which restoration runs first.
    pub restoration_threshold: f64,
    /// Violation left after restoration that counts as infeasible.
    pub infeasibility_threshold: f64,
    pub restoration: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_stat: 1e-6,
            tol_feas: 1e-8,
            tol_comp: 1e-8,
            max_iter: 200,
            mu_init: 0.1,
            restoration_threshold: 1e-2,
            infeasibility_threshold: 1e-5,
            restoration: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Optimal,
    MaxIter,
    Infeasible,
    NumericalFailure,
}

/// Multipliers of the original problem. Bound and inequality multipliers are
/// nonnegative; equality multipliers are free.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Multipliers {
    pub eq: Vec<f64>,
    pub ineq_lower: Vec<f64>,
    pub ineq_upper: Vec<f64>,
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
}

/// Infinity norms of the first-order optimality conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn within(&self, o: &SolverOptions) -> bool {
        self.stationarity <= o.tol_stat
            && self.feasibility <= o.tol_feas
            && self.complementarity <= o.tol_comp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: Status,
    pub x: Vec<f64>,
    pub objective: f64,
    pub multipliers: Multipliers,
    pub kkt: KktResiduals,
    pub iterations: usize,
    pub mu_final: f64,
    pub mu_reductions: usize,
    pub restorations: usize,
    pub inertia_corrections: usize,
}

/// Violation of equalities, inequality bounds and variable bounds.
pub fn constraint_violation<P: Nlp + ?Sized>(p: &P, x: &[f64]) -> f64 {
    let c = p.constraints(x);
    let me = p.n_eq();
    let (dl, du) = p.ineq_bounds();
    let (xl, xu) = p.var_bounds();
    let mut v = c[..me].iter().map(|v| v.abs()).fold(0.0, f64::max);
    for (i, d) in c[me..].iter().enumerate() {
        v = v.max(dl[i] - d).max(d - du[i]);
    }
    for (i, xi) in x.iter().enumerate() {
        v = v.max(xl[i] - xi).max(xi - xu[i]);
    }
    v
}

/// Stationarity, primal feasibility and complementarity of `(x, mult)`.
pub fn kkt_residuals<P: Nlp + ?Sized>(p: &P, x: &[f64], mult: &Multipliers) -> KktResiduals {
    let n = p.n_vars();
    let me = p.n_eq();
    let mi = p.n_ineq();
    assert_eq!(x.len(), n);
    assert_eq!(mult.eq.len(), me);
    assert_eq!(mult.ineq_lower.len(), mi);
    assert_eq!(mult.ineq_upper.len(), mi);
    assert_eq!(mult.z_lower.len(), n);
    assert_eq!(mult.z_upper.len(), n);

    let mut grad = p.gradient(x);
    for (r, c, v) in p.jacobian(x) {
        let l = if r < me {
            mult.eq[r]
        } else {
            mult.ineq_upper[r - me] - mult.ineq_lower[r - me]
        };
        grad[c] += l * v;
    }
    for j in 0..n {
        grad[j] += mult.z_upper[j] - mult.z_lower[j];
    }
    let stationarity = grad.iter().map(|v| v.abs()).fold(0.0, f64::max);

    let c = p.constraints(x);
    let (dl, du) = p.ineq_bounds();
    let (xl, xu) = p.var_bounds();
    let feasibility = constraint_violation(p, x);
    let mut comp: f64 = 0.0;
    let gap = |a: f64, b: f64, m: f64| {
        if a.is_finite() && b.is_finite() {
            ((b - a) * m).abs()
        } else {
            0.0
        }
    };
    for i in 0..mi {
        comp = comp.max(gap(dl[i], c[me + i], mult.ineq_lower[i]));
        comp = comp.max(gap(c[me + i], du[i], mult.ineq_upper[i]));
    }
    for j in 0..n {
        comp = comp.max(gap(xl[j], x[j], mult.z_lower[j]));
        comp = comp.max(gap(x[j], xu[j], mult.z_upper[j]));
    }
    // multipliers of absent bounds must vanish
    let mut stray: f64 = 0.0;
    for i in 0..mi {
        if !dl[i].is_finite() {
            stray = stray.max(mult.ineq_lower[i].abs());
        }
        if !du[i].is_finite() {
            stray = stray.max(mult.ineq_upper[i].abs());
        }
    }
    for j in 0..n {
        if !xl[j].is_finite() {
            stray = stray.max(mult.z_lower[j].abs());
        }
        if !xu[j].is_finite() {
            stray = stray.max(mult.z_upper[j].abs());
        }
    }
    // negative multipliers violate dual feasibility
    let negative = mult
        .ineq_lower
        .iter()
        .chain(&mult.ineq_upper)
        .chain(&mult.z_lower)
        .chain(&mult.z_upper)
        .map(|v| (-v).max(0.0))
        .fold(0.0, f64::max);
    KktResiduals {
        stationarity: stationarity.max(stray).max(negative),
        feasibility,
        complementarity: comp,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min (x - 3)^2 on [0, 10]
    struct Bounded;

    impl Nlp for Bounded {
        fn n_vars(&self) -> usize {
            1
        }
        fn n_eq(&self) -> usize {
            0
        }
        fn n_ineq(&self) -> usize {
            0
        }
        fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![0.0], vec![10.0])
        }
        fn ineq_bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![], vec![])
        }
        fn objective(&self, x: &[f64]) -> f64 {
            (x[0] - 3.0).powi(2)
        }
        fn gradient(&self, x: &[f64]) -> Vec<f64> {
            vec![2.0 * (x[0] - 3.0)]
        }
        fn constraints(&self, _: &[f64]) -> Vec<f64> {
            vec![]
        }
        fn jacobian(&self, _: &[f64]) -> Vec<(usize, usize, f64)> {
            vec![]
        }
        fn hessian(&self, _: &[f64], o: f64, _: &[f64]) -> Vec<(usize, usize, f64)> {
            vec![(0, 0, 2.0 * o)]
        }
    }

    /// min x^2 + y^2 s.t. x + y = 1
    struct EqQuad;

    impl Nlp for EqQuad {
        fn n_vars(&self) -> usize {
            2
        }
        fn n_eq(&self) -> usize {
            1
        }
        fn n_ineq(&self) -> usize {
            0
        }
        fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![f64::NEG_INFINITY; 2], vec![f64::INFINITY; 2])
        }
        fn ineq_bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![], vec![])
        }
        fn objective(&self, x: &[f64]) -> f64 {
            x[0] * x[0] + x[1] * x[1]
        }
        fn gradient(&self, x: &[f64]) -> Vec<f64> {
            vec![2.0 * x[0], 2.0 * x[1]]
        }
        fn constraints(&self, x: &[f64]) -> Vec<f64> {
            vec![x[0] + x[1] - 1.0]
        }
        fn jacobian(&self, _: &[f64]) -> Vec<(usize, usize, f64)> {
            vec![(0, 0, 1.0), (0, 1, 1.0)]
        }
        fn hessian(&self, _: &[f64], o: f64, _: &[f64]) -> Vec<(usize, usize, f64)> {
            vec![(0, 0, 2.0 * o), (1, 1, 2.0 * o)]
        }
    }

    /// min -x - y s.t. x^2 + y^2 <= 2, x, y >= 0; optimum (1, 1)
    struct Disk;

    impl Nlp for Disk {
        fn n_vars(&self) -> usize {
            2
        }
        fn n_eq(&self) -> usize {
            0
        }
        fn n_ineq(&self) -> usize {
            1
        }
        fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![0.0; 2], vec![f64::INFINITY; 2])
        }
        fn ineq_bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![f64::NEG_INFINITY], vec![2.0])
        }
        fn objective(&self, x: &[f64]) -> f64 {
            -x[0] - x[1]
        }
        fn gradient(&self, _: &[f64]) -> Vec<f64> {
            vec![-1.0, -1.0]
        }
        fn constraints(&self, x: &[f64]) -> Vec<f64> {
            vec![x[0] * x[0] + x[1] * x[1]]
        }
        fn jacobian(&self, x: &[f64]) -> Vec<(usize, usize, f64)> {
            vec![(0, 0, 2.0 * x[0]), (0, 1, 2.0 * x[1])]
        }
        fn hessian(&self, _: &[f64], _: f64, l: &[f64]) -> Vec<(usize, usize, f64)> {
            vec![(0, 0, 2.0 * l[0]), (1, 1, 2.0 * l[0])]
        }
    }

    /// x^2 = -1 has no solution
    struct Impossible;

    impl Nlp for Impossible {
        fn n_vars(&self) -> usize {
            1
        }
        fn n_eq(&self) -> usize {
            1
        }
        fn n_ineq(&self) -> usize {
            0
        }
        fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![-5.0], vec![5.0])
        }
        fn ineq_bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![], vec![])
        }
        fn objective(&self, x: &[f64]) -> f64 {
            x[0]
        }
        fn gradient(&self, _: &[f64]) -> Vec<f64> {
            vec![1.0]
        }
        fn constraints(&self, x: &[f64]) -> Vec<f64> {
            vec![x[0] * x[0] + 1.0]
        }
        fn jacobian(&self, x: &[f64]) -> Vec<(usize, usize, f64)> {
            vec![(0, 0, 2.0 * x[0])]
        }
        fn hessian(&self, _: &[f64], _: f64, l: &[f64]) -> Vec<(usize, usize, f64)> {
            vec![(0, 0, 2.0 * l[0])]
        }
    }

    #[test]
    fn bounded_quadratic() {
        let r = solve(&Bounded, &[5.0], &SolverOptions::default());
        assert_eq!(r.status, Status::Optimal);
        assert!((r.x[0] - 3.0).abs() < 1e-8, "{}", r.x[0]);
    }

    #[test]
    fn equality_quadratic() {
        let r = solve(&EqQuad, &[3.0, -1.0], &SolverOptions::default());
        assert_eq!(r.status, Status::Optimal);
        assert!((r.x[0] - 0.5).abs() < 1e-8 && (r.x[1] - 0.5).abs() < 1e-8);
        assert!((r.multipliers.eq[0] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn active_nonlinear_inequality() {
        let r = solve(&Disk, &[0.2, 0.3], &SolverOptions::default());
        assert_eq!(r.status, Status::Optimal);
        assert!((r.x[0] - 1.0).abs() < 1e-7 && (r.x[1] - 1.0).abs() < 1e-7, "{:?}", r.x);
        assert!((r.multipliers.ineq_upper[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn infeasible_problem_is_reported() {
        let r = solve(&Impossible, &[1.0], &SolverOptions::default());
        assert_eq!(r.status, Status::Infeasible);
        assert!(r.x[0].abs() < 1e-3, "closest point {:?}", r.x);
    }

    #[test]
    fn residuals_are_self_consistent() {
        let r = solve(&Disk, &[0.2, 0.3], &SolverOptions::default());
        let k = kkt_residuals(&Disk, &r.x, &r.multipliers);
        assert!(k.stationarity <= r.kkt.stationarity);
        assert!(k.feasibility <= r.kkt.feasibility);
        assert!(k.complementarity <= r.kkt.complementarity);
    }

    #[test]
    fn random_interior_point_is_not_stationary() {
        let m = Multipliers {
            eq: vec![0.3],
            z_lower: vec![0.0; 2],
            z_upper: vec![0.0; 2],
            ..Default::default()
        };
        let k = kkt_residuals(&EqQuad, &[0.1, 0.7], &m);
        assert!(k.stationarity > 0.0);
    }

    #[test]
    fn stationarity_grows_away_from_optimum() {
        let r = solve(&EqQuad, &[3.0, -1.0], &SolverOptions::default());
        // move along the constraint, the free direction
        let mut last = kkt_residuals(&EqQuad, &r.x, &r.multipliers).stationarity;
        for step in [1e-4, 3e-4, 1e-3] {
            let x = [r.x[0] + step, r.x[1] - step];
            let s = kkt_residuals(&EqQuad, &x, &r.multipliers).stationarity;
            assert!(s > last);
            last = s;
        }
    }

    #[test]
    fn deterministic_iterates() {
        let a = solve(&Disk, &[0.2, 0.3], &SolverOptions::default());
        let b = solve(&Disk, &[0.2, 0.3], &SolverOptions::default());
        assert_eq!(a, b);
    }
}
