//! Nonlinear-program formulation of the reactive power flow problem.

mod bounds;
mod orpf;

use serde::{Deserialize, Serialize};

use crate::netmodel::PuNetwork;

pub use bounds::{derive_bounds, derive_serial_current_bound, derive_smax_e, DerivedBounds};
pub use orpf::{build_nlp, Layout, OrpfProblem};

/// A smooth NLP in the form
///
/// ```text
/// min f(x)  s.t.  c(x) = 0,  d_l <= d(x) <= d_u,  x_l <= x <= x_u
/// ```
///
/// Infinite bounds mark free directions. Sparse derivatives are returned as
/// `(row, col, value)` triplets; duplicates are summed by the consumer.
pub trait Nlp {
    fn n_vars(&self) -> usize;
    fn n_eq(&self) -> usize;
    fn n_ineq(&self) -> usize;
    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn ineq_bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn objective(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    /// Equality residuals followed by inequality bodies.
    fn constraints(&self, x: &[f64]) -> Vec<f64>;
    /// Jacobian of [`Nlp::constraints`].
    fn jacobian(&self, x: &[f64]) -> Vec<(usize, usize, f64)>;
    /// Lower triangle of `obj_factor * H_f + sum_i lambda_i H_i`.
    fn hessian(&self, x: &[f64], obj_factor: f64, lambda: &[f64]) -> Vec<(usize, usize, f64)>;
}

/// Second-derivative model used by [`OrpfProblem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HessianMode {
    /// Exact Hessian of the Lagrangian.
    #[default]
    Exact,
    /// Objective curvature only; constraint curvature is dropped.
    GaussNewton,
}

/// Decision variables of the operator: generator reactive power (pu) and
/// transformer tap positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub q_g: Vec<f64>,
    pub psi: Vec<f64>,
}

impl OperatingPoint {
    /// No reactive power and neutral taps.
    pub fn initial(net: &PuNetwork) -> Self {
        OperatingPoint {
            q_g: vec![0.0; net.gens.len()],
            psi: net.neutral_taps(),
        }
    }

    pub fn taps_integral(&self) -> bool {
        self.psi.iter().all(|p| p.fract() == 0.0)
    }
}
