//! Single-case optimization: start-point power flow, NLP assembly and solve.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::netmodel::{PuCase, PuNetwork};
use crate::nlp::{build_nlp, derive_bounds, DerivedBounds, HessianMode, OperatingPoint};
use crate::objectives::{eval_f, ObjectiveSpec};
use crate::powerflow::{evaluate_state, solve_pf, PfOptions, PfSolution};
use crate::solver::{solve, KktResiduals, SolverOptions, Status};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub solver: SolverOptions,
    pub hessian: HessianMode,
    pub powerflow: PfOptions,
}

/// A network prepared for optimization, with its derived bounds and
/// objective bases.
#[derive(Debug, Clone)]
pub struct Study {
    pub net: PuNetwork,
    pub bounds: DerivedBounds,
}

impl Study {
    pub fn new(net: PuNetwork) -> Result<Self> {
        let bounds = derive_bounds(&net)?;
        Ok(Study { net, bounds })
    }

    pub fn f_values(&self, specs: &[ObjectiveSpec], state: &PfSolution) -> Result<Vec<f64>> {
        specs
            .iter()
            .map(|s| eval_f(s, &self.net, &self.bounds, state))
            .collect()
    }

    /// Limit violations of a state, one message per violated limit.
    pub fn violations(&self, state: &PfSolution, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        for (k, b) in self.net.buses.iter().enumerate() {
            if state.vm[k] < b.vmin - tol || state.vm[k] > b.vmax + tol {
                out.push(format!("bus {}: voltage {:.5} outside [{}, {}]", b.id, state.vm[k], b.vmin, b.vmax));
            }
        }
        for (g, gen) in self.net.gens.iter().enumerate() {
            if state.q_g[g] < gen.q_min - tol || state.q_g[g] > gen.q_max + tol {
                out.push(format!("generator {}: reactive power {:.5} outside limits", gen.id, state.q_g[g]));
            }
        }
        for (e, ext) in self.net.ext_grids.iter().enumerate() {
            let s = state.s_e[e];
            let m = self.bounds.s_max_e[e];
            if s.re.abs() > m + tol || s.im.abs() > m + tol {
                out.push(format!("external grid {}: power {:.5} exceeds {:.5}", ext.id, s, m));
            }
        }
        for (b, flow) in state.branches.iter().enumerate() {
            let cap = self.bounds.i_con_max[b];
            if flow.i_serial.norm() > cap + tol {
                out.push(format!("branch {}: current {:.5} exceeds {:.5}", flow.id, flow.i_serial.norm(), cap));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseSolution {
    pub status: Status,
    pub op: OperatingPoint,
    pub objective: f64,
    pub kkt: KktResiduals,
    pub iterations: usize,
    pub x: Vec<f64>,
    #[serde(skip)]
    pub state: PfSolution,
}

/// Operator setpoints before optimization: no reactive power and neutral or
/// pinned taps.
pub fn initial_point(net: &PuNetwork, fixed_taps: &[Option<i32>]) -> OperatingPoint {
    let mut op = OperatingPoint::initial(net);
    for (g, gen) in net.gens.iter().enumerate() {
        op.q_g[g] = 0.0f64.clamp(gen.q_min, gen.q_max);
    }
    for (t, f) in fixed_taps.iter().enumerate() {
        if let Some(p) = f {
            op.psi[t] = *p as f64;
        }
    }
    op
}

/// Power flow at `op`; if it fails, the flat-start state is returned so the
/// solver can restore feasibility itself.
pub fn start_state(net: &PuNetwork, case: &PuCase, op: &OperatingPoint, pf: &PfOptions) -> Result<PfSolution> {
    match solve_pf(net, case, op, pf) {
        Ok(s) => Ok(s),
        Err(e) => {
            warn!("start power flow failed ({e}); using a flat start");
            let ang = case.u_e.first().map(|u| u.arg()).unwrap_or(0.0);
            evaluate_state(net, case, op, vec![1.0; net.n_bus()], vec![ang; net.n_bus()])
        }
    }
}

/// Optimizes one case for the weighted objectives with some taps pinned.
pub fn solve_case(
    study: &Study,
    case: &PuCase,
    weights: &[(ObjectiveSpec, f64)],
    fixed_taps: &[Option<i32>],
    cfg: &OptimizeConfig,
) -> Result<CaseSolution> {
    let net = &study.net;
    let problem = build_nlp(net, &study.bounds, case, weights, fixed_taps, cfg.hessian)?;
    let pf = start_state(net, case, &initial_point(net, fixed_taps), &cfg.powerflow)?;
    let x0 = problem.start_point(&pf);
    let report = solve(&problem, &x0, &cfg.solver);
    let state = problem.state(net, case, &report.x)?;
    Ok(CaseSolution {
        status: report.status,
        op: problem.operating_point(&report.x),
        objective: report.objective,
        kkt: report.kkt,
        iterations: report.iterations,
        x: report.x,
        state,
    })
}

/// The operating point before optimization, evaluated by power flow.
#[derive(Debug, Clone)]
pub struct InitialEval {
    pub state: PfSolution,
    /// Limit violations; the initial point is evaluated even when infeasible.
    pub violations: Vec<String>,
}

pub fn evaluate_initial(study: &Study, case: &PuCase, pf: &PfOptions) -> Result<InitialEval> {
    let fixed = vec![None; study.net.trafos.len()];
    let state = solve_pf(&study.net, case, &initial_point(&study.net, &fixed), pf)?;
    let violations = study.violations(&state, 1e-6);
    Ok(InitialEval { state, violations })
}
