//! Newton-Raphson AC power flow in polar coordinates.
//!
//! External-grid buses hold their case voltage and absorb whatever complex
//! power balances the network. All other buses are PQ buses with generator
//! reactive power taken from the operating point.

use log::debug;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::admittance::{branches, ybus_from_branches, BranchKind, PiBranch};
use crate::error::{Error, Result};
use crate::netmodel::{PuCase, PuNetwork};
use crate::nlp::OperatingPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PfOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions {
            tol: 1e-8,
            max_iter: 30,
        }
    }
}

/// Currents and powers of one branch. Terminal quantities leave the bus
/// into the branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchFlow {
    pub id: String,
    pub kind: BranchKind,
    pub from: usize,
    pub to: usize,
    /// Series current from the `from` side towards the transformed `to` side.
    pub i_serial: Complex64,
    pub i_par_from: Complex64,
    /// Shunt current on the transformed side of the ideal transformer.
    pub i_par_to: Complex64,
    pub i_from: Complex64,
    pub i_to: Complex64,
    pub s_from: Complex64,
    pub s_to: Complex64,
}

impl BranchFlow {
    /// Larger of the two terminal apparent powers.
    pub fn apparent_power(&self) -> f64 {
        self.s_from.norm().max(self.s_to.norm())
    }

    pub fn losses(&self) -> Complex64 {
        self.s_from + self.s_to
    }
}

pub fn branch_currents(br: &PiBranch, u_from: Complex64, u_to: Complex64) -> BranchFlow {
    let u_to_t = u_to / br.ratio;
    let half = br.y_p / 2.0;
    let i_serial = br.y_s * (u_from - u_to_t);
    let i_par_from = half * u_from;
    let i_par_to = half * u_to_t;
    let i_from = i_serial + i_par_from;
    let i_to = (i_par_to - i_serial) / br.ratio.conj();
    BranchFlow {
        id: br.id.clone(),
        kind: br.kind,
        from: br.from,
        to: br.to,
        i_serial,
        i_par_from,
        i_par_to,
        i_from,
        i_to,
        s_from: u_from * i_from.conj(),
        s_to: u_to * i_to.conj(),
    }
}

/// Solved (or evaluated) network state for one case and operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfSolution {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    pub q_g: Vec<f64>,
    pub psi: Vec<f64>,
    /// Complex power each external grid injects into its bus.
    pub s_e: Vec<Complex64>,
    /// Lines first, then transformers, in network order.
    pub branches: Vec<BranchFlow>,
    pub iterations: usize,
    pub mismatch: f64,
}

impl PfSolution {
    pub fn voltages(&self) -> Vec<Complex64> {
        self.vm
            .iter()
            .zip(&self.va)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect()
    }

    pub fn slack(&self) -> Complex64 {
        self.s_e.iter().sum()
    }

    pub fn losses(&self) -> Complex64 {
        self.branches.iter().map(BranchFlow::losses).sum()
    }
}

/// Net scheduled injection per bus, without external grids.
pub fn scheduled_injections(net: &PuNetwork, case: &PuCase, q_g: &[f64]) -> Vec<Complex64> {
    let mut s = vec![Complex64::new(0.0, 0.0); net.n_bus()];
    for (g, gen) in net.gens.iter().enumerate() {
        s[gen.bus] += Complex64::new(case.p_g[g], q_g[g]);
    }
    for (m, load) in net.loads.iter().enumerate() {
        s[load.bus] -= Complex64::new(case.p_m[m], case.q_m[m]);
    }
    s
}

/// Branch flows and external-grid powers at given bus voltages. The voltage
/// of every external-grid bus is taken as given, not from the case.
pub fn evaluate_state(
    net: &PuNetwork,
    case: &PuCase,
    op: &OperatingPoint,
    vm: Vec<f64>,
    va: Vec<f64>,
) -> Result<PfSolution> {
    let brs = branches(net, &op.psi)?;
    let u: Vec<Complex64> = vm
        .iter()
        .zip(&va)
        .map(|(&m, &a)| Complex64::from_polar(m, a))
        .collect();
    let flows: Vec<BranchFlow> = brs
        .iter()
        .map(|b| branch_currents(b, u[b.from], u[b.to]))
        .collect();
    let mut out_flow = vec![Complex64::new(0.0, 0.0); net.n_bus()];
    for f in &flows {
        out_flow[f.from] += f.s_from;
        out_flow[f.to] += f.s_to;
    }
    let sched = scheduled_injections(net, case, &op.q_g);
    let s_e = net
        .ext_grids
        .iter()
        .map(|e| out_flow[e.bus] - sched[e.bus])
        .collect();
    let ext = net.ext_of_bus();
    let mismatch = (0..net.n_bus())
        .filter(|&k| ext[k].is_none())
        .map(|k| (out_flow[k] - sched[k]).norm())
        .fold(0.0, f64::max);
    Ok(PfSolution {
        vm,
        va,
        q_g: op.q_g.clone(),
        psi: op.psi.clone(),
        s_e,
        branches: flows,
        iterations: 0,
        mismatch,
    })
}

/// Solves the power flow from a flat start.
pub fn solve_pf(
    net: &PuNetwork,
    case: &PuCase,
    op: &OperatingPoint,
    opts: &PfOptions,
) -> Result<PfSolution> {
    let n = net.n_bus();
    let ref_angle = case.u_e.first().map(|u| u.arg()).unwrap_or(0.0);
    let vm = vec![1.0; n];
    let va = vec![ref_angle; n];
    solve_pf_from(net, case, op, opts, vm, va)
}

/// Solves the power flow starting from the given voltages; external-grid
/// buses are reset to their case voltage.
pub fn solve_pf_from(
    net: &PuNetwork,
    case: &PuCase,
    op: &OperatingPoint,
    opts: &PfOptions,
    mut vm: Vec<f64>,
    mut va: Vec<f64>,
) -> Result<PfSolution> {
    let n = net.n_bus();
    let ext = net.ext_of_bus();
    for (e, ge) in net.ext_grids.iter().enumerate() {
        vm[ge.bus] = case.u_e[e].norm();
        va[ge.bus] = case.u_e[e].arg();
    }
    let y = ybus_from_branches(n, &branches(net, &op.psi)?);
    let sched = scheduled_injections(net, case, &op.q_g);
    let pq: Vec<usize> = (0..n).filter(|&k| ext[k].is_none()).collect();
    let m = pq.len();

    let mut iterations = 0;
    loop {
        let u: Vec<Complex64> = (0..n).map(|k| Complex64::from_polar(vm[k], va[k])).collect();
        let cur = y.mul(&u);
        let mut f = DVector::zeros(2 * m);
        for (r, &k) in pq.iter().enumerate() {
            let mis = u[k] * cur[k].conj() - sched[k];
            f[r] = mis.re;
            f[m + r] = mis.im;
        }
        let mismatch = f.amax();
        debug!("power flow iteration {iterations}: mismatch {mismatch:e}");
        if mismatch < opts.tol {
            let mut sol = evaluate_state(net, case, op, vm, va)?;
            sol.iterations = iterations;
            return Ok(sol);
        }
        if iterations >= opts.max_iter || !mismatch.is_finite() {
            return Err(Error::PowerFlowDiverged {
                iterations,
                mismatch,
            });
        }

        let j = Complex64::new(0.0, 1.0);
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        for (r, &k) in pq.iter().enumerate() {
            for (c, &i) in pq.iter().enumerate() {
                let yu = y.get(k, i) * u[i];
                let (ds_dth, ds_dv) = if i == k {
                    (
                        j * u[k] * cur[k].conj() - j * u[k] * yu.conj(),
                        u[k] / vm[k] * cur[k].conj() + u[k] * (yu / vm[k]).conj(),
                    )
                } else {
                    (-j * u[k] * yu.conj(), u[k] * (yu / vm[i]).conj())
                };
                jac[(r, c)] = ds_dth.re;
                jac[(r, m + c)] = ds_dv.re;
                jac[(m + r, c)] = ds_dth.im;
                jac[(m + r, m + c)] = ds_dv.im;
            }
        }
        let dx = jac
            .lu()
            .solve(&(-f))
            .ok_or_else(|| Error::Singular("power flow Jacobian".into()))?;
        for (r, &k) in pq.iter().enumerate() {
            va[k] += dx[r];
            vm[k] += dx[m + r];
        }
        iterations += 1;
    }
}
