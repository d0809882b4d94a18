use std::fmt::Write as _;

use num_complex::Complex64;

use super::{DerivedBounds, HessianMode, Nlp, OperatingPoint};
use crate::ad::Jet;
use crate::admittance::{build_pibranch, BranchElement};
use crate::error::{Error, Result};
use crate::netmodel::{PuCase, PuNetwork, TapChanger};
use crate::objectives::{terms, Kind, ObjectiveSpec, Operation, Source};
use crate::powerflow::{evaluate_state, PfSolution};

type J = Jet<5>;

const VK: usize = 0;
const TK: usize = 1;
const VI: usize = 2;
const TI: usize = 3;
const PSI: usize = 4;

/// Positions of the variable groups in the NLP vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    /// `None` for external-grid buses, whose voltage is fixed.
    pub vm: Vec<Option<usize>>,
    pub va: Vec<Option<usize>>,
    pub q_g: Vec<usize>,
    /// `None` for fixed taps.
    pub psi: Vec<Option<usize>>,
    pub p_e: Vec<usize>,
    pub q_e: Vec<usize>,
    /// One epigraph variable per max-type objective.
    pub aux: Vec<usize>,
    pub n: usize,
}

#[derive(Debug, Clone)]
struct BranchModel {
    from: usize,
    to: usize,
    y_s: Complex64,
    y_p: Complex64,
    nominal: f64,
    tap: Option<TapChanger>,
    slots: [Option<usize>; 5],
    fixed: [f64; 5],
}

impl BranchModel {
    /// Terminal powers leaving both ends and the squared serial current.
    fn eval(&self, x: &[f64]) -> [J; 5] {
        let var = |s: usize| match self.slots[s] {
            Some(i) => J::var(x[i], s),
            None => J::constant(self.fixed[s]),
        };
        let (vk, tk, vi, ti) = (var(VK), var(TK), var(VI), var(TI));
        let (a, phi) = match &self.tap {
            None => (J::constant(1.0), J::constant(0.0)),
            Some(t) => {
                let step = var(PSI) + (-(t.neutral as f64));
                ((step * t.dn + 1.0) * self.nominal, step * t.dphi + t.phi_n)
            }
        };
        let (g, b) = (self.y_s.re, self.y_s.im);
        let (gp, bp) = (self.y_p.re / 2.0, self.y_p.im / 2.0);
        let delta = tk - ti + phi;
        let (cd, sd) = (delta.cos(), delta.sin());
        let inv_a = a.recip();
        let vkvi_a = vk * vi * inv_a;
        let vk2 = vk.sqr();
        let vi2_a2 = (vi * inv_a).sqr();
        let p_from = vk2 * (g + gp) - vkvi_a * (cd * g + sd * b);
        let q_from = vk2 * (-(b + bp)) - vkvi_a * (sd * g - cd * b);
        let p_to = vi2_a2 * (g + gp) - vkvi_a * (cd * g - sd * b);
        let q_to = vi2_a2 * (-(b + bp)) + vkvi_a * (sd * g + cd * b);
        let i2 = (vk2 + vi2_a2 - vkvi_a * cd * 2.0) * self.y_s.norm_sqr();
        [p_from, q_from, p_to, q_to, i2]
    }
}

/// A squared normalized deviation.
#[derive(Debug, Clone)]
enum TermModel {
    /// `(sum c_j x_j + k)^2`
    Affine { coeffs: Vec<(usize, f64)>, constant: f64 },
    /// `scale * I_S^2` of a branch
    BranchSq { branch: usize, scale: f64 },
}

#[derive(Debug, Clone)]
struct ObjBlock {
    weight: f64,
    terms: Vec<TermModel>,
    aux: Option<usize>,
    first_row: usize,
}

/// The reactive power flow NLP of one study case.
///
/// Variables: voltage magnitude and angle of every non-external bus,
/// generator reactive power, free transformer taps, external-grid active and
/// reactive power, and epigraph auxiliaries. Equalities: active and
/// reactive balance at every bus. Inequalities: squared serial current per
/// branch, then epigraph rows `t - term >= 0`. The objective is the squared
/// weighted aggregate `sum_o w_o f_o^2` with weights summing to one.
#[derive(Debug, Clone)]
pub struct OrpfProblem {
    pub layout: Layout,
    pub mode: HessianMode,
    n_bus: usize,
    branches: Vec<BranchModel>,
    i_con_max: Vec<f64>,
    const_p: Vec<f64>,
    const_q: Vec<f64>,
    gen_q: Vec<(usize, usize)>,
    ext: Vec<(usize, usize, usize)>,
    blocks: Vec<ObjBlock>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    names: Vec<String>,
    fixed_psi: Vec<Option<f64>>,
    ext_voltage: Vec<Option<Complex64>>,
}

/// Builds the NLP. `weights` pairs objectives with positive weights;
/// `fixed_taps[t]` pins transformer `t` to an integer position.
pub fn build_nlp(
    net: &PuNetwork,
    bounds: &DerivedBounds,
    case: &PuCase,
    weights: &[(ObjectiveSpec, f64)],
    fixed_taps: &[Option<i32>],
    mode: HessianMode,
) -> Result<OrpfProblem> {
    assert_eq!(fixed_taps.len(), net.trafos.len(), "one entry per transformer");
    if weights.is_empty() {
        return Err(Error::Weights("no objective selected".into()));
    }
    for (t, (tr, fixed)) in net.trafos.iter().zip(fixed_taps).enumerate() {
        if let Some(p) = *fixed {
            if p < tr.tap.min || p > tr.tap.max {
                return Err(Error::FixedTapOutOfRange {
                    id: net.trafos[t].id.clone(),
                    psi: p,
                    min: tr.tap.min,
                    max: tr.tap.max,
                });
            }
        }
    }

    let n_bus = net.n_bus();
    let ext_of_bus = net.ext_of_bus();
    let ext_voltage: Vec<Option<Complex64>> = ext_of_bus
        .iter()
        .map(|e| e.map(|e| case.u_e[e]))
        .collect();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut names = Vec::new();
    let mut push = |name: String, lo: f64, hi: f64| {
        names.push(name);
        lower.push(lo);
        upper.push(hi);
        lower.len() - 1
    };

    let mut vm = vec![None; n_bus];
    let mut va = vec![None; n_bus];
    for (k, b) in net.buses.iter().enumerate() {
        if ext_of_bus[k].is_none() {
            vm[k] = Some(push(format!("V[{}]", b.id), b.vmin, b.vmax));
            va[k] = Some(push(format!("theta[{}]", b.id), f64::NEG_INFINITY, f64::INFINITY));
        }
    }
    let q_g: Vec<usize> = net
        .gens
        .iter()
        .map(|g| push(format!("Q[{}]", g.id), g.q_min, g.q_max))
        .collect();
    let psi: Vec<Option<usize>> = net
        .trafos
        .iter()
        .zip(fixed_taps)
        .map(|(t, f)| match f {
            Some(_) => None,
            None => Some(push(format!("psi[{}]", t.id), t.tap.min as f64, t.tap.max as f64)),
        })
        .collect();
    let mut p_e = Vec::new();
    let mut q_e = Vec::new();
    for (e, g) in net.ext_grids.iter().enumerate() {
        let s = bounds.s_max_e[e];
        p_e.push(push(format!("P[{}]", g.id), -s, s));
        q_e.push(push(format!("Q[{}]", g.id), -s, s));
    }
    let mut aux = Vec::new();
    let mut aux_of = Vec::new();
    for (spec, _) in weights {
        if spec.op == Operation::Max {
            let i = push(format!("t[{spec}]"), 0.0, f64::INFINITY);
            aux.push(i);
            aux_of.push(Some(i));
        } else {
            aux_of.push(None);
        }
    }
    let n = lower.len();

    let fixed_psi: Vec<Option<f64>> = fixed_taps.iter().map(|f| f.map(|p| p as f64)).collect();
    let voltage_slot = |k: usize| -> (Option<usize>, Option<usize>, f64, f64) {
        match ext_voltage[k] {
            Some(u) => (None, None, u.norm(), u.arg()),
            None => (vm[k], va[k], 1.0, 0.0),
        }
    };
    let mut branches = Vec::with_capacity(net.lines.len() + net.trafos.len());
    for l in &net.lines {
        let br = build_pibranch(BranchElement::Line(l), 0.0)?;
        let (sv, sa, fv, fa) = voltage_slot(l.from);
        let (tv, ta, gv, ga) = voltage_slot(l.to);
        branches.push(BranchModel {
            from: l.from,
            to: l.to,
            y_s: br.y_s,
            y_p: br.y_p,
            nominal: 1.0,
            tap: None,
            slots: [sv, sa, tv, ta, None],
            fixed: [fv, fa, gv, ga, 0.0],
        });
    }
    for (t, tr) in net.trafos.iter().enumerate() {
        let br = build_pibranch(BranchElement::Transformer(tr), tr.tap.neutral as f64)?;
        let (sv, sa, fv, fa) = voltage_slot(tr.lv);
        let (tv, ta, gv, ga) = voltage_slot(tr.hv);
        branches.push(BranchModel {
            from: tr.lv,
            to: tr.hv,
            y_s: br.y_s,
            y_p: br.y_p,
            nominal: tr.nominal_ratio(),
            tap: Some(tr.tap),
            slots: [sv, sa, tv, ta, psi[t]],
            fixed: [fv, fa, gv, ga, fixed_psi[t].unwrap_or(0.0)],
        });
    }

    let mut const_p = vec![0.0; n_bus];
    let mut const_q = vec![0.0; n_bus];
    for (g, gen) in net.gens.iter().enumerate() {
        const_p[gen.bus] -= case.p_g[g];
    }
    for (m, load) in net.loads.iter().enumerate() {
        const_p[load.bus] += case.p_m[m];
        const_q[load.bus] += case.q_m[m];
    }
    let gen_q = net.gens.iter().zip(&q_g).map(|(g, &v)| (g.bus, v)).collect();
    let ext = net
        .ext_grids
        .iter()
        .enumerate()
        .map(|(e, g)| (g.bus, p_e[e], q_e[e]))
        .collect();

    let n_branch = branches.len();
    let mut row = n_branch;
    let mut blocks = Vec::new();
    for ((spec, w), aux) in weights.iter().zip(aux_of) {
        if spec.kind == Kind::LineLoading && spec.reference != 0.0 {
            return Err(Error::Objective(format!(
                "{spec}: serial-current objectives need reference 0"
            )));
        }
        let mut models = Vec::new();
        for term in terms(spec, net, bounds)? {
            let inv = 1.0 / term.base;
            let b = spec.reference;
            let affine = |coeffs: Vec<(usize, f64)>, value: f64| TermModel::Affine {
                coeffs,
                constant: value - b,
            };
            models.push(match term.source {
                Source::BusVoltage(k) => match vm[k] {
                    Some(i) => affine(vec![(i, inv)], 0.0),
                    None => affine(vec![], ext_voltage[k].unwrap().norm() * inv),
                },
                Source::GeneratorQ(g) => affine(vec![(q_g[g], inv)], 0.0),
                Source::ExternalQ(e) => affine(vec![(q_e[e], inv)], 0.0),
                Source::SlackP => affine(p_e.iter().map(|&i| (i, inv)).collect(), 0.0),
                Source::LineCurrent(l) => TermModel::BranchSq {
                    branch: l,
                    scale: inv * inv,
                },
            });
        }
        let first_row = row;
        if aux.is_some() {
            row += models.len();
        }
        blocks.push(ObjBlock {
            weight: *w,
            terms: models,
            aux,
            first_row,
        });
    }

    Ok(OrpfProblem {
        layout: Layout {
            vm,
            va,
            q_g,
            psi,
            p_e,
            q_e,
            aux,
            n,
        },
        mode,
        n_bus,
        i_con_max: bounds.i_con_max.clone(),
        branches,
        const_p,
        const_q,
        gen_q,
        ext,
        blocks,
        lower,
        upper,
        names,
        fixed_psi,
        ext_voltage,
    })
}

fn lower_push(out: &mut Vec<(usize, usize, f64)>, i: usize, j: usize, v: f64) {
    if v != 0.0 {
        out.push(if i >= j { (i, j, v) } else { (j, i, v) });
    }
}

impl OrpfProblem {
    fn n_branch(&self) -> usize {
        self.branches.len()
    }

    fn term_value(&self, t: &TermModel, x: &[f64], flows: &[[J; 5]]) -> f64 {
        match t {
            TermModel::Affine { coeffs, constant } => {
                let a = coeffs.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + constant;
                a * a
            }
            TermModel::BranchSq { branch, scale } => scale * flows[*branch][4].v,
        }
    }

    /// Adds `k * grad(term)` into `g`.
    fn term_gradient(&self, t: &TermModel, x: &[f64], flows: &[[J; 5]], k: f64, g: &mut [f64]) {
        match t {
            TermModel::Affine { coeffs, constant } => {
                let a = coeffs.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + constant;
                for &(i, c) in coeffs {
                    g[i] += k * 2.0 * a * c;
                }
            }
            TermModel::BranchSq { branch, scale } => {
                let br = &self.branches[*branch];
                for (s, slot) in br.slots.iter().enumerate() {
                    if let Some(i) = slot {
                        g[*i] += k * scale * flows[*branch][4].g[s];
                    }
                }
            }
        }
    }

    fn term_hessian(&self, t: &TermModel, flows: &[[J; 5]], k: f64, out: &mut Vec<(usize, usize, f64)>) {
        match t {
            TermModel::Affine { coeffs, .. } => {
                for (a, &(i, ci)) in coeffs.iter().enumerate() {
                    for &(j, cj) in &coeffs[..=a] {
                        lower_push(out, i, j, k * 2.0 * ci * cj);
                    }
                }
            }
            TermModel::BranchSq { branch, scale } => {
                self.branch_hessian(*branch, 4, k * scale, flows, out);
            }
        }
    }

    fn branch_hessian(&self, b: usize, q: usize, k: f64, flows: &[[J; 5]], out: &mut Vec<(usize, usize, f64)>) {
        if k == 0.0 {
            return;
        }
        let br = &self.branches[b];
        for s in 0..5 {
            let Some(i) = br.slots[s] else { continue };
            for r in 0..=s {
                let Some(j) = br.slots[r] else { continue };
                lower_push(out, i, j, k * flows[b][q].h[s][r]);
            }
        }
    }

    fn flows(&self, x: &[f64]) -> Vec<[J; 5]> {
        self.branches.iter().map(|b| b.eval(x)).collect()
    }

    /// Variable names for listings.
    pub fn var_names(&self) -> &[String] {
        &self.names
    }

    pub fn operating_point(&self, x: &[f64]) -> OperatingPoint {
        OperatingPoint {
            q_g: self.layout.q_g.iter().map(|&i| x[i]).collect(),
            psi: self
                .layout
                .psi
                .iter()
                .zip(&self.fixed_psi)
                .map(|(v, f)| match v {
                    Some(i) => x[*i],
                    None => f.unwrap(),
                })
                .collect(),
        }
    }

    pub fn bus_voltages(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut vm = Vec::with_capacity(self.n_bus);
        let mut va = Vec::with_capacity(self.n_bus);
        for k in 0..self.n_bus {
            match self.ext_voltage[k] {
                Some(u) => {
                    vm.push(u.norm());
                    va.push(u.arg());
                }
                None => {
                    vm.push(x[self.layout.vm[k].unwrap()]);
                    va.push(x[self.layout.va[k].unwrap()]);
                }
            }
        }
        (vm, va)
    }

    /// Network state at an NLP point, with flows recomputed from voltages.
    pub fn state(&self, net: &PuNetwork, case: &PuCase, x: &[f64]) -> Result<PfSolution> {
        let (vm, va) = self.bus_voltages(x);
        evaluate_state(net, case, &self.operating_point(x), vm, va)
    }

    /// NLP point matching a power-flow state; epigraph variables sit just
    /// above their largest term.
    pub fn start_point(&self, pf: &PfSolution) -> Vec<f64> {
        let mut x = vec![0.0; self.layout.n];
        for k in 0..self.n_bus {
            if let (Some(i), Some(j)) = (self.layout.vm[k], self.layout.va[k]) {
                x[i] = pf.vm[k];
                x[j] = pf.va[k];
            }
        }
        for (g, &i) in self.layout.q_g.iter().enumerate() {
            x[i] = pf.q_g[g];
        }
        for (t, v) in self.layout.psi.iter().enumerate() {
            if let Some(i) = v {
                x[*i] = pf.psi[t];
            }
        }
        for (e, s) in pf.s_e.iter().enumerate() {
            x[self.layout.p_e[e]] = s.re;
            x[self.layout.q_e[e]] = s.im;
        }
        let flows = self.flows(&x);
        for b in &self.blocks {
            if let Some(a) = b.aux {
                let m = b
                    .terms
                    .iter()
                    .map(|t| self.term_value(t, &x, &flows))
                    .fold(0.0, f64::max);
                x[a] = m * 1.01 + 1e-4;
            }
        }
        x
    }

    /// Human-readable listing of variables, bounds and constraint values.
    pub fn dump(&self, x: &[f64]) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# variables: {}", self.layout.n);
        let _ = writeln!(s, "{:<24} {:>14} {:>14} {:>14}", "name", "lower", "value", "upper");
        for i in 0..self.layout.n {
            let _ = writeln!(
                s,
                "{:<24} {:>14.6e} {:>14.6e} {:>14.6e}",
                self.names[i], self.lower[i], x[i], self.upper[i]
            );
        }
        let c = self.constraints(x);
        let (dl, du) = self.ineq_bounds();
        let _ = writeln!(s, "# equality residuals: {}", self.n_eq());
        for k in 0..self.n_bus {
            let _ = writeln!(s, "P-balance[{k}] {:>14.6e}", c[2 * k]);
            let _ = writeln!(s, "Q-balance[{k}] {:>14.6e}", c[2 * k + 1]);
        }
        let _ = writeln!(s, "# inequalities: {}", self.n_ineq());
        for (r, v) in c[self.n_eq()..].iter().enumerate() {
            let label = if r < self.n_branch() {
                format!("I_S^2[{r}]")
            } else {
                format!("epigraph[{}]", r - self.n_branch())
            };
            let _ = writeln!(s, "{label:<24} {:>14.6e} {v:>14.6e} {:>14.6e}", dl[r], du[r]);
        }
        let _ = writeln!(s, "# objective {:.9e}", self.objective(x));
        s
    }
}

impl Nlp for OrpfProblem {
    fn n_vars(&self) -> usize {
        self.layout.n
    }

    fn n_eq(&self) -> usize {
        2 * self.n_bus
    }

    fn n_ineq(&self) -> usize {
        self.n_branch()
            + self
                .blocks
                .iter()
                .filter(|b| b.aux.is_some())
                .map(|b| b.terms.len())
                .sum::<usize>()
    }

    fn var_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lower.clone(), self.upper.clone())
    }

    fn ineq_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.n_ineq();
        let mut lo = vec![f64::NEG_INFINITY; m];
        let mut hi = vec![f64::INFINITY; m];
        for (b, icon) in self.i_con_max.iter().enumerate() {
            hi[b] = icon * icon;
        }
        for r in self.n_branch()..m {
            lo[r] = 0.0;
        }
        (lo, hi)
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let flows = self.flows(x);
        self.blocks
            .iter()
            .map(|b| {
                b.weight
                    * match b.aux {
                        Some(a) => x[a],
                        None => {
                            b.terms.iter().map(|t| self.term_value(t, x, &flows)).sum::<f64>()
                                / b.terms.len() as f64
                        }
                    }
            })
            .sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let flows = self.flows(x);
        let mut g = vec![0.0; self.layout.n];
        for b in &self.blocks {
            match b.aux {
                Some(a) => g[a] += b.weight,
                None => {
                    let k = b.weight / b.terms.len() as f64;
                    for t in &b.terms {
                        self.term_gradient(t, x, &flows, k, &mut g);
                    }
                }
            }
        }
        g
    }

    fn constraints(&self, x: &[f64]) -> Vec<f64> {
        let flows = self.flows(x);
        let mut c = vec![0.0; self.n_eq() + self.n_ineq()];
        for k in 0..self.n_bus {
            c[2 * k] = self.const_p[k];
            c[2 * k + 1] = self.const_q[k];
        }
        for &(bus, i) in &self.gen_q {
            c[2 * bus + 1] -= x[i];
        }
        for &(bus, p, q) in &self.ext {
            c[2 * bus] -= x[p];
            c[2 * bus + 1] -= x[q];
        }
        let me = self.n_eq();
        for (b, (br, f)) in self.branches.iter().zip(&flows).enumerate() {
            c[2 * br.from] += f[0].v;
            c[2 * br.from + 1] += f[1].v;
            c[2 * br.to] += f[2].v;
            c[2 * br.to + 1] += f[3].v;
            c[me + b] = f[4].v;
        }
        for b in &self.blocks {
            if let Some(a) = b.aux {
                for (r, t) in b.terms.iter().enumerate() {
                    c[me + b.first_row + r] = x[a] - self.term_value(t, x, &flows);
                }
            }
        }
        c
    }

    fn jacobian(&self, x: &[f64]) -> Vec<(usize, usize, f64)> {
        let flows = self.flows(x);
        let mut out = Vec::new();
        for &(bus, i) in &self.gen_q {
            out.push((2 * bus + 1, i, -1.0));
        }
        for &(bus, p, q) in &self.ext {
            out.push((2 * bus, p, -1.0));
            out.push((2 * bus + 1, q, -1.0));
        }
        let me = self.n_eq();
        for (b, (br, f)) in self.branches.iter().zip(&flows).enumerate() {
            let rows = [2 * br.from, 2 * br.from + 1, 2 * br.to, 2 * br.to + 1, me + b];
            for (q, &r) in rows.iter().enumerate() {
                for (s, slot) in br.slots.iter().enumerate() {
                    if let Some(i) = slot {
                        if f[q].g[s] != 0.0 {
                            out.push((r, *i, f[q].g[s]));
                        }
                    }
                }
            }
        }
        let mut g = vec![0.0; self.layout.n];
        for b in &self.blocks {
            if let Some(a) = b.aux {
                for (r, t) in b.terms.iter().enumerate() {
                    let row = me + b.first_row + r;
                    out.push((row, a, 1.0));
                    g.iter_mut().for_each(|v| *v = 0.0);
                    self.term_gradient(t, x, &flows, -1.0, &mut g);
                    out.extend(
                        g.iter()
                            .enumerate()
                            .filter(|(_, v)| **v != 0.0)
                            .map(|(i, v)| (row, i, *v)),
                    );
                }
            }
        }
        out
    }

    fn hessian(&self, x: &[f64], obj_factor: f64, lambda: &[f64]) -> Vec<(usize, usize, f64)> {
        let flows = self.flows(x);
        let mut out = Vec::new();
        let me = self.n_eq();
        for b in &self.blocks {
            match b.aux {
                None => {
                    let k = obj_factor * b.weight / b.terms.len() as f64;
                    for t in &b.terms {
                        self.term_hessian(t, &flows, k, &mut out);
                    }
                }
                Some(_) => {
                    // epigraph rows t - term carry the curvature of -term
                    for (r, t) in b.terms.iter().enumerate() {
                        let l = lambda[me + b.first_row + r];
                        self.term_hessian(t, &flows, -l, &mut out);
                    }
                }
            }
        }
        if self.mode == HessianMode::Exact {
            for (b, br) in self.branches.iter().enumerate() {
                let rows = [2 * br.from, 2 * br.from + 1, 2 * br.to, 2 * br.to + 1, me + b];
                for (q, &r) in rows.iter().enumerate() {
                    self.branch_hessian(b, q, lambda[r], &flows, &mut out);
                }
            }
        }
        out
    }
}
