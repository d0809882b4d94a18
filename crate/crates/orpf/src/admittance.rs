//! Directional Π-branches, the complex bus admittance matrix and network
//! reduction.
//!
//! A branch defined from bus `k` to bus `i` carries its series admittance
//! `y_s` and two half shunts `y_p / 2` on the `k` side; bus `i` is coupled
//! through an ideal transformer with ratio `n`, so the branch sees `U_i / n`.

use std::collections::BTreeMap;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{PuCase, PuLine, PuNetwork, PuTrafoImpedance, PuTransformer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchKind {
    Line,
    Transformer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiBranch {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub y_s: Complex64,
    /// Total shunt admittance; each end carries half of it.
    pub y_p: Complex64,
    pub ratio: Complex64,
    pub kind: BranchKind,
}

#[derive(Debug, Clone, Copy)]
pub enum BranchElement<'a> {
    Line(&'a PuLine),
    Transformer(&'a PuTransformer),
}

/// Series and total shunt admittance of a line, parallel systems included.
pub fn line_admittances(l: &PuLine) -> Result<(Complex64, Complex64)> {
    let z = Complex64::new(l.r, l.x);
    if z.norm() == 0.0 || !z.norm().is_finite() {
        return Err(Error::DegenerateImpedance { id: l.id.clone() });
    }
    let count = l.parallel_count as f64;
    Ok((count / z, Complex64::new(l.g, l.b) * count))
}

/// Series and total shunt admittance of a transformer on the lv bus base.
pub fn trafo_admittances(t: &PuTransformer) -> Result<(Complex64, Complex64)> {
    let count = t.parallel_count as f64;
    let (y_s, y_p) = match t.impedance {
        PuTrafoImpedance::Admittance { y_s, y_p } => (y_s, y_p),
        PuTrafoImpedance::ShortCircuit {
            vk_percent,
            vkr_percent,
            pfe,
            i0_percent,
        } => {
            let scale = t.ratio_lv * t.ratio_lv / t.sn;
            let z = vk_percent / 100.0 * scale;
            let r = vkr_percent / 100.0 * scale;
            let x = (z * z - r * r).max(0.0).sqrt();
            let zs = Complex64::new(r, x);
            if zs.norm() == 0.0 {
                return Err(Error::DegenerateImpedance { id: t.id.clone() });
            }
            let g_m = pfe / (t.ratio_lv * t.ratio_lv);
            let y_m = i0_percent / 100.0 * t.sn / (t.ratio_lv * t.ratio_lv);
            let b_m = -(y_m * y_m - g_m * g_m).max(0.0).sqrt();
            (1.0 / zs, Complex64::new(g_m, b_m))
        }
    };
    if y_s.norm() == 0.0 || !y_s.norm().is_finite() {
        return Err(Error::DegenerateImpedance { id: t.id.clone() });
    }
    Ok((y_s * count, y_p * count))
}

pub fn build_pibranch(element: BranchElement<'_>, psi: f64) -> Result<PiBranch> {
    match element {
        BranchElement::Line(l) => {
            let (y_s, y_p) = line_admittances(l)?;
            Ok(PiBranch {
                id: l.id.clone(),
                from: l.from,
                to: l.to,
                y_s,
                y_p,
                ratio: Complex64::new(1.0, 0.0),
                kind: BranchKind::Line,
            })
        }
        BranchElement::Transformer(t) => {
            let (y_s, y_p) = trafo_admittances(t)?;
            Ok(PiBranch {
                id: t.id.clone(),
                from: t.lv,
                to: t.hv,
                y_s,
                y_p,
                ratio: t.ratio(psi)?,
                kind: BranchKind::Transformer,
            })
        }
    }
}

/// All branches of `net`, lines first, then transformers at tap `taps[t]`.
pub fn branches(net: &PuNetwork, taps: &[f64]) -> Result<Vec<PiBranch>> {
    assert_eq!(taps.len(), net.trafos.len(), "one tap position per transformer");
    let mut out = Vec::with_capacity(net.lines.len() + net.trafos.len());
    for l in &net.lines {
        out.push(build_pibranch(BranchElement::Line(l), 0.0)?);
    }
    for (t, &psi) in net.trafos.iter().zip(taps) {
        out.push(build_pibranch(BranchElement::Transformer(t), psi)?);
    }
    Ok(out)
}

/// Dense complex bus admittance matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct YBus {
    n: usize,
    data: Vec<Complex64>,
}

impl YBus {
    pub fn zeros(n: usize) -> Self {
        YBus {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, k: usize, i: usize) -> Complex64 {
        self.data[k * self.n + i]
    }

    pub fn add(&mut self, k: usize, i: usize, v: Complex64) {
        self.data[k * self.n + i] += v;
    }

    /// Structurally nonzero entries as `(row, col, value)`.
    pub fn nonzeros(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, v)| v.re != 0.0 || v.im != 0.0)
            .map(move |(idx, v)| (idx / self.n, idx % self.n, *v))
    }

    /// Nodal currents `Y U`.
    pub fn mul(&self, u: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|k| {
                self.data[k * self.n..(k + 1) * self.n]
                    .iter()
                    .zip(u)
                    .map(|(y, u)| y * u)
                    .sum()
            })
            .collect()
    }

    pub fn max_abs_diff(&self, other: &YBus) -> f64 {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|k| (0..k).all(|i| (self.get(k, i) - self.get(i, k)).norm() <= tol))
    }

    /// Writes `row,col,re,im` lines for every nonzero entry.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "row,col,re,im")?;
        for (k, i, v) in self.nonzeros() {
            writeln!(out, "{k},{i},{:e},{:e}", v.re, v.im)?;
        }
        Ok(())
    }
}

/// Assembles the bus admittance matrix from branch data.
///
/// Off-diagonal `Y_ki` is `-y_s / n` for a branch defined from `k` to `i`
/// and `-y_s / conj(n)` for one defined from `i` to `k`. The diagonal sums
/// `y_s + y_p / 2` over branches leaving `k` and `(y_s + y_p / 2) / |n|^2`
/// over branches entering `k`.
pub fn ybus_from_branches(n_bus: usize, branches: &[PiBranch]) -> YBus {
    let mut by_pair: BTreeMap<(usize, usize), Vec<&PiBranch>> = BTreeMap::new();
    for br in branches {
        let key = (br.from.min(br.to), br.from.max(br.to));
        by_pair.entry(key).or_default().push(br);
    }
    let mut y = YBus::zeros(n_bus);
    for (&(a, b), group) in &by_pair {
        for (k, i) in [(a, b), (b, a)] {
            let mut off = Complex64::new(0.0, 0.0);
            let mut diag = Complex64::new(0.0, 0.0);
            for br in group {
                let defined_ki = br.from == k && br.to == i;
                let shunt_end = br.y_s + br.y_p / 2.0;
                if defined_ki {
                    off -= br.y_s / br.ratio;
                    diag += shunt_end;
                } else {
                    off -= br.y_s / br.ratio.conj();
                    diag += shunt_end / br.ratio.norm_sqr();
                }
            }
            y.add(k, i, off);
            y.add(k, k, diag);
        }
    }
    y
}

pub fn build_ybus(net: &PuNetwork, taps: &[f64]) -> Result<YBus> {
    Ok(ybus_from_branches(net.n_bus(), &branches(net, taps)?))
}

/// Result of [`reduce_network`]; index maps point from reduced elements to
/// the original element indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub net: PuNetwork,
    pub lines: Vec<Vec<usize>>,
    pub trafos: Vec<Vec<usize>>,
    pub gens: Vec<usize>,
    pub loads: Vec<usize>,
}

impl Reduction {
    pub fn is_identity(&self) -> bool {
        let id = |m: &[Vec<usize>]| m.iter().enumerate().all(|(i, g)| g == &[i]);
        id(&self.lines)
            && id(&self.trafos)
            && self.gens.iter().enumerate().all(|(i, &g)| g == i)
            && self.loads.iter().enumerate().all(|(i, &g)| g == i)
    }

    /// Restricts a case of the original network to the reduced one.
    pub fn case(&self, case: &PuCase) -> PuCase {
        PuCase {
            id: case.id,
            p_g: self.gens.iter().map(|&g| case.p_g[g]).collect(),
            p_m: self.loads.iter().map(|&m| case.p_m[m]).collect(),
            q_m: self.loads.iter().map(|&m| case.q_m[m]).collect(),
            u_e: case.u_e.clone(),
        }
    }

    /// Spreads reduced tap positions back onto the original transformers.
    pub fn expand_taps(&self, reduced: &[f64], n_original: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_original];
        for (group, &psi) in self.trafos.iter().zip(reduced) {
            for &t in group {
                out[t] = psi;
            }
        }
        out
    }

    /// Tap positions of the reduced transformers taken from the original ones.
    pub fn reduce_taps(&self, original: &[f64]) -> Vec<f64> {
        self.trafos.iter().map(|g| original[g[0]]).collect()
    }
}

fn same_trafo_kind(a: &PuTransformer, b: &PuTransformer) -> bool {
    a.lv == b.lv
        && a.hv == b.hv
        && a.ratio_lv == b.ratio_lv
        && a.ratio_hv == b.ratio_hv
        && a.tap == b.tap
}

/// Merges parallel branches by admittance addition and drops zero-rated
/// loads. Parallel transformers merge only when their ratios agree at every
/// tap position.
pub fn reduce_network(net: &PuNetwork) -> Result<Reduction> {
    let mut lines: Vec<PuLine> = Vec::new();
    let mut line_groups: Vec<Vec<usize>> = Vec::new();
    let mut line_adm: Vec<(Complex64, Complex64, f64)> = Vec::new();
    for (idx, l) in net.lines.iter().enumerate() {
        let (y_s, y_p) = line_admittances(l)?;
        let imax = l.imax * l.parallel_count as f64;
        let key = (l.from.min(l.to), l.from.max(l.to));
        match lines
            .iter()
            .position(|m| (m.from.min(m.to), m.from.max(m.to)) == key)
        {
            Some(j) => {
                line_groups[j].push(idx);
                let acc = &mut line_adm[j];
                acc.0 += y_s;
                acc.1 += y_p;
                acc.2 += imax;
            }
            None => {
                lines.push(l.clone());
                line_groups.push(vec![idx]);
                line_adm.push((y_s, y_p, imax));
            }
        }
    }
    for ((line, group), (y_s, y_p, imax)) in lines.iter_mut().zip(&line_groups).zip(&line_adm) {
        if group.len() == 1 && line.parallel_count == 1 {
            continue;
        }
        let z = 1.0 / y_s;
        line.id = group
            .iter()
            .map(|&i| net.lines[i].id.as_str())
            .collect::<Vec<_>>()
            .join("+");
        line.r = z.re;
        line.x = z.im;
        line.g = y_p.re;
        line.b = y_p.im;
        line.imax = *imax;
        line.parallel_count = 1;
    }

    let mut trafos: Vec<PuTransformer> = Vec::new();
    let mut trafo_groups: Vec<Vec<usize>> = Vec::new();
    let mut trafo_adm: Vec<(Complex64, Complex64, f64)> = Vec::new();
    for (idx, t) in net.trafos.iter().enumerate() {
        let (y_s, y_p) = trafo_admittances(t)?;
        let sn = t.sn * t.parallel_count as f64;
        match trafos.iter().position(|m| same_trafo_kind(m, t)) {
            Some(j) => {
                trafo_groups[j].push(idx);
                let acc = &mut trafo_adm[j];
                acc.0 += y_s;
                acc.1 += y_p;
                acc.2 += sn;
            }
            None => {
                trafos.push(t.clone());
                trafo_groups.push(vec![idx]);
                trafo_adm.push((y_s, y_p, sn));
            }
        }
    }
    for ((t, group), (y_s, y_p, sn)) in trafos.iter_mut().zip(&trafo_groups).zip(&trafo_adm) {
        if group.len() == 1 && t.parallel_count == 1 {
            continue;
        }
        t.id = group
            .iter()
            .map(|&i| net.trafos[i].id.as_str())
            .collect::<Vec<_>>()
            .join("+");
        t.impedance = PuTrafoImpedance::Admittance { y_s: *y_s, y_p: *y_p };
        t.sn = *sn;
        t.parallel_count = 1;
    }

    let gens: Vec<usize> = (0..net.gens.len()).filter(|&g| net.gens[g].sn > 0.0).collect();
    let loads: Vec<usize> = (0..net.loads.len()).filter(|&m| net.loads[m].sn > 0.0).collect();

    let reduced = PuNetwork {
        name: net.name.clone(),
        s_base: net.s_base,
        buses: net.buses.clone(),
        lines,
        trafos,
        gens: gens.iter().map(|&g| net.gens[g].clone()).collect(),
        loads: loads.iter().map(|&m| net.loads[m].clone()).collect(),
        ext_grids: net.ext_grids.clone(),
    };
    Ok(Reduction {
        net: reduced,
        lines: line_groups,
        trafos: trafo_groups,
        gens,
        loads,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{PuBus, PuLoad, TapChanger};

    fn bus(id: &str) -> PuBus {
        PuBus {
            id: id.into(),
            vn: 20.0,
            vmin: 0.9,
            vmax: 1.1,
        }
    }

    fn line(id: &str, from: usize, to: usize, r: f64, x: f64) -> PuLine {
        PuLine {
            id: id.into(),
            from,
            to,
            r,
            x,
            g: 0.0,
            b: 0.0,
            imax: 1.0,
            parallel_count: 1,
        }
    }

    fn trafo(lv: usize, hv: usize, y_s: Complex64, ratio: f64) -> PuTransformer {
        PuTransformer {
            id: "T1".into(),
            lv,
            hv,
            ratio_lv: 1.0,
            ratio_hv: ratio,
            sn: 0.4,
            impedance: PuTrafoImpedance::Admittance {
                y_s,
                y_p: Complex64::new(0.0, 0.0),
            },
            tap: TapChanger {
                dn: 0.0,
                dphi: 0.0,
                phi_n: 0.0,
                neutral: 0,
                min: -2,
                max: 2,
            },
            parallel_count: 1,
        }
    }

    fn net(lines: Vec<PuLine>, trafos: Vec<PuTransformer>, n: usize) -> PuNetwork {
        PuNetwork {
            name: "t".into(),
            s_base: 100.0,
            buses: (0..n).map(|i| bus(&format!("B{i}"))).collect(),
            lines,
            trafos,
            gens: vec![],
            loads: vec![],
            ext_grids: vec![],
        }
    }

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn pure_reactance_line_branch() {
        let l = line("L", 0, 1, 0.0, 0.1);
        let br = build_pibranch(BranchElement::Line(&l), 0.0).unwrap();
        assert!(close(br.y_s, Complex64::new(0.0, -10.0)));
        assert_eq!(br.y_p, Complex64::new(0.0, 0.0));
        assert_eq!(br.ratio, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn line_shunt_is_total() {
        let mut l = line("L", 0, 1, 0.0, 0.1);
        l.g = 1e-3;
        l.b = 0.02;
        let br = build_pibranch(BranchElement::Line(&l), 0.0).unwrap();
        assert_eq!(br.y_p, Complex64::new(1e-3, 0.02));
    }

    #[test]
    fn matched_bases_give_unit_ratio() {
        let t = trafo(0, 1, Complex64::new(0.0, -5.0), 1.0);
        let br = build_pibranch(BranchElement::Transformer(&t), 0.0).unwrap();
        assert!((br.ratio.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_line_rejected() {
        let l = line("L", 0, 1, 0.0, 0.0);
        assert!(matches!(
            build_pibranch(BranchElement::Line(&l), 0.0),
            Err(Error::DegenerateImpedance { .. })
        ));
    }

    #[test]
    fn empty_network_gives_zero_matrix() {
        let y = build_ybus(&net(vec![], vec![], 3), &[]).unwrap();
        assert_eq!(y.nonzeros().count(), 0);
    }

    #[test]
    fn two_bus_line_hand_stamp() {
        // y_s = 2 - j10 from z = 1/(2 - j10); shunt j0.02
        let z = 1.0 / Complex64::new(2.0, -10.0);
        let mut l = line("L", 0, 1, z.re, z.im);
        l.b = 0.02;
        let y = build_ybus(&net(vec![l], vec![], 2), &[]).unwrap();
        assert!(close(y.get(0, 0), Complex64::new(2.0, -9.99)));
        assert!(close(y.get(1, 1), Complex64::new(2.0, -9.99)));
        assert!(close(y.get(0, 1), Complex64::new(-2.0, 10.0)));
        assert!(close(y.get(1, 0), Complex64::new(-2.0, 10.0)));
    }

    #[test]
    fn transformer_hand_stamp() {
        let t = trafo(0, 1, Complex64::new(0.0, -5.0), 2.0);
        let y = build_ybus(&net(vec![], vec![t], 2), &[0.0]).unwrap();
        assert!(close(y.get(0, 0), Complex64::new(0.0, -5.0)));
        assert!(close(y.get(1, 1), Complex64::new(0.0, -1.25)));
        assert!(close(y.get(0, 1), Complex64::new(0.0, 2.5)));
        assert!(close(y.get(1, 0), Complex64::new(0.0, 2.5)));
    }

    #[test]
    fn merges_identical_parallel_lines() {
        let a = line("La", 0, 1, 0.0, 0.1);
        let b = line("Lb", 1, 0, 0.0, 0.1);
        let red = reduce_network(&net(vec![a, b], vec![], 2)).unwrap();
        assert_eq!(red.net.lines.len(), 1);
        assert_eq!(red.lines, vec![vec![0, 1]]);
        let br = build_pibranch(BranchElement::Line(&red.net.lines[0]), 0.0).unwrap();
        assert!(close(br.y_s, Complex64::new(0.0, -20.0)));
        assert_eq!(red.net.lines[0].imax, 2.0);
    }

    #[test]
    fn parallel_count_is_folded() {
        let mut a = line("La", 0, 1, 0.0, 0.1);
        a.parallel_count = 3;
        let red = reduce_network(&net(vec![a], vec![], 2)).unwrap();
        let br = build_pibranch(BranchElement::Line(&red.net.lines[0]), 0.0).unwrap();
        assert!(close(br.y_s, Complex64::new(0.0, -30.0)));
        assert_eq!(red.net.lines[0].parallel_count, 1);
    }

    #[test]
    fn zero_rated_load_dropped() {
        let mut n = net(vec![line("L", 0, 1, 0.0, 0.1)], vec![], 2);
        n.loads = vec![
            PuLoad {
                id: "M0".into(),
                bus: 1,
                sn: 0.0,
                p: 0.0,
                q: 0.0,
            },
            PuLoad {
                id: "M1".into(),
                bus: 1,
                sn: 0.1,
                p: 0.05,
                q: 0.0,
            },
        ];
        let red = reduce_network(&n).unwrap();
        assert_eq!(red.net.loads.len(), 1);
        assert_eq!(red.net.loads[0].id, "M1");
        assert_eq!(red.loads, vec![1]);
    }

    #[test]
    fn no_parallels_is_identity() {
        let n = net(
            vec![line("L1", 0, 1, 0.01, 0.1), line("L2", 1, 2, 0.02, 0.1)],
            vec![],
            3,
        );
        let red = reduce_network(&n).unwrap();
        assert!(red.is_identity());
        assert_eq!(red.net, n);
    }

    #[test]
    fn unequal_parallel_transformers_stay_separate() {
        let a = trafo(0, 1, Complex64::new(0.0, -5.0), 1.0);
        let mut b = trafo(0, 1, Complex64::new(0.0, -5.0), 1.0);
        b.tap.dn = 0.01;
        let red = reduce_network(&net(vec![], vec![a.clone(), b], 2)).unwrap();
        assert_eq!(red.net.trafos.len(), 2);
        let red = reduce_network(&net(vec![], vec![a.clone(), a], 2)).unwrap();
        assert_eq!(red.net.trafos.len(), 1);
        assert_eq!(red.expand_taps(&[1.0], 2), vec![1.0, 1.0]);
    }

    #[test]
    fn short_circuit_conversion() {
        let mut t = trafo(0, 1, Complex64::new(0.0, -5.0), 1.0);
        t.impedance = PuTrafoImpedance::ShortCircuit {
            vk_percent: 10.0,
            vkr_percent: 0.0,
            pfe: 0.0,
            i0_percent: 0.0,
        };
        t.sn = 0.5;
        // z = 0.1 / 0.5 = 0.2 pu, purely reactive
        let (y_s, y_p) = trafo_admittances(&t).unwrap();
        assert!(close(y_s, Complex64::new(0.0, -5.0)));
        assert_eq!(y_p, Complex64::new(0.0, 0.0));
    }
}
