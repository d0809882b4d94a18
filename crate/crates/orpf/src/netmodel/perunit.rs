use std::collections::HashMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{
    validate, Bus, ExtVoltage, ExternalGrid, Generator, Line, Load, Network, StudyCase, TapChanger,
    TrafoImpedance, Transformer,
};
use crate::error::{Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuBus {
    pub id: String,
    /// Voltage base in kV.
    pub vn: f64,
    pub vmin: f64,
    pub vmax: f64,
}

/// Line in per unit of the bus voltage base and the system power base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuLine {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    /// Total shunt admittance `g + jb`.
    pub g: f64,
    pub b: f64,
    pub imax: f64,
    pub parallel_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PuTrafoImpedance {
    ShortCircuit {
        vk_percent: f64,
        vkr_percent: f64,
        /// Iron losses in pu of the system base.
        pfe: f64,
        i0_percent: f64,
    },
    Admittance {
        y_s: Complex64,
        y_p: Complex64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuTransformer {
    pub id: String,
    pub lv: usize,
    pub hv: usize,
    /// Rated lv voltage over the lv bus voltage base.
    pub ratio_lv: f64,
    /// Rated hv voltage over the hv bus voltage base.
    pub ratio_hv: f64,
    pub sn: f64,
    pub impedance: PuTrafoImpedance,
    pub tap: TapChanger,
    pub parallel_count: u32,
}

impl PuTransformer {
    /// Off-nominal ratio between the per-unit bases at the neutral tap.
    pub fn nominal_ratio(&self) -> f64 {
        self.ratio_hv / self.ratio_lv
    }

    /// Per-unit complex ratio at a real tap position.
    pub fn ratio(&self, psi: f64) -> Result<Complex64> {
        let factor = self.tap.magnitude_factor(psi);
        if !(factor > 0.0) {
            return Err(Error::TapRange {
                id: self.id.clone(),
                psi,
                factor,
            });
        }
        Ok(self.tap.ratio(self.nominal_ratio(), psi))
    }

    /// Thermal current limit in pu of the lv bus current base.
    pub fn imax(&self) -> f64 {
        self.sn / self.ratio_lv
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuGenerator {
    pub id: String,
    pub bus: usize,
    pub p_max: f64,
    pub sn: f64,
    pub q_min: f64,
    pub q_max: f64,
    q_min_given: bool,
    q_max_given: bool,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuLoad {
    pub id: String,
    pub bus: usize,
    pub sn: f64,
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuExtGrid {
    pub id: String,
    pub bus: usize,
    pub vm: f64,
    pub va: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuNetwork {
    pub name: String,
    pub s_base: f64,
    pub buses: Vec<PuBus>,
    pub lines: Vec<PuLine>,
    pub trafos: Vec<PuTransformer>,
    pub gens: Vec<PuGenerator>,
    pub loads: Vec<PuLoad>,
    pub ext_grids: Vec<PuExtGrid>,
}

/// Per-unit study case aligned with a [`PuNetwork`]'s element order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PuCase {
    pub id: usize,
    pub p_g: Vec<f64>,
    pub p_m: Vec<f64>,
    pub q_m: Vec<f64>,
    pub u_e: Vec<Complex64>,
}

impl PuNetwork {
    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    /// Bus index of every external grid, `None` for other buses.
    pub fn ext_of_bus(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.buses.len()];
        for (e, ext) in self.ext_grids.iter().enumerate() {
            out[ext.bus] = Some(e);
        }
        out
    }

    pub fn neutral_taps(&self) -> Vec<f64> {
        self.trafos.iter().map(|t| t.tap.neutral as f64).collect()
    }

    /// Scales a physical study case. The case must belong to the network this
    /// per-unit model was derived from.
    pub fn case(&self, case: &StudyCase) -> PuCase {
        let s = self.s_base;
        PuCase {
            id: case.id,
            p_g: case.p_g.iter().map(|p| p / s).collect(),
            p_m: case.p_m.iter().map(|p| p / s).collect(),
            q_m: case.q_m.iter().map(|q| q / s).collect(),
            u_e: case
                .u_e
                .iter()
                .map(|u| Complex64::from_polar(u.vm_pu, u.va))
                .collect(),
        }
    }

    pub fn default_case(&self) -> PuCase {
        PuCase {
            id: 0,
            p_g: self.gens.iter().map(|g| g.p).collect(),
            p_m: self.loads.iter().map(|l| l.p).collect(),
            q_m: self.loads.iter().map(|l| l.q).collect(),
            u_e: self
                .ext_grids
                .iter()
                .map(|e| Complex64::from_polar(e.vm, e.va))
                .collect(),
        }
    }

    /// Inverse of [`to_per_unit`].
    pub fn to_physical(&self) -> Network {
        let s = self.s_base;
        let bus_id = |i: usize| self.buses[i].id.clone();
        let buses = self
            .buses
            .iter()
            .map(|b| Bus {
                id: b.id.clone(),
                vn: b.vn,
                vmin_pu: b.vmin,
                vmax_pu: b.vmax,
            })
            .collect();
        let lines = self
            .lines
            .iter()
            .map(|l| {
                let vn = self.buses[l.from].vn;
                let zb = vn * vn / s;
                Line {
                    id: l.id.clone(),
                    from_bus: bus_id(l.from),
                    to_bus: bus_id(l.to),
                    r: l.r * zb,
                    x: l.x * zb,
                    b: l.b / zb * 1e6,
                    g: l.g / zb * 1e6,
                    imax: l.imax * s / (SQRT3 * vn),
                    parallel_count: l.parallel_count,
                }
            })
            .collect();
        let trafos = self
            .trafos
            .iter()
            .map(|t| {
                let mut out = Transformer {
                    id: t.id.clone(),
                    lv_bus: bus_id(t.lv),
                    hv_bus: bus_id(t.hv),
                    vn_lv: t.ratio_lv * self.buses[t.lv].vn,
                    vn_hv: t.ratio_hv * self.buses[t.hv].vn,
                    sn: t.sn * s,
                    vk_percent: None,
                    vkr_percent: None,
                    pfe_kw: None,
                    i0_percent: None,
                    y_s_pu: None,
                    y_p_pu: None,
                    tap_dn: t.tap.dn,
                    tap_dphi: t.tap.dphi,
                    phi_n: t.tap.phi_n,
                    tap_neutral: t.tap.neutral,
                    tap_min: t.tap.min,
                    tap_max: t.tap.max,
                    parallel_count: t.parallel_count,
                };
                match t.impedance {
                    PuTrafoImpedance::ShortCircuit {
                        vk_percent,
                        vkr_percent,
                        pfe,
                        i0_percent,
                    } => {
                        out.vk_percent = Some(vk_percent);
                        out.vkr_percent = Some(vkr_percent);
                        out.pfe_kw = Some(pfe * s * 1e3);
                        out.i0_percent = Some(i0_percent);
                    }
                    PuTrafoImpedance::Admittance { y_s, y_p } => {
                        out.y_s_pu = Some([y_s.re, y_s.im]);
                        out.y_p_pu = Some([y_p.re, y_p.im]);
                    }
                }
                out
            })
            .collect();
        let gens = self
            .gens
            .iter()
            .map(|g| Generator {
                id: g.id.clone(),
                bus: bus_id(g.bus),
                p_max: g.p_max * s,
                sn: g.sn * s,
                q_min: g.q_min_given.then_some(g.q_min * s),
                q_max: g.q_max_given.then_some(g.q_max * s),
                p: g.p * s,
            })
            .collect();
        let loads = self
            .loads
            .iter()
            .map(|m| Load {
                id: m.id.clone(),
                bus: bus_id(m.bus),
                sn: m.sn * s,
                p: m.p * s,
                q: m.q * s,
            })
            .collect();
        let ext_grids = self
            .ext_grids
            .iter()
            .map(|e| ExternalGrid {
                id: e.id.clone(),
                bus: bus_id(e.bus),
                vm_pu: e.vm,
                va: e.va,
            })
            .collect();
        Network {
            format_version: super::FORMAT_VERSION,
            name: self.name.clone(),
            s_base: s,
            buses,
            lines,
            trafos,
            gens,
            loads,
            ext_grids,
        }
    }
}

impl PuCase {
    pub fn to_physical(&self, s_base: f64) -> StudyCase {
        StudyCase {
            id: self.id,
            p_g: self.p_g.iter().map(|p| p * s_base).collect(),
            p_m: self.p_m.iter().map(|p| p * s_base).collect(),
            q_m: self.q_m.iter().map(|q| q * s_base).collect(),
            u_e: self
                .u_e
                .iter()
                .map(|u| ExtVoltage {
                    vm_pu: u.norm(),
                    va: u.arg(),
                })
                .collect(),
        }
    }
}

/// Converts a validated network to per unit: impedances on `vn^2 / s_base` of
/// the local bus, powers on `s_base`, currents on `s_base / (sqrt(3) vn)`.
pub fn to_per_unit(net: &Network) -> Result<PuNetwork> {
    validate(net)?;
    let s = net.s_base;
    let index: HashMap<&str, usize> = net
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id.as_str(), i))
        .collect();
    let bus = |name: &str| index[name];

    let buses = net
        .buses
        .iter()
        .map(|b| PuBus {
            id: b.id.clone(),
            vn: b.vn,
            vmin: b.vmin_pu,
            vmax: b.vmax_pu,
        })
        .collect::<Vec<_>>();

    let lines = net
        .lines
        .iter()
        .map(|l| {
            let from = bus(&l.from_bus);
            let vn = buses[from].vn;
            let zb = vn * vn / s;
            PuLine {
                id: l.id.clone(),
                from,
                to: bus(&l.to_bus),
                r: l.r / zb,
                x: l.x / zb,
                g: l.g * 1e-6 * zb,
                b: l.b * 1e-6 * zb,
                imax: l.imax * SQRT3 * vn / s,
                parallel_count: l.parallel_count,
            }
        })
        .collect();

    let mut trafos = Vec::with_capacity(net.trafos.len());
    for t in &net.trafos {
        let lv = bus(&t.lv_bus);
        let hv = bus(&t.hv_bus);
        let impedance = match t.impedance()? {
            TrafoImpedance::ShortCircuit {
                vk_percent,
                vkr_percent,
                pfe_kw,
                i0_percent,
            } => PuTrafoImpedance::ShortCircuit {
                vk_percent,
                vkr_percent,
                pfe: pfe_kw * 1e-3 / s,
                i0_percent,
            },
            TrafoImpedance::Admittance { y_s, y_p } => PuTrafoImpedance::Admittance { y_s, y_p },
        };
        trafos.push(PuTransformer {
            id: t.id.clone(),
            lv,
            hv,
            ratio_lv: t.vn_lv / buses[lv].vn,
            ratio_hv: t.vn_hv / buses[hv].vn,
            sn: t.sn / s,
            impedance,
            tap: t.tap(),
            parallel_count: t.parallel_count,
        });
    }

    let gens = net
        .gens
        .iter()
        .map(|g| {
            let (qmin, qmax) = g.q_bounds();
            PuGenerator {
                id: g.id.clone(),
                bus: bus(&g.bus),
                p_max: g.p_max / s,
                sn: g.sn / s,
                q_min: qmin / s,
                q_max: qmax / s,
                q_min_given: g.q_min.is_some(),
                q_max_given: g.q_max.is_some(),
                p: g.p / s,
            }
        })
        .collect();
    let loads = net
        .loads
        .iter()
        .map(|m| PuLoad {
            id: m.id.clone(),
            bus: bus(&m.bus),
            sn: m.sn / s,
            p: m.p / s,
            q: m.q / s,
        })
        .collect();
    let ext_grids = net
        .ext_grids
        .iter()
        .map(|e| PuExtGrid {
            id: e.id.clone(),
            bus: bus(&e.bus),
            vm: e.vm_pu,
            va: e.va,
        })
        .collect();

    Ok(PuNetwork {
        name: net.name.clone(),
        s_base: s,
        buses,
        lines,
        trafos,
        gens,
        loads,
        ext_grids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::parse_network;

    const NET: &str = r#"{
        "name": "pu",
        "buses": [{"id": "H", "vn": 110.0}, {"id": "M", "vn": 110.0}, {"id": "L", "vn": 20.0}],
        "lines": [{"id": "L1", "from_bus": "H", "to_bus": "M", "r": 12.1, "x": 36.3, "b": 50.0, "g": 1.0, "imax": 0.5}],
        "trafos": [{"id": "T1", "lv_bus": "L", "hv_bus": "M", "vn_lv": 21.0, "vn_hv": 110.0, "sn": 40.0,
                    "vk_percent": 12.0, "vkr_percent": 0.4, "pfe_kw": 20.0, "i0_percent": 0.05,
                    "tap_dn": 0.015, "tap_min": -9, "tap_max": 9}],
        "gens": [{"id": "G1", "bus": "L", "p_max": 30.0, "sn": 32.0, "q_min": -5.0, "p": 12.0}],
        "loads": [{"id": "M1", "bus": "M", "sn": 20.0, "p": 15.0, "q": 3.0}],
        "ext_grids": [{"id": "E1", "bus": "H", "vm_pu": 1.02, "va": 0.01}]
    }"#;

    #[test]
    fn line_impedance_on_local_base() {
        let pu = to_per_unit(&parse_network(NET).unwrap()).unwrap();
        assert!((pu.lines[0].r - 0.1).abs() < 1e-15);
        assert!((pu.lines[0].x - 0.3).abs() < 1e-15);
    }

    #[test]
    fn voltage_at_nominal_is_one() {
        let pu = to_per_unit(&parse_network(NET).unwrap()).unwrap();
        assert_eq!(pu.buses[0].vn, 110.0);
        assert_eq!(110.0 / pu.buses[0].vn, 1.0);
        assert_eq!(pu.trafos[0].ratio_hv, 1.0);
        assert!((pu.trafos[0].ratio_lv - 1.05).abs() < 1e-15);
    }

    #[test]
    fn round_trip_is_identity() {
        let net = parse_network(NET).unwrap();
        let back = to_per_unit(&net).unwrap().to_physical();
        let rel = |a: f64, b: f64| if a == b { 0.0 } else { ((a - b) / b).abs() };
        assert_eq!(back.lines[0].id, net.lines[0].id);
        let (l0, l1) = (&net.lines[0], &back.lines[0]);
        for (a, b) in [(l1.r, l0.r), (l1.x, l0.x), (l1.b, l0.b), (l1.g, l0.g), (l1.imax, l0.imax)] {
            assert!(rel(a, b) < 1e-12, "{a} vs {b}");
        }
        let (t0, t1) = (&net.trafos[0], &back.trafos[0]);
        for (a, b) in [
            (t1.vn_lv, t0.vn_lv),
            (t1.vn_hv, t0.vn_hv),
            (t1.sn, t0.sn),
            (t1.pfe_kw.unwrap(), t0.pfe_kw.unwrap()),
        ] {
            assert!(rel(a, b) < 1e-12, "{a} vs {b}");
        }
        assert_eq!(back.gens[0].q_min, Some(-5.0));
        assert_eq!(back.gens[0].q_max, None);
        assert!(rel(back.loads[0].q, 3.0) < 1e-12);
        assert_eq!(back.ext_grids[0], net.ext_grids[0]);
    }

    #[test]
    fn case_scaling_round_trip() {
        let net = parse_network(NET).unwrap();
        let pu = to_per_unit(&net).unwrap();
        let case = StudyCase::from_defaults(&net);
        let back = pu.case(&case).to_physical(net.s_base);
        assert!((back.p_g[0] - 12.0).abs() < 1e-12);
        assert!((back.u_e[0].va - 0.01).abs() < 1e-15);
    }
}
