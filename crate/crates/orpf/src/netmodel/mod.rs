//! Grid data model in physical units, validation, and the tap-dependent
//! transformer ratio.
//!
//! Sign conventions used throughout the crate:
//!
//! * External grids and generators are written as injections into their bus:
//!   a positive `P_e` means the external grid feeds the network, so that the
//!   sum of external-grid powers equals load minus generation plus losses.
//! * Loads are written as consumption: a positive `p` draws power from the bus.
//! * Branch terminal powers are the power leaving the bus into the branch, so
//!   the sum of both terminal powers of a branch is its loss.

mod perunit;
pub mod profiles;

use std::collections::{HashMap, HashSet};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use perunit::{
    to_per_unit, PuBus, PuCase, PuExtGrid, PuGenerator, PuLine, PuLoad, PuNetwork, PuTrafoImpedance,
    PuTransformer,
};

pub const FORMAT_VERSION: u32 = 1;

fn default_format_version() -> u32 {
    FORMAT_VERSION
}
fn default_s_base() -> f64 {
    100.0
}
fn default_vmin() -> f64 {
    0.9
}
fn default_vmax() -> f64 {
    1.1
}
fn default_one() -> f64 {
    1.0
}
fn default_count() -> u32 {
    1
}
fn is_zero(v: &f64) -> bool {
    *v == 0.0
}
fn is_zero_i(v: &i32) -> bool {
    *v == 0
}
fn is_one_u(v: &u32) -> bool {
    *v == 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: String,
    /// Nominal voltage in kV.
    pub vn: f64,
    #[serde(default = "default_vmin")]
    pub vmin_pu: f64,
    #[serde(default = "default_vmax")]
    pub vmax_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    /// Series resistance in ohm.
    pub r: f64,
    /// Series reactance in ohm.
    pub x: f64,
    /// Total shunt susceptance in µS.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub b: f64,
    /// Total shunt conductance in µS.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub g: f64,
    /// Thermal limit in kA.
    pub imax: f64,
    #[serde(default = "default_count", skip_serializing_if = "is_one_u")]
    pub parallel_count: u32,
}

/// Tap changer data shared by the physical and per-unit transformer models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TapChanger {
    /// Relative magnitude change per tap step.
    pub dn: f64,
    /// Phase change per tap step in rad.
    pub dphi: f64,
    /// Fixed phase shift in rad.
    pub phi_n: f64,
    pub neutral: i32,
    pub min: i32,
    pub max: i32,
}

impl TapChanger {
    pub fn magnitude_factor(&self, psi: f64) -> f64 {
        1.0 + self.dn * (psi - self.neutral as f64)
    }

    pub fn angle(&self, psi: f64) -> f64 {
        self.phi_n + self.dphi * (psi - self.neutral as f64)
    }

    /// Complex ratio for a nominal (untapped) ratio `nominal`.
    pub fn ratio(&self, nominal: f64, psi: f64) -> Complex64 {
        Complex64::from_polar(nominal * self.magnitude_factor(psi), self.angle(psi))
    }

    pub fn range_len(&self) -> usize {
        (self.max - self.min + 1).max(0) as usize
    }

    /// Smallest magnitude factor over the admissible tap range.
    pub fn min_magnitude_factor(&self) -> f64 {
        self.magnitude_factor(self.min as f64)
            .min(self.magnitude_factor(self.max as f64))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transformer {
    pub id: String,
    pub lv_bus: String,
    pub hv_bus: String,
    /// Rated low-voltage side voltage in kV.
    pub vn_lv: f64,
    /// Rated high-voltage side voltage in kV.
    pub vn_hv: f64,
    /// Rating in MVA.
    pub sn: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vk_percent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vkr_percent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pfe_kw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub i0_percent: Option<f64>,
    /// Series admittance in pu on the system base at the lv bus, `[re, im]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_s_pu: Option<[f64; 2]>,
    /// Total shunt admittance in pu on the system base at the lv bus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_p_pu: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub tap_dn: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub tap_dphi: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub phi_n: f64,
    #[serde(default, skip_serializing_if = "is_zero_i")]
    pub tap_neutral: i32,
    #[serde(default, skip_serializing_if = "is_zero_i")]
    pub tap_min: i32,
    #[serde(default, skip_serializing_if = "is_zero_i")]
    pub tap_max: i32,
    #[serde(default = "default_count", skip_serializing_if = "is_one_u")]
    pub parallel_count: u32,
}

/// Transformer impedance data: either nameplate short-circuit test values or
/// direct per-unit admittances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrafoImpedance {
    ShortCircuit {
        vk_percent: f64,
        vkr_percent: f64,
        pfe_kw: f64,
        i0_percent: f64,
    },
    Admittance {
        y_s: Complex64,
        y_p: Complex64,
    },
}

impl Transformer {
    pub fn tap(&self) -> TapChanger {
        TapChanger {
            dn: self.tap_dn,
            dphi: self.tap_dphi,
            phi_n: self.phi_n,
            neutral: self.tap_neutral,
            min: self.tap_min,
            max: self.tap_max,
        }
    }

    pub fn impedance(&self) -> Result<TrafoImpedance> {
        let schema = |msg: &str| Error::Schema {
            kind: "transformer",
            id: self.id.clone(),
            msg: msg.to_string(),
        };
        match (self.y_s_pu, self.vk_percent) {
            (Some(ys), None) => {
                if self.vkr_percent.is_some() || self.pfe_kw.is_some() || self.i0_percent.is_some()
                {
                    return Err(schema("mixes direct admittances with nameplate data"));
                }
                let yp = self.y_p_pu.unwrap_or([0.0, 0.0]);
                Ok(TrafoImpedance::Admittance {
                    y_s: Complex64::new(ys[0], ys[1]),
                    y_p: Complex64::new(yp[0], yp[1]),
                })
            }
            (None, Some(vk)) => {
                if self.y_p_pu.is_some() {
                    return Err(schema("mixes direct admittances with nameplate data"));
                }
                Ok(TrafoImpedance::ShortCircuit {
                    vk_percent: vk,
                    vkr_percent: self.vkr_percent.unwrap_or(0.0),
                    pfe_kw: self.pfe_kw.unwrap_or(0.0),
                    i0_percent: self.i0_percent.unwrap_or(0.0),
                })
            }
            (Some(_), Some(_)) => Err(schema("both y_s_pu and vk_percent given")),
            (None, None) => Err(schema("needs either vk_percent or y_s_pu")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub id: String,
    pub bus: String,
    /// Installed active power in MW.
    pub p_max: f64,
    /// Rated apparent power in MVA.
    pub sn: f64,
    /// Lower reactive bound in MVAr, defaults to `-0.5 * p_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_min: Option<f64>,
    /// Upper reactive bound in MVAr, defaults to `0.5 * p_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_max: Option<f64>,
    /// Active power of the default study case in MW.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub p: f64,
}

impl Generator {
    pub fn q_bounds(&self) -> (f64, f64) {
        (
            self.q_min.unwrap_or(-0.5 * self.p_max),
            self.q_max.unwrap_or(0.5 * self.p_max),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Load {
    pub id: String,
    pub bus: String,
    /// Rated apparent power in MVA; zero-rated loads are dropped on reduction.
    pub sn: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub p: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalGrid {
    pub id: String,
    pub bus: String,
    #[serde(default = "default_one")]
    pub vm_pu: f64,
    /// Voltage angle in rad.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub va: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Network {
    #[serde(default = "default_format_version")]
    pub format_version: u32,
    #[serde(default)]
    pub name: String,
    /// System base power in MVA.
    #[serde(default = "default_s_base")]
    pub s_base: f64,
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub lines: Vec<Line>,
    #[serde(default)]
    pub trafos: Vec<Transformer>,
    #[serde(default)]
    pub gens: Vec<Generator>,
    #[serde(default)]
    pub loads: Vec<Load>,
    pub ext_grids: Vec<ExternalGrid>,
}

/// Voltage of an external grid for one study case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtVoltage {
    pub vm_pu: f64,
    pub va: f64,
}

/// Fixed injections of one time step, aligned with the network's element
/// order. Powers in MW / MVAr.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCase {
    pub id: usize,
    pub p_g: Vec<f64>,
    pub p_m: Vec<f64>,
    pub q_m: Vec<f64>,
    pub u_e: Vec<ExtVoltage>,
}

impl StudyCase {
    /// The case stored in the network file itself.
    pub fn from_defaults(net: &Network) -> Self {
        StudyCase {
            id: 0,
            p_g: net.gens.iter().map(|g| g.p).collect(),
            p_m: net.loads.iter().map(|l| l.p).collect(),
            q_m: net.loads.iter().map(|l| l.q).collect(),
            u_e: net
                .ext_grids
                .iter()
                .map(|e| ExtVoltage {
                    vm_pu: e.vm_pu,
                    va: e.va,
                })
                .collect(),
        }
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        let err = |msg: String| Error::Case { case: self.id, msg };
        if self.p_g.len() != net.gens.len()
            || self.p_m.len() != net.loads.len()
            || self.q_m.len() != net.loads.len()
            || self.u_e.len() != net.ext_grids.len()
        {
            return Err(err("does not cover every element exactly once".into()));
        }
        for (g, &p) in net.gens.iter().zip(&self.p_g) {
            if !p.is_finite() || p < 0.0 || p > g.p_max * (1.0 + 1e-12) {
                return Err(err(format!(
                    "generator '{}' active power {p} outside [0, {}]",
                    g.id, g.p_max
                )));
            }
        }
        if self.p_m.iter().chain(&self.q_m).any(|v| !v.is_finite()) {
            return Err(err("non-finite load power".into()));
        }
        for (e, u) in net.ext_grids.iter().zip(&self.u_e) {
            if !(u.vm_pu > 0.0) || !u.va.is_finite() {
                return Err(err(format!("external grid '{}' has invalid voltage", e.id)));
            }
        }
        Ok(())
    }
}

/// Ratio of a transformer at a real-valued tap position, in physical units
/// (kV / kV). Lines have the constant ratio one.
pub fn tap_ratio(t: &Transformer, psi: f64) -> Result<Complex64> {
    let tap = t.tap();
    let factor = tap.magnitude_factor(psi);
    if !(factor > 0.0) {
        return Err(Error::TapRange {
            id: t.id.clone(),
            psi,
            factor,
        });
    }
    Ok(tap.ratio(t.vn_hv / t.vn_lv, psi))
}

pub fn parse_network(text: &str) -> Result<Network> {
    let net: Network = serde_json::from_str(text).map_err(|e| Error::Parse {
        what: "network".into(),
        msg: e.to_string(),
    })?;
    validate(&net)?;
    Ok(net)
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let text = std::fs::read_to_string(path)?;
    parse_network(&text)
}

pub fn to_json(net: &Network) -> Result<String> {
    Ok(serde_json::to_string_pretty(net)?)
}

fn check_unique<'a>(kind: &'static str, ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateId {
                kind,
                id: id.to_string(),
            });
        }
    }
    Ok(())
}

fn finite(kind: &'static str, id: &str, vals: &[f64]) -> Result<()> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Schema {
            kind,
            id: id.to_string(),
            msg: "non-finite value".into(),
        })
    }
}

/// Checks every model invariant without touching the network.
pub fn validate(net: &Network) -> Result<()> {
    let schema = |kind: &'static str, id: &str, msg: &str| Error::Schema {
        kind,
        id: id.to_string(),
        msg: msg.to_string(),
    };
    if net.format_version != FORMAT_VERSION {
        return Err(schema(
            "network",
            &net.name,
            &format!("unsupported format_version {}", net.format_version),
        ));
    }
    if !(net.s_base > 0.0) || !net.s_base.is_finite() {
        return Err(Error::NonPositiveRating {
            kind: "network",
            id: net.name.clone(),
            field: "s_base",
        });
    }
    if net.buses.is_empty() {
        return Err(Error::Empty("network has no buses".into()));
    }
    check_unique("bus", net.buses.iter().map(|b| b.id.as_str()))?;
    check_unique("line", net.lines.iter().map(|b| b.id.as_str()))?;
    check_unique("transformer", net.trafos.iter().map(|b| b.id.as_str()))?;
    check_unique("generator", net.gens.iter().map(|b| b.id.as_str()))?;
    check_unique("load", net.loads.iter().map(|b| b.id.as_str()))?;
    check_unique("external grid", net.ext_grids.iter().map(|b| b.id.as_str()))?;

    let index: HashMap<&str, usize> = net
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id.as_str(), i))
        .collect();
    let lookup = |kind: &'static str, id: &str, bus: &str| -> Result<usize> {
        index
            .get(bus)
            .copied()
            .ok_or_else(|| Error::DanglingReference {
                kind,
                id: id.to_string(),
                bus: bus.to_string(),
            })
    };

    for b in &net.buses {
        finite("bus", &b.id, &[b.vn, b.vmin_pu, b.vmax_pu])?;
        if !(b.vn > 0.0) {
            return Err(Error::NonPositiveRating {
                kind: "bus",
                id: b.id.clone(),
                field: "vn",
            });
        }
        if !(b.vmin_pu > 0.0 && b.vmin_pu < b.vmax_pu) {
            return Err(schema("bus", &b.id, "requires 0 < vmin_pu < vmax_pu"));
        }
    }

    let mut dsu = DisjointSet::new(net.buses.len());
    for l in &net.lines {
        finite("line", &l.id, &[l.r, l.x, l.b, l.g, l.imax])?;
        let f = lookup("line", &l.id, &l.from_bus)?;
        let t = lookup("line", &l.id, &l.to_bus)?;
        if f == t {
            return Err(schema("line", &l.id, "from_bus equals to_bus"));
        }
        if !(l.imax > 0.0) {
            return Err(Error::NonPositiveRating {
                kind: "line",
                id: l.id.clone(),
                field: "imax",
            });
        }
        if l.r.hypot(l.x) == 0.0 || l.r < 0.0 {
            return Err(Error::DegenerateImpedance { id: l.id.clone() });
        }
        if l.parallel_count == 0 {
            return Err(Error::NonPositiveRating {
                kind: "line",
                id: l.id.clone(),
                field: "parallel_count",
            });
        }
        let (vf, vt) = (net.buses[f].vn, net.buses[t].vn);
        if ((vf - vt) / vf).abs() > 1e-9 {
            return Err(schema("line", &l.id, "connects buses of different nominal voltage"));
        }
        dsu.union(f, t);
    }

    for t in &net.trafos {
        finite(
            "transformer",
            &t.id,
            &[t.vn_lv, t.vn_hv, t.sn, t.tap_dn, t.tap_dphi, t.phi_n],
        )?;
        let lv = lookup("transformer", &t.id, &t.lv_bus)?;
        let hv = lookup("transformer", &t.id, &t.hv_bus)?;
        if lv == hv {
            return Err(schema("transformer", &t.id, "lv_bus equals hv_bus"));
        }
        if !(t.sn > 0.0) {
            return Err(Error::NonPositiveRating {
                kind: "transformer",
                id: t.id.clone(),
                field: "sn",
            });
        }
        if !(t.vn_lv > 0.0 && t.vn_lv < t.vn_hv) {
            return Err(schema("transformer", &t.id, "requires 0 < vn_lv < vn_hv"));
        }
        if !(t.tap_min <= t.tap_neutral && t.tap_neutral <= t.tap_max) {
            return Err(schema(
                "transformer",
                &t.id,
                "requires tap_min <= tap_neutral <= tap_max",
            ));
        }
        if t.parallel_count == 0 {
            return Err(Error::NonPositiveRating {
                kind: "transformer",
                id: t.id.clone(),
                field: "parallel_count",
            });
        }
        let tap = t.tap();
        for psi in [t.tap_min, t.tap_max] {
            let factor = tap.magnitude_factor(psi as f64);
            if !(factor > 0.0) {
                return Err(Error::TapRange {
                    id: t.id.clone(),
                    psi: psi as f64,
                    factor,
                });
            }
        }
        match t.impedance()? {
            TrafoImpedance::ShortCircuit {
                vk_percent,
                vkr_percent,
                pfe_kw,
                i0_percent,
            } => {
                finite("transformer", &t.id, &[vk_percent, vkr_percent, pfe_kw, i0_percent])?;
                if !(vk_percent > 0.0) || vkr_percent < 0.0 || vkr_percent > vk_percent {
                    return Err(Error::DegenerateImpedance { id: t.id.clone() });
                }
                if pfe_kw < 0.0 || i0_percent < 0.0 {
                    return Err(schema("transformer", &t.id, "negative no-load losses"));
                }
            }
            TrafoImpedance::Admittance { y_s, y_p } => {
                finite("transformer", &t.id, &[y_s.re, y_s.im, y_p.re, y_p.im])?;
                if y_s.norm() == 0.0 {
                    return Err(Error::DegenerateImpedance { id: t.id.clone() });
                }
            }
        }
        dsu.union(lv, hv);
    }

    for g in &net.gens {
        finite("generator", &g.id, &[g.p_max, g.sn, g.p])?;
        lookup("generator", &g.id, &g.bus)?;
        if !(g.sn > 0.0) {
            return Err(Error::NonPositiveRating {
                kind: "generator",
                id: g.id.clone(),
                field: "sn",
            });
        }
        if g.p_max < 0.0 {
            return Err(schema("generator", &g.id, "negative p_max"));
        }
        let (qmin, qmax) = g.q_bounds();
        finite("generator", &g.id, &[qmin, qmax])?;
        if qmin > qmax {
            return Err(schema("generator", &g.id, "q_min exceeds q_max"));
        }
        if g.p < 0.0 || g.p > g.p_max {
            return Err(schema("generator", &g.id, "default p outside [0, p_max]"));
        }
    }
    for m in &net.loads {
        finite("load", &m.id, &[m.sn, m.p, m.q])?;
        lookup("load", &m.id, &m.bus)?;
        if m.sn < 0.0 {
            return Err(schema("load", &m.id, "negative sn"));
        }
    }
    if net.ext_grids.is_empty() {
        return Err(Error::Empty("network has no external grid".into()));
    }
    let mut ext_buses = HashSet::new();
    for e in &net.ext_grids {
        finite("external grid", &e.id, &[e.vm_pu, e.va])?;
        let b = lookup("external grid", &e.id, &e.bus)?;
        if !(e.vm_pu > 0.0) {
            return Err(Error::NonPositiveRating {
                kind: "external grid",
                id: e.id.clone(),
                field: "vm_pu",
            });
        }
        if !ext_buses.insert(b) {
            return Err(schema(
                "external grid",
                &e.id,
                "shares its bus with another external grid",
            ));
        }
    }

    let root = dsu.find(0);
    for (i, b) in net.buses.iter().enumerate() {
        if dsu.find(i) != root {
            return Err(Error::Disconnected { bus: b.id.clone() });
        }
    }
    Ok(())
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}
