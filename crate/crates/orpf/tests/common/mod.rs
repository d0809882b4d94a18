//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod checks;

use num_complex::Complex64;
use orpf::netmodel::profiles::Profiles;
use orpf::netmodel::{parse_network, Network};
use orpf::nlp::{build_nlp, HessianMode, OrpfProblem};
use orpf::objectives::ObjectiveSpec;
use orpf::optimize::{initial_point, start_state};
use orpf::pipeline::Scenario;
use orpf::powerflow::PfOptions;
use serde_json::{json, Value};

/// The bundled toy grids, smallest first.
pub const TOYS: [&str; 3] = ["toy_t3.json", "toy_t2.json", "toy_hv.json"];

pub fn data(name: &str) -> String {
    // resolved from the engine crate so other packages can share these helpers
    let path = std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../orpf/data")).join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn network(name: &str) -> Network {
    parse_network(&data(name)).unwrap()
}

/// Scenario of a bundled network; the high-voltage toy comes with its
/// profiles.
pub fn scenario(name: &str) -> Scenario {
    let profiles = (name == "toy_hv.json").then(|| Profiles::parse_str(&data("toy_hv_profiles.csv")).unwrap());
    Scenario::new(network(name), profiles).unwrap()
}

/// Each standard objective alone, a few non-default operations and
/// references, and one blend of all five.
pub fn weight_sets() -> Vec<Vec<(ObjectiveSpec, f64)>> {
    let mut sets: Vec<_> = ObjectiveSpec::standard().into_iter().map(|s| vec![(s, 1.0)]).collect();
    for text in ["max:B.U", "rms:L.IS", "max:G.Q@0.1", "B.U@1.02"] {
        sets.push(vec![(ObjectiveSpec::parse(text).unwrap(), 1.0)]);
    }
    let blend = [0.4, 0.2, 0.2, 0.15, 0.05];
    sets.push(ObjectiveSpec::standard().into_iter().zip(blend).collect());
    sets
}

/// Problem and power-flow starting point for one case, with the taps either
/// free or pinned to neutral.
pub fn problem(sc: &Scenario, case_id: usize, w: &[(ObjectiveSpec, f64)], pin: bool) -> (OrpfProblem, Vec<f64>) {
    let net = &sc.study.net;
    let case = sc.case(case_id).unwrap();
    let fixed: Vec<Option<i32>> = net.trafos.iter().map(|t| pin.then_some(t.tap.neutral)).collect();
    let p = build_nlp(net, &sc.study.bounds, &case, w, &fixed, HessianMode::Exact).unwrap();
    let pf = start_state(net, &case, &initial_point(net, &fixed), &PfOptions::default()).unwrap();
    let x0 = p.start_point(&pf);
    (p, x0)
}

/// Deterministic stream of uniform draws handed out by proptest.
pub struct Draws<'a> {
    u: &'a [f64],
    at: usize,
}

impl<'a> Draws<'a> {
    pub fn new(u: &'a [f64]) -> Self {
        Draws { u, at: 0 }
    }

    pub fn unit(&mut self) -> f64 {
        let v = self.u[self.at % self.u.len()];
        self.at += 1;
        v
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn index(&mut self, n: usize) -> usize {
        ((self.unit() * n as f64) as usize).min(n - 1)
    }
}

const LEVELS: [f64; 3] = [110.0, 20.0, 10.0];

fn branch(d: &mut Draws, id: usize, a: usize, b: usize, vn: &[f64]) -> (bool, Value) {
    let count = 1 + d.index(2);
    if vn[a] == vn[b] {
        // impedances scaled with the voltage level keep per-unit values realistic
        let zs = (vn[a] / 20.0).powi(2);
        let line = json!({
            "id": format!("L{id}"), "from_bus": format!("B{a}"), "to_bus": format!("B{b}"),
            "r": zs * d.range(0.1, 3.0), "x": zs * d.range(0.2, 6.0),
            "b": d.range(0.0, 200.0) / zs, "g": d.range(0.0, 5.0) / zs,
            "imax": d.range(0.2, 1.0), "parallel_count": count,
        });
        return (true, line);
    }
    let (lv, hv) = if vn[a] < vn[b] { (a, b) } else { (b, a) };
    let phi_n = [0.0, std::f64::consts::FRAC_PI_6, -std::f64::consts::FRAC_PI_6][d.index(3)];
    let mut t = json!({
        "id": format!("T{id}"), "lv_bus": format!("B{lv}"), "hv_bus": format!("B{hv}"),
        "vn_lv": vn[lv] * d.range(0.95, 1.05), "vn_hv": vn[hv] * d.range(0.95, 1.05),
        "sn": d.range(10.0, 60.0),
        "tap_dn": d.range(0.005, 0.03), "tap_dphi": d.range(-0.03, 0.03),
        "phi_n": phi_n,
        "tap_neutral": 0, "tap_min": -5, "tap_max": 5, "parallel_count": count,
    });
    let o = t.as_object_mut().unwrap();
    if d.unit() < 0.7 {
        let vk = d.range(4.0, 14.0);
        o.insert("vk_percent".into(), json!(vk));
        o.insert("vkr_percent".into(), json!(d.range(0.0, 0.2) * vk));
        o.insert("pfe_kw".into(), json!(d.range(0.0, 40.0)));
        o.insert("i0_percent".into(), json!(d.range(0.0, 0.5)));
    } else {
        o.insert("y_s_pu".into(), json!([d.range(0.1, 2.0), -d.range(2.0, 30.0)]));
        o.insert("y_p_pu".into(), json!([d.range(0.0, 1e-3), -d.range(0.0, 2e-3)]));
    }
    (false, t)
}

/// Connected network with up to `n` buses on three voltage levels, lines
/// between equal levels and transformers between different ones, plus a few
/// extra (possibly parallel) branches. Returns the network and a continuous
/// tap position per transformer.
pub fn random_network(n: usize, u: &[f64]) -> (Network, Vec<f64>) {
    let mut d = Draws::new(u);
    let vn: Vec<f64> = (0..n).map(|_| LEVELS[d.index(3)]).collect();
    let mut pairs: Vec<(usize, usize)> = (1..n).map(|i| (d.index(i), i)).collect();
    for _ in 0..d.index(4) {
        let a = d.index(n);
        let b = (a + 1 + d.index(n - 1)) % n;
        pairs.push((a, b));
    }
    let (mut lines, mut trafos) = (vec![], vec![]);
    for (id, &(a, b)) in pairs.iter().enumerate() {
        match branch(&mut d, id, a, b, &vn) {
            (true, l) => lines.push(l),
            (false, t) => trafos.push(t),
        }
    }
    let taps = (0..trafos.len()).map(|_| d.range(-5.0, 5.0)).collect();
    let buses: Vec<Value> = vn
        .iter()
        .enumerate()
        .map(|(i, v)| json!({"id": format!("B{i}"), "vn": v}))
        .collect();
    let s_base = [10.0, 100.0][d.index(2)];
    let net = json!({
        "format_version": 1, "name": "random", "s_base": s_base,
        "buses": buses, "lines": lines, "trafos": trafos, "gens": [], "loads": [],
        "ext_grids": [{"id": "E0", "bus": "B0", "vm_pu": 1.0, "va": 0.0}],
    });
    (parse_network(&net.to_string()).unwrap(), taps)
}

/// Two-port admittance `[[a, b], [c, d]]` of one branch in siemens, from
/// the raw element data.
fn two_port(
    y_s: Complex64,
    y_p: Complex64,
    ratio: Complex64,
) -> [[Complex64; 2]; 2] {
    // plain side: I = (y_s + y_p/2) U_f - y_s U_t / N
    // tapped side: I = [ (y_s + y_p/2) U_t / N - y_s U_f ] / conj(N)
    let yy = y_s + y_p / 2.0;
    [
        [yy, -y_s / ratio],
        [-y_s / ratio.conj(), yy / ratio.norm_sqr()],
    ]
}

/// Bus admittance matrix in per unit, assembled in physical units from the
/// element data by probing each branch as a two-port and converting with
/// `Y_pu = Y * Vn_k * Vn_i / S_base`.
pub fn oracle_ybus(net: &Network, taps: &[f64]) -> Vec<Vec<Complex64>> {
    let n = net.buses.len();
    let idx = |id: &str| net.buses.iter().position(|b| b.id == id).unwrap();
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    let mut stamp = |a: usize, b: usize, m: [[Complex64; 2]; 2]| {
        y[a][a] += m[0][0];
        y[a][b] += m[0][1];
        y[b][a] += m[1][0];
        y[b][b] += m[1][1];
    };
    for l in &net.lines {
        let c = l.parallel_count as f64;
        let y_s = c / Complex64::new(l.r, l.x);
        let y_p = Complex64::new(l.g, l.b) * 1e-6 * c;
        stamp(idx(&l.from_bus), idx(&l.to_bus), two_port(y_s, y_p, Complex64::new(1.0, 0.0)));
    }
    for (t, &psi) in net.trafos.iter().zip(taps) {
        let lv = idx(&t.lv_bus);
        let c = t.parallel_count as f64;
        let (y_s, y_p) = match (t.vk_percent, t.y_s_pu) {
            (Some(vk), None) => {
                let z_base = t.vn_lv * t.vn_lv / t.sn;
                let z = vk / 100.0 * z_base;
                let r = t.vkr_percent.unwrap_or(0.0) / 100.0 * z_base;
                let zs = Complex64::new(r, (z * z - r * r).sqrt());
                let g = t.pfe_kw.unwrap_or(0.0) * 1e-3 / (t.vn_lv * t.vn_lv);
                let ym = t.i0_percent.unwrap_or(0.0) / 100.0 * t.sn / (t.vn_lv * t.vn_lv);
                let b = -(ym * ym - g * g).max(0.0).sqrt();
                (1.0 / zs, Complex64::new(g, b))
            }
            (None, Some(ys)) => {
                // given on the lv bus base
                let to_si = net.s_base / (net.buses[lv].vn * net.buses[lv].vn);
                let yp = t.y_p_pu.unwrap_or([0.0, 0.0]);
                (Complex64::new(ys[0], ys[1]) * to_si, Complex64::new(yp[0], yp[1]) * to_si)
            }
            _ => unreachable!("validated"),
        };
        let step = psi - t.tap_neutral as f64;
        let ratio = Complex64::from_polar(
            t.vn_hv / t.vn_lv * (1.0 + t.tap_dn * step),
            t.phi_n + t.tap_dphi * step,
        );
        stamp(lv, idx(&t.hv_bus), two_port(y_s * c, y_p * c, ratio));
    }
    for (row, bk) in y.iter_mut().zip(&net.buses) {
        for (v, bi) in row.iter_mut().zip(&net.buses) {
            *v *= bk.vn * bi.vn / net.s_base;
        }
    }
    y
}
