mod common;

use common::{oracle_ybus, random_network};
use num_complex::Complex64;
use orpf::admittance::{branches, build_ybus, reduce_network};
use orpf::netmodel::to_per_unit;
use orpf::powerflow::branch_currents;
use proptest::prelude::*;

fn unit_draws() -> impl Strategy<Value = (usize, Vec<f64>)> {
    (2usize..=12, prop::collection::vec(0.0f64..1.0, 256))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn ybus_matches_physical_stamping((n, u) in unit_draws()) {
        let (net, taps) = random_network(n, &u);
        let pu = to_per_unit(&net).unwrap();
        let y = build_ybus(&pu, &taps).unwrap();
        let oracle = oracle_ybus(&net, &taps);
        for (k, row) in oracle.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                let diff = (y.get(k, i) - v).norm();
                prop_assert!(diff <= 1e-12, "Y[{k}][{i}]: {} vs {v}", y.get(k, i));
            }
        }
    }

    #[test]
    fn branch_powers_sum_to_nodal_injection((n, u) in unit_draws(), v in prop::collection::vec((0.9f64..1.1, -0.5f64..0.5), 12)) {
        let (net, taps) = random_network(n, &u);
        let pu = to_per_unit(&net).unwrap();
        let y = build_ybus(&pu, &taps).unwrap();
        let volts: Vec<Complex64> = v[..n].iter().map(|&(m, a)| Complex64::from_polar(m, a)).collect();
        let mut per_bus = vec![Complex64::new(0.0, 0.0); n];
        for br in branches(&pu, &taps).unwrap() {
            let f = branch_currents(&br, volts[br.from], volts[br.to]);
            per_bus[br.from] += f.s_from;
            per_bus[br.to] += f.s_to;
        }
        let current = y.mul(&volts);
        for k in 0..n {
            let nodal = volts[k] * current[k].conj();
            prop_assert!((per_bus[k] - nodal).norm() <= 1e-9, "bus {k}: {} vs {nodal}", per_bus[k]);
        }
    }

    #[test]
    fn reduction_preserves_the_admittance_matrix((n, u) in unit_draws()) {
        let (net, mut taps) = random_network(n, &u);
        let pu = to_per_unit(&net).unwrap();
        let red = reduce_network(&pu).unwrap();
        // merged transformers move together
        for group in &red.trafos {
            for &t in group {
                taps[t] = taps[group[0]];
            }
        }
        let full = build_ybus(&pu, &taps).unwrap();
        let reduced = build_ybus(&red.net, &red.reduce_taps(&taps)).unwrap();
        let diff = full.max_abs_diff(&reduced);
        prop_assert!(diff <= 1e-12, "max difference {diff:e}");
    }
}

#[test]
fn bundled_networks_match_the_oracle_at_every_tap() {
    for name in ["toy_t3.json", "toy_t2.json", "toy_hv.json"] {
        let net = common::network(name);
        let pu = to_per_unit(&net).unwrap();
        for step in -2..=2 {
            let taps: Vec<f64> = net.trafos.iter().map(|t| (t.tap_neutral + step) as f64).collect();
            let y = build_ybus(&pu, &taps).unwrap();
            let oracle = oracle_ybus(&net, &taps);
            for (k, row) in oracle.iter().enumerate() {
                for (i, v) in row.iter().enumerate() {
                    assert!((y.get(k, i) - v).norm() <= 1e-12, "{name} Y[{k}][{i}]");
                }
            }
        }
    }
}
