#![no_main]

use libfuzzer_sys::fuzz_target;
use orpf::admittance::{build_ybus, reduce_network};
use orpf::netmodel::{parse_network, to_per_unit};

// Any input must either be rejected with an error or survive conversion,
// reduction and admittance assembly.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(net) = parse_network(text) else { return };
    let Ok(pu) = to_per_unit(&net) else { return };
    let _ = build_ybus(&pu, &pu.neutral_taps());
    if let Ok(red) = reduce_network(&pu) {
        let _ = build_ybus(&red.net, &red.net.neutral_taps());
    }
});
