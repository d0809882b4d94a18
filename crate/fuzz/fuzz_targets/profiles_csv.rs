#![no_main]

use libfuzzer_sys::fuzz_target;
use orpf::netmodel::parse_network;
use orpf::netmodel::profiles::Profiles;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(profiles) = Profiles::parse_str(text) else { return };
    let net = parse_network(include_str!("../../crates/orpf/data/toy_hv.json")).unwrap();
    if profiles.check(&net).is_ok() {
        for step in 0..profiles.steps.min(16) {
            let _ = profiles.case(&net, step);
        }
    }
});
