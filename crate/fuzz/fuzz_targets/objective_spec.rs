#![no_main]

use libfuzzer_sys::fuzz_target;
use orpf::objectives::ObjectiveSpec;

// Accepted specs print to a form that parses back to the same spec.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = ObjectiveSpec::parse(text) else { return };
    assert_eq!(ObjectiveSpec::parse(&spec.to_string()).unwrap(), spec);
});
