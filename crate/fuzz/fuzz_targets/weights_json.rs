#![no_main]

use libfuzzer_sys::fuzz_target;
use orpf::objectives::WeightVector;

// Accepted weights normalize and survive a JSON round trip.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(w) = WeightVector::parse(text) else { return };
    if let Ok(n) = w.normalized() {
        let total: f64 = n.iter().map(|p| p.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
    let again = WeightVector::parse(&w.to_json().unwrap()).unwrap();
    assert_eq!(again, w);
});
