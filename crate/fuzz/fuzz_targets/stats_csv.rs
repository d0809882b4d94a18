#![no_main]

use libfuzzer_sys::fuzz_target;
use orpf::objectives::tune_weights;
use orpf::pipeline::report::read_matrix_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(table) = read_matrix_csv(text) else { return };
    if let Ok(mu) = table.means() {
        let _ = tune_weights(&vec![1.0; mu.len()], &mu);
    }
    let _ = table.computed_stats();
});
