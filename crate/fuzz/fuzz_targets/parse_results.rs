#![no_main]

use libfuzzer_sys::fuzz_target;
use permucate_bench::{parse_results, write_results};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(rows) = parse_results(text) {
            let back = parse_results(&write_results(&rows)).expect("written rows parse");
            assert_eq!(back.len(), rows.len());
            for (a, b) in back.iter().zip(&rows) {
                // NaN psi never compares equal; compare bit patterns instead
                assert_eq!(a.psi.to_bits(), b.psi.to_bits());
            }
        }
    }
});
