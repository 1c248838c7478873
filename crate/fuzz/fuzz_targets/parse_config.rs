#![no_main]

use libfuzzer_sys::fuzz_target;
use permucate_bench::parse_config;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = parse_config(text) {
            // accepted configs must survive their canonical form
            let again = parse_config(&cfg.to_canonical_text()).expect("canonical text parses");
            assert_eq!(again, cfg);
        }
    }
});
