#![no_main]

use libfuzzer_sys::fuzz_target;
use permucate_bench::{parse_dataset, write_dataset};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(file) = parse_dataset(text) {
            let out = write_dataset(&file.data, file.tau_oracle.as_deref()).expect("parsed data writes");
            let back = parse_dataset(&out).expect("written data parses");
            assert_eq!(back.data.x, file.data.x);
            assert_eq!(back.data.a, file.data.a);
            assert_eq!(back.data.y, file.data.y);
            assert_eq!(back.tau_oracle, file.tau_oracle);
        }
    }
});
