#![no_main]

use iscreen::cli::parse_schedule;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(v) = parse_schedule(s) {
            assert!(!v.is_empty());
        }
    }
});
