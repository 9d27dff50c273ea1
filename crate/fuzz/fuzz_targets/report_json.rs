#![no_main]

use iscreen::report::RunReport;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(r) = RunReport::from_json(s) {
            let again = RunReport::from_json(&r.to_json().unwrap()).unwrap();
            assert_eq!(again.trajectory.records.len(), r.trajectory.records.len());
            let _ = r.trajectory_csv();
        }
    }
});
