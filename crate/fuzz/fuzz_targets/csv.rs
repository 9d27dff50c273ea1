#![no_main]

use iscreen::io::{parse_csv, CsvOptions, ResponseColumn};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_csv(data, &CsvOptions::default());
    let named = CsvOptions {
        response: ResponseColumn::Name("y".into()),
        ..CsvOptions::default()
    };
    let _ = parse_csv(data, &named);
    let bare = CsvOptions {
        has_header: false,
        delimiter: b';',
        ..CsvOptions::default()
    };
    let _ = parse_csv(data, &bare);
});
