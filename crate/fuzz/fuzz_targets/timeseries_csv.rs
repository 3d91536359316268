#![no_main]

use apc_core::io::{parse_timeseries, timeseries_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rows) = parse_timeseries(text) {
        assert_eq!(parse_timeseries(&timeseries_csv(&rows)).unwrap(), rows);
    }
});
