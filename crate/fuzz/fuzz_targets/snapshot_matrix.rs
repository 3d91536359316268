#![no_main]

use apc_core::io::parse_matrix;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = parse_matrix(text) {
        assert_eq!(m.to_cells().len(), m.nx * m.ny);
    }
});
