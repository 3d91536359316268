#![no_main]

use apc_core::io::SnapshotMeta;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(meta) = SnapshotMeta::parse(text) {
        assert_eq!(SnapshotMeta::parse(&meta.to_text()).unwrap(), meta);
    }
});
