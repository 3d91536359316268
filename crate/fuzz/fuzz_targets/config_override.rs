#![no_main]

use apc_core::ScenarioConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let mut cfg = ScenarioConfig::scenario1();
    if cfg.apply_override(text).is_ok() && cfg.validate().is_ok() {
        assert_eq!(ScenarioConfig::parse(&cfg.echo()).unwrap(), cfg);
    }
});
