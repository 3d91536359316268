#![no_main]

use apc_core::ScenarioConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = ScenarioConfig::parse(text) {
        let again = ScenarioConfig::parse(&cfg.echo()).expect("echo of a valid config parses");
        assert_eq!(again, cfg);
    }
});
