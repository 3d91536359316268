#![no_main]

use apc_core::io::{parse_trajectory, trajectory_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(traj) = parse_trajectory(text) {
        assert_eq!(parse_trajectory(&trajectory_csv(&traj)).unwrap(), traj);
    }
});
