#![no_main]

use dragoman::corpus::parse_sidecar;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = parse_sidecar(data) {
        for r in rows {
            assert!(r.scores.values().all(|v| v.is_finite()));
        }
    }
});
