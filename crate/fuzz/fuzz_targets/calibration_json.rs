#![no_main]

use libfuzzer_sys::fuzz_target;
use thermopol::io::{parse_calibration, ShotsManifest};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_calibration(text);
        let _ = ShotsManifest::from_json(text);
    }
});
