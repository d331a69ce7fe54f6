#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use thermopol::simulator::SceneSpec;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = SceneSpec::from_json(text, Path::new("."));
    }
});
