#![no_main]

use libfuzzer_sys::fuzz_target;
use thermopol::io::SessionManifest;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = SessionManifest::from_json(text) {
            let _ = m.files();
            let _ = m.to_json();
        }
    }
});
