#![no_main]

use libfuzzer_sys::fuzz_target;
use thermopol::io::{encode_pfm, parse_pfm};

fuzz_target!(|data: &[u8]| {
    if let Ok(pfm) = parse_pfm(data) {
        // Anything accepted must survive a round trip.
        let bytes = encode_pfm(&pfm).expect("encode accepted pfm");
        let again = parse_pfm(&bytes).expect("re-parse encoded pfm");
        assert_eq!((again.width, again.height, again.channels), (pfm.width, pfm.height, pfm.channels));
    }
});
