#![no_main]

use ebin_core::field::codec::{decode_binary, encode_binary};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(field) = decode_binary(data) {
        // the layout has no slack, so accepted input re-encodes to itself
        assert_eq!(encode_binary(&field), data);
    }
});
