#![no_main]

use ebin_core::field::codec::{decode_csv, encode_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(field) = decode_csv(text, 1.0) {
        let once = encode_csv(&field, "g");
        let again = decode_csv(&once, 1.0).expect("re-encoded field decodes");
        assert_eq!(encode_csv(&again, "g"), once);
    }
});
