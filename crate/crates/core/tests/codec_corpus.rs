//! Replays the fuzz seed corpora through the field decoders.

use std::path::PathBuf;

use ebin_core::field::codec::{decode_binary, decode_csv, encode_binary, encode_csv};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn csv_seeds_decode_or_fail_cleanly() {
    let seeds = seeds("field_csv");
    assert!(!seeds.is_empty());
    let mut accepted = 0;
    for (name, bytes) in seeds {
        let Ok(text) = String::from_utf8(bytes) else { continue };
        if let Ok(field) = decode_csv(&text, 1.0) {
            let once = encode_csv(&field, "g");
            assert_eq!(encode_csv(&decode_csv(&once, 1.0).unwrap(), "g"), once, "{name}");
            accepted += 1;
        }
    }
    assert!(accepted >= 3);
}

#[test]
fn binary_seeds_decode_or_fail_cleanly() {
    let mut accepted = 0;
    for (name, bytes) in seeds("field_binary") {
        if let Ok(field) = decode_binary(&bytes) {
            assert_eq!(encode_binary(&field), bytes, "{name}");
            accepted += 1;
        }
    }
    assert_eq!(accepted, 2);
}
