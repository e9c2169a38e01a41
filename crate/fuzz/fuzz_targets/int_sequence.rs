#![no_main]

use hvm_core::corpus::{format_int_sequence, parse_int_sequence};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(seq) = parse_int_sequence(text) {
        assert_eq!(seq.len(), text.split_whitespace().count());
        assert_eq!(parse_int_sequence(&format_int_sequence(&seq)).unwrap(), seq);
    }
});
