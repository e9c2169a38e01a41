#![no_main]

use hvm_core::corpus::{snippet_from_text, SymbolTable};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let mut table = SymbolTable::new();
    let atoms = table.tokenize(text);
    assert_eq!(table.detokenize(&atoms).unwrap(), text);

    let n = text.chars().count();
    if n > 0 {
        let len = 1 + data.len() % n;
        let (seq, t) = snippet_from_text(text, len, data.len() as u64).unwrap();
        assert_eq!(seq.len(), len);
        assert!(text.contains(&t.detokenize(&seq).unwrap()));
    }
});
