#![no_main]

use hvm_core::baselines::{lz78_decode, lz78_parse, Lz78Token};
use hvm_core::model::Atom;
use libfuzzer_sys::fuzz_target;

// Three bytes per token: a little-endian phrase index and an atom, with 0xff
// standing for "no atom". Arbitrary streams must decode or fail cleanly, and
// the bytes read as a plain sequence must survive encode then decode.
fuzz_target!(|data: &[u8]| {
    let tokens: Vec<Lz78Token> = data
        .chunks_exact(3)
        .map(|c| Lz78Token {
            phrase: u16::from_le_bytes([c[0], c[1]]) as u32,
            next: (c[2] != 0xff).then_some(Atom(c[2] as u32)),
        })
        .collect();
    if let Ok(seq) = lz78_decode(&tokens) {
        assert_eq!(lz78_decode(lz78_parse(&seq).tokens()).unwrap(), seq);
    }

    let seq: Vec<Atom> = data.iter().map(|&b| Atom((b % 8) as u32)).collect();
    let dict = lz78_parse(&seq);
    assert_eq!(lz78_decode(dict.tokens()).unwrap(), seq);
});
