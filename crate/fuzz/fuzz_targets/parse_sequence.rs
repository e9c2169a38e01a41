#![no_main]

use std::collections::BTreeSet;

use hvm_core::model::{Atom, ChunkId, Inventory};
use hvm_core::parser::{ground_outcome, LinearScanner, Parser, ParsingGraph};
use libfuzzer_sys::fuzz_target;

const ATOMS: u32 = 3;

// The first byte sets how many three-byte chunk recipes follow; the rest is
// the sequence. Each recipe concatenates two existing chunks, optionally
// through a variable over two others.
fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else {
        return;
    };
    let split = (3 * (n as usize % 16)).min(rest.len());
    let (recipes, tail) = rest.split_at(split);

    let mut inv = Inventory::with_atoms((0..ATOMS).map(Atom));
    for r in recipes.chunks_exact(3) {
        let ids: Vec<ChunkId> = inv.chunk_ids().collect();
        let left = ids[r[0] as usize % ids.len()];
        let right = ids[r[1] as usize % ids.len()];
        let var = if r[2] & 1 == 1 {
            let a = ids[(r[2] as usize >> 1) % ids.len()];
            let b = ids[(r[2] as usize >> 4) % ids.len()];
            if a == b {
                None
            } else {
                let set: BTreeSet<ChunkId> = [a, b].into();
                Some(match inv.find_variable(&set) {
                    Some(v) => v,
                    None => inv.add_variable(vec![a, b], vec![1.0, 1.0]).unwrap(),
                })
            }
        } else {
            None
        };
        let terms = inv.concat_terms(left, var, right).unwrap();
        if terms.len() <= 12 && inv.find_chunk(&terms).is_none() {
            inv.add_chunk(terms).unwrap();
        }
    }

    let seq: Vec<Atom> = tail.iter().map(|&b| Atom(b as u32 % ATOMS)).collect();
    let graph = ParsingGraph::build(&inv);
    graph.validate().unwrap();
    let parse = Parser::new(&graph, &inv).parse(&seq).unwrap();
    assert_eq!(ground_outcome(&inv, &parse).unwrap(), seq);
    let scanner = LinearScanner::new(&inv).unwrap();
    for pos in 0..seq.len() {
        let trie = Parser::new(&graph, &inv).identify(&seq, pos).unwrap();
        assert!(trie.steps <= scanner.identify(&seq, pos).unwrap().steps);
    }
});
