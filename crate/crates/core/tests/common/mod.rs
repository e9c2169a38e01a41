//! Random inventories and sequences for integration tests, built only
//! through the public API.

use std::collections::BTreeSet;

use hvm_core::model::{Atom, ChunkId, Inventory};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Up to 12 concatenated chunks over 2–4 atoms, with roughly a third of the
/// concatenations passing through a fresh or existing variable.
pub fn random_inventory(rng: &mut ChaCha8Rng) -> Inventory {
    let k = rng.random_range(2..=4u32);
    let mut inv = Inventory::with_atoms((0..k).map(Atom));
    let target = rng.random_range(0..12);
    for _ in 0..target {
        let ids: Vec<ChunkId> = inv.chunk_ids().collect();
        let left = ids[rng.random_range(0..ids.len())];
        let right = ids[rng.random_range(0..ids.len())];
        let var = if rng.random_bool(0.3) && ids.len() >= 3 {
            let mut denotees = BTreeSet::new();
            while denotees.len() < 2 {
                denotees.insert(ids[rng.random_range(0..ids.len())]);
            }
            match inv.find_variable(&denotees) {
                Some(v) => Some(v),
                None => {
                    let denotees: Vec<ChunkId> = denotees.into_iter().collect();
                    let counts = denotees.iter().map(|_| rng.random_range(1..5) as f64).collect();
                    Some(inv.add_variable(denotees, counts).expect("denotees exist"))
                }
            }
        } else {
            None
        };
        let terms = inv.concat_terms(left, var, right).expect("parts exist");
        if terms.len() <= 8 && inv.find_chunk(&terms).is_none() {
            inv.add_chunk(terms).expect("fresh chunk");
        }
    }
    inv
}

pub fn random_sequence(rng: &mut ChaCha8Rng, inv: &Inventory, len: usize) -> Vec<Atom> {
    let atoms: Vec<Atom> = inv.atoms().collect();
    (0..len).map(|_| atoms[rng.random_range(0..atoms.len())]).collect()
}
