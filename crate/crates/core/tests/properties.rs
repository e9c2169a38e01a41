//! Property tests over random inventories, sequences and generator configs.

mod common;

use std::collections::BTreeSet;

use common::{random_inventory, random_sequence};
use hvm_core::baselines::{al_train, lz78_decode, lz78_parse};
use hvm_core::corpus::{snippet_from_text, SymbolTable};
use hvm_core::generator::{generate, Element, GenConfig, Object};
use hvm_core::learner::{nll_conditional, nll_independent, BatchLearner, LearnerConfig, Mode};
use hvm_core::metrics::{chunk_distribution, representation_complexity, representation_entropy};
use hvm_core::model::{normalize_marginals, Atom, CountTables, Inventory, UnitId};
use hvm_core::parser::{ground_outcome, LinearScanner, Matcher, Parser, ParsingGraph};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn atoms(max: u32, len: usize) -> impl Strategy<Value = Vec<Atom>> {
    prop::collection::vec((0..max).prop_map(Atom), 0..len)
}

/// A learner run on a short random sequence from a small alphabet.
fn learned(seed: u64, len: usize, mode: Mode) -> (Vec<Atom>, Inventory) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = Inventory::with_atoms((0..3).map(Atom));
    let seq = random_sequence(&mut rng, &base, len);
    let config = LearnerConfig {
        max_iterations: 6,
        ..LearnerConfig::with_mode(mode)
    };
    let run = BatchLearner::new(&seq, config).unwrap().run().unwrap();
    (seq, run.inventory)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn parse_reproduces_the_sequence(seed in any::<u64>(), len in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inv = random_inventory(&mut rng);
        let seq = random_sequence(&mut rng, &inv, len);
        let graph = ParsingGraph::build(&inv);
        let parse = Parser::new(&graph, &inv).parse(&seq).unwrap();
        prop_assert_eq!(ground_outcome(&inv, &parse).unwrap(), seq);
    }

    #[test]
    fn trie_dominates_scan_and_returns_a_maximal_match(seed in any::<u64>(), len in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inv = random_inventory(&mut rng);
        let seq = random_sequence(&mut rng, &inv, len);
        let graph = ParsingGraph::build(&inv);
        let parser = Parser::new(&graph, &inv);
        let scanner = LinearScanner::new(&inv).unwrap();
        let matcher = Matcher::new(&inv);
        for pos in 0..seq.len() {
            let trie = parser.identify(&seq, pos).unwrap();
            let scan = scanner.identify(&seq, pos).unwrap();
            prop_assert!(trie.steps <= scan.steps);
            for child in graph.children(trie.chunk).unwrap() {
                prop_assert!(matcher.match_chunk(child, &seq, pos).is_none());
            }
        }
    }

    #[test]
    fn parsing_is_deterministic(seed in any::<u64>(), len in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inv = random_inventory(&mut rng);
        let seq = random_sequence(&mut rng, &inv, len);
        let a = Parser::new(&ParsingGraph::build(&inv), &inv).parse(&seq).unwrap();
        let b = Parser::new(&ParsingGraph::build(&inv), &inv).parse(&seq).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn expected_pss_lies_between_path_bounds(seed in any::<u64>(), len in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inv = random_inventory(&mut rng);
        let seq = random_sequence(&mut rng, &inv, len);
        let graph = ParsingGraph::build(&inv);
        let parse = Parser::new(&graph, &inv).parse(&seq).unwrap();
        let probs = hvm_core::metrics::parse_distribution(&parse);
        let e = graph.expected_pss(&probs).unwrap();
        let (lo, hi) = graph.pss_bounds(&probs).unwrap();
        prop_assert!(lo as f64 <= e + 1e-9 && e <= hi as f64 + 1e-9);
    }

    #[test]
    fn normalized_marginals_sum_to_one(masses in prop::collection::vec(0.0f64..100.0, 1..20)) {
        let mut counts = CountTables::new();
        let mut ids = BTreeSet::new();
        for (i, &m) in masses.iter().enumerate() {
            let id = hvm_core::model::ChunkId(i as u32);
            counts.add_chunk_marginal(id, m);
            ids.insert(UnitId::Chunk(id));
        }
        match normalize_marginals(&counts, &ids) {
            Ok(p) => prop_assert!((p.values().sum::<f64>() - 1.0).abs() < 1e-9),
            Err(_) => prop_assert!(masses.iter().sum::<f64>() == 0.0),
        }
    }

    #[test]
    fn decay_never_increases_counts(masses in prop::collection::vec(0.0f64..50.0, 1..10), theta in 0.5f64..=1.0) {
        let mut counts = CountTables::new();
        for (i, &m) in masses.iter().enumerate() {
            counts.add_chunk_marginal(hvm_core::model::ChunkId(i as u32), m);
        }
        let before = counts.clone();
        counts.decay(theta);
        for (c, m) in counts.chunk_marginals() {
            prop_assert!(m <= before.chunk_marginal(c));
        }
    }

    #[test]
    fn lz78_round_trips(seq in atoms(5, 300)) {
        let dict = lz78_parse(&seq);
        prop_assert_eq!(lz78_decode(dict.tokens()).unwrap(), seq);
    }

    #[test]
    fn al_nll_depends_only_on_atom_counts(seq in atoms(4, 60), probe in atoms(4, 12), split in 1usize..8) {
        // Without decay the model is a bigram count table, so presenting the
        // same trials in reverse order cannot change any likelihood.
        let trials: Vec<Vec<Atom>> = seq.chunks(split).map(<[Atom]>::to_vec).collect();
        let reversed: Vec<Vec<Atom>> = trials.iter().rev().cloned().collect();
        let a = al_train(&trials, 1.0).unwrap();
        let b = al_train(&reversed, 1.0).unwrap();
        prop_assert!((a.nll(&probe, 1e-6) - b.nll(&probe, 1e-6)).abs() < 1e-9);
    }

    #[test]
    fn symbol_tables_round_trip(text in "\\PC{0,80}") {
        let mut table = SymbolTable::new();
        let atoms = table.tokenize(&text);
        prop_assert_eq!(table.detokenize(&atoms).unwrap(), text);
    }

    #[test]
    fn snippets_are_seeded(text in "[a-e ]{20,80}", len in 1usize..20, seed in any::<u64>()) {
        prop_assert_eq!(snippet_from_text(&text, len, seed).unwrap(), snippet_from_text(&text, len, seed).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generator_replays_and_emits_only_atoms(alphabet in 1usize..6, depth in 0usize..7, len in 1usize..200, seed in any::<u64>()) {
        let config = GenConfig { alphabet_size: alphabet, depth, seq_length: len, seed };
        let (inv, seq, gt) = generate(&config).unwrap();
        let again = generate(&config).unwrap();
        prop_assert_eq!(&(inv.clone(), seq.clone(), gt.clone()), &again);
        prop_assert_eq!(seq.len(), len);
        prop_assert!(seq.iter().all(|a| (a.0 as usize) < alphabet));
        // Categories only reference earlier objects, so grounding terminates.
        for (i, obj) in inv.objects.iter().enumerate() {
            if let Object::Composite(parts) = obj {
                for e in parts {
                    if let Element::Object(o) = e {
                        prop_assert!((o.0 as usize) < i);
                    }
                }
            }
        }
        let mut rebuilt = Vec::new();
        for d in &gt.draws {
            rebuilt.extend_from_slice(&d.atoms[..d.kept]);
        }
        prop_assert_eq!(rebuilt, seq);
    }

    #[test]
    fn learning_keeps_the_inventory_complete_and_valid(seed in any::<u64>(), len in 20usize..120, hvm in any::<bool>()) {
        let mode = if hvm { Mode::Hvm } else { Mode::Hcm };
        let (seq, inv) = learned(seed, len, mode);
        prop_assert!(inv.validate().is_ok());
        for a in 0..3 {
            prop_assert!(inv.contains_atom(Atom(a)));
        }
        if mode == Mode::Hcm {
            prop_assert_eq!(inv.num_variables(), 0);
        }
        let graph = ParsingGraph::build(&inv);
        let parse = Parser::new(&graph, &inv).parse(&seq).unwrap();
        prop_assert_eq!(ground_outcome(&inv, &parse).unwrap(), seq);
        prop_assert!(nll_independent(&parse, &inv, 1e-6).is_finite());
        prop_assert!(nll_conditional(&parse, &inv, 1e-6).is_finite());
    }

    #[test]
    fn complexity_measures_are_consistent(seed in any::<u64>(), len in 20usize..120) {
        let (_, inv) = learned(seed, len, Mode::Hvm);
        let rc = representation_complexity(&inv, 1e-6);
        prop_assert!(rc.rc_v >= 0.0 && rc.rc_g >= rc.rc_v);
        let h = representation_entropy(&inv);
        prop_assert!(h >= 0.0);
        let p = chunk_distribution(&inv);
        if !p.is_empty() {
            prop_assert!((p.values().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let deterministic = inv.variables().all(|v| v.conditional_probs(0.0).iter().filter(|&&q| q > 0.0).count() <= 1);
        if deterministic {
            prop_assert!(h.abs() < 1e-12);
        }
    }
}
