//! Text and file input/output: character atomization, snippet sampling,
//! integer sequences and model files.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::generator::{stream_rng, SAMPLE_STREAM};
use crate::model::{Atom, Inventory};

/// Bijection between characters and atoms, assigned in first-seen order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SymbolTable {
    to_atom: HashMap<char, Atom>,
    symbols: Vec<char>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn atom(&self, ch: char) -> Option<Atom> {
        self.to_atom.get(&ch).copied()
    }

    pub fn symbol(&self, atom: Atom) -> Option<char> {
        self.symbols.get(atom.0 as usize).copied()
    }

    /// Atom for `ch`, allocating the next id on first sight.
    pub fn intern(&mut self, ch: char) -> Atom {
        if let Some(&a) = self.to_atom.get(&ch) {
            return a;
        }
        let a = Atom(self.symbols.len() as u32);
        self.symbols.push(ch);
        self.to_atom.insert(ch, a);
        a
    }

    pub fn tokenize(&mut self, text: &str) -> Vec<Atom> {
        text.chars().map(|c| self.intern(c)).collect()
    }

    pub fn detokenize(&self, atoms: &[Atom]) -> Result<String> {
        atoms
            .iter()
            .map(|&a| self.symbol(a).ok_or(Error::UnknownAtom(a)))
            .collect()
    }

    /// Symbols in atom order.
    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }
}

/// A `length`-character window of `text` at a seeded uniform offset.
pub fn snippet_from_text(text: &str, length: usize, seed: u64) -> Result<(Vec<Atom>, SymbolTable)> {
    let chars: Vec<char> = text.chars().collect();
    if length == 0 || chars.len() < length {
        return Err(Error::InsufficientData {
            needed: length.max(1),
            available: chars.len(),
        });
    }
    let mut rng = stream_rng(seed, SAMPLE_STREAM);
    let start = rng.random_range(0..=chars.len() - length);
    let mut table = SymbolTable::new();
    let seq = chars[start..start + length].iter().map(|&c| table.intern(c)).collect();
    Ok((seq, table))
}

pub fn load_snippet(path: impl AsRef<Path>, length: usize, seed: u64) -> Result<(Vec<Atom>, SymbolTable)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    snippet_from_text(&text, length, seed)
}

/// Every character of a text file, atomized in first-seen order.
pub fn load_text(path: impl AsRef<Path>) -> Result<(Vec<Atom>, SymbolTable)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut table = SymbolTable::new();
    let seq = table.tokenize(&text);
    Ok((seq, table))
}

/// Whitespace-separated nonnegative integers.
pub fn parse_int_sequence(text: &str) -> Result<Vec<Atom>> {
    text.split_whitespace()
        .enumerate()
        .map(|(index, tok)| {
            tok.parse::<u32>().map(Atom).map_err(|_| Error::MalformedSequence {
                index,
                token: tok.chars().take(32).collect(),
            })
        })
        .collect()
}

pub fn format_int_sequence(seq: &[Atom]) -> String {
    let mut out = seq.iter().map(|a| a.0.to_string()).collect::<Vec<_>>().join(" ");
    out.push('\n');
    out
}

pub fn read_int_sequence(path: impl AsRef<Path>) -> Result<Vec<Atom>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_int_sequence(&text)
}

pub fn write_int_sequence(path: impl AsRef<Path>, seq: &[Atom]) -> Result<()> {
    write_text(path, &format_int_sequence(seq))
}

pub fn save_model(path: impl AsRef<Path>, inv: &Inventory) -> Result<()> {
    write_text(path, &inv.to_json())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Inventory> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Inventory::from_json(&text)
}

/// Writes `contents` to `path`, creating parent directories. The other
/// writers in this module go through here.
pub fn write_text(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{atom_terms, ChunkId, Term};

    #[test]
    fn symbols_assigned_on_demand() {
        let mut t = SymbolTable::new();
        assert_eq!(t.tokenize("aaa"), vec![Atom(0); 3]);
        assert_eq!(t.atom('b'), None);
        assert_eq!(t.intern('b'), Atom(1));
        let text = "the cat, the hat · ünïcode";
        let atoms = t.tokenize(text);
        assert_eq!(t.detokenize(&atoms).unwrap(), text);
        assert!(t.detokenize(&[Atom(999)]).is_err());
    }

    #[test]
    fn snippet_examples() {
        let (seq, table) = snippet_from_text("aaa", 3, 0).unwrap();
        assert_eq!(seq, vec![Atom(0); 3]);
        assert_eq!(table.len(), 1);
        let text = "abcdefghijklmnopqrstuvwxyz".repeat(4);
        let a = snippet_from_text(&text, 10, 42).unwrap();
        let b = snippet_from_text(&text, 10, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0.len(), 10);
        assert!(matches!(
            snippet_from_text("abc", 4, 0),
            Err(Error::InsufficientData {
                needed: 4,
                available: 3
            })
        ));
    }

    #[test]
    fn snippet_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("text.txt");
        fs::write(&path, "aaab").unwrap();
        let (seq, table) = load_snippet(&path, 4, 1).unwrap();
        assert_eq!(table.detokenize(&seq).unwrap(), "aaab");
        assert!(matches!(
            load_snippet(dir.path().join("missing"), 1, 0),
            Err(Error::Io { .. })
        ));
        assert!(load_snippet(&path, 5, 0).is_err());
        let (seq, table) = load_text(&path).unwrap();
        assert_eq!(seq, vec![Atom(0), Atom(0), Atom(0), Atom(1)]);
        assert_eq!(table.symbols(), &['a', 'b']);
    }

    #[test]
    fn integer_sequences() {
        assert_eq!(
            parse_int_sequence(" 1 2\n3\t0 ").unwrap(),
            vec![Atom(1), Atom(2), Atom(3), Atom(0)]
        );
        assert!(matches!(
            parse_int_sequence("1 x 2"),
            Err(Error::MalformedSequence { index: 1, .. })
        ));
        assert!(parse_int_sequence("-1").is_err());
        let seq = vec![Atom(4), Atom(0), Atom(9)];
        assert_eq!(parse_int_sequence(&format_int_sequence(&seq)).unwrap(), seq);
    }

    #[test]
    fn model_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let empty = Inventory::with_atoms([Atom(0)]);
        save_model(&path, &empty).unwrap();
        assert_eq!(load_model(&path).unwrap(), empty);

        let mut inv = Inventory::with_atoms((0..3).map(Atom));
        let ab = inv.add_chunk(atom_terms(&[0, 1])).unwrap();
        let v = inv.add_variable(vec![ab, ChunkId(2)], vec![1.0, 2.0]).unwrap();
        let outer = inv.add_chunk(vec![Term::Atom(Atom(2)), Term::var(v)]).unwrap();
        let w = inv.add_variable(vec![outer, ab], vec![0.5, 0.5]).unwrap();
        inv.add_chunk(vec![Term::var(w), Term::Atom(Atom(0))]).unwrap();
        inv.counts.add_transition(ab, outer, 3.0);
        save_model(&path, &inv).unwrap();
        assert_eq!(load_model(&path).unwrap(), inv);

        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert_eq!(load_model(&path).unwrap_err().kind(), "parse-error");
    }
}
