//! Comparison models: LZ78 dictionary compression and a first-order
//! associative learner over atoms.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{coding_efficiency, compression_ratio};
use crate::model::Atom;

/// One emitted LZ78 token: a known phrase followed by one atom. Only the
/// final token may lack the trailing atom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lz78Token {
    pub phrase: u32,
    pub next: Option<Atom>,
}

/// Phrase table and token stream. Phrase 0 is the empty phrase.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Lz78Dictionary {
    /// (parent phrase, extension) for phrases 1..; index i holds phrase i+1.
    phrases: Vec<(u32, Atom)>,
    tokens: Vec<Lz78Token>,
}

impl Lz78Dictionary {
    /// Number of phrases learned (the empty phrase excluded).
    pub fn num_phrases(&self) -> usize {
        self.phrases.len()
    }

    /// Number of emitted tokens |W|.
    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }

    pub fn tokens(&self) -> &[Lz78Token] {
        &self.tokens
    }

    /// Atoms spelled by phrase `id`.
    pub fn phrase(&self, id: u32) -> Option<Vec<Atom>> {
        spell(&self.phrases, id)
    }

    /// Atoms spelled by each emitted token.
    pub fn token_strings(&self) -> Vec<Vec<Atom>> {
        self.tokens
            .iter()
            .map(|t| {
                let mut s = spell(&self.phrases, t.phrase).expect("tokens refer to known phrases");
                s.extend(t.next);
                s
            })
            .collect()
    }
}

fn spell(phrases: &[(u32, Atom)], id: u32) -> Option<Vec<Atom>> {
    let mut out = Vec::new();
    let mut cur = id;
    while cur != 0 {
        let &(parent, atom) = phrases.get(cur as usize - 1)?;
        if parent >= cur {
            return None;
        }
        out.push(atom);
        cur = parent;
    }
    out.reverse();
    Some(out)
}

/// Incremental LZ78 parse: the longest known phrase plus the next atom
/// becomes a new phrase. A trailing known phrase is emitted without an atom.
pub fn lz78_parse(seq: &[Atom]) -> Lz78Dictionary {
    let mut dict = Lz78Dictionary::default();
    let mut trie: HashMap<(u32, Atom), u32> = HashMap::new();
    let mut cur = 0u32;
    for &a in seq {
        match trie.get(&(cur, a)) {
            Some(&next) => cur = next,
            None => {
                dict.phrases.push((cur, a));
                let id = dict.phrases.len() as u32;
                trie.insert((cur, a), id);
                dict.tokens.push(Lz78Token {
                    phrase: cur,
                    next: Some(a),
                });
                cur = 0;
            }
        }
    }
    if cur != 0 {
        dict.tokens.push(Lz78Token {
            phrase: cur,
            next: None,
        });
    }
    dict
}

/// Rebuilds the sequence from a token stream, rejecting references to
/// phrases not yet defined and atom-less tokens before the end.
pub fn lz78_decode(tokens: &[Lz78Token]) -> Result<Vec<Atom>> {
    let mut phrases: Vec<(u32, Atom)> = Vec::new();
    let mut out = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        if t.phrase as usize > phrases.len() {
            return Err(Error::MalformedToken {
                index: i,
                reason: "refers to an undefined phrase",
            });
        }
        let mut s = spell(&phrases, t.phrase).ok_or(Error::MalformedToken {
            index: i,
            reason: "phrase table is inconsistent",
        })?;
        match t.next {
            Some(a) => {
                s.push(a);
                phrases.push((t.phrase, a));
            }
            None if i + 1 == tokens.len() && t.phrase != 0 => {}
            None => {
                return Err(Error::MalformedToken {
                    index: i,
                    reason: "only a final nonempty token may omit its atom",
                })
            }
        }
        out.extend(s);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Lz78Metrics {
    pub parse_len: usize,
    pub phrases: usize,
    pub compression_ratio: f64,
    pub coding_efficiency: f64,
    pub nll: f64,
}

/// Ratio, efficiency and a phrase-frequency NLL: each token costs
/// −log of the share of tokens spelling the same string.
pub fn lz78_metrics(dict: &Lz78Dictionary, seq_len: usize, eps: f64) -> Result<Lz78Metrics> {
    let strings = dict.token_strings();
    let mut freq: HashMap<&[Atom], f64> = HashMap::new();
    for s in &strings {
        *freq.entry(s.as_slice()).or_insert(0.0) += 1.0;
    }
    let n = strings.len() as f64;
    let nll = strings.iter().map(|s| -(freq[s.as_slice()] / n).max(eps).ln()).sum();
    Ok(Lz78Metrics {
        parse_len: dict.num_tokens(),
        phrases: dict.num_phrases(),
        compression_ratio: compression_ratio(dict.num_tokens(), seq_len)?,
        coding_efficiency: coding_efficiency(dict.num_phrases(), seq_len)?,
        nll,
    })
}

/// First-order transitions between atoms with multiplicative decay.
#[derive(Clone, Debug, PartialEq)]
pub struct AlModel {
    theta: f64,
    alphabet: BTreeSet<Atom>,
    marginals: BTreeMap<Atom, f64>,
    transitions: BTreeMap<(Atom, Atom), f64>,
}

impl AlModel {
    pub fn new(theta: f64, alphabet: impl IntoIterator<Item = Atom>) -> Result<Self> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::InvalidArgument(format!("theta must lie in (0, 1], got {theta}")));
        }
        Ok(AlModel {
            theta,
            alphabet: alphabet.into_iter().collect(),
            marginals: BTreeMap::new(),
            transitions: BTreeMap::new(),
        })
    }

    pub fn marginal(&self, a: Atom) -> f64 {
        self.marginals.get(&a).copied().unwrap_or(0.0)
    }

    pub fn transition(&self, l: Atom, r: Atom) -> f64 {
        self.transitions.get(&(l, r)).copied().unwrap_or(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.marginals.is_empty()
    }

    fn decay(&mut self) {
        if self.theta < 1.0 {
            for v in self.marginals.values_mut() {
                *v *= self.theta;
            }
            for v in self.transitions.values_mut() {
                *v *= self.theta;
            }
        }
    }

    /// Learns one trial; every atom is a decay step and no bigram crosses
    /// into the next trial.
    pub fn observe(&mut self, trial: &[Atom]) {
        let mut prev = None;
        for &a in trial {
            self.decay();
            self.alphabet.insert(a);
            *self.marginals.entry(a).or_insert(0.0) += 1.0;
            if let Some(p) = prev {
                *self.transitions.entry((p, a)).or_insert(0.0) += 1.0;
            }
            prev = Some(a);
        }
    }

    fn marginal_prob(&self, a: Atom) -> f64 {
        let total: f64 = self.marginals.values().sum();
        if total > 0.0 {
            self.marginal(a) / total
        } else {
            1.0 / self.alphabet.len().max(1) as f64
        }
    }

    /// P(r | l), backing off to the marginal of `r` when `l` has no
    /// recorded successors.
    pub fn conditional(&self, l: Atom, r: Atom) -> f64 {
        let row: f64 = self
            .transitions
            .range((l, Atom(0))..=(l, Atom(u32::MAX)))
            .map(|(_, &v)| v)
            .sum();
        if row > 0.0 {
            self.transition(l, r) / row
        } else {
            self.marginal_prob(r)
        }
    }

    /// −log P(s₁) − Σ log P(sᵢ | sᵢ₋₁) with probabilities floored at `eps`.
    pub fn nll(&self, seq: &[Atom], eps: f64) -> f64 {
        let mut nll = 0.0;
        let mut prev = None;
        for &a in seq {
            let p = match prev {
                None => self.marginal_prob(a),
                Some(l) => self.conditional(l, a),
            };
            nll -= p.max(eps).ln();
            prev = Some(a);
        }
        nll
    }
}

pub fn al_train(trials: &[Vec<Atom>], theta: f64) -> Result<AlModel> {
    let alphabet: BTreeSet<Atom> = trials.iter().flatten().copied().collect();
    let mut model = AlModel::new(theta, alphabet)?;
    for t in trials {
        model.observe(t);
    }
    Ok(model)
}

pub fn al_nll(model: &AlModel, seq: &[Atom], eps: f64) -> f64 {
    model.nll(seq, eps)
}
