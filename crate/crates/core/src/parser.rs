//! Prefix-trie parsing graph and greedy deepest-match parsing.
//!
//! Every node of the graph is a chunk; a node's parent is the deepest other
//! chunk whose term list is a strict prefix of its own. Identification walks
//! the graph from the roots, testing each node against the upcoming input and
//! descending only into consistent nodes. The number of node tests is the
//! parsing search step count (PSS).
//!
//! A variable term is consistent when one of its denotees is. Denotees are
//! tried in descending denote count, ties in insertion order, and the first
//! consistent one is kept; there is no backtracking over binding choices.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Atom, Chunk, ChunkId, Inventory, Term, VarId};

#[derive(Clone, Debug, PartialEq)]
struct Node {
    chunk: ChunkId,
    terms: Vec<Term>,
    parent: Option<usize>,
    children: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsingGraph {
    nodes: Vec<Node>,
    roots: Vec<usize>,
    index: HashMap<ChunkId, usize>,
}

fn is_strict_prefix(prefix: &[Term], of: &[Term]) -> bool {
    prefix.len() < of.len() && of[..prefix.len()] == *prefix
}

impl ParsingGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Graph over every chunk of `inv`, inserted in id order.
    pub fn build(inv: &Inventory) -> Self {
        let mut g = Self::new();
        for c in inv.chunks() {
            g.insert_chunk(c).expect("inventory chunks are unique");
        }
        g
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, chunk: ChunkId) -> bool {
        self.index.contains_key(&chunk)
    }

    pub fn roots(&self) -> Vec<ChunkId> {
        self.roots.iter().map(|&i| self.nodes[i].chunk).collect()
    }

    pub fn children(&self, chunk: ChunkId) -> Option<Vec<ChunkId>> {
        let &i = self.index.get(&chunk)?;
        Some(self.nodes[i].children.iter().map(|&c| self.nodes[c].chunk).collect())
    }

    pub fn parent(&self, chunk: ChunkId) -> Option<ChunkId> {
        let &i = self.index.get(&chunk)?;
        self.nodes[i].parent.map(|p| self.nodes[p].chunk)
    }

    /// Attaches `chunk` under the deepest node whose terms are a strict
    /// prefix of its own, or as a new root. Existing siblings that extend the
    /// new chunk are moved beneath it.
    pub fn insert_chunk(&mut self, chunk: &Chunk) -> Result<()> {
        if let Some(&i) = self.index.get(&chunk.id) {
            return Err(Error::DuplicateChunk(self.nodes[i].chunk));
        }
        let terms = &chunk.terms;
        let mut parent: Option<usize> = None;
        loop {
            let level = match parent {
                None => &self.roots,
                Some(p) => &self.nodes[p].children,
            };
            if let Some(&same) = level.iter().find(|&&n| self.nodes[n].terms == *terms) {
                return Err(Error::DuplicateChunk(self.nodes[same].chunk));
            }
            match level
                .iter()
                .copied()
                .find(|&n| is_strict_prefix(&self.nodes[n].terms, terms))
            {
                Some(next) => parent = Some(next),
                None => break,
            }
        }

        let id = self.nodes.len();
        let level = match parent {
            None => &self.roots,
            Some(p) => &self.nodes[p].children,
        };
        let (adopted, kept): (Vec<usize>, Vec<usize>) = level
            .iter()
            .copied()
            .partition(|&n| is_strict_prefix(terms, &self.nodes[n].terms));
        let level = match parent {
            None => &mut self.roots,
            Some(p) => &mut self.nodes[p].children,
        };
        *level = kept;
        level.push(id);
        for &a in &adopted {
            self.nodes[a].parent = Some(id);
        }
        self.nodes.push(Node {
            chunk: chunk.id,
            terms: terms.clone(),
            parent,
            children: adopted,
        });
        self.index.insert(chunk.id, id);
        Ok(())
    }

    /// Checks the trie invariants: strict-prefix parents, siblings that are
    /// not prefixes of one another, and consistent parent/child links.
    pub fn validate(&self) -> Result<()> {
        let check_level = |level: &[usize]| -> Result<()> {
            for (i, &a) in level.iter().enumerate() {
                for &b in &level[i + 1..] {
                    let (ta, tb) = (&self.nodes[a].terms, &self.nodes[b].terms);
                    if ta == tb || is_strict_prefix(ta, tb) || is_strict_prefix(tb, ta) {
                        return Err(Error::InvalidArgument(format!(
                            "siblings {} and {} are prefix-related",
                            self.nodes[a].chunk, self.nodes[b].chunk
                        )));
                    }
                }
            }
            Ok(())
        };
        check_level(&self.roots)?;
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = self.roots.clone();
        for &r in &self.roots {
            if self.nodes[r].parent.is_some() {
                return Err(Error::InvalidArgument("root with a parent".into()));
            }
        }
        while let Some(n) = stack.pop() {
            if seen[n] {
                return Err(Error::InvalidArgument("node reachable twice".into()));
            }
            seen[n] = true;
            let node = &self.nodes[n];
            check_level(&node.children)?;
            for &c in &node.children {
                if self.nodes[c].parent != Some(n) || !is_strict_prefix(&node.terms, &self.nodes[c].terms) {
                    return Err(Error::InvalidArgument(format!(
                        "{} is not a strict-prefix child of {}",
                        self.nodes[c].chunk, node.chunk
                    )));
                }
                stack.push(c);
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument("unreachable node".into()));
        }
        Ok(())
    }

    /// Σ over the root-to-chunk path of each node's sibling count (the number
    /// of comparisons made at that level when everything there is tested).
    pub fn path_pss(&self, chunk: ChunkId) -> Result<usize> {
        let mut i = *self.index.get(&chunk).ok_or(Error::UnknownChunk(chunk))?;
        let mut total = 0;
        loop {
            match self.nodes[i].parent {
                Some(p) => {
                    total += self.nodes[p].children.len();
                    i = p;
                }
                None => {
                    total += self.roots.len();
                    return Ok(total);
                }
            }
        }
    }

    /// Expected parsing search steps under a chunk distribution.
    pub fn expected_pss(&self, probs: &BTreeMap<ChunkId, f64>) -> Result<f64> {
        let total: f64 = probs.values().sum();
        if probs.values().any(|p| !p.is_finite() || *p < 0.0) || (total - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidDistribution(total));
        }
        let mut e = 0.0;
        for (&c, &p) in probs {
            e += p * self.path_pss(c)? as f64;
        }
        Ok(e)
    }

    /// (min, max) path PSS over the chunks with positive probability.
    pub fn pss_bounds(&self, probs: &BTreeMap<ChunkId, f64>) -> Result<(usize, usize)> {
        let mut lo = usize::MAX;
        let mut hi = 0;
        for (&c, &p) in probs {
            if p > 0.0 {
                let s = self.path_pss(c)?;
                lo = lo.min(s);
                hi = hi.max(s);
            }
        }
        if hi == 0 {
            return Err(Error::DegenerateDistribution);
        }
        Ok((lo, hi))
    }
}

/// A variable resolved to one of its denotees during matching.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub var: VarId,
    pub chunk: ChunkId,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bindings: Vec<Binding>,
}

impl Binding {
    /// Calls `f` on this binding and every nested one.
    pub fn visit(&self, f: &mut impl FnMut(&Binding)) {
        f(self);
        for b in &self.bindings {
            b.visit(f);
        }
    }
}

/// Result of identifying one chunk at a position.
#[derive(Clone, Debug, PartialEq)]
pub struct Identified {
    pub chunk: ChunkId,
    pub bindings: Vec<Binding>,
    pub len: usize,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParsedChunk {
    pub chunk: ChunkId,
    pub start: usize,
    pub len: usize,
    pub bindings: Vec<Binding>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParseOutcome {
    pub parsed: Vec<ParsedChunk>,
    /// Search steps spent on each parsed chunk.
    pub steps: Vec<usize>,
}

impl ParseOutcome {
    /// Parse length |W|.
    pub fn len(&self) -> usize {
        self.parsed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parsed.is_empty()
    }

    pub fn total_steps(&self) -> usize {
        self.steps.iter().sum()
    }

    pub fn mean_steps(&self) -> f64 {
        if self.steps.is_empty() {
            0.0
        } else {
            self.total_steps() as f64 / self.steps.len() as f64
        }
    }

    pub fn chunk_ids(&self) -> impl Iterator<Item = ChunkId> + '_ {
        self.parsed.iter().map(|p| p.chunk)
    }

    /// One JSON object per parsed chunk, newline separated.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for p in &self.parsed {
            out.push_str(&serde_json::to_string(p).expect("parsed chunk serializes"));
            out.push('\n');
        }
        out
    }
}

/// Greedy matcher over a fixed inventory snapshot.
pub struct Matcher<'a> {
    inv: &'a Inventory,
    denotee_order: HashMap<VarId, Vec<ChunkId>>,
    depth_limit: usize,
}

impl<'a> Matcher<'a> {
    pub fn new(inv: &'a Inventory) -> Self {
        let denotee_order = inv
            .variables()
            .map(|v| {
                let mut order: Vec<(usize, ChunkId, f64)> = v
                    .denotees
                    .iter()
                    .zip(&v.denote_counts)
                    .enumerate()
                    .map(|(i, (&c, &n))| (i, c, n))
                    .collect();
                order.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
                (v.id, order.into_iter().map(|(_, c, _)| c).collect())
            })
            .collect();
        Matcher {
            inv,
            denotee_order,
            depth_limit: inv.num_variables() + 1,
        }
    }

    pub fn inventory(&self) -> &'a Inventory {
        self.inv
    }

    /// Matches `terms` at `pos`, returning the covered length and bindings.
    pub fn match_terms(&self, terms: &[Term], seq: &[Atom], pos: usize) -> Option<(usize, Vec<Binding>)> {
        self.match_terms_at_depth(terms, seq, pos, 0)
    }

    pub fn match_chunk(&self, chunk: ChunkId, seq: &[Atom], pos: usize) -> Option<(usize, Vec<Binding>)> {
        let c = self.inv.get_chunk(chunk)?;
        self.match_terms_at_depth(&c.terms, seq, pos, 0)
    }

    fn match_terms_at_depth(
        &self,
        terms: &[Term],
        seq: &[Atom],
        pos: usize,
        depth: usize,
    ) -> Option<(usize, Vec<Binding>)> {
        if depth > self.depth_limit {
            return None;
        }
        let mut cur = pos;
        let mut bindings = Vec::new();
        for t in terms {
            match *t {
                Term::Atom(a) => {
                    if seq.get(cur) != Some(&a) {
                        return None;
                    }
                    cur += 1;
                }
                Term::Var { var } => {
                    let order = self.denotee_order.get(&var)?;
                    let (chunk, len, inner) = order.iter().find_map(|&u| {
                        let c = self.inv.get_chunk(u)?;
                        self.match_terms_at_depth(&c.terms, seq, cur, depth + 1)
                            .map(|(len, inner)| (u, len, inner))
                    })?;
                    bindings.push(Binding {
                        var,
                        chunk,
                        bindings: inner,
                    });
                    cur += len;
                }
            }
        }
        Some((cur - pos, bindings))
    }
}

/// Trie-backed parser.
pub struct Parser<'a> {
    graph: &'a ParsingGraph,
    matcher: Matcher<'a>,
}

impl<'a> Parser<'a> {
    pub fn new(graph: &'a ParsingGraph, inv: &'a Inventory) -> Self {
        Parser {
            graph,
            matcher: Matcher::new(inv),
        }
    }

    /// Deepest consistent chunk at `pos`.
    pub fn identify(&self, seq: &[Atom], pos: usize) -> Result<Identified> {
        let mut steps = 0;
        let mut best: Option<(usize, usize, Vec<Binding>)> = None;
        self.explore(&self.graph.roots, seq, pos, &mut steps, &mut best);
        match best {
            Some((node, len, bindings)) => Ok(Identified {
                chunk: self.graph.nodes[node].chunk,
                bindings,
                len,
                steps,
            }),
            None => Err(Error::CompletenessViolation(pos)),
        }
    }

    fn explore(
        &self,
        level: &[usize],
        seq: &[Atom],
        pos: usize,
        steps: &mut usize,
        best: &mut Option<(usize, usize, Vec<Binding>)>,
    ) {
        for &n in level {
            *steps += 1;
            let node = &self.graph.nodes[n];
            if let Some((len, bindings)) = self.matcher.match_terms(&node.terms, seq, pos) {
                if len > 0 && best.as_ref().is_none_or(|b| len > b.1) {
                    *best = Some((n, len, bindings));
                }
                self.explore(&node.children, seq, pos, steps, best);
            }
        }
    }

    pub fn parse(&self, seq: &[Atom]) -> Result<ParseOutcome> {
        let mut out = ParseOutcome::default();
        let mut pos = 0;
        while pos < seq.len() {
            let id = self.identify(seq, pos)?;
            out.parsed.push(ParsedChunk {
                chunk: id.chunk,
                start: pos,
                len: id.len,
                bindings: id.bindings,
            });
            out.steps.push(id.steps);
            pos += id.len;
        }
        Ok(out)
    }
}

pub fn identify_next_chunk(graph: &ParsingGraph, inv: &Inventory, seq: &[Atom], pos: usize) -> Result<Identified> {
    if pos >= seq.len() {
        return Err(Error::InvalidArgument(format!("position {pos} is past the end")));
    }
    Parser::new(graph, inv).identify(seq, pos)
}

pub fn parse_sequence(graph: &ParsingGraph, inv: &Inventory, seq: &[Atom]) -> Result<ParseOutcome> {
    Parser::new(graph, inv).parse(seq)
}

/// The flat-dictionary baseline: every chunk is tested at every position
/// and the longest consistent one wins (ties go to the larger maximal
/// surface length, then the smaller id). Costs |C| steps per parse.
pub struct LinearScanner<'a> {
    matcher: Matcher<'a>,
    order: Vec<ChunkId>,
}

impl<'a> LinearScanner<'a> {
    pub fn new(inv: &'a Inventory) -> Result<Self> {
        let mut keyed = Vec::with_capacity(inv.num_chunks());
        for c in inv.chunks() {
            keyed.push((inv.max_surface_length(c.id)?, c.id));
        }
        keyed.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(LinearScanner {
            matcher: Matcher::new(inv),
            order: keyed.into_iter().map(|(_, c)| c).collect(),
        })
    }

    pub fn identify(&self, seq: &[Atom], pos: usize) -> Result<Identified> {
        let mut best: Option<(ChunkId, usize, Vec<Binding>)> = None;
        for &c in &self.order {
            if let Some((len, bindings)) = self.matcher.match_chunk(c, seq, pos) {
                if len > 0 && best.as_ref().is_none_or(|b| len > b.1) {
                    best = Some((c, len, bindings));
                }
            }
        }
        let steps = self.order.len();
        match best {
            Some((chunk, len, bindings)) => Ok(Identified {
                chunk,
                bindings,
                len,
                steps,
            }),
            None => Err(Error::CompletenessViolation(pos)),
        }
    }

    pub fn parse(&self, seq: &[Atom]) -> Result<ParseOutcome> {
        let mut out = ParseOutcome::default();
        let mut pos = 0;
        while pos < seq.len() {
            let id = self.identify(seq, pos)?;
            out.parsed.push(ParsedChunk {
                chunk: id.chunk,
                start: pos,
                len: id.len,
                bindings: id.bindings,
            });
            out.steps.push(id.steps);
            pos += id.len;
        }
        Ok(out)
    }
}

pub fn linear_scan_identify(inv: &Inventory, seq: &[Atom], pos: usize) -> Result<Identified> {
    if pos >= seq.len() {
        return Err(Error::InvalidArgument(format!("position {pos} is past the end")));
    }
    LinearScanner::new(inv)?.identify(seq, pos)
}

/// Expands a parsed chunk back into atoms using its recorded bindings.
pub fn ground(inv: &Inventory, chunk: ChunkId, bindings: &[Binding]) -> Result<Vec<Atom>> {
    let mut out = Vec::new();
    ground_into(inv, chunk, bindings, &mut out)?;
    Ok(out)
}

fn ground_into(inv: &Inventory, chunk: ChunkId, bindings: &[Binding], out: &mut Vec<Atom>) -> Result<()> {
    let c = inv.chunk(chunk)?;
    let mut next = bindings.iter();
    for t in &c.terms {
        match *t {
            Term::Atom(a) => out.push(a),
            Term::Var { var } => {
                let b = next
                    .next()
                    .filter(|b| b.var == var)
                    .ok_or(Error::UnknownVariable(var))?;
                if !inv.variable(var)?.denotes(b.chunk) {
                    return Err(Error::UnknownChunk(b.chunk));
                }
                ground_into(inv, b.chunk, &b.bindings, out)?;
            }
        }
    }
    Ok(())
}

/// Concatenation of every parsed chunk's grounding.
pub fn ground_outcome(inv: &Inventory, outcome: &ParseOutcome) -> Result<Vec<Atom>> {
    let mut out = Vec::new();
    for p in &outcome.parsed {
        ground_into(inv, p.chunk, &p.bindings, &mut out)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::atom_terms;

    fn seq(s: &str) -> Vec<Atom> {
        s.bytes().map(|b| Atom((b - b'0') as u32)).collect()
    }

    /// Inventory over atoms 0..4 with the given extra plain chunks.
    fn inventory(extra: &[&str]) -> Inventory {
        let mut inv = Inventory::with_atoms((0..4).map(Atom));
        for e in extra {
            let terms: Vec<u32> = e.bytes().map(|b| (b - b'0') as u32).collect();
            inv.add_chunk(atom_terms(&terms)).unwrap();
        }
        inv
    }

    fn chunk_of(inv: &Inventory, s: &str) -> ChunkId {
        let terms: Vec<u32> = s.bytes().map(|b| (b - b'0') as u32).collect();
        inv.find_chunk(&atom_terms(&terms)).unwrap()
    }

    #[test]
    fn insert_attaches_under_deepest_prefix() {
        let inv = inventory(&["12", "13"]);
        let g = ParsingGraph::build(&inv);
        let one = chunk_of(&inv, "1");
        assert_eq!(
            g.children(one).unwrap(),
            vec![chunk_of(&inv, "12"), chunk_of(&inv, "13")]
        );
        g.validate().unwrap();
    }

    #[test]
    fn insert_without_prefix_creates_root() {
        let mut inv = Inventory::with_atoms((0..3).map(Atom));
        let mut g = ParsingGraph::build(&inv);
        assert_eq!(g.roots().len(), 3);
        let four = inv.add_atom(Atom(4));
        g.insert_chunk(inv.chunk(four).unwrap()).unwrap();
        assert_eq!(g.roots().len(), 4);
        assert_eq!(g.roots()[3], four);
    }

    #[test]
    fn insert_variable_suffix_under_its_prefix() {
        let mut inv = inventory(&["12", "00"]);
        let v = inv
            .add_variable(vec![chunk_of(&inv, "00"), chunk_of(&inv, "12")], vec![0.0, 0.0])
            .unwrap();
        let mut terms = atom_terms(&[1, 2]);
        terms.push(Term::var(v));
        terms.push(Term::Atom(Atom(0)));
        let c = inv.add_chunk(terms).unwrap();
        let g = ParsingGraph::build(&inv);
        assert_eq!(g.parent(c), Some(chunk_of(&inv, "12")));
    }

    #[test]
    fn duplicate_insert_is_rejected() {
        let inv = inventory(&["12"]);
        let mut g = ParsingGraph::build(&inv);
        let c = inv.chunk(chunk_of(&inv, "12")).unwrap().clone();
        assert!(matches!(g.insert_chunk(&c), Err(Error::DuplicateChunk(_))));
        let twin = Chunk {
            id: ChunkId(99),
            terms: c.terms.clone(),
        };
        assert!(matches!(g.insert_chunk(&twin), Err(Error::DuplicateChunk(_))));
    }

    #[test]
    fn shorter_chunk_adopts_longer_siblings() {
        let mut inv = inventory(&["123"]);
        let mut g = ParsingGraph::build(&inv);
        let long = chunk_of(&inv, "123");
        assert_eq!(g.parent(long), Some(chunk_of(&inv, "1")));
        let mid = inv.add_chunk(atom_terms(&[1, 2])).unwrap();
        g.insert_chunk(inv.chunk(mid).unwrap()).unwrap();
        assert_eq!(g.parent(long), Some(mid));
        assert_eq!(g.parent(mid), Some(chunk_of(&inv, "1")));
        g.validate().unwrap();
        assert_eq!(g, ParsingGraph::build(&inv));
    }

    #[test]
    fn concrete_parse_from_appendix_set_up() {
        let inv = inventory(&["21", "211", "12", "2112"]);
        let g = ParsingGraph::build(&inv);
        let s = seq("010021002112000");
        let first = identify_next_chunk(&g, &inv, &s, 0).unwrap();
        assert_eq!(first.chunk, chunk_of(&inv, "0"));
        assert_eq!(first.len, 1);
        let out = parse_sequence(&g, &inv, &s).unwrap();
        let pieces: Vec<usize> = out.parsed.iter().map(|p| p.len).collect();
        assert_eq!(pieces, vec![1, 1, 1, 1, 2, 1, 1, 4, 1, 1, 1]);
        assert_eq!(out.len(), 11);
        assert_eq!(ground_outcome(&inv, &out).unwrap(), s);
    }

    #[test]
    fn variable_parse_from_appendix_set_up() {
        let mut inv = inventory(&["00", "12", "0100", "000"]);
        let v = inv
            .add_variable(vec![chunk_of(&inv, "00"), chunk_of(&inv, "12")], vec![0.0, 0.0])
            .unwrap();
        let mut terms = atom_terms(&[2, 1]);
        terms.push(Term::var(v));
        let c21v = inv.add_chunk(terms).unwrap();
        let g = ParsingGraph::build(&inv);
        let s = seq("010021002112000");

        let at4 = identify_next_chunk(&g, &inv, &s, 4).unwrap();
        assert_eq!(at4.chunk, c21v);
        assert_eq!(at4.len, 4);
        assert_eq!(
            at4.bindings,
            vec![Binding {
                var: v,
                chunk: chunk_of(&inv, "00"),
                bindings: vec![]
            }]
        );

        let out = parse_sequence(&g, &inv, &s).unwrap();
        let ids: Vec<ChunkId> = out.chunk_ids().collect();
        assert_eq!(ids, vec![chunk_of(&inv, "0100"), c21v, c21v, chunk_of(&inv, "000")]);
        assert_eq!(ground_outcome(&inv, &out).unwrap(), s);
    }

    #[test]
    fn atoms_only_flat_trie() {
        let inv = Inventory::with_atoms((0..3).map(Atom));
        let g = ParsingGraph::build(&inv);
        let s = seq("000");
        let out = parse_sequence(&g, &inv, &s).unwrap();
        assert_eq!(out.len(), 3);
        assert!(out.steps.iter().all(|&st| st <= 3));
        let id = identify_next_chunk(&g, &inv, &seq("2"), 0).unwrap();
        assert_eq!(id.steps, 3);
    }

    #[test]
    fn linear_scan_appendix_dictionary() {
        // dictionary {0,1,21,211,12,2112}; atom 2 is absent so 21 is a root
        let mut inv = Inventory::with_atoms([Atom(0), Atom(1), Atom(2)]);
        let two = inv.atom_chunk(Atom(2)).unwrap();
        for t in ["21", "211", "12", "2112"] {
            let terms: Vec<u32> = t.bytes().map(|b| (b - b'0') as u32).collect();
            inv.add_chunk(atom_terms(&terms)).unwrap();
        }
        let _ = two;
        let s = seq("010021002112000");
        let scan = linear_scan_identify(&inv, &s, 4).unwrap();
        assert_eq!(scan.chunk, chunk_of(&inv, "21"));
        assert_eq!(scan.len, 2);
        assert_eq!(scan.steps, inv.num_chunks());
        let g = ParsingGraph::build(&inv);
        let trie = identify_next_chunk(&g, &inv, &s, 4).unwrap();
        assert_eq!(trie.chunk, scan.chunk);
        assert!(trie.steps <= scan.steps);
    }

    #[test]
    fn linear_scan_singleton() {
        let inv = Inventory::with_atoms([Atom(0)]);
        let id = linear_scan_identify(&inv, &[Atom(0)], 0).unwrap();
        assert_eq!(id.steps, 1);
    }

    #[test]
    fn unknown_atom_is_a_completeness_violation() {
        let inv = Inventory::with_atoms([Atom(0)]);
        let g = ParsingGraph::build(&inv);
        assert!(matches!(
            identify_next_chunk(&g, &inv, &[Atom(5)], 0),
            Err(Error::CompletenessViolation(0))
        ));
    }

    /// roots {1, 2}; 1 → {12, 13}; 2 → {21, 22}; 22 → {221, 222, 223}
    fn appendix_graph() -> (Inventory, ParsingGraph) {
        let mut inv = Inventory::with_atoms([Atom(1), Atom(2), Atom(3)]);
        for t in ["12", "13", "21", "22", "221", "222", "223"] {
            let terms: Vec<u32> = t.bytes().map(|b| (b - b'0') as u32).collect();
            inv.add_chunk(atom_terms(&terms)).unwrap();
        }
        let mut g = ParsingGraph::new();
        for c in inv.chunks() {
            if c.terms != atom_terms(&[3]) {
                g.insert_chunk(c).unwrap();
            }
        }
        (inv, g)
    }

    #[test]
    fn appendix_path_pss() {
        let (inv, g) = appendix_graph();
        assert_eq!(g.path_pss(chunk_of(&inv, "12")).unwrap(), 4);
        assert_eq!(g.path_pss(chunk_of(&inv, "21")).unwrap(), 4);
        assert_eq!(g.path_pss(chunk_of(&inv, "221")).unwrap(), 7);
    }

    #[test]
    fn expected_pss_cases() {
        let (inv, g) = appendix_graph();
        let uniform: BTreeMap<_, _> = [chunk_of(&inv, "12"), chunk_of(&inv, "21")]
            .into_iter()
            .map(|c| (c, 0.5))
            .collect();
        assert!((g.expected_pss(&uniform).unwrap() - 4.0).abs() < 1e-12);

        let mixed: BTreeMap<_, _> = [(chunk_of(&inv, "12"), 0.25), (chunk_of(&inv, "221"), 0.75)]
            .into_iter()
            .collect();
        let e = g.expected_pss(&mixed).unwrap();
        assert!((e - (0.25 * 4.0 + 0.75 * 7.0)).abs() < 1e-12);
        let (lo, hi) = g.pss_bounds(&mixed).unwrap();
        assert!(lo as f64 <= e && e <= hi as f64);

        let bad: BTreeMap<_, _> = [(chunk_of(&inv, "12"), 0.3)].into_iter().collect();
        assert!(matches!(g.expected_pss(&bad), Err(Error::InvalidDistribution(_))));

        // single root, single leaf
        let single = Inventory::with_atoms([Atom(0)]);
        let g1 = ParsingGraph::build(&single);
        let p: BTreeMap<_, _> = [(ChunkId(0), 1.0)].into_iter().collect();
        assert_eq!(g1.expected_pss(&p).unwrap(), 1.0);
    }

    #[test]
    fn search_123_matches_walkthrough() {
        // "123": test roots 1 and 2, then children 12 and 13
        let (inv, g) = appendix_graph();
        let id = identify_next_chunk(&g, &inv, &seq("123"), 0).unwrap();
        assert_eq!(id.chunk, chunk_of(&inv, "12"));
        assert_eq!(id.steps, 4);
    }

    #[test]
    fn denotee_order_prefers_higher_counts() {
        let mut inv = inventory(&["00", "001"]);
        let v = inv
            .add_variable(vec![chunk_of(&inv, "00"), chunk_of(&inv, "001")], vec![1.0, 5.0])
            .unwrap();
        let mut terms = atom_terms(&[2]);
        terms.push(Term::var(v));
        let c = inv.add_chunk(terms).unwrap();
        let g = ParsingGraph::build(&inv);
        let id = identify_next_chunk(&g, &inv, &seq("2001"), 0).unwrap();
        assert_eq!(id.chunk, c);
        assert_eq!(id.bindings[0].chunk, chunk_of(&inv, "001"));
        assert_eq!(id.len, 4);
    }

    #[test]
    fn json_lines_export() {
        let inv = inventory(&["01"]);
        let g = ParsingGraph::build(&inv);
        let out = parse_sequence(&g, &inv, &seq("011")).unwrap();
        let text = out.to_json_lines();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], r#"{"chunk":4,"start":0,"len":2,"bindings":[]}"#);
    }
}
