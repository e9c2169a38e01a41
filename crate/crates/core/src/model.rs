//! Atoms, chunks, variables, count tables and the inventory that owns them.
//!
//! A chunk is a nonempty list of terms, each term either an atom or a
//! reference to a variable. A variable denotes two or more chunks and keeps a
//! count per denotee. The inventory is complete when every atom of its
//! alphabet is also present as a single-term chunk, so any sequence over the
//! alphabet can be parsed.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version tag written into every serialized inventory.
pub const MODEL_VERSION: u32 = 1;

/// Slack allowed when checking count consistency after floating-point decay.
pub const COUNT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Atom(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChunkId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarId(pub u32);

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ChunkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// One position of a chunk.
///
/// Serialized as a bare integer for atoms and `{"var": id}` for variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Term {
    Atom(Atom),
    Var { var: VarId },
}

impl Term {
    pub fn var(id: VarId) -> Self {
        Term::Var { var: id }
    }

    pub fn as_var(&self) -> Option<VarId> {
        match *self {
            Term::Var { var } => Some(var),
            Term::Atom(_) => None,
        }
    }
}

impl From<Atom> for Term {
    fn from(a: Atom) -> Self {
        Term::Atom(a)
    }
}

/// Shorthand for building atom-only term lists.
pub fn atom_terms(atoms: &[u32]) -> Vec<Term> {
    atoms.iter().map(|&a| Term::Atom(Atom(a))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: ChunkId,
    pub terms: Vec<Term>,
}

impl Chunk {
    pub fn variables(&self) -> impl Iterator<Item = VarId> + '_ {
        self.terms.iter().filter_map(Term::as_var)
    }

    pub fn has_variables(&self) -> bool {
        self.variables().next().is_some()
    }
}

/// An abstract entity standing for any one of its denotee chunks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub id: VarId,
    /// Denotees in insertion order.
    pub denotees: Vec<ChunkId>,
    /// Parallel to `denotees`.
    pub denote_counts: Vec<f64>,
}

impl Variable {
    pub fn denote_count(&self, chunk: ChunkId) -> Option<f64> {
        self.denotees
            .iter()
            .position(|&c| c == chunk)
            .map(|i| self.denote_counts[i])
    }

    pub fn denotes(&self, chunk: ChunkId) -> bool {
        self.denotees.contains(&chunk)
    }

    /// P(u|v) for every denotee, in denotee order.
    ///
    /// Counts of zero are floored at `floor` before normalising; when every
    /// count is zero the distribution is uniform.
    pub fn conditional_probs(&self, floor: f64) -> Vec<f64> {
        let total: f64 = self.denote_counts.iter().sum();
        let n = self.denotees.len() as f64;
        if total <= 0.0 {
            return vec![1.0 / n; self.denotees.len()];
        }
        self.denote_counts.iter().map(|&c| (c / total).max(floor)).collect()
    }
}

/// Either side of the marginal table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnitId {
    Chunk(ChunkId),
    Var(VarId),
}

/// Marginal (M) and transition (T) counts.
///
/// Counts are real valued since decay multiplies them by a factor per step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CountTables {
    chunk_marginals: BTreeMap<ChunkId, f64>,
    var_marginals: BTreeMap<VarId, f64>,
    transitions: BTreeMap<(ChunkId, ChunkId), f64>,
}

impl CountTables {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn marginal(&self, unit: UnitId) -> f64 {
        match unit {
            UnitId::Chunk(c) => self.chunk_marginal(c),
            UnitId::Var(v) => self.var_marginal(v),
        }
    }

    pub fn chunk_marginal(&self, id: ChunkId) -> f64 {
        self.chunk_marginals.get(&id).copied().unwrap_or(0.0)
    }

    pub fn var_marginal(&self, id: VarId) -> f64 {
        self.var_marginals.get(&id).copied().unwrap_or(0.0)
    }

    pub fn transition(&self, left: ChunkId, right: ChunkId) -> f64 {
        self.transitions.get(&(left, right)).copied().unwrap_or(0.0)
    }

    pub fn add_chunk_marginal(&mut self, id: ChunkId, amount: f64) {
        *self.chunk_marginals.entry(id).or_insert(0.0) += amount;
    }

    pub fn add_var_marginal(&mut self, id: VarId, amount: f64) {
        *self.var_marginals.entry(id).or_insert(0.0) += amount;
    }

    pub fn add_transition(&mut self, left: ChunkId, right: ChunkId, amount: f64) {
        *self.transitions.entry((left, right)).or_insert(0.0) += amount;
    }

    pub fn set_chunk_marginal(&mut self, id: ChunkId, value: f64) {
        self.chunk_marginals.insert(id, value);
    }

    pub fn set_var_marginal(&mut self, id: VarId, value: f64) {
        self.var_marginals.insert(id, value);
    }

    pub fn set_transition(&mut self, left: ChunkId, right: ChunkId, value: f64) {
        self.transitions.insert((left, right), value);
    }

    pub fn chunk_marginals(&self) -> impl Iterator<Item = (ChunkId, f64)> + '_ {
        self.chunk_marginals.iter().map(|(&k, &v)| (k, v))
    }

    pub fn var_marginals(&self) -> impl Iterator<Item = (VarId, f64)> + '_ {
        self.var_marginals.iter().map(|(&k, &v)| (k, v))
    }

    /// Nonzero-entry iteration over T in (left, right) order.
    pub fn transitions(&self) -> impl Iterator<Item = ((ChunkId, ChunkId), f64)> + '_ {
        self.transitions.iter().map(|(&k, &v)| (k, v))
    }

    pub fn total_transitions(&self) -> f64 {
        self.transitions.values().sum()
    }

    pub fn total_chunk_mass(&self) -> f64 {
        self.chunk_marginals.values().sum()
    }

    /// Σ_j T[left][j]
    pub fn row_sum(&self, left: ChunkId) -> f64 {
        self.transitions
            .range((left, ChunkId(0))..=(left, ChunkId(u32::MAX)))
            .map(|(_, &v)| v)
            .sum()
    }

    pub fn row_sums(&self) -> BTreeMap<ChunkId, f64> {
        let mut out = BTreeMap::new();
        for (&(l, _), &v) in &self.transitions {
            *out.entry(l).or_insert(0.0) += v;
        }
        out
    }

    pub fn col_sums(&self) -> BTreeMap<ChunkId, f64> {
        let mut out = BTreeMap::new();
        for (&(_, r), &v) in &self.transitions {
            *out.entry(r).or_insert(0.0) += v;
        }
        out
    }

    /// Multiplies every M and T entry by `theta`.
    pub fn decay(&mut self, theta: f64) {
        if theta == 1.0 {
            return;
        }
        for v in self.chunk_marginals.values_mut() {
            *v *= theta;
        }
        for v in self.var_marginals.values_mut() {
            *v *= theta;
        }
        for v in self.transitions.values_mut() {
            *v *= theta;
        }
    }

    pub fn clear(&mut self) {
        self.chunk_marginals.clear();
        self.var_marginals.clear();
        self.transitions.clear();
    }

    pub fn is_empty(&self) -> bool {
        self.chunk_marginals.is_empty() && self.var_marginals.is_empty() && self.transitions.is_empty()
    }

    pub(crate) fn remove_chunk(&mut self, id: ChunkId) {
        self.chunk_marginals.remove(&id);
        self.transitions.retain(|&(l, r), _| l != id && r != id);
    }

    pub(crate) fn remove_var(&mut self, id: VarId) {
        self.var_marginals.remove(&id);
    }

    /// Folds every count of `from` into `into`.
    pub(crate) fn merge_chunk(&mut self, from: ChunkId, into: ChunkId) {
        if let Some(m) = self.chunk_marginals.remove(&from) {
            self.add_chunk_marginal(into, m);
        }
        let moved: Vec<_> = self
            .transitions
            .iter()
            .filter(|(&(l, r), _)| l == from || r == from)
            .map(|(&k, &v)| (k, v))
            .collect();
        for ((l, r), v) in moved {
            self.transitions.remove(&(l, r));
            let l = if l == from { into } else { l };
            let r = if r == from { into } else { r };
            self.add_transition(l, r, v);
        }
    }

    pub(crate) fn merge_var(&mut self, from: VarId, into: VarId) {
        if let Some(m) = self.var_marginals.remove(&from) {
            self.add_var_marginal(into, m);
        }
    }

    fn all_valid(&self) -> bool {
        self.chunk_marginals
            .values()
            .chain(self.var_marginals.values())
            .chain(self.transitions.values())
            .all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// P(u) = M(u) / Σ M over the requested ids.
pub fn normalize_marginals(counts: &CountTables, ids: &BTreeSet<UnitId>) -> Result<BTreeMap<UnitId, f64>> {
    let total: f64 = ids.iter().map(|&u| counts.marginal(u)).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    Ok(ids.iter().map(|&u| (u, counts.marginal(u) / total)).collect())
}

/// The learner's belief set: alphabet, chunks, variables and counts.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(into = "InventoryDoc", try_from = "InventoryDoc")]
pub struct Inventory {
    atoms: BTreeSet<Atom>,
    chunks: BTreeMap<ChunkId, Chunk>,
    variables: BTreeMap<VarId, Variable>,
    pub counts: CountTables,
    next_chunk: u32,
    next_var: u32,
    by_terms: HashMap<Vec<Term>, ChunkId>,
}

impl PartialEq for Inventory {
    fn eq(&self, other: &Self) -> bool {
        self.atoms == other.atoms
            && self.chunks == other.chunks
            && self.variables == other.variables
            && self.counts == other.counts
            && self.next_chunk == other.next_chunk
            && self.next_var == other.next_var
    }
}

impl Default for Inventory {
    fn default() -> Self {
        Self::empty()
    }
}

impl Inventory {
    pub fn empty() -> Self {
        Inventory {
            atoms: BTreeSet::new(),
            chunks: BTreeMap::new(),
            variables: BTreeMap::new(),
            counts: CountTables::new(),
            next_chunk: 0,
            next_var: 0,
            by_terms: HashMap::new(),
        }
    }

    /// A complete inventory holding one single-term chunk per atom, with
    /// chunk ids assigned in ascending atom order.
    pub fn with_atoms(atoms: impl IntoIterator<Item = Atom>) -> Self {
        let mut inv = Self::empty();
        let sorted: BTreeSet<Atom> = atoms.into_iter().collect();
        for a in sorted {
            inv.add_atom(a);
        }
        inv
    }

    /// Alphabet taken from the distinct atoms of `seq`.
    pub fn from_sequence(seq: &[Atom]) -> Self {
        Self::with_atoms(seq.iter().copied())
    }

    /// Adds `atom` to the alphabet (and its single-term chunk) if missing.
    pub fn add_atom(&mut self, atom: Atom) -> ChunkId {
        if let Some(id) = self.atom_chunk(atom) {
            return id;
        }
        self.atoms.insert(atom);
        let id = ChunkId(self.next_chunk);
        self.next_chunk += 1;
        let terms = vec![Term::Atom(atom)];
        self.by_terms.insert(terms.clone(), id);
        self.chunks.insert(id, Chunk { id, terms });
        id
    }

    pub fn atoms(&self) -> impl Iterator<Item = Atom> + '_ {
        self.atoms.iter().copied()
    }

    pub fn alphabet_size(&self) -> usize {
        self.atoms.len()
    }

    pub fn contains_atom(&self, atom: Atom) -> bool {
        self.atoms.contains(&atom)
    }

    pub fn atom_chunk(&self, atom: Atom) -> Option<ChunkId> {
        self.by_terms.get(&[Term::Atom(atom)][..]).copied()
    }

    pub fn chunk(&self, id: ChunkId) -> Result<&Chunk> {
        self.chunks.get(&id).ok_or(Error::UnknownChunk(id))
    }

    pub fn get_chunk(&self, id: ChunkId) -> Option<&Chunk> {
        self.chunks.get(&id)
    }

    pub fn variable(&self, id: VarId) -> Result<&Variable> {
        self.variables.get(&id).ok_or(Error::UnknownVariable(id))
    }

    pub fn get_variable(&self, id: VarId) -> Option<&Variable> {
        self.variables.get(&id)
    }

    pub(crate) fn variable_mut(&mut self, id: VarId) -> Option<&mut Variable> {
        self.variables.get_mut(&id)
    }

    /// Chunks in id (creation) order.
    pub fn chunks(&self) -> impl Iterator<Item = &Chunk> + '_ {
        self.chunks.values()
    }

    pub fn chunk_ids(&self) -> impl Iterator<Item = ChunkId> + '_ {
        self.chunks.keys().copied()
    }

    pub fn variables(&self) -> impl Iterator<Item = &Variable> + '_ {
        self.variables.values()
    }

    pub fn variable_ids(&self) -> impl Iterator<Item = VarId> + '_ {
        self.variables.keys().copied()
    }

    pub fn num_chunks(&self) -> usize {
        self.chunks.len()
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn is_atomic(&self, id: ChunkId) -> bool {
        self.chunks
            .get(&id)
            .is_some_and(|c| c.terms.len() == 1 && matches!(c.terms[0], Term::Atom(_)))
    }

    /// Chunks other than the single-atom ones.
    pub fn num_learned_chunks(&self) -> usize {
        self.chunks.keys().filter(|&&id| !self.is_atomic(id)).count()
    }

    /// Dictionary entries beyond the alphabet: learned chunks plus variables.
    pub fn num_learned_entries(&self) -> usize {
        self.num_learned_chunks() + self.num_variables()
    }

    pub fn find_chunk(&self, terms: &[Term]) -> Option<ChunkId> {
        self.by_terms.get(terms).copied()
    }

    /// Variable whose denotee set equals `denotees` (order ignored).
    pub fn find_variable(&self, denotees: &BTreeSet<ChunkId>) -> Option<VarId> {
        self.variables
            .values()
            .find(|v| v.denotees.len() == denotees.len() && v.denotees.iter().all(|c| denotees.contains(c)))
            .map(|v| v.id)
    }

    fn check_terms(&self, terms: &[Term]) -> Result<()> {
        if terms.is_empty() {
            return Err(Error::EmptyChunk);
        }
        if terms.len() == 1 && terms[0].as_var().is_some() {
            return Err(Error::BareVariable);
        }
        for t in terms {
            match *t {
                Term::Atom(a) if !self.atoms.contains(&a) => return Err(Error::UnknownAtom(a)),
                Term::Var { var } if !self.variables.contains_key(&var) => return Err(Error::UnknownVariable(var)),
                _ => {}
            }
        }
        Ok(())
    }

    /// Adds a chunk with the next unused id.
    pub fn add_chunk(&mut self, terms: Vec<Term>) -> Result<ChunkId> {
        self.check_terms(&terms)?;
        if let Some(&existing) = self.by_terms.get(&terms) {
            return Err(Error::DuplicateChunk(existing));
        }
        let id = ChunkId(self.next_chunk);
        self.next_chunk += 1;
        self.by_terms.insert(terms.clone(), id);
        self.chunks.insert(id, Chunk { id, terms });
        Ok(id)
    }

    /// Term list of `left ⊕ middle? ⊕ right`, without adding it.
    pub fn concat_terms(&self, left: ChunkId, middle: Option<VarId>, right: ChunkId) -> Result<Vec<Term>> {
        let l = self.chunk(left)?;
        let r = self.chunk(right)?;
        let mut terms = Vec::with_capacity(l.terms.len() + r.terms.len() + 1);
        terms.extend_from_slice(&l.terms);
        if let Some(v) = middle {
            self.variable(v)?;
            terms.push(Term::var(v));
        }
        terms.extend_from_slice(&r.terms);
        Ok(terms)
    }

    /// Creates the chunk `left ⊕ middle? ⊕ right`.
    pub fn chunk_concat(&mut self, left: ChunkId, middle: Option<VarId>, right: ChunkId) -> Result<ChunkId> {
        let terms = self.concat_terms(left, middle, right)?;
        self.add_chunk(terms)
    }

    /// Adds a variable denoting `denotees` with the given per-denotee counts.
    pub fn add_variable(&mut self, denotees: Vec<ChunkId>, denote_counts: Vec<f64>) -> Result<VarId> {
        if denotees.len() != denote_counts.len() {
            return Err(Error::DenoteeCountMismatch {
                denotees: denotees.len(),
                counts: denote_counts.len(),
            });
        }
        let distinct: HashSet<_> = denotees.iter().collect();
        if distinct.len() < 2 || distinct.len() != denotees.len() {
            return Err(Error::TooFewDenotees(distinct.len()));
        }
        for &c in &denotees {
            self.chunk(c)?;
        }
        if denote_counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::NegativeCount);
        }
        let id = VarId(self.next_var);
        self.next_var += 1;
        self.variables.insert(
            id,
            Variable {
                id,
                denotees,
                denote_counts,
            },
        );
        Ok(id)
    }

    /// Variables appearing in a chunk's own terms (one level, first-occurrence order).
    pub fn embedded_variables(&self, id: ChunkId) -> Vec<VarId> {
        let mut out = Vec::new();
        if let Some(c) = self.chunks.get(&id) {
            for v in c.variables() {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }

    /// Variables that list `chunk` among their denotees.
    pub fn variables_denoting(&self, chunk: ChunkId) -> Vec<VarId> {
        self.variables
            .values()
            .filter(|v| v.denotes(chunk))
            .map(|v| v.id)
            .collect()
    }

    /// Every atomic length `id` can ground to.
    pub fn surface_lengths(&self, id: ChunkId) -> Result<BTreeSet<usize>> {
        let mut memo = HashMap::new();
        let mut visiting = HashSet::new();
        self.surface_lengths_inner(id, &mut memo, &mut visiting)
    }

    fn surface_lengths_inner(
        &self,
        id: ChunkId,
        memo: &mut HashMap<ChunkId, BTreeSet<usize>>,
        visiting: &mut HashSet<VarId>,
    ) -> Result<BTreeSet<usize>> {
        if let Some(s) = memo.get(&id) {
            return Ok(s.clone());
        }
        let chunk = self.chunk(id)?;
        let mut acc: BTreeSet<usize> = BTreeSet::from([0]);
        for t in &chunk.terms {
            let part: BTreeSet<usize> = match *t {
                Term::Atom(_) => BTreeSet::from([1]),
                Term::Var { var } => {
                    if !visiting.insert(var) {
                        return Err(Error::Cycle(var));
                    }
                    let v = self.variable(var)?;
                    let mut lens = BTreeSet::new();
                    for &d in &v.denotees {
                        lens.extend(self.surface_lengths_inner(d, memo, visiting)?);
                    }
                    visiting.remove(&var);
                    lens
                }
            };
            acc = acc.iter().flat_map(|a| part.iter().map(move |b| a + b)).collect();
        }
        memo.insert(id, acc.clone());
        Ok(acc)
    }

    pub fn max_surface_length(&self, id: ChunkId) -> Result<usize> {
        Ok(*self.surface_lengths(id)?.iter().next_back().unwrap_or(&0))
    }

    /// Fails if the variable → denotee → embedded-variable graph has a cycle.
    pub fn check_acyclic(&self) -> Result<()> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state: HashMap<VarId, u8> = HashMap::new();
        for &v in self.variables.keys() {
            self.visit_var(v, &mut state)?;
        }
        Ok(())
    }

    fn visit_var(&self, v: VarId, state: &mut HashMap<VarId, u8>) -> Result<()> {
        match state.get(&v) {
            Some(2) => return Ok(()),
            Some(1) => return Err(Error::Cycle(v)),
            _ => {}
        }
        state.insert(v, 1);
        let var = self.variable(v)?;
        for &d in &var.denotees {
            for w in self.chunk(d)?.variables() {
                self.visit_var(w, state)?;
            }
        }
        state.insert(v, 2);
        Ok(())
    }

    /// Checks every structural invariant: references, chunk shape, variable
    /// arity, acyclicity, completeness and count sanity.
    pub fn validate(&self) -> Result<()> {
        for a in &self.atoms {
            if self.atom_chunk(*a).is_none() {
                return Err(Error::Incomplete(*a));
            }
        }
        for c in self.chunks.values() {
            self.check_terms(&c.terms)?;
        }
        for v in self.variables.values() {
            if v.denotees.len() != v.denote_counts.len() {
                return Err(Error::DenoteeCountMismatch {
                    denotees: v.denotees.len(),
                    counts: v.denote_counts.len(),
                });
            }
            let distinct: HashSet<_> = v.denotees.iter().collect();
            if distinct.len() < 2 || distinct.len() != v.denotees.len() {
                return Err(Error::TooFewDenotees(distinct.len()));
            }
            for &d in &v.denotees {
                self.chunk(d)?;
            }
            if v.denote_counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
                return Err(Error::NegativeCount);
            }
        }
        if !self.counts.all_valid() {
            return Err(Error::NegativeCount);
        }
        for (c, _) in self.counts.chunk_marginals() {
            self.chunk(c)?;
        }
        for (v, _) in self.counts.var_marginals() {
            self.variable(v)?;
        }
        for ((l, r), _) in self.counts.transitions() {
            self.chunk(l)?;
            self.chunk(r)?;
        }
        self.check_acyclic()
    }

    /// Order-independent fingerprint of the dictionary (not the counts).
    pub fn signature(&self) -> (BTreeSet<Vec<Term>>, BTreeSet<BTreeSet<ChunkId>>) {
        let chunks = self.chunks.values().map(|c| c.terms.clone()).collect();
        let vars = self
            .variables
            .values()
            .map(|v| v.denotees.iter().copied().collect())
            .collect();
        (chunks, vars)
    }

    pub(crate) fn remove_chunk(&mut self, id: ChunkId) {
        if let Some(c) = self.chunks.remove(&id) {
            self.by_terms.remove(&c.terms);
        }
        self.counts.remove_chunk(id);
    }

    pub(crate) fn remove_variable(&mut self, id: VarId) {
        self.variables.remove(&id);
        self.counts.remove_var(id);
    }

    /// Rewrites every reference to `from` as `into`, unions the denotee
    /// lists and folds counts. Chunks whose terms become identical are
    /// collapsed into the older one. Leaves the inventory unvalidated; callers
    /// check invariants afterwards.
    pub(crate) fn merge_variable_into(&mut self, from: VarId, into: VarId) {
        let Some(src) = self.variables.remove(&from) else {
            return;
        };
        if let Some(dst) = self.variables.get_mut(&into) {
            for (c, n) in src.denotees.iter().zip(&src.denote_counts) {
                match dst.denotees.iter().position(|d| d == c) {
                    Some(i) => dst.denote_counts[i] += n,
                    None => {
                        dst.denotees.push(*c);
                        dst.denote_counts.push(*n);
                    }
                }
            }
        }
        self.counts.merge_var(from, into);

        let affected: Vec<ChunkId> = self
            .chunks
            .values()
            .filter(|c| c.variables().any(|v| v == from))
            .map(|c| c.id)
            .collect();
        for id in affected {
            let old = self.chunks[&id].terms.clone();
            let new: Vec<Term> = old
                .iter()
                .map(|t| match t.as_var() {
                    Some(v) if v == from => Term::var(into),
                    _ => *t,
                })
                .collect();
            self.by_terms.remove(&old);
            match self.by_terms.get(&new).copied() {
                Some(existing) => {
                    let (keep, drop) = if existing < id { (existing, id) } else { (id, existing) };
                    if drop == existing {
                        self.by_terms.remove(&new);
                        self.chunks.remove(&existing);
                        self.chunks.get_mut(&id).unwrap().terms = new.clone();
                        self.by_terms.insert(new, id);
                    } else {
                        self.chunks.remove(&id);
                    }
                    self.counts.merge_chunk(drop, keep);
                    self.redirect_denotee(drop, keep);
                }
                None => {
                    self.chunks.get_mut(&id).unwrap().terms = new.clone();
                    self.by_terms.insert(new, id);
                }
            }
        }
    }

    fn redirect_denotee(&mut self, from: ChunkId, into: ChunkId) {
        for v in self.variables.values_mut() {
            let Some(i) = v.denotees.iter().position(|&d| d == from) else {
                continue;
            };
            let n = v.denote_counts[i];
            v.denotees.remove(i);
            v.denote_counts.remove(i);
            match v.denotees.iter().position(|&d| d == into) {
                Some(j) => v.denote_counts[j] += n,
                None => {
                    v.denotees.insert(i, into);
                    v.denote_counts.insert(i, n);
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// JSON document form

#[derive(Serialize, Deserialize)]
struct InventoryDoc {
    version: u32,
    atoms: Vec<Atom>,
    chunks: Vec<Chunk>,
    variables: Vec<Variable>,
    counts: CountsDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    next_chunk_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    next_var_id: Option<u32>,
}

#[derive(Serialize, Deserialize)]
struct CountsDoc {
    #[serde(rename = "M")]
    marginals: MarginalsDoc,
    #[serde(rename = "T")]
    transitions: Vec<(ChunkId, ChunkId, f64)>,
}

#[derive(Serialize, Deserialize)]
struct MarginalsDoc {
    chunks: Vec<(ChunkId, f64)>,
    variables: Vec<(VarId, f64)>,
}

impl From<Inventory> for InventoryDoc {
    fn from(inv: Inventory) -> Self {
        InventoryDoc {
            version: MODEL_VERSION,
            atoms: inv.atoms.iter().copied().collect(),
            chunks: inv.chunks.values().cloned().collect(),
            variables: inv.variables.values().cloned().collect(),
            counts: CountsDoc {
                marginals: MarginalsDoc {
                    chunks: inv.counts.chunk_marginals().collect(),
                    variables: inv.counts.var_marginals().collect(),
                },
                transitions: inv.counts.transitions().map(|((l, r), v)| (l, r, v)).collect(),
            },
            next_chunk_id: Some(inv.next_chunk),
            next_var_id: Some(inv.next_var),
        }
    }
}

impl TryFrom<InventoryDoc> for Inventory {
    type Error = Error;

    fn try_from(doc: InventoryDoc) -> Result<Self> {
        if doc.version != MODEL_VERSION {
            return Err(Error::Version {
                found: doc.version,
                expected: MODEL_VERSION,
            });
        }
        let mut inv = Inventory::empty();
        inv.atoms = doc.atoms.into_iter().collect();
        for c in doc.chunks {
            if inv.chunks.contains_key(&c.id) {
                return Err(Error::InvalidArgument(format!("duplicate chunk id {}", c.id)));
            }
            if let Some(&existing) = inv.by_terms.get(&c.terms) {
                return Err(Error::DuplicateChunk(existing));
            }
            inv.by_terms.insert(c.terms.clone(), c.id);
            inv.chunks.insert(c.id, c);
        }
        for v in doc.variables {
            if inv.variables.contains_key(&v.id) {
                return Err(Error::InvalidArgument(format!("duplicate variable id {}", v.id)));
            }
            inv.variables.insert(v.id, v);
        }
        for (c, m) in doc.counts.marginals.chunks {
            inv.counts.set_chunk_marginal(c, m);
        }
        for (v, m) in doc.counts.marginals.variables {
            inv.counts.set_var_marginal(v, m);
        }
        for (l, r, t) in doc.counts.transitions {
            inv.counts.set_transition(l, r, t);
        }
        let min_chunk = inv.chunks.keys().next_back().map_or(0, |c| c.0 + 1);
        let min_var = inv.variables.keys().next_back().map_or(0, |v| v.0 + 1);
        inv.next_chunk = doc.next_chunk_id.unwrap_or(min_chunk).max(min_chunk);
        inv.next_var = doc.next_var_id.unwrap_or(min_var).max(min_var);
        inv.validate()?;
        Ok(inv)
    }
}

impl Inventory {
    /// Parses the JSON form, keeping structural errors distinct from syntax
    /// errors.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: InventoryDoc = serde_json::from_str(text)?;
        Inventory::try_from(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&InventoryDoc::from(self.clone())).expect("inventory serializes")
    }
}
