//! Chunk and variable learning, in batch and online form.
//!
//! One learning round parses with the current inventory, folds the parse into
//! the count tables, proposes new chunks for positively associated adjacent
//! pairs, proposes variables over shared adjacency (HVM only), merges
//! variables that occur in identical contexts and prunes what went unused.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{chunk_distribution, representation_complexity, representation_entropy};
use crate::model::{Atom, ChunkId, CountTables, Inventory, Term, VarId};
use crate::parser::{Binding, ParseOutcome, ParsedChunk, Parser, ParsingGraph};
use crate::stats::{IndependenceTest, TransitionMargins};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Chunks and variables.
    #[serde(rename = "HVM")]
    Hvm,
    /// Chunks only.
    #[serde(rename = "HCM")]
    Hcm,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Hvm => "HVM",
            Mode::Hcm => "HCM",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hvm" => Ok(Mode::Hvm),
            "hcm" => Ok(Mode::Hcm),
            _ => Err(Error::InvalidArgument(format!(
                "unknown mode {s:?}, expected HVM or HCM"
            ))),
        }
    }
}

/// When decay is applied during online learning.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayGranularity {
    #[default]
    PerChunk,
    PerTrial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    /// Multiplicative count decay per step, in (0, 1].
    pub theta: f64,
    /// Significance level of the association test.
    pub alpha: f64,
    pub t_min: usize,
    pub t_max: usize,
    /// Minimum summed marginal count over a variable's denotees.
    pub freq_t: f64,
    pub mode: Mode,
    pub max_iterations: usize,
    /// Probability floor for unseen events.
    pub smoothing_eps: f64,
    /// A pair, or a variable context, must have been seen this often before
    /// it can become a chunk.
    pub min_pair_count: f64,
    pub yates: bool,
    pub decay: DecayGranularity,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            theta: 1.0,
            alpha: 0.05,
            t_min: 2,
            t_max: 10,
            freq_t: 6.0,
            mode: Mode::Hvm,
            max_iterations: 40,
            smoothing_eps: 1e-6,
            min_pair_count: 2.0,
            yates: false,
            decay: DecayGranularity::PerChunk,
        }
    }
}

impl LearnerConfig {
    pub fn with_mode(mode: Mode) -> Self {
        LearnerConfig {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad(format!("theta must lie in (0, 1], got {}", self.theta));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.t_min < 2 || self.t_min > self.t_max {
            return bad(format!(
                "need 2 <= t_min <= t_max, got {} and {}",
                self.t_min, self.t_max
            ));
        }
        if !(self.smoothing_eps > 0.0 && self.smoothing_eps < 1.0) {
            return bad(format!("smoothing_eps must lie in (0, 1), got {}", self.smoothing_eps));
        }
        if self.freq_t.is_nan() || self.freq_t < 0.0 || self.min_pair_count.is_nan() || self.min_pair_count < 0.0 {
            return bad("thresholds must be nonnegative".into());
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Count updates

fn bump_denote_count(inv: &mut Inventory, var: VarId, chunk: ChunkId) {
    if let Some(v) = inv.variable_mut(var) {
        if let Some(i) = v.denotees.iter().position(|&c| c == chunk) {
            v.denote_counts[i] += 1.0;
        }
    }
}

fn observe_bindings(inv: &mut Inventory, bindings: &[Binding]) {
    for b in bindings {
        b.visit(&mut |b| {
            inv.counts.add_var_marginal(b.var, 1.0);
            bump_denote_count(inv, b.var, b.chunk);
        });
    }
}

/// Records one identification of `parsed`, following `prev` if given.
pub fn observe_chunk(inv: &mut Inventory, parsed: &ParsedChunk, prev: Option<ChunkId>) {
    inv.counts.add_chunk_marginal(parsed.chunk, 1.0);
    for v in inv.variables_denoting(parsed.chunk) {
        inv.counts.add_var_marginal(v, 1.0);
        bump_denote_count(inv, v, parsed.chunk);
    }
    observe_bindings(inv, &parsed.bindings);
    if let Some(l) = prev {
        inv.counts.add_transition(l, parsed.chunk, 1.0);
    }
}

/// Adds a whole parse to the counts: marginals for every parsed chunk and
/// the variables it belongs to or binds, transitions for adjacent chunks.
pub fn update_counts(inv: &mut Inventory, parse: &ParseOutcome) {
    let mut prev = None;
    for p in &parse.parsed {
        observe_chunk(inv, p, prev);
        prev = Some(p.chunk);
    }
}

pub fn apply_decay(counts: &mut CountTables, theta: f64) {
    counts.decay(theta);
}

/// Whether `left → right` is positively associated at `alpha`.
pub fn test_independence(counts: &CountTables, left: ChunkId, right: ChunkId, alpha: f64) -> Result<bool> {
    let test = IndependenceTest::new(alpha, false)?;
    Ok(test.test_pair(counts, &TransitionMargins::new(counts), left, right))
}

/// Every observed pair that passes the association test, with its count.
pub fn significant_pairs(counts: &CountTables, test: &IndependenceTest) -> BTreeMap<(ChunkId, ChunkId), f64> {
    let margins = TransitionMargins::new(counts);
    counts
        .transitions()
        .filter(|&((l, r), _)| test.test_pair(counts, &margins, l, r))
        .collect()
}

/// A chunk position with variables replaced by what they denote, so a chunk
/// can be recognised after its variables have been renumbered.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Shape {
    Atom(Atom),
    Slot(BTreeSet<ChunkId>),
}

pub fn shape_of(inv: &Inventory, terms: &[Term]) -> Vec<Shape> {
    terms
        .iter()
        .map(|t| match *t {
            Term::Atom(a) => Shape::Atom(a),
            Term::Var { var } => Shape::Slot(
                inv.get_variable(var)
                    .map(|v| v.denotees.iter().copied().collect())
                    .unwrap_or_default(),
            ),
        })
        .collect()
}

/// A chunk created from an adjacent pair, possibly with a variable between.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Proposal {
    pub chunk: ChunkId,
    pub left: ChunkId,
    pub right: ChunkId,
    /// How often the parts were observed together.
    pub support: f64,
}

/// Seeds counts for freshly proposed chunks from the snapshot they were
/// proposed on, so they are not treated as unseen. A new chunk gets its
/// support as marginal; transitions into it are those into its left part
/// and transitions out of it those out of its right part, each scaled by
/// the share of that part's occurrences the chunk accounts for. Transitions
/// between two new chunks chain both scalings.
pub fn seed_counts(inv: &mut Inventory, base: &CountTables, proposals: &[Proposal]) {
    let share = |part: ChunkId, support: f64| {
        let m = base.chunk_marginal(part);
        if m > 0.0 {
            (support / m).min(1.0)
        } else {
            0.0
        }
    };
    let mut by_left: BTreeMap<ChunkId, Vec<(ChunkId, f64)>> = BTreeMap::new();
    let mut by_right: BTreeMap<ChunkId, Vec<(ChunkId, f64)>> = BTreeMap::new();
    for p in proposals.iter().filter(|p| p.support > 0.0) {
        inv.counts.add_chunk_marginal(p.chunk, p.support);
        by_left
            .entry(p.left)
            .or_default()
            .push((p.chunk, share(p.left, p.support)));
        by_right
            .entry(p.right)
            .or_default()
            .push((p.chunk, share(p.right, p.support)));
    }
    let none = Vec::new();
    for ((x, y), t) in base.transitions() {
        let sources = std::iter::once((x, 1.0)).chain(by_right.get(&x).unwrap_or(&none).iter().copied());
        for (s, ws) in sources {
            let targets = std::iter::once((y, 1.0)).chain(by_left.get(&y).unwrap_or(&none).iter().copied());
            for (d, wd) in targets {
                if (s, d) != (x, y) && ws * wd > 0.0 {
                    inv.counts.add_transition(s, d, t * ws * wd);
                }
            }
        }
    }
}

/// Creates `left ⊕ right` for every significant pair seen at least
/// `min_pair_count` times, skipping term lists in `retired`.
pub fn propose_chunks(
    inv: &mut Inventory,
    significant: &BTreeMap<(ChunkId, ChunkId), f64>,
    min_pair_count: f64,
    retired: &BTreeSet<Vec<Shape>>,
) -> Result<Vec<Proposal>> {
    let mut created = Vec::new();
    for (&(left, right), &support) in significant {
        if support < min_pair_count {
            continue;
        }
        let terms = inv.concat_terms(left, None, right)?;
        if inv.find_chunk(&terms).is_some() || retired.contains(&shape_of(inv, &terms)) {
            continue;
        }
        let chunk = inv.add_chunk(terms)?;
        created.push(Proposal {
            chunk,
            left,
            right,
            support,
        });
    }
    Ok(created)
}

/// Creates `left ⊕ v ⊕ right` where v ranges over the chunks that reliably
/// follow `left` and reliably precede `right`. `base` is the count snapshot
/// the significant pairs came from. Term lists in `retired` are skipped.
pub fn propose_variables(
    inv: &mut Inventory,
    base: &CountTables,
    significant: &BTreeMap<(ChunkId, ChunkId), f64>,
    config: &LearnerConfig,
    retired: &BTreeSet<Vec<Shape>>,
) -> Result<Vec<(VarId, Proposal)>> {
    let mut post: BTreeMap<ChunkId, BTreeSet<ChunkId>> = BTreeMap::new();
    let mut pre: BTreeMap<ChunkId, BTreeSet<ChunkId>> = BTreeMap::new();
    for &(l, r) in significant.keys() {
        post.entry(l).or_default().insert(r);
        pre.entry(r).or_default().insert(l);
    }

    let mut contexts = BTreeSet::new();
    for (&l, followers) in &post {
        for c in followers {
            if let Some(next) = post.get(c) {
                for &r in next {
                    contexts.insert((l, r));
                }
            }
        }
    }

    let mut created = Vec::new();
    for (left, right) in contexts {
        let denotees: BTreeSet<ChunkId> = post[&left].intersection(&pre[&right]).copied().collect();
        if denotees.len() < config.t_min || denotees.len() > config.t_max {
            continue;
        }
        let freq: f64 = denotees.iter().map(|&c| base.chunk_marginal(c)).sum();
        if freq < config.freq_t {
            continue;
        }
        let mut shape = shape_of(inv, &inv.chunk(left)?.terms);
        shape.push(Shape::Slot(denotees.clone()));
        shape.extend(shape_of(inv, &inv.chunk(right)?.terms));
        if retired.contains(&shape) {
            continue;
        }
        let support: f64 = denotees
            .iter()
            .map(|&u| base.transition(left, u).min(base.transition(u, right)))
            .sum();
        if support < config.min_pair_count {
            continue;
        }
        let var = match inv.find_variable(&denotees) {
            Some(v) => v,
            None => {
                let ids: Vec<ChunkId> = denotees.iter().copied().collect();
                let counts = ids.iter().map(|&c| base.chunk_marginal(c)).collect();
                inv.add_variable(ids, counts)?
            }
        };
        let terms = inv.concat_terms(left, Some(var), right)?;
        if inv.find_chunk(&terms).is_some() {
            continue;
        }
        let chunk = inv.add_chunk(terms)?;
        created.push((
            var,
            Proposal {
                chunk,
                left,
                right,
                support,
            },
        ));
    }

    // a variable whose only chunk was a duplicate is useless
    let used: BTreeSet<VarId> = inv.chunks().flat_map(|c| c.variables()).collect();
    let orphans: Vec<VarId> = inv.variable_ids().filter(|v| !used.contains(v)).collect();
    for v in orphans {
        inv.remove_variable(v);
    }
    created.retain(|(v, _)| inv.get_variable(*v).is_some());
    Ok(created)
}

/// (terms before, terms after) for every occurrence of `var` in a chunk.
fn contexts_of(inv: &Inventory, var: VarId) -> ContextSet {
    let mut out = BTreeSet::new();
    for c in inv.chunks() {
        for (i, t) in c.terms.iter().enumerate() {
            if t.as_var() == Some(var) {
                out.insert((c.terms[..i].to_vec(), c.terms[i + 1..].to_vec()));
            }
        }
    }
    out
}

/// Left and right terms around each occurrence of a variable.
type ContextSet = BTreeSet<(Vec<Term>, Vec<Term>)>;

/// Unions variables that appear in exactly the same contexts. A merge that
/// would leave the inventory invalid (for instance cyclic) is skipped.
/// Returns the number of variables absorbed.
pub fn merge_variables(inv: &mut Inventory) -> usize {
    let mut absorbed = 0;
    let mut skipped: BTreeSet<Vec<VarId>> = BTreeSet::new();
    loop {
        let mut groups: BTreeMap<ContextSet, Vec<VarId>> = BTreeMap::new();
        for v in inv.variable_ids() {
            let ctx = contexts_of(inv, v);
            if !ctx.is_empty() {
                groups.entry(ctx).or_default().push(v);
            }
        }
        let Some(group) = groups.into_values().find(|g| g.len() > 1 && !skipped.contains(g)) else {
            return absorbed;
        };
        let mut trial = inv.clone();
        for &from in &group[1..] {
            trial.merge_variable_into(from, group[0]);
        }
        if trial.validate().is_ok() {
            absorbed += group.len() - 1;
            *inv = trial;
        } else {
            skipped.insert(group);
        }
    }
}

/// Removes learned chunks with no marginal mass and variables no surviving
/// chunk embeds, keeping atoms, anything in `keep_chunks`/`keep_vars`,
/// everything a survivor refers to and every chunk whose terms prefix a
/// survivor's, so the parsing trie keeps its interior nodes. Returns how many chunks and variables
/// were removed.
pub fn prune_unused(
    inv: &mut Inventory,
    keep_chunks: &BTreeSet<ChunkId>,
    keep_vars: &BTreeSet<VarId>,
) -> (usize, usize) {
    let mut chunks: BTreeSet<ChunkId> = inv
        .chunk_ids()
        .filter(|&c| inv.is_atomic(c) || inv.counts.chunk_marginal(c) > 0.0 || keep_chunks.contains(&c))
        .collect();
    let mut vars: BTreeSet<VarId> = keep_vars
        .iter()
        .copied()
        .filter(|&v| inv.get_variable(v).is_some())
        .collect();

    loop {
        let mut grew = false;
        for c in chunks.clone() {
            for v in inv.embedded_variables(c) {
                grew |= vars.insert(v);
            }
        }
        for v in vars.clone() {
            if let Some(var) = inv.get_variable(v) {
                for &d in &var.denotees {
                    grew |= chunks.insert(d);
                }
            }
        }
        for c in chunks.clone() {
            let terms = &inv.chunk(c).expect("live chunk").terms;
            for k in 2..terms.len() {
                if let Some(p) = inv.find_chunk(&terms[..k]) {
                    grew |= chunks.insert(p);
                }
            }
        }
        if !grew {
            break;
        }
    }

    let dead_chunks: Vec<ChunkId> = inv.chunk_ids().filter(|c| !chunks.contains(c)).collect();
    let dead_vars: Vec<VarId> = inv.variable_ids().filter(|v| !vars.contains(v)).collect();
    for &c in &dead_chunks {
        inv.remove_chunk(c);
    }
    for &v in &dead_vars {
        inv.remove_variable(v);
    }
    (dead_chunks.len(), dead_vars.len())
}

// ---------------------------------------------------------------------------
// Likelihoods

/// Σ −log P(c) over the parsed chunks, with P from the chunk marginals.
pub fn nll_independent(parse: &ParseOutcome, inv: &Inventory, eps: f64) -> f64 {
    let probs = chunk_distribution(inv);
    parse
        .chunk_ids()
        .map(|c| -probs.get(&c).copied().unwrap_or(0.0).max(eps).ln())
        .sum()
}

/// −log P(c₁) − Σ log P(cᵢ | cᵢ₋₁). A predecessor with no recorded
/// transitions falls back to the marginal of the next chunk; with no counts
/// at all every chunk is equally likely.
pub fn nll_conditional(parse: &ParseOutcome, inv: &Inventory, eps: f64) -> f64 {
    let probs = chunk_distribution(inv);
    let marginal = |c: ChunkId| probs.get(&c).copied().unwrap_or(0.0);
    let mut nll = 0.0;
    let mut prev: Option<ChunkId> = None;
    for c in parse.chunk_ids() {
        let p = match prev {
            None => marginal(c),
            Some(l) => {
                let row = inv.counts.row_sum(l);
                if row > 0.0 {
                    inv.counts.transition(l, c) / row
                } else {
                    marginal(c)
                }
            }
        };
        nll -= p.max(eps).ln();
        prev = Some(c);
    }
    nll
}

// ---------------------------------------------------------------------------
// Learner state

/// An inventory together with its parsing graph and learning settings.
#[derive(Clone, Debug)]
pub struct Learner {
    config: LearnerConfig,
    test: IndependenceTest,
    inventory: Inventory,
    graph: ParsingGraph,
    /// Learned chunks pruned for disuse; never proposed again.
    retired: BTreeSet<Vec<Shape>>,
}

/// What one round of proposals changed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoundChanges {
    pub new_chunks: Vec<ChunkId>,
    pub new_variables: Vec<(VarId, ChunkId)>,
    pub merged: usize,
    pub pruned_chunks: usize,
    pub pruned_variables: usize,
}

impl RoundChanges {
    pub fn is_empty(&self) -> bool {
        self.new_chunks.is_empty()
            && self.new_variables.is_empty()
            && self.merged == 0
            && self.pruned_chunks == 0
            && self.pruned_variables == 0
    }
}

impl Learner {
    pub fn new(config: LearnerConfig, inventory: Inventory) -> Result<Self> {
        config.validate()?;
        inventory.validate()?;
        let test = IndependenceTest::new(config.alpha, config.yates)?;
        let graph = ParsingGraph::build(&inventory);
        Ok(Learner {
            config,
            test,
            inventory,
            graph,
            retired: BTreeSet::new(),
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn inventory(&self) -> &Inventory {
        &self.inventory
    }

    pub fn graph(&self) -> &ParsingGraph {
        &self.graph
    }

    pub fn into_inventory(self) -> Inventory {
        self.inventory
    }

    pub fn parse(&self, seq: &[Atom]) -> Result<ParseOutcome> {
        Parser::new(&self.graph, &self.inventory).parse(seq)
    }

    /// Adds any atoms of `seq` the inventory has not seen.
    pub fn extend_alphabet(&mut self, seq: &[Atom]) {
        let mut changed = false;
        for &a in seq {
            if !self.inventory.contains_atom(a) {
                self.inventory.add_atom(a);
                changed = true;
            }
        }
        if changed {
            self.graph = ParsingGraph::build(&self.inventory);
        }
    }

    /// Proposes, merges and prunes against the current counts, then rebuilds
    /// the parsing graph.
    pub fn learn_structure(&mut self) -> Result<RoundChanges> {
        let base = self.inventory.counts.clone();
        let significant = significant_pairs(&base, &self.test);
        let mut proposals = propose_chunks(
            &mut self.inventory,
            &significant,
            self.config.min_pair_count,
            &self.retired,
        )?;
        let mut changes = RoundChanges {
            new_chunks: proposals.iter().map(|p| p.chunk).collect(),
            ..RoundChanges::default()
        };
        if self.config.mode == Mode::Hvm {
            let made = propose_variables(&mut self.inventory, &base, &significant, &self.config, &self.retired)?;
            changes.new_variables = made.iter().map(|(v, p)| (*v, p.chunk)).collect();
            proposals.extend(made.into_iter().map(|(_, p)| p));
        }
        seed_counts(&mut self.inventory, &base, &proposals);
        if self.config.mode == Mode::Hvm {
            changes.merged = merge_variables(&mut self.inventory);
        }
        let mut keep_chunks: BTreeSet<ChunkId> = changes.new_chunks.iter().copied().collect();
        keep_chunks.extend(changes.new_variables.iter().map(|&(_, c)| c));
        let keep_vars: BTreeSet<VarId> = changes.new_variables.iter().map(|&(v, _)| v).collect();
        let before: Vec<(ChunkId, Vec<Shape>)> = self
            .inventory
            .chunks()
            .filter(|c| !self.inventory.is_atomic(c.id))
            .map(|c| (c.id, shape_of(&self.inventory, &c.terms)))
            .collect();
        let (pc, pv) = prune_unused(&mut self.inventory, &keep_chunks, &keep_vars);
        for (id, terms) in before {
            if self.inventory.get_chunk(id).is_none() {
                self.retired.insert(terms);
            }
        }
        changes.pruned_chunks = pc;
        changes.pruned_variables = pv;
        debug_assert!(self.inventory.validate().is_ok());
        self.graph = ParsingGraph::build(&self.inventory);
        Ok(changes)
    }
}

// ---------------------------------------------------------------------------
// Batch learning

/// Per-pass summary of the model that produced that pass's parse.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub num_chunks: usize,
    pub num_variables: usize,
    pub parse_len: usize,
    pub nll_independent: f64,
    pub rc_v: f64,
    pub entropy: f64,
    pub mean_pss: f64,
}

pub const TRAJECTORY_HEADER: &str =
    "iteration,num_chunks,num_variables,parse_len,nll_independent,rc_v,entropy,mean_pss";

pub fn trajectory_csv(records: &[IterationRecord]) -> String {
    let mut s = String::from(TRAJECTORY_HEADER);
    s.push('\n');
    for r in records {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.iteration, r.num_chunks, r.num_variables, r.parse_len, r.nll_independent, r.rc_v, r.entropy, r.mean_pss
        )
        .unwrap();
    }
    s
}

/// Batch learner over one fixed sequence. Counts are rebuilt from scratch
/// on every pass.
pub struct BatchLearner {
    learner: Learner,
    seq: Vec<Atom>,
    iteration: usize,
    last_len: Option<usize>,
    converged: bool,
}

/// Result of one batch pass.
#[derive(Clone, Debug)]
pub struct PassResult {
    pub record: IterationRecord,
    pub parse: ParseOutcome,
    pub changes: RoundChanges,
}

#[derive(Clone, Debug)]
pub struct BatchRun {
    /// Final inventory, with counts from `final_parse`.
    pub inventory: Inventory,
    pub graph: ParsingGraph,
    pub trajectory: Vec<IterationRecord>,
    pub final_parse: ParseOutcome,
    pub converged: bool,
}

impl BatchLearner {
    pub fn new(seq: &[Atom], config: LearnerConfig) -> Result<Self> {
        Self::with_inventory(seq, config, Inventory::from_sequence(seq))
    }

    /// Starts from a given inventory; atoms of `seq` it lacks are added.
    pub fn with_inventory(seq: &[Atom], config: LearnerConfig, inventory: Inventory) -> Result<Self> {
        if seq.is_empty() {
            return Err(Error::InvalidArgument("cannot learn from an empty sequence".into()));
        }
        let mut learner = Learner::new(config, inventory)?;
        learner.extend_alphabet(seq);
        Ok(BatchLearner {
            learner,
            seq: seq.to_vec(),
            iteration: 0,
            last_len: None,
            converged: false,
        })
    }

    pub fn learner(&self) -> &Learner {
        &self.learner
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn is_converged(&self) -> bool {
        self.converged
    }

    pub fn is_done(&self) -> bool {
        self.converged || self.iteration >= self.learner.config.max_iterations
    }

    /// Parses with fresh counts and records the measures of the model that
    /// produced the parse. The learner is left ready for `revise`.
    pub fn count_pass(&mut self) -> Result<(ParseOutcome, IterationRecord)> {
        let parse = self.learner.parse(&self.seq)?;
        let inv = &mut self.learner.inventory;
        inv.counts.clear();
        update_counts(inv, &parse);
        let eps = self.learner.config.smoothing_eps;
        let record = IterationRecord {
            iteration: self.iteration,
            num_chunks: inv.num_chunks(),
            num_variables: inv.num_variables(),
            parse_len: parse.len(),
            nll_independent: nll_independent(&parse, inv, eps),
            rc_v: representation_complexity(inv, eps).rc_v,
            entropy: representation_entropy(inv),
            mean_pss: parse.mean_steps(),
        };
        Ok((parse, record))
    }

    /// Learns structure from the counts of the pass that produced
    /// `parse_len` chunks, and tracks convergence.
    pub fn revise(&mut self, parse_len: usize) -> Result<RoundChanges> {
        let before = self.learner.inventory.signature();
        let changes = self.learner.learn_structure()?;
        let unchanged = self.learner.inventory.signature() == before;
        self.converged = unchanged && self.last_len == Some(parse_len);
        self.last_len = Some(parse_len);
        self.iteration += 1;
        Ok(changes)
    }

    /// One pass: parse, count, then learn structure.
    pub fn step(&mut self) -> Result<PassResult> {
        let (parse, record) = self.count_pass()?;
        let changes = self.revise(parse.len())?;
        Ok(PassResult { record, parse, changes })
    }

    /// Runs to convergence or the iteration cap, then parses once more with
    /// the final dictionary.
    pub fn run(mut self) -> Result<BatchRun> {
        let mut trajectory = Vec::new();
        while !self.is_done() {
            trajectory.push(self.step()?.record);
        }
        let (final_parse, _) = self.count_pass()?;
        Ok(BatchRun {
            inventory: self.learner.inventory,
            graph: self.learner.graph,
            trajectory,
            final_parse,
            converged: self.converged,
        })
    }
}

pub fn learn_batch(seq: &[Atom], config: &LearnerConfig) -> Result<BatchRun> {
    BatchLearner::new(seq, config.clone())?.run()
}

// ---------------------------------------------------------------------------
// Online learning

/// Trial-by-trial learner with decaying counts. Structure is revised after
/// every trial; transitions never span a trial boundary.
#[derive(Clone, Debug)]
pub struct OnlineLearner {
    learner: Learner,
}

impl OnlineLearner {
    pub fn new(alphabet: impl IntoIterator<Item = Atom>, config: LearnerConfig) -> Result<Self> {
        Ok(OnlineLearner {
            learner: Learner::new(config, Inventory::with_atoms(alphabet))?,
        })
    }

    pub fn learner(&self) -> &Learner {
        &self.learner
    }

    pub fn inventory(&self) -> &Inventory {
        &self.learner.inventory
    }

    /// Conditional NLL of `trial` under the current model.
    pub fn evaluate(&self, trial: &[Atom]) -> Result<f64> {
        let parse = self.learner.parse(trial)?;
        Ok(nll_conditional(
            &parse,
            &self.learner.inventory,
            self.learner.config.smoothing_eps,
        ))
    }

    /// Parses `trial`, folds it into the decaying counts and revises the
    /// structure.
    pub fn learn_trial(&mut self, trial: &[Atom]) -> Result<ParseOutcome> {
        self.learner.extend_alphabet(trial);
        let parse = self.learner.parse(trial)?;
        let theta = self.learner.config.theta;
        let per_chunk = self.learner.config.decay == DecayGranularity::PerChunk;
        let inv = &mut self.learner.inventory;
        if !per_chunk {
            inv.counts.decay(theta);
        }
        let mut prev = None;
        for p in &parse.parsed {
            if per_chunk {
                inv.counts.decay(theta);
            }
            observe_chunk(inv, p, prev);
            prev = Some(p.chunk);
        }
        self.learner.learn_structure()?;
        Ok(parse)
    }

    /// Evaluates then learns one trial, returning the pre-learning NLL.
    pub fn step(&mut self, trial: &[Atom]) -> Result<f64> {
        self.learner.extend_alphabet(trial);
        let nll = self.evaluate(trial)?;
        self.learn_trial(trial)?;
        Ok(nll)
    }
}

/// Runs an online learner over `trials`; the alphabet is every atom seen in
/// any trial. Returns the final inventory and each trial's pre-learning NLL.
pub fn learn_online(trials: &[Vec<Atom>], config: &LearnerConfig) -> Result<(Inventory, Vec<f64>)> {
    let alphabet: BTreeSet<Atom> = trials.iter().flatten().copied().collect();
    let mut learner = OnlineLearner::new(alphabet, config.clone())?;
    let nll = trials.iter().map(|t| learner.step(t)).collect::<Result<Vec<_>>>()?;
    Ok((learner.learner.inventory, nll))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::atom_terms;
    use crate::parser::parse_sequence;

    fn atoms(s: &str) -> Vec<Atom> {
        s.bytes().map(|b| Atom((b - b'a') as u32)).collect()
    }

    #[test]
    fn counts_from_parse() {
        let mut inv = Inventory::with_atoms(atoms("ab"));
        let g = ParsingGraph::build(&inv);
        let parse = parse_sequence(&g, &inv, &atoms("aba")).unwrap();
        update_counts(&mut inv, &parse);
        let (a, b) = (ChunkId(0), ChunkId(1));
        assert_eq!(inv.counts.chunk_marginal(a), 2.0);
        assert_eq!(inv.counts.chunk_marginal(b), 1.0);
        assert_eq!(inv.counts.transition(a, b), 1.0);
        assert_eq!(inv.counts.transition(b, a), 1.0);
        let before = inv.counts.clone();
        update_counts(&mut inv, &ParseOutcome::default());
        assert_eq!(inv.counts, before);
    }

    #[test]
    fn membership_counts_the_variable() {
        let mut inv = Inventory::with_atoms(atoms("ab"));
        let v = inv.add_variable(vec![ChunkId(0), ChunkId(1)], vec![0.0, 0.0]).unwrap();
        let g = ParsingGraph::build(&inv);
        let parse = parse_sequence(&g, &inv, &atoms("a")).unwrap();
        update_counts(&mut inv, &parse);
        assert_eq!(inv.counts.chunk_marginal(ChunkId(0)), 1.0);
        assert_eq!(inv.counts.var_marginal(v), 1.0);
        assert_eq!(inv.variable(v).unwrap().denote_count(ChunkId(0)), Some(1.0));
    }

    #[test]
    fn decay_arithmetic() {
        let mut counts = CountTables::new();
        counts.set_chunk_marginal(ChunkId(0), 10.0);
        apply_decay(&mut counts, 1.0);
        assert_eq!(counts.chunk_marginal(ChunkId(0)), 10.0);
        apply_decay(&mut counts, 0.996);
        assert!((counts.chunk_marginal(ChunkId(0)) - 9.96).abs() < 1e-12);
    }

    #[test]
    fn alternation_proposes_pair() {
        let seq = atoms(&"ab".repeat(50));
        let mut inv = Inventory::from_sequence(&seq);
        let g = ParsingGraph::build(&inv);
        let parse = parse_sequence(&g, &inv, &seq).unwrap();
        update_counts(&mut inv, &parse);
        assert!(test_independence(&inv.counts, ChunkId(0), ChunkId(1), 0.05).unwrap());
        let base = inv.counts.clone();
        let test = IndependenceTest::new(0.05, false).unwrap();
        let sig = significant_pairs(&base, &test);
        let created = propose_chunks(&mut inv, &sig, 3.0, &BTreeSet::new()).unwrap();
        let ab = inv.find_chunk(&atom_terms(&[0, 1])).unwrap();
        assert!(created.iter().any(|p| p.chunk == ab));
        // a second round does not duplicate
        let again = propose_chunks(&mut inv, &sig, 3.0, &BTreeSet::new()).unwrap();
        assert!(again.is_empty());
    }

    #[test]
    fn alternation_batch_halves_the_parse() {
        let seq = atoms(&"ab".repeat(100));
        let run = learn_batch(&seq, &LearnerConfig::default()).unwrap();
        assert!(run.inventory.find_chunk(&atom_terms(&[0, 1])).is_some() || run.final_parse.len() < 100);
        assert!(run.final_parse.len() <= 100);
        assert_eq!(run.trajectory[0].parse_len, 200);
        assert_eq!(run.trajectory[0].rc_v, 0.0);
    }

    #[test]
    fn hcm_never_creates_variables() {
        let seq = atoms(&"abcabdabcabd".repeat(20));
        let run = learn_batch(&seq, &LearnerConfig::with_mode(Mode::Hcm)).unwrap();
        assert_eq!(run.inventory.num_variables(), 0);
        assert!(run.trajectory.iter().all(|r| r.num_variables == 0));
    }

    fn abstraction_counts() -> (Inventory, ChunkId, ChunkId, ChunkId, ChunkId) {
        // A then ABC or DC, then ED
        let mut inv = Inventory::with_atoms(atoms("abcde"));
        let a = ChunkId(0);
        let abc = inv.add_chunk(atom_terms(&[0, 1, 2])).unwrap();
        let dc = inv.add_chunk(atom_terms(&[3, 2])).unwrap();
        let ed = inv.add_chunk(atom_terms(&[4, 3])).unwrap();
        for (l, r, n) in [(a, abc, 5.0), (a, dc, 5.0), (abc, ed, 5.0), (dc, ed, 5.0), (ed, a, 9.0)] {
            inv.counts.add_transition(l, r, n);
        }
        for (c, n) in [(a, 10.0), (abc, 5.0), (dc, 5.0), (ed, 10.0)] {
            inv.counts.set_chunk_marginal(c, n);
        }
        (inv, a, abc, dc, ed)
    }

    #[test]
    fn shared_context_yields_variable() {
        let (mut inv, a, abc, dc, ed) = abstraction_counts();
        let base = inv.counts.clone();
        let test = IndependenceTest::new(0.05, false).unwrap();
        let sig = significant_pairs(&base, &test);
        let made = propose_variables(&mut inv, &base, &sig, &LearnerConfig::default(), &BTreeSet::new()).unwrap();
        let (v, p) = made
            .iter()
            .copied()
            .find(|&(v, _)| {
                let var = inv.variable(v).unwrap();
                var.denotes(abc) && var.denotes(dc)
            })
            .expect("variable over ABC and DC");
        let expected = inv.concat_terms(a, Some(v), ed).unwrap();
        assert_eq!(inv.chunk(p.chunk).unwrap().terms, expected);
        assert_eq!(p.support, 10.0);
        seed_counts(&mut inv, &base, &[p]);
        assert_eq!(inv.counts.chunk_marginal(p.chunk), 10.0);
        // ED → A carries over to the new chunk in full
        assert!((inv.counts.transition(ed, p.chunk) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn seeding_links_two_new_chunks() {
        let seq = atoms(&"abcd".repeat(4));
        let mut inv = Inventory::from_sequence(&seq);
        let g = ParsingGraph::build(&inv);
        let parse = parse_sequence(&g, &inv, &seq).unwrap();
        update_counts(&mut inv, &parse);
        let base = inv.counts.clone();
        let ab = inv.add_chunk(atom_terms(&[0, 1])).unwrap();
        let cd = inv.add_chunk(atom_terms(&[2, 3])).unwrap();
        let (a, b, c, d) = (ChunkId(0), ChunkId(1), ChunkId(2), ChunkId(3));
        let props = [
            Proposal {
                chunk: ab,
                left: a,
                right: b,
                support: 4.0,
            },
            Proposal {
                chunk: cd,
                left: c,
                right: d,
                support: 4.0,
            },
        ];
        seed_counts(&mut inv, &base, &props);
        assert_eq!(inv.counts.chunk_marginal(ab), 4.0);
        // b → c happens 4 times and every b ends ab, every c starts cd
        assert_eq!(inv.counts.transition(ab, cd), 4.0);
        // d → a happens 3 times
        assert_eq!(inv.counts.transition(cd, ab), 3.0);
        assert_eq!(inv.counts.transition(d, ab), 3.0);
        assert_eq!(inv.counts.transition(d, a), 3.0);
    }

    #[test]
    fn variable_thresholds() {
        let (mut inv, ..) = abstraction_counts();
        let base = inv.counts.clone();
        let test = IndependenceTest::new(0.05, false).unwrap();
        let sig = significant_pairs(&base, &test);
        let strict = LearnerConfig {
            freq_t: 100.0,
            ..LearnerConfig::default()
        };
        assert!(propose_variables(&mut inv, &base, &sig, &strict, &BTreeSet::new())
            .unwrap()
            .is_empty());
        let narrow = LearnerConfig {
            t_min: 3,
            t_max: 3,
            ..LearnerConfig::default()
        };
        assert!(propose_variables(&mut inv, &base, &sig, &narrow, &BTreeSet::new())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn merge_same_context() {
        let mut inv = Inventory::with_atoms(atoms("abcdefg"));
        let v1 = inv.add_variable(vec![ChunkId(2), ChunkId(3)], vec![1.0, 1.0]).unwrap();
        let v2 = inv.add_variable(vec![ChunkId(4), ChunkId(5)], vec![2.0, 2.0]).unwrap();
        let c1 = inv
            .add_chunk(vec![Term::Atom(Atom(0)), Term::var(v1), Term::Atom(Atom(1))])
            .unwrap();
        let c2 = inv
            .add_chunk(vec![Term::Atom(Atom(0)), Term::var(v2), Term::Atom(Atom(1))])
            .unwrap();
        inv.counts.set_chunk_marginal(c1, 1.0);
        inv.counts.set_chunk_marginal(c2, 2.0);
        assert_eq!(merge_variables(&mut inv), 1);
        assert_eq!(inv.num_variables(), 1);
        let v = inv.variable(v1).unwrap();
        assert_eq!(v.denotees.len(), 4);
        assert_eq!(inv.counts.chunk_marginal(c1), 3.0);
        assert!(inv.get_chunk(c2).is_none());
        inv.validate().unwrap();
        // fixed point
        assert_eq!(merge_variables(&mut inv), 0);
    }

    #[test]
    fn disjoint_contexts_do_not_merge() {
        let mut inv = Inventory::with_atoms(atoms("abcdefg"));
        let v1 = inv.add_variable(vec![ChunkId(2), ChunkId(3)], vec![1.0, 1.0]).unwrap();
        let v2 = inv.add_variable(vec![ChunkId(4), ChunkId(5)], vec![1.0, 1.0]).unwrap();
        inv.add_chunk(vec![Term::Atom(Atom(0)), Term::var(v1)]).unwrap();
        inv.add_chunk(vec![Term::Atom(Atom(6)), Term::var(v2)]).unwrap();
        assert_eq!(merge_variables(&mut inv), 0);
    }

    #[test]
    fn prune_keeps_atoms_and_references() {
        let mut inv = Inventory::with_atoms(atoms("abc"));
        let ab = inv.add_chunk(atom_terms(&[0, 1])).unwrap();
        let bc = inv.add_chunk(atom_terms(&[1, 2])).unwrap();
        let v = inv.add_variable(vec![ab, bc], vec![0.0, 0.0]).unwrap();
        let avc = inv.add_chunk(vec![Term::Atom(Atom(0)), Term::var(v)]).unwrap();
        let ca = inv.add_chunk(atom_terms(&[2, 0])).unwrap();
        inv.counts.set_chunk_marginal(avc, 2.0);
        let (pc, pv) = prune_unused(&mut inv, &BTreeSet::new(), &BTreeSet::new());
        assert_eq!((pc, pv), (1, 0));
        assert!(inv.get_chunk(ca).is_none());
        assert!(inv.get_chunk(ab).is_some() && inv.get_variable(v).is_some());
        assert_eq!(inv.num_chunks(), 3 + 3);
        inv.validate().unwrap();
    }

    #[test]
    fn prune_keeps_prefixes_of_survivors() {
        let mut inv = Inventory::with_atoms(atoms("abc"));
        let ab = inv.add_chunk(atom_terms(&[0, 1])).unwrap();
        let abc = inv.add_chunk(atom_terms(&[0, 1, 2])).unwrap();
        let bc = inv.add_chunk(atom_terms(&[1, 2])).unwrap();
        inv.counts.set_chunk_marginal(abc, 1.0);
        let (pc, _) = prune_unused(&mut inv, &BTreeSet::new(), &BTreeSet::new());
        assert_eq!(pc, 1);
        assert!(inv.get_chunk(ab).is_some());
        assert!(inv.get_chunk(bc).is_none());
    }

    #[test]
    fn independent_nll_examples() {
        let mut inv = Inventory::with_atoms((0..4).map(Atom));
        for c in 0..4 {
            inv.counts.set_chunk_marginal(ChunkId(c), 1.0);
        }
        let g = ParsingGraph::build(&inv);
        let parse = parse_sequence(&g, &inv, &[Atom(0), Atom(1), Atom(2), Atom(3)]).unwrap();
        assert!((nll_independent(&parse, &inv, 1e-6) - 4.0 * 4f64.ln()).abs() < 1e-12);

        let mut one = Inventory::with_atoms([Atom(0)]);
        one.counts.set_chunk_marginal(ChunkId(0), 3.0);
        let g = ParsingGraph::build(&one);
        let parse = parse_sequence(&g, &one, &[Atom(0)]).unwrap();
        assert_eq!(nll_independent(&parse, &one, 1e-6), 0.0);
    }

    #[test]
    fn cold_conditional_nll_is_uniform() {
        let inv = Inventory::with_atoms((0..6).map(Atom));
        let g = ParsingGraph::build(&inv);
        let parse = parse_sequence(&g, &inv, &[Atom(0), Atom(3), Atom(5)]).unwrap();
        assert!((nll_conditional(&parse, &inv, 1e-6) - 3.0 * 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn learned_chain_costs_only_the_first_chunk() {
        let mut inv = Inventory::with_atoms(atoms("ab"));
        let g = ParsingGraph::build(&inv);
        let seq = atoms(&"ab".repeat(10));
        let parse = parse_sequence(&g, &inv, &seq).unwrap();
        update_counts(&mut inv, &parse);
        let nll = nll_conditional(&parse, &inv, 1e-6);
        assert!((nll - 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn online_first_trial_is_uniform_and_repeats_improve() {
        let trial = atoms("abcdabcd");
        let trials = vec![trial.clone(); 12];
        let config = LearnerConfig {
            theta: 0.996,
            ..LearnerConfig::default()
        };
        let (inv, nll) = learn_online(&trials, &config).unwrap();
        assert!((nll[0] - 8.0 * 4f64.ln()).abs() < 1e-9);
        assert!(nll[11] < nll[0]);
        for w in nll.windows(2).skip(3) {
            assert!(w[1] <= w[0] * 1.1 + 1e-9, "{nll:?}");
        }
        inv.validate().unwrap();
    }

    #[test]
    fn decay_keeps_counts_below_undecayed() {
        let trials = vec![atoms("abcab"); 5];
        let decayed = LearnerConfig {
            theta: 0.9,
            mode: Mode::Hcm,
            ..LearnerConfig::default()
        };
        let flat = LearnerConfig {
            theta: 1.0,
            ..decayed.clone()
        };
        let (a, _) = learn_online(&trials[..1], &decayed).unwrap();
        let (b, _) = learn_online(&trials[..1], &flat).unwrap();
        for (c, m) in a.counts.chunk_marginals() {
            assert!(m <= b.counts.chunk_marginal(c) + 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        assert!(LearnerConfig::default().validate().is_ok());
        for bad in [
            LearnerConfig {
                theta: 0.0,
                ..LearnerConfig::default()
            },
            LearnerConfig {
                alpha: 1.0,
                ..LearnerConfig::default()
            },
            LearnerConfig {
                t_min: 1,
                ..LearnerConfig::default()
            },
            LearnerConfig {
                t_min: 5,
                t_max: 4,
                ..LearnerConfig::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
        assert_eq!("hvm".parse::<Mode>().unwrap(), Mode::Hvm);
        assert!("x".parse::<Mode>().is_err());
    }

    #[test]
    fn trajectory_export() {
        let seq = atoms(&"abc".repeat(30));
        let run = learn_batch(&seq, &LearnerConfig::default()).unwrap();
        let csv = trajectory_csv(&run.trajectory);
        assert!(csv.starts_with(TRAJECTORY_HEADER));
        assert_eq!(csv.lines().count(), run.trajectory.len() + 1);
    }
}
