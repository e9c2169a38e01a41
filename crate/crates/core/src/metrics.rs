//! Evaluation measures over a trained inventory and a parse. All logarithms
//! are natural (nats).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::learner::nll_independent;
use crate::model::{ChunkId, Inventory};
use crate::parser::{ParseOutcome, ParsingGraph};

/// Parse length over sequence length (|W| / |S|); below one means compression.
pub fn compression_ratio(parse_len: usize, seq_len: usize) -> Result<f64> {
    if seq_len == 0 {
        return Err(Error::InvalidArgument("sequence length is zero".into()));
    }
    Ok(parse_len as f64 / seq_len as f64)
}

/// Learned dictionary entries per input symbol.
pub fn coding_efficiency(entries: usize, seq_len: usize) -> Result<f64> {
    if seq_len == 0 {
        return Err(Error::InvalidArgument("sequence length is zero".into()));
    }
    Ok(entries as f64 / seq_len as f64)
}

/// Average number of atoms explained per parsed unit (|S| / |W|).
pub fn explanatory_volume(parse_len: usize, seq_len: usize) -> Result<f64> {
    if parse_len == 0 {
        return Err(Error::InvalidArgument("parse length is zero".into()));
    }
    Ok(seq_len as f64 / parse_len as f64)
}

/// P(c) from chunk marginals; uniform when every marginal is zero.
pub fn chunk_distribution(inv: &Inventory) -> BTreeMap<ChunkId, f64> {
    let total = inv.counts.total_chunk_mass();
    let n = inv.num_chunks().max(1) as f64;
    inv.chunk_ids()
        .map(|c| {
            let p = if total > 0.0 {
                inv.counts.chunk_marginal(c) / total
            } else {
                1.0 / n
            };
            (c, p)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RepresentationComplexity {
    /// Σ_v Σ_{u∈E(v)} −log P(u|v)
    pub rc_v: f64,
    /// `rc_v` plus Σ_v −log P(v) plus Σ_c −log P(c)
    pub rc_g: f64,
}

pub fn representation_complexity(inv: &Inventory, eps: f64) -> RepresentationComplexity {
    let rc_v: f64 = inv
        .variables()
        .map(|v| v.conditional_probs(eps).iter().map(|p| -p.ln()).sum::<f64>())
        .sum();

    let var_total: f64 = inv.variables().map(|v| inv.counts.var_marginal(v.id)).sum();
    let nv = inv.num_variables().max(1) as f64;
    let var_cost: f64 = inv
        .variables()
        .map(|v| {
            let p = if var_total > 0.0 {
                inv.counts.var_marginal(v.id) / var_total
            } else {
                1.0 / nv
            };
            -p.max(eps).ln()
        })
        .sum();
    let chunk_cost: f64 = chunk_distribution(inv).values().map(|p| -p.max(eps).ln()).sum();

    RepresentationComplexity {
        rc_v,
        rc_g: rc_v + var_cost + chunk_cost,
    }
}

/// Σ_c P(c) Σ_{v embedded in c} H(v), with H over the denote-count
/// distribution.
pub fn representation_entropy(inv: &Inventory) -> f64 {
    let var_entropy: BTreeMap<_, f64> = inv
        .variables()
        .map(|v| {
            let h = v
                .conditional_probs(0.0)
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|p| -p * p.ln())
                .sum();
            (v.id, h)
        })
        .collect();
    chunk_distribution(inv)
        .into_iter()
        .map(|(c, p)| {
            let h: f64 = inv
                .embedded_variables(c)
                .iter()
                .map(|v| var_entropy.get(v).copied().unwrap_or(0.0))
                .sum();
            p * h
        })
        .sum()
}

/// Empirical chunk distribution of a parse.
pub fn parse_distribution(parse: &ParseOutcome) -> BTreeMap<ChunkId, f64> {
    let mut freq = BTreeMap::new();
    for c in parse.chunk_ids() {
        *freq.entry(c).or_insert(0.0) += 1.0;
    }
    let n = parse.len() as f64;
    for p in freq.values_mut() {
        *p /= n;
    }
    freq
}

/// A tree of categories for comparing nested and flat encodings. Roots carry
/// a marginal probability; every other node carries its probability given
/// its parent.
#[derive(Clone, Debug, Default)]
pub struct EncodingGraph {
    nodes: Vec<EncodingNode>,
}

#[derive(Clone, Debug)]
struct EncodingNode {
    name: String,
    parent: Option<usize>,
    prob: f64,
}

impl EncodingGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_root(&mut self, name: &str, prob: f64) -> Result<usize> {
        self.push(name, None, prob)
    }

    pub fn add_child(&mut self, parent: usize, name: &str, prob_given_parent: f64) -> Result<usize> {
        if parent >= self.nodes.len() {
            return Err(Error::InvalidArgument(format!("no node {parent}")));
        }
        self.push(name, Some(parent), prob_given_parent)
    }

    fn push(&mut self, name: &str, parent: Option<usize>, prob: f64) -> Result<usize> {
        if !(prob > 0.0 && prob <= 1.0) {
            return Err(Error::InvalidDistribution(prob));
        }
        self.nodes.push(EncodingNode {
            name: name.to_owned(),
            parent,
            prob,
        });
        Ok(self.nodes.len() - 1)
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// Unconditional probability of a node: the product along its path.
    pub fn marginal(&self, node: usize) -> f64 {
        let mut p = 1.0;
        let mut cur = Some(node);
        while let Some(i) = cur {
            p *= self.nodes[i].prob;
            cur = self.nodes[i].parent;
        }
        p
    }

    /// Cost when each category is coded relative to its parent.
    pub fn nested_cost(&self) -> f64 {
        self.nodes.iter().map(|n| -n.prob.ln()).sum()
    }

    /// Cost when every category is coded on its own.
    pub fn flat_cost(&self) -> f64 {
        (0..self.nodes.len()).map(|i| -self.marginal(i).ln()).sum()
    }
}

/// All measures for one model on one sequence.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub seq_len: usize,
    pub parse_len: usize,
    pub entries: usize,
    pub compression_ratio: f64,
    pub coding_efficiency: f64,
    pub explanatory_volume: f64,
    pub nll: f64,
    pub rc_v: f64,
    pub rc_g: f64,
    pub entropy: f64,
    pub mean_pss: f64,
    pub epss: f64,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "seq_len,parse_len,entries,compression_ratio,coding_efficiency,\
explanatory_volume,nll,rc_v,rc_g,entropy,mean_pss,epss,base";

    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},e",
            self.seq_len,
            self.parse_len,
            self.entries,
            self.compression_ratio,
            self.coding_efficiency,
            self.explanatory_volume,
            self.nll,
            self.rc_v,
            self.rc_g,
            self.entropy,
            self.mean_pss,
            self.epss
        )
        .unwrap();
        s
    }
}

/// Assembles every measure. `inv.counts` supplies the probabilities, so the
/// counts should come from the parse being reported.
pub fn report(
    inv: &Inventory,
    graph: &ParsingGraph,
    parse: &ParseOutcome,
    seq_len: usize,
    eps: f64,
) -> Result<MetricReport> {
    let rc = representation_complexity(inv, eps);
    let entries = inv.num_learned_entries();
    Ok(MetricReport {
        seq_len,
        parse_len: parse.len(),
        entries,
        compression_ratio: compression_ratio(parse.len(), seq_len)?,
        coding_efficiency: coding_efficiency(entries, seq_len)?,
        explanatory_volume: explanatory_volume(parse.len(), seq_len)?,
        nll: nll_independent(parse, inv, eps),
        rc_v: rc.rc_v,
        rc_g: rc.rc_g,
        entropy: representation_entropy(inv),
        mean_pss: parse.mean_steps(),
        epss: graph.expected_pss(&parse_distribution(parse))?,
    })
}
