//! Experiment drivers. Every run is a pure function of its configuration and
//! seeds; independent runs are spread across threads with rayon and
//! collected in seed order, so output is identical across reruns.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{lz78_metrics, lz78_parse, AlModel};
use crate::corpus::{load_snippet, write_text};
use crate::error::{Error, Result};
use crate::generator::{generate, stream_rng, GenConfig};
use crate::learner::{nll_independent, BatchLearner, IterationRecord, LearnerConfig, Mode, OnlineLearner};
use crate::model::Atom;
use crate::parser::{LinearScanner, Parser};

/// RNG stream for held-out sequences drawn from a generated inventory.
pub const TRANSFER_STREAM: u64 = 2;
/// First RNG stream used for simulated subjects.
const SUBJECT_STREAM_BASE: u64 = 16;

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// Generated sequences

#[derive(Clone, Debug, Serialize)]
pub struct GenEvalSpec {
    pub alphabet_size: usize,
    pub depth: usize,
    pub seq_length: usize,
    pub seeds: Vec<u64>,
    pub learner: LearnerConfig,
}

impl Default for GenEvalSpec {
    fn default() -> Self {
        GenEvalSpec {
            alphabet_size: 10,
            depth: 30,
            seq_length: 1000,
            seeds: (0..20).collect(),
            learner: LearnerConfig::default(),
        }
    }
}

/// One model's scores on one generated sequence.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenEvalRow {
    pub seed: u64,
    pub model: String,
    pub seq_len: usize,
    pub parse_len: usize,
    pub entries: Option<usize>,
    pub nll: Option<f64>,
    pub coding_efficiency: Option<f64>,
    /// Mean search steps per parsed chunk through the parsing graph.
    pub mean_pss: Option<f64>,
    /// Mean search steps for a flat scan over the same dictionary.
    pub scan_pss: Option<f64>,
}

pub const GEN_EVAL_HEADER: &str = "seed,model,seq_len,parse_len,entries,nll,coding_efficiency,mean_pss,scan_pss";

impl GenEvalRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.model,
            self.seq_len,
            self.parse_len,
            self.entries.map(|e| e.to_string()).unwrap_or_default(),
            opt(self.nll),
            opt(self.coding_efficiency),
            opt(self.mean_pss),
            opt(self.scan_pss)
        )
    }
}

fn chunk_model_row(seed: u64, seq: &[Atom], config: &LearnerConfig) -> Result<GenEvalRow> {
    let run = BatchLearner::new(seq, config.clone())?.run()?;
    let inv = &run.inventory;
    let scan = LinearScanner::new(inv)?.parse(seq)?;
    let entries = inv.num_learned_entries();
    Ok(GenEvalRow {
        seed,
        model: config.mode.to_string(),
        seq_len: seq.len(),
        parse_len: run.final_parse.len(),
        entries: Some(entries),
        nll: Some(nll_independent(&run.final_parse, inv, config.smoothing_eps)),
        coding_efficiency: Some(entries as f64 / seq.len() as f64),
        mean_pss: Some(run.final_parse.mean_steps()),
        scan_pss: Some(scan.mean_steps()),
    })
}

/// Rows for ground truth, HVM, HCM and LZ78 on one seed.
pub fn gen_eval_seed(spec: &GenEvalSpec, seed: u64) -> Result<Vec<GenEvalRow>> {
    let gen = GenConfig {
        alphabet_size: spec.alphabet_size,
        depth: spec.depth,
        seq_length: spec.seq_length,
        seed,
    };
    let (_, seq, gt) = generate(&gen)?;
    let mut rows = vec![GenEvalRow {
        seed,
        model: "GT".into(),
        seq_len: seq.len(),
        parse_len: gt.parse_length(),
        entries: None,
        nll: None,
        coding_efficiency: None,
        mean_pss: None,
        scan_pss: None,
    }];
    for mode in [Mode::Hvm, Mode::Hcm] {
        let config = LearnerConfig {
            mode,
            ..spec.learner.clone()
        };
        rows.push(chunk_model_row(seed, &seq, &config)?);
    }
    let lz = lz78_metrics(&lz78_parse(&seq), seq.len(), spec.learner.smoothing_eps)?;
    rows.push(GenEvalRow {
        seed,
        model: "LZ78".into(),
        seq_len: seq.len(),
        parse_len: lz.parse_len,
        entries: Some(lz.phrases),
        nll: Some(lz.nll),
        coding_efficiency: Some(lz.coding_efficiency),
        mean_pss: None,
        scan_pss: None,
    });
    Ok(rows)
}

pub fn gen_eval(spec: &GenEvalSpec) -> Result<Vec<GenEvalRow>> {
    spec.learner.validate()?;
    let per_seed: Vec<Vec<GenEvalRow>> = spec
        .seeds
        .par_iter()
        .map(|&s| gen_eval_seed(spec, s))
        .collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

pub fn gen_eval_csv(rows: &[GenEvalRow]) -> String {
    let mut s = format!("{GEN_EVAL_HEADER}\n");
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

// ---------------------------------------------------------------------------
// Abstraction sweep

#[derive(Clone, Debug, Serialize)]
pub struct SweepSpec {
    pub alphabet_size: usize,
    pub depth: usize,
    pub seq_length: usize,
    pub transfer_length: usize,
    pub seeds: Vec<u64>,
    pub learner: LearnerConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            alphabet_size: 10,
            depth: 30,
            seq_length: 1000,
            transfer_length: 1000,
            seeds: (0..20).collect(),
            learner: LearnerConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub seed: u64,
    pub model: String,
    pub iteration: usize,
    pub num_chunks: usize,
    pub num_variables: usize,
    pub parse_len: usize,
    pub rc_v: f64,
    pub entropy: f64,
    /// NLL of a fresh sequence from the same generator under this layer.
    pub transfer_nll: f64,
}

pub const SWEEP_HEADER: &str = "seed,model,iteration,num_chunks,num_variables,parse_len,rc_v,entropy,transfer_nll";

impl SweepRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.model,
            self.iteration,
            self.num_chunks,
            self.num_variables,
            self.parse_len,
            self.rc_v,
            self.entropy,
            self.transfer_nll
        )
    }
}

/// Layer-by-layer rows for one model on one training/transfer pair.
pub fn sweep_run(seed: u64, train: &[Atom], transfer: &[Atom], config: &LearnerConfig) -> Result<Vec<SweepRow>> {
    let mut learner = BatchLearner::new(train, config.clone())?;
    let mut rows = Vec::new();
    let row = |rec: IterationRecord, transfer_nll: f64| SweepRow {
        seed,
        model: config.mode.to_string(),
        iteration: rec.iteration,
        num_chunks: rec.num_chunks,
        num_variables: rec.num_variables,
        parse_len: rec.parse_len,
        rc_v: rec.rc_v,
        entropy: rec.entropy,
        transfer_nll,
    };
    let transfer_nll = |l: &BatchLearner| -> Result<f64> {
        let inner = l.learner();
        // atoms unseen in training still need a chunk to be parsed
        let mut probe = inner.clone();
        probe.extend_alphabet(transfer);
        let parse = Parser::new(probe.graph(), probe.inventory()).parse(transfer)?;
        Ok(nll_independent(&parse, probe.inventory(), config.smoothing_eps))
    };
    loop {
        let (parse, rec) = learner.count_pass()?;
        let t = transfer_nll(&learner)?;
        rows.push(row(rec, t));
        if learner.is_done() {
            break;
        }
        learner.revise(parse.len())?;
        if learner.is_converged() {
            break;
        }
    }
    Ok(rows)
}

pub fn abstraction_sweep_seed(spec: &SweepSpec, seed: u64) -> Result<Vec<SweepRow>> {
    let gen = GenConfig {
        alphabet_size: spec.alphabet_size,
        depth: spec.depth,
        seq_length: spec.seq_length,
        seed,
    };
    let (inv, train, _) = generate(&gen)?;
    let (transfer, _) = inv.sample_sequence(spec.transfer_length, &mut stream_rng(seed, TRANSFER_STREAM))?;
    let mut rows = Vec::new();
    for mode in [Mode::Hvm, Mode::Hcm] {
        let config = LearnerConfig {
            mode,
            ..spec.learner.clone()
        };
        rows.extend(sweep_run(seed, &train, &transfer, &config)?);
    }
    Ok(rows)
}

pub fn abstraction_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.learner.validate()?;
    let per_seed: Vec<Vec<SweepRow>> = spec
        .seeds
        .par_iter()
        .map(|&s| abstraction_sweep_seed(spec, s))
        .collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

// ---------------------------------------------------------------------------
// Text corpora

#[derive(Clone, Debug, Serialize)]
pub struct CorpusSpec {
    pub files: Vec<PathBuf>,
    pub snippet_len: usize,
    pub seeds: Vec<u64>,
    pub learner: LearnerConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorpusRow {
    pub file: String,
    pub seed: u64,
    pub model: String,
    pub compression_ratio: f64,
    pub nll: f64,
    pub coding_efficiency: f64,
}

pub const CORPUS_HEADER: &str = "file,seed,model,compression_ratio,nll,coding_efficiency";

impl CorpusRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.file.replace(',', "_"),
            self.seed,
            self.model,
            self.compression_ratio,
            self.nll,
            self.coding_efficiency
        )
    }
}

/// LZ78, HCM and HVM scores on one atom sequence.
pub fn evaluate_sequence(label: &str, seed: u64, seq: &[Atom], learner: &LearnerConfig) -> Result<Vec<CorpusRow>> {
    let n = seq.len() as f64;
    let lz = lz78_metrics(&lz78_parse(seq), seq.len(), learner.smoothing_eps)?;
    let mut rows = vec![CorpusRow {
        file: label.to_owned(),
        seed,
        model: "LZ78".into(),
        compression_ratio: lz.compression_ratio,
        nll: lz.nll,
        coding_efficiency: lz.coding_efficiency,
    }];
    for mode in [Mode::Hcm, Mode::Hvm] {
        let config = LearnerConfig {
            mode,
            ..learner.clone()
        };
        let run = BatchLearner::new(seq, config.clone())?.run()?;
        rows.push(CorpusRow {
            file: label.to_owned(),
            seed,
            model: mode.to_string(),
            compression_ratio: run.final_parse.len() as f64 / n,
            nll: nll_independent(&run.final_parse, &run.inventory, config.smoothing_eps),
            coding_efficiency: run.inventory.num_learned_entries() as f64 / n,
        });
    }
    Ok(rows)
}

pub fn corpus_eval(spec: &CorpusSpec) -> Result<Vec<CorpusRow>> {
    spec.learner.validate()?;
    let jobs: Vec<(&PathBuf, u64)> = spec
        .files
        .iter()
        .flat_map(|f| spec.seeds.iter().map(move |&s| (f, s)))
        .collect();
    let per_job: Vec<Vec<CorpusRow>> = jobs
        .par_iter()
        .map(|&(path, seed)| {
            let (seq, _) = load_snippet(path, spec.snippet_len, seed)?;
            evaluate_sequence(&path.display().to_string(), seed, &seq, &spec.learner)
        })
        .collect::<Result<_>>()?;
    Ok(per_job.into_iter().flatten().collect())
}

pub fn corpus_csv(rows: &[CorpusRow]) -> String {
    let mut s = format!("{CORPUS_HEADER}\n");
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

// ---------------------------------------------------------------------------
// Memory experiment simulation

/// Symbols of the memory task, A..F mapped to atoms 0..5.
pub const MEMORY_ALPHABET: &str = "ABCDEF";
pub const CONTROL_TRAINING: &str = "BADFDCBFFEDB";
pub const VARIABLE_TRAINING: &str = "BXDFDXBFFXDB";
pub const TRANSFER: &str = "DXBFFXDBBXFD";
pub const FILLERS: [char; 3] = ['A', 'C', 'E'];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Group {
    Control,
    Variable,
}

impl Group {
    pub fn name(self) -> &'static str {
        match self {
            Group::Control => "control",
            Group::Variable => "variable",
        }
    }
}

/// Atoms for a memory-task string; `X` is replaced by `fill`.
pub fn memory_atoms(pattern: &str, fill: char) -> Vec<Atom> {
    pattern
        .chars()
        .map(|c| {
            let c = if c == 'X' { fill } else { c };
            let i = MEMORY_ALPHABET.find(c).expect("memory symbols are A..F");
            Atom(i as u32)
        })
        .collect()
}

pub fn memory_string(atoms: &[Atom]) -> String {
    atoms
        .iter()
        .map(|a| MEMORY_ALPHABET.as_bytes()[a.0 as usize] as char)
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct MemorySpec {
    pub subjects: usize,
    pub training_trials: usize,
    pub transfer_trials: usize,
    pub seed: u64,
    pub learner: LearnerConfig,
}

impl Default for MemorySpec {
    fn default() -> Self {
        MemorySpec {
            subjects: 56,
            training_trials: 40,
            transfer_trials: 40,
            seed: 0,
            learner: LearnerConfig {
                theta: 0.996,
                ..LearnerConfig::default()
            },
        }
    }
}

/// Trial strings one simulated subject sees: training then transfer.
pub fn subject_trials(spec: &MemorySpec, group: Group, subject: usize) -> (Vec<Vec<Atom>>, Vec<Vec<Atom>>) {
    let stream = SUBJECT_STREAM_BASE + 2 * subject as u64 + (group == Group::Variable) as u64;
    let mut rng = stream_rng(spec.seed, stream);
    let mut fill = || *FILLERS.choose(&mut rng).expect("fillers are nonempty");
    let training = (0..spec.training_trials)
        .map(|_| match group {
            Group::Control => memory_atoms(CONTROL_TRAINING, 'A'),
            Group::Variable => memory_atoms(VARIABLE_TRAINING, fill()),
        })
        .collect();
    let transfer = (0..spec.transfer_trials)
        .map(|_| memory_atoms(TRANSFER, fill()))
        .collect();
    (training, transfer)
}

/// Pre-learning NLL per trial, training block then transfer block.
fn chunk_model_trials(train: &[Vec<Atom>], transfer: &[Vec<Atom>], config: &LearnerConfig) -> Result<Vec<f64>> {
    let alphabet = (0..MEMORY_ALPHABET.len() as u32).map(Atom);
    let mut learner = OnlineLearner::new(alphabet, config.clone())?;
    train.iter().chain(transfer).map(|t| learner.step(t)).collect()
}

fn al_trials(train: &[Vec<Atom>], transfer: &[Vec<Atom>], config: &LearnerConfig) -> Result<Vec<f64>> {
    let alphabet = (0..MEMORY_ALPHABET.len() as u32).map(Atom);
    let mut model = AlModel::new(config.theta, alphabet)?;
    Ok(train
        .iter()
        .chain(transfer)
        .map(|t| {
            let nll = model.nll(t, config.smoothing_eps);
            model.observe(t);
            nll
        })
        .collect())
}

pub const MEMORY_MODELS: [&str; 3] = ["HVM", "HCM", "AL"];

/// Per-trial NLL for one subject under each model, in `MEMORY_MODELS` order.
pub fn simulate_subject(spec: &MemorySpec, group: Group, subject: usize) -> Result<[Vec<f64>; 3]> {
    let (train, transfer) = subject_trials(spec, group, subject);
    let hvm = chunk_model_trials(
        &train,
        &transfer,
        &LearnerConfig {
            mode: Mode::Hvm,
            ..spec.learner.clone()
        },
    )?;
    let hcm = chunk_model_trials(
        &train,
        &transfer,
        &LearnerConfig {
            mode: Mode::Hcm,
            ..spec.learner.clone()
        },
    )?;
    let al = al_trials(&train, &transfer, &spec.learner)?;
    Ok([hvm, hcm, al])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemoryRow {
    pub group: &'static str,
    pub model: &'static str,
    pub block: &'static str,
    /// 1-based within the block.
    pub trial: usize,
    /// Mean over simulated subjects.
    pub nll: f64,
}

pub const MEMORY_HEADER: &str = "group,model,block,trial,nll";

impl MemoryRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.group, self.model, self.block, self.trial, self.nll
        )
    }
}

pub fn memory_sim(spec: &MemorySpec) -> Result<Vec<MemoryRow>> {
    spec.learner.validate()?;
    if spec.subjects == 0 {
        return Err(Error::InvalidArgument("need at least one subject".into()));
    }
    let mut rows = Vec::new();
    for group in [Group::Control, Group::Variable] {
        let subjects: Vec<[Vec<f64>; 3]> = (0..spec.subjects)
            .into_par_iter()
            .map(|s| simulate_subject(spec, group, s))
            .collect::<Result<_>>()?;
        for (m, model) in MEMORY_MODELS.iter().enumerate() {
            let total = spec.training_trials + spec.transfer_trials;
            for t in 0..total {
                let mean = subjects.iter().map(|s| s[m][t]).sum::<f64>() / spec.subjects as f64;
                let (block, trial) = if t < spec.training_trials {
                    ("training", t + 1)
                } else {
                    ("transfer", t - spec.training_trials + 1)
                };
                rows.push(MemoryRow {
                    group: group.name(),
                    model,
                    block,
                    trial,
                    nll: mean,
                });
            }
        }
    }
    Ok(rows)
}

pub fn memory_csv(rows: &[MemoryRow]) -> String {
    let mut s = format!("{MEMORY_HEADER}\n");
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Per-trial mean NLL for one (group, model, block) series.
pub fn memory_series(rows: &[MemoryRow], group: Group, model: &str, block: &str) -> Vec<f64> {
    rows.iter()
        .filter(|r| r.group == group.name() && r.model == model && r.block == block)
        .map(|r| r.nll)
        .collect()
}

// ---------------------------------------------------------------------------
// Output

/// Writes `<name>.csv` and `<name>.manifest.json` into `dir`.
pub fn write_outputs(dir: &Path, name: &str, csv: &str, manifest: &impl Serialize) -> Result<(PathBuf, PathBuf)> {
    let csv_path = dir.join(format!("{name}.csv"));
    let manifest_path = dir.join(format!("{name}.manifest.json"));
    write_text(&csv_path, csv)?;
    let mut json = serde_json::to_string_pretty(manifest)?;
    json.push('\n');
    write_text(&manifest_path, &json)?;
    Ok((csv_path, manifest_path))
}

/// Manifest body recording what produced an output.
#[derive(Serialize)]
pub struct Manifest<'a, S: Serialize> {
    pub experiment: &'a str,
    pub version: &'a str,
    pub spec: &'a S,
}

impl<'a, S: Serialize> Manifest<'a, S> {
    pub fn new(experiment: &'a str, spec: &'a S) -> Self {
        Manifest {
            experiment,
            version: env!("CARGO_PKG_VERSION"),
            spec,
        }
    }
}

/// Summary line helper shared by the CLI: median of a column per model.
pub fn describe_medians(pairs: &[(&str, Vec<f64>)]) -> String {
    let mut s = String::new();
    for (name, xs) in pairs {
        if let Some(m) = crate::stats::median(xs) {
            let _ = write!(s, "{name}={m:.4} ");
        }
    }
    s.trim_end().to_owned()
}
