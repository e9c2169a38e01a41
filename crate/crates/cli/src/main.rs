use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hvm_core::corpus::{
    load_model, load_snippet, load_text, read_int_sequence, save_model, write_int_sequence, write_text,
};
use hvm_core::error::{Error, Result};
use hvm_core::experiments::{
    abstraction_sweep, corpus_csv, corpus_eval, describe_medians, gen_eval, gen_eval_csv, memory_csv, memory_series,
    memory_sim, sweep_csv, write_outputs, CorpusSpec, GenEvalSpec, Group, Manifest, MemorySpec, SweepSpec,
    MEMORY_MODELS,
};
use hvm_core::generator::{generate, GenConfig};
use hvm_core::learner::{trajectory_csv, BatchLearner, LearnerConfig, Mode};
use hvm_core::metrics::{report, MetricReport};
use hvm_core::parser::{Parser as ChunkParser, ParsingGraph};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "hvm",
    version,
    about = "Chunk and variable learning experiments over discrete sequences"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Score HVM, HCM, LZ78 and ground truth on generated sequences.
    GenEval(GenEvalArgs),
    /// Score LZ78, HCM and HVM on text snippets.
    CorpusEval(CorpusArgs),
    /// Simulate the sequence-recall experiment for control and variable groups.
    MemorySim(MemoryArgs),
    /// Track structure and transfer likelihood over learning iterations.
    AbstractionSweep(SweepArgs),
    /// Write a generated sequence and its ground truth.
    Gen(GenArgs),
    /// Parse an integer sequence with a saved model.
    Parse(ParseArgs),
    /// Learn a model from an integer sequence or a text file.
    Train(TrainArgs),
}

#[derive(Args, Debug, Clone)]
struct LearnerArgs {
    /// Count decay per step, in (0, 1].
    #[arg(long)]
    theta: Option<f64>,
    /// Significance level of the association test.
    #[arg(long)]
    alpha: Option<f64>,
    /// Smallest number of denotees a variable may have.
    #[arg(long)]
    t_min: Option<usize>,
    /// Largest number of denotees a variable may have.
    #[arg(long)]
    t_max: Option<usize>,
    /// Minimum summed frequency of a variable's denotees.
    #[arg(long)]
    freq_t: Option<f64>,
    /// Cap on batch learning iterations.
    #[arg(long)]
    iterations: Option<usize>,
    /// Minimum count before a pair or variable context is chunked.
    #[arg(long)]
    min_pair_count: Option<f64>,
    /// Apply the continuity correction to the association test.
    #[arg(long)]
    yates: bool,
}

impl LearnerArgs {
    fn apply(&self, mut config: LearnerConfig) -> Result<LearnerConfig> {
        if let Some(v) = self.theta {
            config.theta = v;
        }
        if let Some(v) = self.alpha {
            config.alpha = v;
        }
        if let Some(v) = self.t_min {
            config.t_min = v;
        }
        if let Some(v) = self.t_max {
            config.t_max = v;
        }
        if let Some(v) = self.freq_t {
            config.freq_t = v;
        }
        if let Some(v) = self.iterations {
            config.max_iterations = v;
        }
        if let Some(v) = self.min_pair_count {
            config.min_pair_count = v;
        }
        config.yates |= self.yates;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args, Debug)]
struct GeneratorArgs {
    #[arg(long, default_value_t = 10)]
    alphabet_size: usize,
    #[arg(long, default_value_t = 30)]
    depth: usize,
    #[arg(long, default_value_t = 1000)]
    length: usize,
}

#[derive(Args, Debug)]
struct GenEvalArgs {
    #[command(flatten)]
    generator: GeneratorArgs,
    /// Seeds to run; repeat the flag for several. Defaults to 0..20.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    learner: LearnerArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    generator: GeneratorArgs,
    /// Length of the fresh sequence scored after each iteration.
    #[arg(long, default_value_t = 1000)]
    transfer_length: usize,
    /// Seeds to run; repeat the flag for several. Defaults to 0..20.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    learner: LearnerArgs,
}

#[derive(Args, Debug)]
struct CorpusArgs {
    /// UTF-8 text file; repeat the flag for several.
    #[arg(long, required = true)]
    corpus: Vec<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    snippet_len: usize,
    /// Snippet seeds; repeat the flag for several. Defaults to 0.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    learner: LearnerArgs,
}

#[derive(Args, Debug)]
struct MemoryArgs {
    #[arg(long, default_value_t = 56)]
    subjects: usize,
    #[arg(long, default_value_t = 40)]
    training_trials: usize,
    #[arg(long, default_value_t = 40)]
    transfer_trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    learner: LearnerArgs,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    generator: GeneratorArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ParseArgs {
    /// Model JSON written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Whitespace-separated integer sequence.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Probability floor for unseen chunks.
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Whitespace-separated integer sequence.
    #[arg(long, conflicts_with = "corpus", required_unless_present = "corpus")]
    input: Option<PathBuf>,
    /// Text file, learned character by character.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// With --corpus, learn from a snippet of this many characters instead of the whole file.
    #[arg(long, requires = "corpus")]
    snippet_len: Option<usize>,
    /// Snippet seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "HVM")]
    mode: Mode,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    learner: LearnerArgs,
}

fn seeds_or(seeds: Vec<u64>, default: impl Iterator<Item = u64>) -> Vec<u64> {
    if seeds.is_empty() {
        default.collect()
    } else {
        seeds
    }
}

fn check_generator(g: &GeneratorArgs) -> Result<()> {
    GenConfig {
        alphabet_size: g.alphabet_size,
        depth: g.depth,
        seq_length: g.length,
        seed: 0,
    }
    .validate()
}

fn announce(paths: &[PathBuf], summary: &str) {
    for p in paths {
        println!("wrote {}", p.display());
    }
    if !summary.is_empty() {
        println!("{summary}");
    }
}

fn run_gen_eval(args: GenEvalArgs) -> Result<()> {
    check_generator(&args.generator)?;
    let spec = GenEvalSpec {
        alphabet_size: args.generator.alphabet_size,
        depth: args.generator.depth,
        seq_length: args.generator.length,
        seeds: seeds_or(args.seeds, 0..20),
        learner: args.learner.apply(LearnerConfig::default())?,
    };
    let rows = gen_eval(&spec)?;
    let (csv, manifest) = write_outputs(
        &args.out,
        "gen_eval",
        &gen_eval_csv(&rows),
        &Manifest::new("gen-eval", &spec),
    )?;
    let col = |model: &str| -> Vec<f64> {
        rows.iter()
            .filter(|r| r.model == model)
            .map(|r| r.parse_len as f64)
            .collect()
    };
    let summary = format!(
        "median parse length: {}",
        describe_medians(&[
            ("GT", col("GT")),
            ("HVM", col("HVM")),
            ("HCM", col("HCM")),
            ("LZ78", col("LZ78"))
        ])
    );
    announce(&[csv, manifest], &summary);
    Ok(())
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    check_generator(&args.generator)?;
    let spec = SweepSpec {
        alphabet_size: args.generator.alphabet_size,
        depth: args.generator.depth,
        seq_length: args.generator.length,
        transfer_length: args.transfer_length,
        seeds: seeds_or(args.seeds, 0..20),
        learner: args.learner.apply(LearnerConfig::default())?,
    };
    let rows = abstraction_sweep(&spec)?;
    let (csv, manifest) = write_outputs(
        &args.out,
        "abstraction_sweep",
        &sweep_csv(&rows),
        &Manifest::new("abstraction-sweep", &spec),
    )?;
    announce(&[csv, manifest], &format!("{} rows", rows.len()));
    Ok(())
}

fn run_corpus(args: CorpusArgs) -> Result<()> {
    let spec = CorpusSpec {
        files: args.corpus,
        snippet_len: args.snippet_len,
        seeds: seeds_or(args.seeds, 0..1),
        learner: args.learner.apply(LearnerConfig::default())?,
    };
    let rows = corpus_eval(&spec)?;
    let (csv, manifest) = write_outputs(
        &args.out,
        "corpus_eval",
        &corpus_csv(&rows),
        &Manifest::new("corpus-eval", &spec),
    )?;
    let col = |model: &str| -> Vec<f64> {
        rows.iter()
            .filter(|r| r.model == model)
            .map(|r| r.compression_ratio)
            .collect()
    };
    let summary = format!(
        "median compression ratio: {}",
        describe_medians(&[("HVM", col("HVM")), ("HCM", col("HCM")), ("LZ78", col("LZ78"))])
    );
    announce(&[csv, manifest], &summary);
    Ok(())
}

fn run_memory(args: MemoryArgs) -> Result<()> {
    let base = MemorySpec::default();
    let spec = MemorySpec {
        subjects: args.subjects,
        training_trials: args.training_trials,
        transfer_trials: args.transfer_trials,
        seed: args.seed,
        learner: args.learner.apply(base.learner)?,
    };
    if spec.subjects == 0 || spec.training_trials == 0 {
        return Err(Error::InvalidArgument(
            "need at least one subject and one training trial".into(),
        ));
    }
    let rows = memory_sim(&spec)?;
    let (csv, manifest) = write_outputs(
        &args.out,
        "memory_sim",
        &memory_csv(&rows),
        &Manifest::new("memory-sim", &spec),
    )?;
    let mut summary = String::from("mean transfer NLL:");
    if spec.transfer_trials > 0 {
        for model in MEMORY_MODELS {
            for group in [Group::Control, Group::Variable] {
                let s = memory_series(&rows, group, model, "transfer");
                let mean = s.iter().sum::<f64>() / s.len() as f64;
                summary.push_str(&format!(" {model}/{}={mean:.3}", group.name()));
            }
        }
    }
    announce(&[csv, manifest], &summary);
    Ok(())
}

#[derive(Serialize)]
struct GroundTruthDoc<'a> {
    inventory: &'a hvm_core::generator::GenInventory,
    ground_truth: &'a hvm_core::generator::GroundTruth,
    parse_length: usize,
}

fn run_gen(args: GenArgs) -> Result<()> {
    let config = GenConfig {
        alphabet_size: args.generator.alphabet_size,
        depth: args.generator.depth,
        seq_length: args.generator.length,
        seed: args.seed,
    };
    let (inv, seq, gt) = generate(&config)?;
    let seq_path = args.out.join("sequence.txt");
    let gt_path = args.out.join("ground_truth.json");
    write_int_sequence(&seq_path, &seq)?;
    let doc = GroundTruthDoc {
        inventory: &inv,
        ground_truth: &gt,
        parse_length: gt.parse_length(),
    };
    write_text(&gt_path, &(serde_json::to_string_pretty(&doc)? + "\n"))?;
    let manifest = write_manifest(&args.out, "gen", &config)?;
    announce(
        &[seq_path, gt_path, manifest],
        &format!("ground-truth parse length {}", gt.parse_length()),
    );
    Ok(())
}

fn write_manifest(dir: &Path, name: &str, spec: &impl Serialize) -> Result<PathBuf> {
    let path = dir.join(format!("{name}.manifest.json"));
    write_text(
        &path,
        &(serde_json::to_string_pretty(&Manifest::new(name, spec))? + "\n"),
    )?;
    Ok(path)
}

#[derive(Serialize)]
struct ParseSpec<'a> {
    model: &'a Path,
    input: &'a Path,
    eps: f64,
}

fn run_parse(args: ParseArgs) -> Result<()> {
    if !(args.eps > 0.0 && args.eps < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must lie in (0, 1), got {}",
            args.eps
        )));
    }
    let inv = load_model(&args.model)?;
    let seq = read_int_sequence(&args.input)?;
    if seq.is_empty() {
        return Err(Error::InsufficientData {
            needed: 1,
            available: 0,
        });
    }
    let graph = ParsingGraph::build(&inv);
    let parse = ChunkParser::new(&graph, &inv).parse(&seq)?;
    let rep = report(&inv, &graph, &parse, seq.len(), args.eps)?;
    let lines_path = args.out.join("parse.jsonl");
    write_text(&lines_path, &parse.to_json_lines())?;
    let csv = format!("{}\n{}\n", MetricReport::CSV_HEADER, rep.csv_row());
    let spec = ParseSpec {
        model: &args.model,
        input: &args.input,
        eps: args.eps,
    };
    let (csv_path, manifest) = write_outputs(&args.out, "parse", &csv, &Manifest::new("parse", &spec))?;
    announce(
        &[lines_path, csv_path, manifest],
        &format!("parse length {} over {} symbols", rep.parse_len, rep.seq_len),
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainSpec<'a> {
    input: Option<&'a Path>,
    corpus: Option<&'a Path>,
    snippet_len: Option<usize>,
    seed: u64,
    learner: &'a LearnerConfig,
    /// Character for each atom id when learning from text.
    symbols: Option<String>,
}

fn run_train(args: TrainArgs) -> Result<()> {
    let config = args.learner.apply(LearnerConfig::with_mode(args.mode))?;
    let (seq, symbols) = match (&args.input, &args.corpus) {
        (Some(path), _) => (read_int_sequence(path)?, None),
        (None, Some(path)) => {
            let (seq, table) = match args.snippet_len {
                Some(len) => load_snippet(path, len, args.seed)?,
                None => load_text(path)?,
            };
            (seq, Some(table.symbols().iter().collect::<String>()))
        }
        (None, None) => unreachable!("clap requires one input"),
    };
    if seq.is_empty() {
        return Err(Error::InsufficientData {
            needed: 1,
            available: 0,
        });
    }
    let run = BatchLearner::new(&seq, config.clone())?.run()?;
    let model_path = args.out.join("model.json");
    save_model(&model_path, &run.inventory)?;
    let spec = TrainSpec {
        input: args.input.as_deref(),
        corpus: args.corpus.as_deref(),
        snippet_len: args.snippet_len,
        seed: args.seed,
        learner: &config,
        symbols,
    };
    let (csv, manifest) = write_outputs(
        &args.out,
        "trajectory",
        &trajectory_csv(&run.trajectory),
        &Manifest::new("train", &spec),
    )?;
    let inv = &run.inventory;
    announce(
        &[model_path, csv, manifest],
        &format!(
            "{} after {} iterations: {} chunks, {} variables, parse length {}",
            if run.converged { "converged" } else { "stopped" },
            run.trajectory.len(),
            inv.num_learned_chunks(),
            inv.num_variables(),
            run.final_parse.len()
        ),
    );
    Ok(())
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    let body = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{body}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp
                    | ErrorKind::DisplayVersion
                    | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            ) {
                e.exit();
            }
            return fail("usage", e.to_string().trim().to_owned(), 2);
        }
    };
    let result = match cli.command {
        Command::GenEval(a) => run_gen_eval(a),
        Command::CorpusEval(a) => run_corpus(a),
        Command::MemorySim(a) => run_memory(a),
        Command::AbstractionSweep(a) => run_sweep(a),
        Command::Gen(a) => run_gen(a),
        Command::Parse(a) => run_parse(a),
        Command::Train(a) => run_train(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string(), 1),
    }
}
