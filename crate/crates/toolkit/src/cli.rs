//! The `boxword` command line: preprocess, train, eval, nn, freq-analysis,
//! and hp-sample subcommands over the shared vocab/model file formats.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::corpus::{CleanLines, CorpusError, Vocab};
use crate::eval::{
    self, datasets, EvalError, EvalReport, NeighborOrder, OovPolicy, SimilarityDataset,
};
use crate::model::{Kind, Model, ModelError};
use crate::trainer::{self, TokenizedCorpus, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(name = "boxword", version, about = "Train and evaluate box and vector word embeddings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean a raw corpus and build its vocabulary.
    Preprocess(PreprocessArgs),
    /// Train a model on a preprocessed corpus.
    Train(TrainArgs),
    /// Evaluate a model on word-similarity benchmarks.
    Eval(EvalArgs),
    /// List the nearest neighbors of a word.
    Nn(NnArgs),
    /// Frequency-thresholded correlation curves (plot-ready TSV).
    FreqAnalysis(FreqAnalysisArgs),
    /// Sample hyperparameter configurations for batch launching.
    HpSample(HpSampleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Box,
    Vector,
}

impl From<KindArg> for Kind {
    fn from(k: KindArg) -> Kind {
        match k {
            KindArg::Box => Kind::Box,
            KindArg::Vector => Kind::Vector,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrderArg {
    Score,
    Volume,
    Norm,
}

impl From<OrderArg> for NeighborOrder {
    fn from(o: OrderArg) -> NeighborOrder {
        match o {
            OrderArg::Score => NeighborOrder::Score,
            OrderArg::Volume => NeighborOrder::Volume,
            OrderArg::Norm => NeighborOrder::Norm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OovArg {
    Skip,
    Fail,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Raw UTF-8 corpus, one segment per line.
    pub input: PathBuf,
    /// Cleaned corpus output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Vocabulary TSV output path.
    #[arg(long)]
    pub vocab_out: PathBuf,
    /// Drop tokens occurring fewer than this many times.
    #[arg(long, default_value_t = 100)]
    pub min_count: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Cleaned corpus from `preprocess`.
    pub corpus: PathBuf,
    /// Vocabulary TSV from `preprocess`.
    pub vocab: PathBuf,
    /// Run directory for model, trace, config, and manifest.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = KindArg::Box)]
    pub kind: KindArg,
    /// Embedding dimension; defaults to 64 for boxes, 128 for vectors
    /// (matched parameter budgets: a box uses 2 parameters per dimension).
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub epochs: u32,
    #[arg(long, default_value_t = 4096)]
    pub batch_size: usize,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 5)]
    pub negatives: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub subsample: f64,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 5.0)]
    pub margin: f64,
    #[arg(long, default_value_t = 100)]
    pub min_count: u64,
    /// Falls back to BOXWORD_SEED, then 1.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Fixed iteration order; requires --workers 1.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model file from `train`.
    pub model: PathBuf,
    /// One or more benchmark files (published formats are auto-detected).
    #[arg(required = true)]
    pub datasets: Vec<PathBuf>,
    /// Report TSV output path.
    #[arg(long, default_value = "report.tsv")]
    pub report: PathBuf,
    /// Comma-separated ascending frequency thresholds; when given, a
    /// threshold TSV is written per dataset next to the report.
    #[arg(long)]
    pub thresholds: Option<String>,
    #[arg(long, value_enum, default_value_t = OovArg::Skip)]
    pub oov: OovArg,
    /// Gumbel temperature for box similarity scores.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
}

#[derive(Debug, Args)]
pub struct NnArgs {
    pub model: PathBuf,
    pub word: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = OrderArg::Score)]
    pub order: OrderArg,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
}

#[derive(Debug, Args)]
pub struct FreqAnalysisArgs {
    pub model: PathBuf,
    #[arg(required = true)]
    pub datasets: Vec<PathBuf>,
    /// Comma-separated ascending frequency thresholds.
    #[arg(long)]
    pub thresholds: String,
    /// Output directory for the per-dataset threshold TSVs.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
}

#[derive(Debug, Args)]
pub struct HpSampleArgs {
    /// Number of configurations to sample.
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for config files.
    #[arg(long, default_value = "hp-configs")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = KindArg::Box)]
    pub kind: KindArg,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub epochs: u32,
}

/// --seed, then the BOXWORD_SEED environment variable, then 1.
pub fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| std::env::var("BOXWORD_SEED").ok().and_then(|s| s.parse().ok()))
        .unwrap_or(1)
}

/// Flat key=value record written next to every subcommand's outputs.
#[derive(Debug, Default)]
pub struct RunManifest {
    pub entries: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: u64) -> Self {
        let mut m = RunManifest::default();
        m.push("subcommand", subcommand);
        m.push("version", crate::VERSION);
        m.push("seed", seed.to_string());
        m
    }

    pub fn push(&mut self, key: &str, value: impl AsRef<str>) {
        self.entries.push((key.to_string(), value.as_ref().to_string()));
    }

    pub fn push_config(&mut self, config: &TrainConfig) {
        for line in config.to_key_values().lines() {
            if let Some((k, v)) = line.split_once('=') {
                self.push(&format!("config.{k}"), v);
            }
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn write_to(&self, path: &Path) -> std::io::Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        for (k, v) in &self.entries {
            writeln!(w, "{k}={v}")?;
        }
        w.flush()
    }

    pub fn read_from(path: &Path) -> std::io::Result<Self> {
        let mut m = RunManifest::default();
        for line in BufReader::new(fs::File::open(path)?).lines() {
            let line = line?;
            if let Some((k, v)) = line.split_once('=') {
                m.push(k, v);
            }
        }
        Ok(m)
    }

    /// Reconstruct the training hyperparameters recorded by `push_config`.
    pub fn config(&self) -> Result<TrainConfig, TrainError> {
        let text: String = self
            .entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("config.").map(|k| format!("{k}={v}\n")))
            .collect();
        TrainConfig::from_key_values(&text)
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Preprocess(args) => cmd_preprocess(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Nn(args) => cmd_nn(&args),
        Command::FreqAnalysis(args) => cmd_freq_analysis(&args),
        Command::HpSample(args) => cmd_hp_sample(&args),
    }
}

pub fn cmd_preprocess(args: &PreprocessArgs) -> Result<(), CliError> {
    let input = fs::File::open(&args.input)?;
    let mut out = BufWriter::new(fs::File::create(&args.out)?);

    let mut counts: std::collections::HashMap<String, u64> = std::collections::HashMap::new();
    let mut n_tokens = 0u64;
    for segment in CleanLines::new(BufReader::new(input)) {
        let segment = segment?;
        if segment.is_empty() {
            continue;
        }
        n_tokens += segment.len() as u64;
        for token in &segment {
            *counts.entry(token.clone()).or_insert(0) += 1;
        }
        writeln!(out, "{}", segment.join(" "))?;
    }
    out.flush()?;

    let vocab_len = if n_tokens == 0 {
        eprintln!("warning: {} produced no tokens; writing empty outputs", args.input.display());
        fs::write(&args.vocab_out, "")?;
        0
    } else {
        let vocab = Vocab::from_counts(counts, args.min_count)?;
        let mut w = BufWriter::new(fs::File::create(&args.vocab_out)?);
        vocab.write_tsv(&mut w)?;
        w.flush()?;
        vocab.len()
    };

    let mut manifest = RunManifest::new("preprocess", 0);
    manifest.push("input.corpus", args.input.display().to_string());
    manifest.push("output.corpus", args.out.display().to_string());
    manifest.push("output.vocab", args.vocab_out.display().to_string());
    manifest.push("min_count", args.min_count.to_string());
    manifest.write_to(&manifest_path(&args.out))?;

    println!("tokens: {n_tokens}");
    println!("vocabulary: {vocab_len}");
    Ok(())
}

impl TrainArgs {
    pub fn to_config(&self) -> TrainConfig {
        let kind: Kind = self.kind.into();
        let mut cfg = TrainConfig::defaults(kind);
        cfg.dim = self.dim.unwrap_or(cfg.dim);
        cfg.epochs = self.epochs;
        cfg.batch_size = self.batch_size;
        cfg.learning_rate = self.learning_rate.unwrap_or(cfg.learning_rate);
        cfg.window = self.window;
        cfg.negatives_k = self.negatives;
        cfg.subsample_t = self.subsample;
        cfg.beta = self.beta;
        cfg.margin = self.margin;
        cfg.min_count = self.min_count;
        cfg.seed = resolve_seed(self.seed);
        cfg.workers = self.workers;
        cfg.deterministic = self.deterministic;
        cfg
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let config = args.to_config();
    config.validate()?;

    let vocab = Vocab::read_tsv(BufReader::new(fs::File::open(&args.vocab)?))?;
    let corpus = TokenizedCorpus::load(&args.corpus, &vocab)?;
    println!(
        "training {} model: dim={} vocab={} tokens={}",
        config.kind.name(),
        config.dim,
        vocab.len(),
        corpus.token_count()
    );

    let outcome = trainer::train(&config, &corpus, &vocab)?;
    trainer::write_run_dir(&args.out, &config, &outcome)?;

    let mut manifest = RunManifest::new("train", config.seed);
    manifest.push("input.corpus", args.corpus.display().to_string());
    manifest.push("input.vocab", args.vocab.display().to_string());
    manifest.push("output.dir", args.out.display().to_string());
    manifest.push_config(&config);
    manifest.write_to(&args.out.join("manifest.txt"))?;

    for (epoch, mean) in outcome.epoch_mean_loss.iter().enumerate() {
        println!("epoch {:>3}: mean loss {mean:.6}", epoch + 1);
    }
    println!("model written to {}", args.out.join("model.w2bx").display());
    Ok(())
}

fn parse_thresholds(spec: &str) -> Result<Vec<u64>, CliError> {
    let thresholds: Result<Vec<u64>, _> =
        spec.split(',').map(|t| t.trim().parse::<u64>()).collect();
    let thresholds =
        thresholds.map_err(|e| CliError::Usage(format!("bad --thresholds value: {e}")))?;
    if thresholds.is_empty() {
        return Err(CliError::Usage("--thresholds must name at least one value".into()));
    }
    Ok(thresholds)
}

fn load_datasets(paths: &[PathBuf]) -> Result<Vec<SimilarityDataset>, CliError> {
    paths.iter().map(|p| datasets::load(p).map_err(CliError::from)).collect()
}

fn print_report_table(reports: &[EvalReport]) {
    println!("{:<16} {:>8} {:>7} {:>6} {:>12}", "dataset", "rho*100", "pairs", "oov", "median_freq");
    for r in reports {
        let median =
            r.median_frequency.map(|m| format!("{m:.1}")).unwrap_or_else(|| "NA".into());
        println!(
            "{:<16} {:>8.2} {:>7} {:>6} {:>12}",
            r.dataset, r.rho_x100, r.n_pairs_scored, r.n_pairs_oov, median
        );
    }
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let model = Model::read_from_path(&args.model)?;
    let policy = match args.oov {
        OovArg::Skip => OovPolicy::Skip,
        OovArg::Fail => OovPolicy::Fail,
    };
    let loaded = load_datasets(&args.datasets)?;

    let mut reports = Vec::new();
    for dataset in &loaded {
        reports.push(eval::evaluate(&model, dataset, policy, args.beta)?);
    }
    print_report_table(&reports);

    let mut w = BufWriter::new(fs::File::create(&args.report)?);
    eval::write_report_tsv(&mut w, &reports)?;
    w.flush()?;

    let mut manifest = RunManifest::new("eval", 0);
    manifest.push("input.model", args.model.display().to_string());
    for (i, p) in args.datasets.iter().enumerate() {
        manifest.push(&format!("input.dataset.{i}"), p.display().to_string());
    }
    manifest.push("output.report", args.report.display().to_string());
    manifest.push("beta", args.beta.to_string());

    if let Some(spec) = &args.thresholds {
        let thresholds = parse_thresholds(spec)?;
        for dataset in &loaded {
            let points = eval::threshold_correlation(
                &model,
                dataset,
                &model.vocab,
                &thresholds,
                args.beta,
            )?;
            let path = threshold_tsv_path(&args.report, &dataset.name);
            let mut w = BufWriter::new(fs::File::create(&path)?);
            eval::write_threshold_tsv(&mut w, &points)?;
            w.flush()?;
            manifest.push(&format!("output.thresholds.{}", dataset.name), path.display().to_string());
        }
    }

    manifest.write_to(&manifest_path(&args.report))?;
    Ok(())
}

pub fn cmd_nn(args: &NnArgs) -> Result<(), CliError> {
    let model = Model::read_from_path(&args.model)?;
    let vocab_limit = model.vocab.len().saturating_sub(1);
    let k = if args.k > vocab_limit {
        eprintln!("warning: --k {} clamped to vocabulary size - 1 = {vocab_limit}", args.k);
        vocab_limit
    } else {
        args.k
    };

    let neighbors = match eval::nearest_neighbors(&model, &args.word, k, args.order.into(), args.beta)
    {
        Err(EvalError::OovWord(word)) => {
            let suggestions = nearest_strings(&word, &model.vocab, 3);
            return Err(CliError::Usage(format!(
                "'{word}' is not in the vocabulary; nearest vocabulary words: {}",
                suggestions.join(", ")
            )));
        }
        other => other?,
    };

    let magnitude_label = match model.table.kind() {
        Kind::Box => "log_volume",
        Kind::Vector => "norm",
    };
    println!("{:<6} {:<20} {:>12} {:>12}", "rank", "word", "score", magnitude_label);
    for (rank, n) in neighbors.iter().enumerate() {
        println!("{:<6} {:<20} {:>12.4} {:>12.4}", rank + 1, n.word, n.similarity, n.magnitude);
    }
    Ok(())
}

pub fn cmd_freq_analysis(args: &FreqAnalysisArgs) -> Result<(), CliError> {
    let model = Model::read_from_path(&args.model)?;
    let thresholds = parse_thresholds(&args.thresholds)?;
    let loaded = load_datasets(&args.datasets)?;
    fs::create_dir_all(&args.out)?;

    let mut manifest = RunManifest::new("freq-analysis", 0);
    manifest.push("input.model", args.model.display().to_string());
    manifest.push("thresholds", &args.thresholds);

    for dataset in &loaded {
        let points =
            eval::threshold_correlation(&model, dataset, &model.vocab, &thresholds, args.beta)?;
        let path = args.out.join(format!("{}.thresholds.tsv", dataset.name));
        let mut w = BufWriter::new(fs::File::create(&path)?);
        eval::write_threshold_tsv(&mut w, &points)?;
        w.flush()?;
        manifest.push(&format!("output.{}", dataset.name), path.display().to_string());
        println!("{}: {} thresholds -> {}", dataset.name, points.len(), path.display());
    }

    manifest.write_to(&args.out.join("freq-analysis.manifest.txt"))?;
    Ok(())
}

pub fn cmd_hp_sample(args: &HpSampleArgs) -> Result<(), CliError> {
    if args.n == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let seed = resolve_seed(args.seed);
    let mut base = TrainConfig::defaults(args.kind.into());
    base.dim = args.dim.unwrap_or(base.dim);
    base.epochs = args.epochs;

    let configs = trainer::hyperparameter_sample(&base, seed, args.n);
    fs::create_dir_all(&args.out)?;
    let mut manifest = RunManifest::new("hp-sample", seed);
    manifest.push("n", args.n.to_string());
    for (i, cfg) in configs.iter().enumerate() {
        let path = args.out.join(format!("config_{i:03}.txt"));
        fs::write(&path, cfg.to_key_values())?;
        manifest.push(&format!("output.config.{i}"), path.display().to_string());
    }
    manifest.write_to(&args.out.join("manifest.txt"))?;
    println!("wrote {} configs to {}", configs.len(), args.out.display());
    Ok(())
}

fn manifest_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default();
    output.with_file_name(format!("{stem}.manifest.txt"))
}

fn threshold_tsv_path(report: &Path, dataset: &str) -> PathBuf {
    let stem = report.file_stem().map(|s| s.to_string_lossy()).unwrap_or_default();
    report.with_file_name(format!("{stem}.{dataset}.thresholds.tsv"))
}

fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// The `n` vocabulary entries closest to `word` by edit distance.
fn nearest_strings(word: &str, vocab: &Vocab, n: usize) -> Vec<String> {
    let mut scored: Vec<(usize, &str)> = vocab
        .tokens()
        .iter()
        .map(|t| (levenshtein(word, t), t.as_str()))
        .collect();
    scored.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(b.1)));
    scored.into_iter().take(n).map(|(_, t)| t.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_resolution_order() {
        std::env::remove_var("BOXWORD_SEED");
        assert_eq!(resolve_seed(Some(9)), 9);
        assert_eq!(resolve_seed(None), 1);
        std::env::set_var("BOXWORD_SEED", "42");
        assert_eq!(resolve_seed(None), 42);
        assert_eq!(resolve_seed(Some(9)), 9);
        std::env::remove_var("BOXWORD_SEED");
    }

    #[test]
    fn levenshtein_basics() {
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("same", "same"), 0);
    }

    #[test]
    fn manifest_round_trip_recovers_config() {
        let cfg = TrainConfig::defaults(Kind::Vector);
        let mut m = RunManifest::new("train", cfg.seed);
        m.push("input.corpus", "/tmp/c");
        m.push_config(&cfg);
        assert_eq!(m.get("subcommand"), Some("train"));
        assert_eq!(m.config().unwrap(), cfg);
    }

    #[test]
    fn thresholds_parse_and_reject() {
        assert_eq!(parse_thresholds("1000, 2000,30000").unwrap(), vec![1000, 2000, 30000]);
        assert!(parse_thresholds("a,b").is_err());
    }
}
