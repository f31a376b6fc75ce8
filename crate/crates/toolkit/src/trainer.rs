//! SGD training loop: batched sparse updates, epoch scheduling, loss tracing,
//! checkpointing, and hyperparameter sampling.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{windows, CorpusError, NegativeSampler, Vocab, WindowStream};
use crate::model::{box_loss, vector_loss, EmbeddingTable, GradAccum, Kind, LossConfig, Model, ModelError};

pub const BATCH_SIZE_GRID: [usize; 5] = [2048, 4096, 8192, 16384, 32768];
pub const NEGATIVES_GRID: [usize; 4] = [2, 5, 10, 20];
pub const SUBSAMPLE_GRID: [f64; 2] = [1e-3, 1e-4];
pub const WINDOW_MIN: usize = 5;
pub const WINDOW_MAX: usize = 10;
/// Learning rates are sampled log-uniform over [e^-10, e^-1].
pub const LN_LR_MIN: f64 = -10.0;
pub const LN_LR_MAX: f64 = -1.0;

/// Batches per loss-trace row.
const TRACE_EVERY: u64 = 1000;

const CHECKPOINT_MAGIC: &[u8; 4] = b"W2CK";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss {loss} in batch {batch}; config: {config}")]
    NonFiniteLoss { loss: f64, batch: u64, config: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint: {0}")]
    BadCheckpoint(String),
}

/// All training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub kind: Kind,
    pub epochs: u32,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub window: usize,
    pub negatives_k: usize,
    pub subsample_t: f64,
    pub beta: f64,
    pub margin: f64,
    pub min_count: u64,
    pub seed: u64,
    pub workers: usize,
    pub deterministic: bool,
}

impl TrainConfig {
    pub fn defaults(kind: Kind) -> Self {
        TrainConfig {
            dim: match kind {
                Kind::Box => 64,
                Kind::Vector => 128,
            },
            kind,
            epochs: 10,
            batch_size: 4096,
            learning_rate: match kind {
                Kind::Box => 0.05,
                Kind::Vector => 0.05,
            },
            window: 5,
            negatives_k: 5,
            subsample_t: 1e-3,
            beta: 1.0,
            margin: 5.0,
            min_count: 100,
            seed: 1,
            workers: 1,
            deterministic: false,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |msg: String| Err(TrainError::InvalidConfig(msg));
        if self.dim < 1 {
            return fail("dim must be >= 1".into());
        }
        if self.epochs < 1 {
            return fail("epochs must be >= 1".into());
        }
        if !BATCH_SIZE_GRID.contains(&self.batch_size) {
            return fail(format!(
                "batch_size {} not in allowed grid {BATCH_SIZE_GRID:?}",
                self.batch_size
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return fail(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if self.window < WINDOW_MIN || self.window > WINDOW_MAX {
            return fail(format!(
                "window {} outside allowed range [{WINDOW_MIN}, {WINDOW_MAX}]",
                self.window
            ));
        }
        if !NEGATIVES_GRID.contains(&self.negatives_k) {
            return fail(format!(
                "negatives {} not in allowed grid {NEGATIVES_GRID:?}",
                self.negatives_k
            ));
        }
        if !SUBSAMPLE_GRID.contains(&self.subsample_t) {
            return fail(format!(
                "subsample threshold {} not in allowed grid {SUBSAMPLE_GRID:?}",
                self.subsample_t
            ));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return fail(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.margin.is_finite() && self.margin > 0.0) {
            return fail(format!("margin must be positive, got {}", self.margin));
        }
        if self.min_count < 1 {
            return fail("min_count must be >= 1".into());
        }
        if self.workers < 1 {
            return fail("workers must be >= 1".into());
        }
        if self.deterministic && self.workers != 1 {
            return fail(format!(
                "deterministic mode requires workers = 1, got {}",
                self.workers
            ));
        }
        Ok(())
    }

    /// Flat key=value lines, the run-dir config file format.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "kind={}", self.kind.name());
        let _ = writeln!(s, "dim={}", self.dim);
        let _ = writeln!(s, "epochs={}", self.epochs);
        let _ = writeln!(s, "batch_size={}", self.batch_size);
        let _ = writeln!(s, "learning_rate={}", self.learning_rate);
        let _ = writeln!(s, "window={}", self.window);
        let _ = writeln!(s, "negatives={}", self.negatives_k);
        let _ = writeln!(s, "subsample={}", self.subsample_t);
        let _ = writeln!(s, "beta={}", self.beta);
        let _ = writeln!(s, "margin={}", self.margin);
        let _ = writeln!(s, "min_count={}", self.min_count);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "workers={}", self.workers);
        let _ = writeln!(s, "deterministic={}", self.deterministic);
        s
    }

    pub fn from_key_values(text: &str) -> Result<TrainConfig, TrainError> {
        let mut cfg = TrainConfig::defaults(Kind::Box);
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                TrainError::InvalidConfig(format!("config line {} has no '='", idx + 1))
            })?;
            let bad = |e: String| TrainError::InvalidConfig(format!("config key {key}: {e}"));
            match key.trim() {
                "kind" => {
                    cfg.kind = match value.trim() {
                        "box" => Kind::Box,
                        "vector" => Kind::Vector,
                        other => return Err(bad(format!("unknown kind {other}"))),
                    }
                }
                "dim" => cfg.dim = value.trim().parse().map_err(|e| bad(format!("{e}")))?,
                "epochs" => cfg.epochs = value.trim().parse().map_err(|e| bad(format!("{e}")))?,
                "batch_size" => cfg.batch_size = value.trim().parse().map_err(|e| bad(format!("{e}")))?,
                "learning_rate" => cfg.learning_rate = value.trim().parse().map_err(|e| bad(format!("{e}")))?,
                "window" => cfg.window = value.trim().parse().map_err(|e| bad(format!("{e}")))?,
                "negatives" => cfg.negatives_k = value.trim().parse().map_err(|e| bad(format!("{e}")))?,
                "subsample" => cfg.subsample_t = value.trim().parse().map_err(|e| bad(format!("{e}")))?,
                "beta" => cfg.beta = value.trim().parse().map_err(|e| bad(format!("{e}")))?,
                "margin" => cfg.margin = value.trim().parse().map_err(|e| bad(format!("{e}")))?,
                "min_count" => cfg.min_count = value.trim().parse().map_err(|e| bad(format!("{e}")))?,
                "seed" => cfg.seed = value.trim().parse().map_err(|e| bad(format!("{e}")))?,
                "workers" => cfg.workers = value.trim().parse().map_err(|e| bad(format!("{e}")))?,
                "deterministic" => cfg.deterministic = value.trim().parse().map_err(|e| bad(format!("{e}")))?,
                other => return Err(TrainError::InvalidConfig(format!("unknown config key {other}"))),
            }
        }
        Ok(cfg)
    }

    fn summary(&self) -> String {
        format!(
            "kind={} dim={} lr={} batch={} window={} negatives={} subsample={} beta={} margin={} seed={}",
            self.kind.name(),
            self.dim,
            self.learning_rate,
            self.batch_size,
            self.window,
            self.negatives_k,
            self.subsample_t,
            self.beta,
            self.margin,
            self.seed
        )
    }
}

/// A corpus tokenized against a fixed vocabulary, one id segment per line.
/// Out-of-vocabulary tokens are dropped at load time.
#[derive(Debug, Clone)]
pub struct TokenizedCorpus {
    pub segments: Vec<Vec<u32>>,
}

impl TokenizedCorpus {
    pub fn from_segments(segments: Vec<Vec<u32>>) -> Self {
        TokenizedCorpus { segments }
    }

    /// Load a cleaned corpus file (one segment per line, space-separated
    /// tokens) and map it through `vocab`.
    pub fn load(path: &Path, vocab: &Vocab) -> Result<Self, TrainError> {
        let file = fs::File::open(path)?;
        let mut segments = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            let ids: Vec<u32> = line.split_ascii_whitespace().filter_map(|t| vocab.id(t)).collect();
            if !ids.is_empty() {
                segments.push(ids);
            }
        }
        Ok(TokenizedCorpus { segments })
    }

    pub fn token_count(&self) -> usize {
        self.segments.iter().map(|s| s.len()).sum()
    }
}

/// One loss-trace row: mean loss over the trailing window of batches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub batch_index: u64,
    pub mean_loss: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub trace: Vec<TracePoint>,
    /// Mean example loss per epoch.
    pub epoch_mean_loss: Vec<f64>,
    pub examples: u64,
}

/// Shared accounting for the loss trace, cheap to lock once per batch.
struct TraceState {
    batches: u64,
    window_loss: f64,
    window_examples: u64,
    trace: Vec<TracePoint>,
}

impl TraceState {
    fn new() -> Self {
        TraceState { batches: 0, window_loss: 0.0, window_examples: 0, trace: Vec::new() }
    }

    fn record_batch(&mut self, loss: f64, examples: u64) {
        self.batches += 1;
        self.window_loss += loss;
        self.window_examples += examples;
        if self.batches % TRACE_EVERY == 0 {
            self.flush();
        }
    }

    fn flush(&mut self) {
        if self.window_examples > 0 {
            self.trace.push(TracePoint {
                batch_index: self.batches,
                mean_loss: self.window_loss / self.window_examples as f64,
            });
            self.window_loss = 0.0;
            self.window_examples = 0;
        }
    }
}

/// Per-worker sampling state; in deterministic mode there is exactly one.
struct WorkerState {
    stream: WindowStream,
    sampler: NegativeSampler,
}

impl WorkerState {
    fn new(vocab: &Vocab, config: &TrainConfig, shard: u64) -> Self {
        WorkerState {
            stream: WindowStream::new(
                vocab,
                config.window,
                config.subsample_t,
                config.seed.wrapping_add(1).wrapping_add(shard),
            ),
            sampler: NegativeSampler::new(
                vocab,
                config.seed.wrapping_add(1 << 32).wrapping_add(shard),
            ),
        }
    }
}

/// Train a fresh model. See [`resume`] for continuing from a checkpoint.
pub fn train(
    config: &TrainConfig,
    corpus: &TokenizedCorpus,
    vocab: &Vocab,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let table = EmbeddingTable::new(config.kind, config.dim, vocab.len());
    table.init(config.seed, 1.0);
    let worker_states = (0..config.workers as u64)
        .map(|shard| WorkerState::new(vocab, config, shard))
        .collect();
    run_epochs(config, corpus, vocab, table, worker_states, 0)
}

fn run_epochs(
    config: &TrainConfig,
    corpus: &TokenizedCorpus,
    vocab: &Vocab,
    table: EmbeddingTable,
    mut workers: Vec<WorkerState>,
    start_epoch: u32,
) -> Result<TrainOutcome, TrainError> {
    let trace = Mutex::new(TraceState::new());
    let mut epoch_mean_loss = Vec::new();
    let mut total_examples = 0u64;

    for _epoch in start_epoch..config.epochs {
        let (examples, loss_sum) = if config.workers == 1 {
            run_shard(config, &table, &corpus.segments, &mut workers[0], 1, 0, &trace)?
        } else {
            run_parallel_epoch(config, corpus, &table, &mut workers, &trace)?
        };
        total_examples += examples;
        epoch_mean_loss.push(if examples > 0 { loss_sum / examples as f64 } else { 0.0 });
    }

    let mut trace = trace.into_inner().expect("trace lock poisoned");
    trace.flush();
    Ok(TrainOutcome {
        model: Model { table, vocab: vocab.clone() },
        trace: trace.trace,
        epoch_mean_loss,
        examples: total_examples,
    })
}

fn run_parallel_epoch(
    config: &TrainConfig,
    corpus: &TokenizedCorpus,
    table: &EmbeddingTable,
    workers: &mut [WorkerState],
    trace: &Mutex<TraceState>,
) -> Result<(u64, f64), TrainError> {
    let n_workers = workers.len();
    let results: Vec<Result<(u64, f64), TrainError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = workers
            .iter_mut()
            .enumerate()
            .map(|(shard, state)| {
                scope.spawn(move || {
                    run_shard(config, table, &corpus.segments, state, n_workers, shard, trace)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });

    let mut examples = 0u64;
    let mut loss_sum = 0.0;
    for r in results {
        let (e, l) = r?;
        examples += e;
        loss_sum += l;
    }
    Ok((examples, loss_sum))
}

/// One epoch over this worker's shard (segments with `index % n_shards ==
/// shard`). Returns (examples, summed loss).
fn run_shard(
    config: &TrainConfig,
    table: &EmbeddingTable,
    segments: &[Vec<u32>],
    state: &mut WorkerState,
    n_shards: usize,
    shard: usize,
    trace: &Mutex<TraceState>,
) -> Result<(u64, f64), TrainError> {
    let loss_cfg = LossConfig::new(config.margin, config.negatives_k, config.beta);
    let mut grads = GradAccum::new();
    let mut kept = Vec::new();
    let mut negatives = Vec::new();

    let mut epoch_examples = 0u64;
    let mut epoch_loss = 0.0;
    let mut batch_examples = 0u64;
    let mut batch_loss = 0.0;

    let step = |grads: &mut GradAccum,
                    batch_loss: &mut f64,
                    batch_examples: &mut u64|
     -> Result<(), TrainError> {
        if *batch_examples == 0 {
            return Ok(());
        }
        let mut t = trace.lock().expect("trace lock poisoned");
        t.record_batch(*batch_loss, *batch_examples);
        let batch_index = t.batches;
        drop(t);
        if !batch_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                loss: *batch_loss,
                batch: batch_index,
                config: config.summary(),
            });
        }
        grads.apply(table, config.learning_rate);
        grads.clear();
        *batch_loss = 0.0;
        *batch_examples = 0;
        Ok(())
    };

    for segment in segments.iter().skip(shard).step_by(n_shards) {
        state.stream.subsample(segment, &mut kept);
        for (center, context) in windows(&kept, config.window) {
            state.sampler.sample_into(config.negatives_k, center, &mut negatives);
            let loss = match config.kind {
                Kind::Box => box_loss(table, center, &context, &negatives, &loss_cfg, &mut grads),
                Kind::Vector => vector_loss(table, center, &context, &negatives, &mut grads),
            };
            batch_loss += loss;
            batch_examples += 1;
            epoch_loss += loss;
            epoch_examples += 1;
            if batch_examples as usize >= config.batch_size {
                step(&mut grads, &mut batch_loss, &mut batch_examples)?;
            }
        }
    }
    // Trailing partial batch: applied at the epoch boundary so checkpoints
    // carry no cross-epoch state.
    step(&mut grads, &mut batch_loss, &mut batch_examples)?;

    Ok((epoch_examples, epoch_loss))
}

/// Epoch-boundary training snapshot. In deterministic mode, resuming from a
/// checkpoint reproduces the uninterrupted run bit for bit.
#[derive(Debug)]
pub struct Checkpoint {
    pub epoch: u32,
    pub mean_loss: f64,
    pub config: TrainConfig,
    pub stream_pos: u128,
    pub sampler_pos: u128,
    pub model_bytes: Vec<u8>,
}

impl Checkpoint {
    pub fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&self.epoch.to_le_bytes())?;
        w.write_all(&self.mean_loss.to_le_bytes())?;
        w.write_all(&self.stream_pos.to_le_bytes())?;
        w.write_all(&self.sampler_pos.to_le_bytes())?;
        let config = self.config.to_key_values();
        w.write_all(&(config.len() as u64).to_le_bytes())?;
        w.write_all(config.as_bytes())?;
        w.write_all(&(self.model_bytes.len() as u64).to_le_bytes())?;
        w.write_all(&self.model_bytes)?;
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Checkpoint, TrainError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(TrainError::BadCheckpoint("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(TrainError::BadCheckpoint(format!("unsupported version {version}")));
        }
        let epoch = read_u32(r)?;
        let mut f = [0u8; 8];
        r.read_exact(&mut f)?;
        let mean_loss = f64::from_le_bytes(f);
        let mut p = [0u8; 16];
        r.read_exact(&mut p)?;
        let stream_pos = u128::from_le_bytes(p);
        r.read_exact(&mut p)?;
        let sampler_pos = u128::from_le_bytes(p);
        let config_len = read_u64(r)? as usize;
        let mut config = vec![0u8; config_len];
        r.read_exact(&mut config)?;
        let config = TrainConfig::from_key_values(
            std::str::from_utf8(&config)
                .map_err(|e| TrainError::BadCheckpoint(format!("config not UTF-8: {e}")))?,
        )?;
        let model_len = read_u64(r)? as usize;
        let mut model_bytes = vec![0u8; model_len];
        r.read_exact(&mut model_bytes)?;
        Ok(Checkpoint { epoch, mean_loss, config, stream_pos, sampler_pos, model_bytes })
    }

    pub fn write_to_path(&self, path: &Path) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(fs::File::create(path)?);
        self.write(&mut w)?;
        w.flush()
    }

    pub fn read_from_path(path: &Path) -> Result<Checkpoint, TrainError> {
        Checkpoint::read(&mut BufReader::new(fs::File::open(path)?))
    }
}

/// Train like [`train`] but stop after `stop_after` epochs and return the
/// snapshot. Single-worker configs only.
pub fn train_to_checkpoint(
    config: &TrainConfig,
    corpus: &TokenizedCorpus,
    vocab: &Vocab,
    stop_after: u32,
) -> Result<Checkpoint, TrainError> {
    config.validate()?;
    if config.workers != 1 {
        return Err(TrainError::InvalidConfig("checkpointing requires workers = 1".into()));
    }
    assert!(stop_after <= config.epochs);
    let mut partial = config.clone();
    partial.epochs = stop_after;
    let table = EmbeddingTable::new(config.kind, config.dim, vocab.len());
    table.init(config.seed, 1.0);
    let mut workers = vec![WorkerState::new(vocab, config, 0)];
    let trace = Mutex::new(TraceState::new());
    let mut last_mean = 0.0;
    for _ in 0..stop_after {
        let (examples, loss_sum) =
            run_shard(&partial, &table, &corpus.segments, &mut workers[0], 1, 0, &trace)?;
        last_mean = if examples > 0 { loss_sum / examples as f64 } else { 0.0 };
    }
    let state = &workers[0];
    Ok(Checkpoint {
        epoch: stop_after,
        mean_loss: last_mean,
        config: config.clone(),
        stream_pos: state.stream.rng_word_pos(),
        sampler_pos: state.sampler.rng_word_pos(),
        model_bytes: Model { table, vocab: vocab.clone() }.to_bytes(),
    })
}

/// Continue training from an epoch-boundary checkpoint through the configured
/// final epoch.
pub fn resume(
    checkpoint: &Checkpoint,
    corpus: &TokenizedCorpus,
    vocab: &Vocab,
) -> Result<TrainOutcome, TrainError> {
    let config = &checkpoint.config;
    config.validate()?;
    if config.workers != 1 {
        return Err(TrainError::InvalidConfig("resume requires workers = 1".into()));
    }
    let model = Model::read(&mut &checkpoint.model_bytes[..])?;
    let mut state = WorkerState::new(vocab, config, 0);
    state.stream.set_rng_word_pos(checkpoint.stream_pos);
    state.sampler.set_rng_word_pos(checkpoint.sampler_pos);
    run_epochs(config, corpus, vocab, model.table, vec![state], checkpoint.epoch)
}

/// Draw `n` configs uniformly from the hyperparameter grids; the learning
/// rate is log-uniform over [e^-10, e^-1]. Kind, dim, and epochs follow the
/// given base config; each sample gets a distinct derived seed.
pub fn hyperparameter_sample(base: &TrainConfig, seed: u64, n: usize) -> Vec<TrainConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut cfg = base.clone();
            cfg.batch_size = BATCH_SIZE_GRID[rng.gen_range(0..BATCH_SIZE_GRID.len())];
            cfg.learning_rate = rng.gen_range(LN_LR_MIN..LN_LR_MAX).exp();
            cfg.window = rng.gen_range(WINDOW_MIN..=WINDOW_MAX);
            cfg.negatives_k = NEGATIVES_GRID[rng.gen_range(0..NEGATIVES_GRID.len())];
            cfg.subsample_t = SUBSAMPLE_GRID[rng.gen_range(0..SUBSAMPLE_GRID.len())];
            cfg.seed = seed.wrapping_add(i as u64);
            cfg
        })
        .collect()
}

/// Write the run directory: `config.txt`, `vocab.tsv`, `model.w2bx`, and
/// `trace.tsv` (`batch_index<TAB>mean_loss`, appended).
pub fn write_run_dir(
    dir: &Path,
    config: &TrainConfig,
    outcome: &TrainOutcome,
) -> Result<(), TrainError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.txt"), config.to_key_values())?;
    let vocab_file = fs::File::create(dir.join("vocab.tsv"))?;
    let mut w = std::io::BufWriter::new(vocab_file);
    outcome.model.vocab.write_tsv(&mut w)?;
    w.flush()?;
    outcome.model.write_to_path(&dir.join("model.w2bx"))?;
    let mut trace = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join("trace.tsv"))?;
    for point in &outcome.trace {
        writeln!(trace, "{}\t{}", point.batch_index, point.mean_loss)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
