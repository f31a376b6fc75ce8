//! Word-similarity benchmarking: Spearman rank correlation against human
//! judgments, frequency-stratified correlation curves, and nearest-neighbor
//! inspection.

pub mod datasets;

use std::io::Write;

use thiserror::Error;

use boxword_core::{log_expected_volume, score, GumbelParams};

use crate::corpus::Vocab;
use crate::model::{cosine, norm, Kind, Model, Role};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least 2 paired values, got {0}")]
    TooFewPairs(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("rank correlation undefined: zero rank variance")]
    DegenerateRanks,
    #[error("word not in vocabulary: {0}")]
    OovWord(String),
    #[error("dataset {0}: every pair has an out-of-vocabulary word")]
    AllPairsOov(String),
    #[error("dataset {0}: no word is in the vocabulary")]
    AllWordsOov(String),
    #[error("{path} line {line}: {reason}")]
    MalformedLine { path: String, line: usize, reason: String },
    #[error("thresholds must be sorted ascending")]
    UnsortedThresholds,
    #[error("order '{order}' does not apply to {kind} models")]
    InvalidOrder { order: &'static str, kind: &'static str },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// A word-similarity benchmark: word pairs with human scores.
#[derive(Debug, Clone)]
pub struct SimilarityDataset {
    pub name: String,
    pub pairs: Vec<SimilarityPair>,
}

#[derive(Debug, Clone)]
pub struct SimilarityPair {
    pub word1: String,
    pub word2: String,
    pub human_score: f64,
}

/// Tie-averaged ranks, 1-based: tied values all receive the mean of the
/// ranks they span.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) hold equal values.
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::DegenerateRanks);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Spearman's rho: the Pearson correlation of tie-averaged ranks. A list
/// with zero rank variance is an error, not a zero.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(EvalError::TooFewPairs(xs.len()));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// What to do with benchmark pairs containing out-of-vocabulary words.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OovPolicy {
    /// Drop the pair and count it in `n_pairs_oov`.
    Skip,
    /// Fail the evaluation.
    Fail,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub dataset: String,
    /// Spearman's rho scaled by 100.
    pub rho_x100: f64,
    pub n_pairs_scored: usize,
    pub n_pairs_oov: usize,
    /// Median corpus frequency of the in-vocabulary words in the pair list.
    pub median_frequency: Option<f64>,
}

/// Model similarity for two in-vocabulary words: intersection log-volume of
/// the center-role boxes for box models, cosine of the center-role vectors
/// for vector models.
pub fn pair_similarity(model: &Model, id1: u32, id2: u32, beta: f64) -> f64 {
    match model.table.kind() {
        Kind::Box => {
            let p = GumbelParams::new(beta);
            score(&model.table.as_box(Role::Center, id1), &model.table.as_box(Role::Center, id2), &p)
        }
        Kind::Vector => {
            cosine(&model.table.row(Role::Center, id1), &model.table.row(Role::Center, id2))
        }
    }
}

/// Scored pairs in dataset order: (human score, model score, word ids).
struct ScoredPairs {
    human: Vec<f64>,
    model: Vec<f64>,
    ids: Vec<(u32, u32)>,
    n_oov: usize,
    first_oov: Option<String>,
}

fn score_pairs(model: &Model, dataset: &SimilarityDataset, beta: f64) -> ScoredPairs {
    let mut out = ScoredPairs {
        human: Vec::with_capacity(dataset.pairs.len()),
        model: Vec::with_capacity(dataset.pairs.len()),
        ids: Vec::with_capacity(dataset.pairs.len()),
        n_oov: 0,
        first_oov: None,
    };
    for pair in &dataset.pairs {
        match (model.vocab.id(&pair.word1), model.vocab.id(&pair.word2)) {
            (Some(id1), Some(id2)) => {
                out.human.push(pair.human_score);
                out.model.push(pair_similarity(model, id1, id2, beta));
                out.ids.push((id1, id2));
            }
            (a, b) => {
                out.n_oov += 1;
                if out.first_oov.is_none() {
                    let w = if a.is_none() { &pair.word1 } else { &pair.word2 };
                    let _ = b;
                    out.first_oov = Some(w.clone());
                }
            }
        }
    }
    out
}

/// Evaluate a model on one benchmark. The reported rho is scaled by 100.
pub fn evaluate(
    model: &Model,
    dataset: &SimilarityDataset,
    policy: OovPolicy,
    beta: f64,
) -> Result<EvalReport, EvalError> {
    let scored = score_pairs(model, dataset, beta);
    if policy == OovPolicy::Fail {
        if let Some(word) = scored.first_oov {
            return Err(EvalError::OovWord(word));
        }
    }
    if scored.human.is_empty() {
        return Err(EvalError::AllPairsOov(dataset.name.clone()));
    }
    let rho = spearman(&scored.human, &scored.model)?;
    Ok(EvalReport {
        dataset: dataset.name.clone(),
        rho_x100: rho * 100.0,
        n_pairs_scored: scored.human.len(),
        n_pairs_oov: scored.n_oov,
        median_frequency: dataset_median_frequency(dataset, &model.vocab).ok(),
    })
}

/// One row of a frequency-stratified correlation curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdPoint {
    pub threshold: u64,
    /// `None` marks a degenerate slice (< 2 pairs or no rank variance).
    pub rho_x100: Option<f64>,
    pub n_pairs: usize,
}

/// Correlation restricted to pairs whose words both have corpus frequency
/// below each threshold. Thresholds must be ascending.
pub fn threshold_correlation(
    model: &Model,
    dataset: &SimilarityDataset,
    freq_source: &Vocab,
    thresholds: &[u64],
    beta: f64,
) -> Result<Vec<ThresholdPoint>, EvalError> {
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(EvalError::UnsortedThresholds);
    }
    let scored = score_pairs(model, dataset, beta);
    let freqs: Vec<(u64, u64)> = scored
        .ids
        .iter()
        .map(|&(id1, id2)| {
            let f = |id: u32| {
                freq_source
                    .count_of(model.vocab.token(id))
                    .unwrap_or(0)
            };
            (f(id1), f(id2))
        })
        .collect();

    let mut points = Vec::with_capacity(thresholds.len());
    for &t in thresholds {
        let mut human = Vec::new();
        let mut model_scores = Vec::new();
        for (i, &(f1, f2)) in freqs.iter().enumerate() {
            if f1 < t && f2 < t {
                human.push(scored.human[i]);
                model_scores.push(scored.model[i]);
            }
        }
        let n_pairs = human.len();
        let rho_x100 = if n_pairs >= 2 {
            spearman(&human, &model_scores).ok().map(|r| r * 100.0)
        } else {
            None
        };
        points.push(ThresholdPoint { threshold: t, rho_x100, n_pairs });
    }
    Ok(points)
}

/// Median corpus frequency over all word occurrences in the pair list (each
/// pair contributes both words; out-of-vocabulary words are excluded). An
/// even count takes the mean of the two middle values.
pub fn dataset_median_frequency(
    dataset: &SimilarityDataset,
    vocab: &Vocab,
) -> Result<f64, EvalError> {
    let mut freqs: Vec<u64> = dataset
        .pairs
        .iter()
        .flat_map(|p| [&p.word1, &p.word2])
        .filter_map(|w| vocab.count_of(w))
        .collect();
    if freqs.is_empty() {
        return Err(EvalError::AllWordsOov(dataset.name.clone()));
    }
    freqs.sort_unstable();
    let n = freqs.len();
    Ok(if n % 2 == 1 {
        freqs[n / 2] as f64
    } else {
        (freqs[n / 2 - 1] as f64 + freqs[n / 2] as f64) / 2.0
    })
}

/// Secondary sort key for nearest-neighbor listings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborOrder {
    /// Descending similarity to the query (the selection order).
    Score,
    /// Descending log expected volume; box models only.
    Volume,
    /// Descending Euclidean norm; vector models only.
    Norm,
}

#[derive(Debug, Clone)]
pub struct Neighbor {
    pub word: String,
    pub id: u32,
    pub similarity: f64,
    /// Log expected volume (box) or vector norm (vector) of the neighbor.
    pub magnitude: f64,
}

/// The `k` most similar words to `query` (never including the query itself),
/// optionally re-sorted by volume or norm. `k` is clamped to vocab size - 1.
pub fn nearest_neighbors(
    model: &Model,
    query: &str,
    k: usize,
    order: NeighborOrder,
    beta: f64,
) -> Result<Vec<Neighbor>, EvalError> {
    let kind = model.table.kind();
    match (order, kind) {
        (NeighborOrder::Volume, Kind::Vector) => {
            return Err(EvalError::InvalidOrder { order: "volume", kind: "vector" })
        }
        (NeighborOrder::Norm, Kind::Box) => {
            return Err(EvalError::InvalidOrder { order: "norm", kind: "box" })
        }
        _ => {}
    }
    let query_id = model.vocab.id(query).ok_or_else(|| EvalError::OovWord(query.to_string()))?;

    let magnitude = |id: u32| match kind {
        Kind::Box => log_expected_volume(
            &model.table.as_box(Role::Center, id),
            &GumbelParams::new(beta),
        ),
        Kind::Vector => norm(&model.table.row(Role::Center, id)),
    };

    let mut scored: Vec<(u32, f64)> = (0..model.vocab.len() as u32)
        .filter(|&id| id != query_id)
        .map(|id| (id, pair_similarity(model, query_id, id, beta)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);

    let mut neighbors: Vec<Neighbor> = scored
        .into_iter()
        .map(|(id, similarity)| Neighbor {
            word: model.vocab.token(id).to_string(),
            id,
            similarity,
            magnitude: magnitude(id),
        })
        .collect();
    if order != NeighborOrder::Score {
        neighbors.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude).then(a.id.cmp(&b.id)));
    }
    Ok(neighbors)
}

/// Report rows: `dataset<TAB>rho_x100<TAB>n_pairs<TAB>n_oov<TAB>median_freq`.
pub fn write_report_tsv<W: Write>(w: &mut W, reports: &[EvalReport]) -> std::io::Result<()> {
    for r in reports {
        let median = r
            .median_frequency
            .map(|m| format!("{m:.1}"))
            .unwrap_or_else(|| "NA".to_string());
        writeln!(
            w,
            "{}\t{:.4}\t{}\t{}\t{}",
            r.dataset, r.rho_x100, r.n_pairs_scored, r.n_pairs_oov, median
        )?;
    }
    Ok(())
}

/// Threshold rows: `threshold<TAB>rho_x100<TAB>n_pairs`, with a literal `NA`
/// for degenerate slices.
pub fn write_threshold_tsv<W: Write>(w: &mut W, points: &[ThresholdPoint]) -> std::io::Result<()> {
    for p in points {
        let rho = p.rho_x100.map(|r| format!("{r:.4}")).unwrap_or_else(|| "NA".to_string());
        writeln!(w, "{}\t{}\t{}", p.threshold, rho, p.n_pairs)?;
    }
    Ok(())
}
