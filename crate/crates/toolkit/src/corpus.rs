//! Corpus preparation: token cleaning, vocabulary construction, subsampling,
//! context windows, and negative sampling.
//!
//! Input corpora are UTF-8 plain text with one segment (sentence, paragraph,
//! line) per line; windows never cross segment boundaries.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const NUM_TOKEN: &str = "<num>";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error at byte offset {offset}: {source}")]
    Io {
        offset: u64,
        #[source]
        source: std::io::Error,
    },
    #[error("empty vocabulary: no token reached min_count = {min_count}")]
    EmptyVocab { min_count: u64 },
    #[error("malformed vocab line {line}: {reason}")]
    MalformedVocabLine { line: usize, reason: String },
}

/// Clean a single whitespace-separated segment into training tokens.
///
/// Rules, in order: tokens with any non-ASCII byte are dropped; tokens are
/// ASCII-lowercased; tokens containing a digit become [`NUM_TOKEN`]; ASCII
/// punctuation is stripped; tokens left empty disappear. The `<num>` token
/// itself survives re-cleaning, so cleaning is idempotent.
pub fn clean_tokens(segment: &[u8]) -> Vec<String> {
    segment
        .split(|b| b.is_ascii_whitespace())
        .filter_map(clean_token)
        .collect()
}

fn clean_token(raw: &[u8]) -> Option<String> {
    if raw.is_empty() || !raw.is_ascii() {
        return None;
    }
    if raw == NUM_TOKEN.as_bytes() {
        return Some(NUM_TOKEN.to_string());
    }
    if raw.iter().any(|b| b.is_ascii_digit()) {
        return Some(NUM_TOKEN.to_string());
    }
    let cleaned: String = raw
        .iter()
        .filter(|b| !b.is_ascii_punctuation())
        .map(|b| b.to_ascii_lowercase() as char)
        .collect();
    if cleaned.is_empty() {
        None
    } else {
        Some(cleaned)
    }
}

/// Stream a raw corpus line by line, yielding one cleaned token list per
/// input segment. I/O failures report the byte offset reached so far.
pub struct CleanLines<R> {
    reader: R,
    offset: u64,
    buf: Vec<u8>,
}

impl<R: BufRead> CleanLines<R> {
    pub fn new(reader: R) -> Self {
        CleanLines { reader, offset: 0, buf: Vec::new() }
    }
}

impl<R: BufRead> Iterator for CleanLines<R> {
    type Item = Result<Vec<String>, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.buf.clear();
        match self.reader.read_until(b'\n', &mut self.buf) {
            Ok(0) => None,
            Ok(n) => {
                self.offset += n as u64;
                Some(Ok(clean_tokens(&self.buf)))
            }
            Err(source) => Some(Err(CorpusError::Io { offset: self.offset, source })),
        }
    }
}

/// Vocabulary over a token stream: tokens sorted by descending count with
/// lexicographic tie-break, counts all `>= min_count`.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    counts: Vec<u64>,
    total_tokens: u64,
    token_to_id: HashMap<String, u32>,
}

impl Vocab {
    /// Count a stream of cleaned segments and keep tokens with at least
    /// `min_count` occurrences.
    pub fn build<I, S>(segments: I, min_count: u64) -> Result<Vocab, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = String>,
    {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for segment in segments {
            for token in segment {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
        Vocab::from_counts(counts, min_count)
    }

    pub fn from_counts<I>(counts: I, min_count: u64) -> Result<Vocab, CorpusError>
    where
        I: IntoIterator<Item = (String, u64)>,
    {
        let mut entries: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_count)
            .collect();
        if entries.is_empty() {
            return Err(CorpusError::EmptyVocab { min_count });
        }
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut tokens = Vec::with_capacity(entries.len());
        let mut counts = Vec::with_capacity(entries.len());
        let mut token_to_id = HashMap::with_capacity(entries.len());
        for (id, (token, count)) in entries.into_iter().enumerate() {
            token_to_id.insert(token.clone(), id as u32);
            tokens.push(token);
            counts.push(count);
        }
        let total_tokens = counts.iter().sum();
        Ok(Vocab { tokens, counts, total_tokens, token_to_id })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    pub fn count_of(&self, token: &str) -> Option<u64> {
        self.id(token).map(|id| self.count(id))
    }

    /// Sum of the retained tokens' counts.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    /// Map a cleaned segment to ids, silently dropping out-of-vocabulary
    /// tokens (windows later widen over them).
    pub fn ids(&self, segment: &[String]) -> Vec<u32> {
        segment.iter().filter_map(|t| self.id(t)).collect()
    }

    /// Write the vocab file: `token<TAB>count` lines in id order.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (token, count) in self.tokens.iter().zip(&self.counts) {
            writeln!(w, "{token}\t{count}")?;
        }
        Ok(())
    }

    /// Parse a vocab TSV produced by [`Vocab::write_tsv`].
    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Vocab, CorpusError> {
        let mut counts = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| CorpusError::Io { offset: 0, source })?;
            if line.is_empty() {
                continue;
            }
            let (token, count) = line.split_once('\t').ok_or_else(|| {
                CorpusError::MalformedVocabLine { line: idx + 1, reason: "missing tab".into() }
            })?;
            let count: u64 = count.parse().map_err(|e| CorpusError::MalformedVocabLine {
                line: idx + 1,
                reason: format!("bad count: {e}"),
            })?;
            counts.push((token.to_string(), count));
        }
        Vocab::from_counts(counts, 1)
    }
}

/// Word2Vec-style subsampling keep probability,
/// `min(1, (sqrt(f/t) + 1) * t/f)` with `f` the relative frequency.
pub fn keep_probability(freq: u64, total: u64, t: f64) -> f64 {
    debug_assert!(freq >= 1 && total >= freq && t > 0.0);
    let f = freq as f64 / total as f64;
    (((f / t).sqrt() + 1.0) * (t / f)).min(1.0)
}

/// Draws negatives from the unigram^0.75 distribution by binary search over
/// an exact cumulative table.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    cumulative: Vec<f64>,
    rng: ChaCha8Rng,
}

impl NegativeSampler {
    pub fn new(vocab: &Vocab, seed: u64) -> Self {
        let mut cumulative = Vec::with_capacity(vocab.len());
        let mut acc = 0.0;
        for id in 0..vocab.len() {
            acc += (vocab.count(id as u32) as f64).powf(0.75);
            cumulative.push(acc);
        }
        for c in cumulative.iter_mut() {
            *c /= acc;
        }
        *cumulative.last_mut().expect("non-empty vocab") = 1.0;
        NegativeSampler { cumulative, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Cumulative distribution over ids; final entry is exactly 1.
    pub fn cumulative_weights(&self) -> &[f64] {
        &self.cumulative
    }

    /// Draw `k` ids i.i.d. from the unigram^0.75 distribution, rejecting any
    /// draw equal to `exclude`. Requires a vocabulary of at least 2 words.
    pub fn sample(&mut self, k: usize, exclude: u32) -> Vec<u32> {
        let mut out = Vec::with_capacity(k);
        self.sample_into(k, exclude, &mut out);
        out
    }

    pub fn sample_into(&mut self, k: usize, exclude: u32, out: &mut Vec<u32>) {
        assert!(self.cumulative.len() >= 2, "negative sampling needs vocab size >= 2");
        out.clear();
        while out.len() < k {
            let p: f64 = self.rng.gen();
            let id = self.cumulative.partition_point(|&c| c < p) as u32;
            let id = id.min(self.cumulative.len() as u32 - 1);
            if id != exclude {
                out.push(id);
            }
        }
    }

    /// Generator position, for checkpointing.
    pub fn rng_word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn set_rng_word_pos(&mut self, pos: u128) {
        self.rng.set_word_pos(pos);
    }
}

/// Subsampling plus fixed-size context windows over token-id segments.
#[derive(Debug, Clone)]
pub struct WindowStream {
    window_size: usize,
    keep: Vec<f64>,
    rng: ChaCha8Rng,
}

impl WindowStream {
    pub fn new(vocab: &Vocab, window_size: usize, subsample_threshold: f64, seed: u64) -> Self {
        let total = vocab.total_tokens();
        let keep = (0..vocab.len() as u32)
            .map(|id| keep_probability(vocab.count(id), total, subsample_threshold))
            .collect();
        WindowStream { window_size, keep, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    /// Independently keep each token with its subsampling probability.
    pub fn subsample(&mut self, ids: &[u32], out: &mut Vec<u32>) {
        out.clear();
        for &id in ids {
            let p = self.keep[id as usize];
            if p >= 1.0 || self.rng.gen::<f64>() < p {
                out.push(id);
            }
        }
    }

    pub fn rng_word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn set_rng_word_pos(&mut self, pos: u128) {
        self.rng.set_word_pos(pos);
    }
}

/// All (center, context) pairs of an already-subsampled segment: contexts are
/// the surviving ids within `window` positions on each side, excluding the
/// center itself. Positions with empty contexts are skipped.
pub fn windows(ids: &[u32], window: usize) -> impl Iterator<Item = (u32, Vec<u32>)> + '_ {
    (0..ids.len()).filter_map(move |pos| {
        let lo = pos.saturating_sub(window);
        let hi = (pos + window + 1).min(ids.len());
        let mut context = Vec::with_capacity(hi - lo - 1);
        context.extend_from_slice(&ids[lo..pos]);
        context.extend_from_slice(&ids[pos + 1..hi]);
        if context.is_empty() {
            None
        } else {
            Some((ids[pos], context))
        }
    })
}
