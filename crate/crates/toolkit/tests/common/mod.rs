//! Shared fixtures: deterministic synthetic corpora with known structure.

#![allow(dead_code)]

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use boxword::corpus::Vocab;
use boxword::eval::pair_similarity;
use boxword::model::Model;
use boxword::trainer::TokenizedCorpus;

/// Two-cluster corpus: words a0..a9 co-occur only with each other, likewise
/// b0..b9. Lines alternate clusters so both get equal mass.
pub fn two_cluster_segments(lines: usize, line_len: usize, seed: u64) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..lines)
        .map(|line| {
            let prefix = if line % 2 == 0 { 'a' } else { 'b' };
            (0..line_len).map(|_| format!("{prefix}{}", rng.gen_range(0..10))).collect()
        })
        .collect()
}

pub fn build_corpus(segments: &[Vec<String>]) -> (Vocab, TokenizedCorpus) {
    let vocab = Vocab::build(segments.iter().cloned(), 1).expect("non-empty corpus");
    let ids = segments.iter().map(|seg| vocab.ids(seg)).filter(|s| !s.is_empty()).collect();
    (vocab, TokenizedCorpus::from_segments(ids))
}

/// Mean similarity over within-cluster and cross-cluster word pairs of the
/// two-cluster vocabulary.
pub fn cluster_separation(model: &Model, beta: f64) -> (f64, f64) {
    let cluster = |word: &str| word.starts_with('a');
    let ids: Vec<(u32, bool)> = model
        .vocab
        .tokens()
        .iter()
        .map(|w| (model.vocab.id(w).unwrap(), cluster(w)))
        .collect();
    let mut within = (0.0, 0usize);
    let mut cross = (0.0, 0usize);
    for (i, &(id1, c1)) in ids.iter().enumerate() {
        for &(id2, c2) in &ids[i + 1..] {
            let s = pair_similarity(model, id1, id2, beta);
            if c1 == c2 {
                within.0 += s;
                within.1 += 1;
            } else {
                cross.0 += s;
                cross.1 += 1;
            }
        }
    }
    (within.0 / within.1 as f64, cross.0 / cross.1 as f64)
}

/// A word's position on the latent topic circle, spread by the golden angle.
pub fn topic_angle(word_rank: usize) -> f64 {
    let phi = 0.618_033_988_749_894_9_f64;
    let frac = (word_rank as f64 * phi).fract();
    frac * std::f64::consts::TAU
}

fn word_string(rank: usize) -> String {
    // Four base-26 letters; digit-free so cleaning keeps them verbatim.
    let mut n = rank;
    let mut s = String::with_capacity(4);
    for _ in 0..4 {
        s.push((b'a' + (n % 26) as u8) as char);
        n /= 26;
    }
    s
}

pub struct ZipfTopicCorpus {
    pub vocab_size: usize,
    pub topics: usize,
    pub tokens: u64,
    pub sentence_len: usize,
    pub concentration: f64,
    pub seed: u64,
}

impl Default for ZipfTopicCorpus {
    fn default() -> Self {
        ZipfTopicCorpus {
            vocab_size: 5000,
            topics: 64,
            tokens: 17_000_000,
            sentence_len: 20,
            concentration: 2.0,
            seed: 0xB0C5,
        }
    }
}

impl ZipfTopicCorpus {
    pub fn words(&self) -> Vec<String> {
        (0..self.vocab_size).map(word_string).collect()
    }

    /// Latent similarity between two words: cosine of their topic angles.
    pub fn ground_truth(&self, rank1: usize, rank2: usize) -> f64 {
        (topic_angle(rank1) - topic_angle(rank2)).cos()
    }

    /// Write the raw corpus: Zipfian unigrams mixed with a per-sentence
    /// topic; words near the sentence topic on the circle are boosted.
    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let words = self.words();
        let zipf: Vec<f64> = (0..self.vocab_size).map(|i| 1.0 / (i + 3) as f64).collect();

        // Per-topic cumulative sampling tables.
        let mut topic_cum: Vec<Vec<f64>> = Vec::with_capacity(self.topics);
        for t in 0..self.topics {
            let theta_t = t as f64 / self.topics as f64 * std::f64::consts::TAU;
            let mut cum = Vec::with_capacity(self.vocab_size);
            let mut acc = 0.0;
            for (i, z) in zipf.iter().enumerate() {
                let boost = (self.concentration * (topic_angle(i) - theta_t).cos()).exp();
                acc += z * boost;
                cum.push(acc);
            }
            let total = acc;
            for c in cum.iter_mut() {
                *c /= total;
            }
            topic_cum.push(cum);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = BufWriter::new(fs::File::create(path)?);
        let mut written = 0u64;
        let mut line = String::with_capacity(self.sentence_len * 5);
        while written < self.tokens {
            let cum = &topic_cum[rng.gen_range(0..self.topics)];
            line.clear();
            for i in 0..self.sentence_len {
                let p: f64 = rng.gen();
                let idx = cum.partition_point(|&c| c < p).min(self.vocab_size - 1);
                if i > 0 {
                    line.push(' ');
                }
                line.push_str(&words[idx]);
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
            written += self.sentence_len as u64;
        }
        out.flush()
    }

    /// Sample word-rank pairs from the mid-frequency band, with their ground
    /// truth similarity.
    pub fn sample_pairs(&self, n: usize, seed: u64) -> Vec<(usize, usize, f64)> {
        let lo = 20;
        let hi = self.vocab_size.min(2000);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let a = rng.gen_range(lo..hi);
                let mut b = rng.gen_range(lo..hi);
                while b == a {
                    b = rng.gen_range(lo..hi);
                }
                (a, b, self.ground_truth(a, b))
            })
            .collect()
    }
}

/// Serialization styles covering the published benchmark formats.
#[derive(Debug, Clone, Copy)]
pub enum FixtureFormat {
    /// `w1<TAB>w2<TAB>score`
    Tsv,
    /// Tab-separated with a header and a POS column before the score.
    TsvHeaderPos,
    /// Tab-separated, POS column before the score, no header.
    TsvPos,
    /// Tab-separated with ten per-rater columns after the score.
    TsvRaters,
    /// `w1,w2,score` with a header line.
    CsvHeader,
    /// `w1,w2,score`
    Csv,
    /// `w1;w2;score`
    Semicolon,
    /// `w1 w2 score`
    Space,
}

pub fn write_fixture(
    path: &Path,
    format: FixtureFormat,
    pairs: &[(String, String, f64)],
) -> std::io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    match format {
        FixtureFormat::TsvHeaderPos => writeln!(out, "word1\tword2\tPOS\tscore\tconc(w1)")?,
        FixtureFormat::CsvHeader => writeln!(out, "Word 1,Word 2,Human (mean)")?,
        _ => {}
    }
    for (w1, w2, score) in pairs {
        match format {
            FixtureFormat::Tsv => writeln!(out, "{w1}\t{w2}\t{score}")?,
            FixtureFormat::TsvHeaderPos => writeln!(out, "{w1}\t{w2}\tN\t{score}\t3.1")?,
            FixtureFormat::TsvPos => writeln!(out, "{w1}\t{w2}\tV\t{score}")?,
            FixtureFormat::TsvRaters => {
                write!(out, "{w1}\t{w2}\t{score}")?;
                for r in 0..10 {
                    write!(out, "\t{}", (r % 10) as f64)?;
                }
                writeln!(out)?;
            }
            FixtureFormat::CsvHeader | FixtureFormat::Csv => writeln!(out, "{w1},{w2},{score}")?,
            FixtureFormat::Semicolon => writeln!(out, "{w1};{w2};{score}")?,
            FixtureFormat::Space => writeln!(out, "{w1} {w2} {score}")?,
        }
    }
    out.flush()
}

/// The 13 benchmark loaders with a representative published format each.
pub fn benchmark_fixture_files() -> Vec<(&'static str, FixtureFormat)> {
    vec![
        ("SimLex-999.txt", FixtureFormat::TsvHeaderPos),
        ("SimVerb-3500.txt", FixtureFormat::TsvPos),
        ("wordsim_similarity_goldstandard.txt", FixtureFormat::Tsv),
        ("wordsim_relatedness_goldstandard.txt", FixtureFormat::Tsv),
        ("combined.csv", FixtureFormat::CsvHeader),
        ("rw.txt", FixtureFormat::TsvRaters),
        ("EN-RG-65.txt", FixtureFormat::Semicolon),
        ("EN-MC-30.txt", FixtureFormat::Semicolon),
        ("EN-YP-130.txt", FixtureFormat::Space),
        ("MEN_dataset_natural_form_full", FixtureFormat::Space),
        ("Mturk-287.csv", FixtureFormat::Csv),
        ("Mturk-771.csv", FixtureFormat::Csv),
        ("EN-VERB-143.txt", FixtureFormat::CsvHeader),
    ]
}
