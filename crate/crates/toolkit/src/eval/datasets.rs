//! Loaders for word-similarity benchmark files.
//!
//! The published datasets come in a handful of close formats: tab, comma,
//! semicolon, or whitespace separated; with or without a header line; score
//! in the third column or later (SimLex-999 and SimVerb-3500 put a POS tag
//! before the score, Stanford RW appends per-rater columns after it). One
//! tolerant parser covers all of them: the score is the first numeric field
//! after the two words, and a first line without one is treated as a header.
//! Everything is normalized to `word1<TAB>word2<TAB>score`.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{EvalError, SimilarityDataset, SimilarityPair};

/// The benchmark suite: canonical names with the filename hints used to
/// recognize user-supplied copies. First match wins.
pub const KNOWN_DATASETS: &[(&str, &[&str])] = &[
    ("simlex-999", &["simlex"]),
    ("simverb-3500", &["simverb"]),
    ("ws-353-sim", &["ws-353-sim", "ws353-sim", "wordsim_similarity", "ws-353 (sim)"]),
    ("ws-353-rel", &["ws-353-rel", "ws353-rel", "wordsim_relatedness", "ws-353 (rel)"]),
    ("ws-353-all", &["ws-353", "ws353", "wordsim353", "combined"]),
    ("rw-stanford", &["rw", "rare"]),
    ("rg-65", &["rg"]),
    ("mc-30", &["mc"]),
    ("yp-130", &["yp"]),
    ("men", &["men"]),
    ("mturk-287", &["mturk-287", "mturk287"]),
    ("mturk-771", &["mturk-771", "mturk771"]),
    ("verb-143", &["verb"]),
];

/// Canonical dataset name for a path: the first registry hint contained in
/// the lowercased file name, or the bare file stem when nothing matches.
pub fn canonical_name(path: &Path) -> String {
    let file_name = path
        .file_name()
        .map(|s| s.to_string_lossy().to_lowercase())
        .unwrap_or_default();
    for (name, hints) in KNOWN_DATASETS {
        if hints.iter().any(|h| file_name.contains(h)) {
            return (*name).to_string();
        }
    }
    path.file_stem().map(|s| s.to_string_lossy().to_lowercase()).unwrap_or(file_name)
}

pub fn load(path: &Path) -> Result<SimilarityDataset, EvalError> {
    let file = File::open(path)?;
    parse(&canonical_name(path), &path.display().to_string(), BufReader::new(file))
}

fn split_fields(line: &str) -> Vec<&str> {
    let delim = if line.contains('\t') {
        Some('\t')
    } else if line.contains(';') {
        Some(';')
    } else if line.contains(',') {
        Some(',')
    } else {
        None
    };
    match delim {
        Some(d) => line.split(d).map(str::trim).filter(|f| !f.is_empty()).collect(),
        None => line.split_whitespace().collect(),
    }
}

pub fn parse<R: BufRead>(
    name: &str,
    path: &str,
    reader: R,
) -> Result<SimilarityDataset, EvalError> {
    let mut pairs = Vec::new();
    let mut saw_data = false;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields = split_fields(line);
        let malformed = |reason: &str| EvalError::MalformedLine {
            path: path.to_string(),
            line: idx + 1,
            reason: reason.to_string(),
        };
        if fields.len() < 3 {
            if !saw_data {
                continue; // header fragment
            }
            return Err(malformed("expected word1, word2, score"));
        }
        let score = fields[2..].iter().find_map(|f| f.parse::<f64>().ok());
        match score {
            Some(human_score) if human_score.is_finite() => {
                saw_data = true;
                pairs.push(SimilarityPair {
                    word1: fields[0].to_lowercase(),
                    word2: fields[1].to_lowercase(),
                    human_score,
                });
            }
            _ if !saw_data => continue, // header line
            _ => return Err(malformed("no numeric score field")),
        }
    }
    if pairs.is_empty() {
        return Err(EvalError::MalformedLine {
            path: path.to_string(),
            line: 0,
            reason: "no similarity pairs found".to_string(),
        });
    }
    Ok(SimilarityDataset { name: name.to_string(), pairs })
}

/// Write the normalized TSV form.
pub fn write_normalized<W: std::io::Write>(
    w: &mut W,
    dataset: &SimilarityDataset,
) -> std::io::Result<()> {
    for p in &dataset.pairs {
        writeln!(w, "{}\t{}\t{}", p.word1, p.word2, p.human_score)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_str(name: &str, text: &str) -> SimilarityDataset {
        parse(name, "test", text.as_bytes()).unwrap()
    }

    #[test]
    fn parses_normalized_tsv() {
        let ds = parse_str("x", "cup\tmug\t8.5\ncar\ttree\t1.0\n");
        assert_eq!(ds.pairs.len(), 2);
        assert_eq!(ds.pairs[0].word1, "cup");
        assert_eq!(ds.pairs[0].human_score, 8.5);
    }

    #[test]
    fn parses_ws353_csv_with_header() {
        let text = "Word 1,Word 2,Human (mean)\nlove,sex,6.77\ntiger,cat,7.35\n";
        let ds = parse_str("ws-353-all", text);
        assert_eq!(ds.pairs.len(), 2);
        assert_eq!(ds.pairs[0].word1, "love");
        assert!((ds.pairs[1].human_score - 7.35).abs() < 1e-12);
    }

    #[test]
    fn parses_simlex_with_pos_column() {
        let text = "word1\tword2\tPOS\tSimLex999\tconc(w1)\nold\tnew\tA\t1.58\t2.72\nsmart\tintelligent\tA\t9.2\t1.75\n";
        let ds = parse_str("simlex-999", text);
        assert_eq!(ds.pairs.len(), 2);
        assert_eq!(ds.pairs[0].human_score, 1.58);
    }

    #[test]
    fn parses_rw_with_rater_columns() {
        let text = "squishing\tsquirt\t5.88\t7\t6\t5\t2\nundated\tundatable\t5.83\t5\t7\t10\t1\n";
        let ds = parse_str("rw-stanford", text);
        assert_eq!(ds.pairs[0].human_score, 5.88);
    }

    #[test]
    fn parses_men_space_separated() {
        let ds = parse_str("men", "sun sunlight 50.0\nautomobile car 50.0\n");
        assert_eq!(ds.pairs.len(), 2);
    }

    #[test]
    fn parses_semicolon_format() {
        let ds = parse_str("rg-65", "cord;smile;0.02\nrooster;voyage;0.04\n");
        assert_eq!(ds.pairs.len(), 2);
        assert_eq!(ds.pairs[1].word2, "voyage");
    }

    #[test]
    fn lowercases_words() {
        let ds = parse_str("mc-30", "Car,Automobile,3.92\n");
        assert_eq!(ds.pairs[0].word1, "car");
    }

    #[test]
    fn malformed_mid_file_line_reports_number() {
        let err = parse("x", "f.tsv", "a\tb\t1.0\nc\td\tnot_a_number\n".as_bytes()).unwrap_err();
        match err {
            EvalError::MalformedLine { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(parse("x", "f.tsv", "".as_bytes()).is_err());
    }

    #[test]
    fn canonical_names_cover_the_benchmark_suite() {
        let cases = [
            ("SimLex-999.txt", "simlex-999"),
            ("SimVerb-3500.txt", "simverb-3500"),
            ("wordsim_similarity_goldstandard.txt", "ws-353-sim"),
            ("wordsim_relatedness_goldstandard.txt", "ws-353-rel"),
            ("combined.csv", "ws-353-all"),
            ("ws353.tsv", "ws-353-all"),
            ("rw.txt", "rw-stanford"),
            ("EN-RG-65.txt", "rg-65"),
            ("EN-MC-30.txt", "mc-30"),
            ("EN-YP-130.txt", "yp-130"),
            ("MEN_dataset_natural_form_full", "men"),
            ("Mturk-287.csv", "mturk-287"),
            ("MTURK-771.csv", "mturk-771"),
            ("EN-VERB-143.txt", "verb-143"),
        ];
        for (file, want) in cases {
            assert_eq!(canonical_name(Path::new(file)), want, "{file}");
        }
    }

    #[test]
    fn unknown_files_fall_back_to_stem() {
        assert_eq!(canonical_name(Path::new("/tmp/my_pairs.tsv")), "my_pairs");
    }
}
