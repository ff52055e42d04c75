//! Word-level F1, label-consistency dataset distance and throughput.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::hint::black_box;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::decode::Segmenter;
use crate::error::{Error, Result};

/// Minimum throughput a deployed segmenter is expected to reach, in KB/s.
pub const SPEED_THRESHOLD_KB_PER_S: f64 = 68.0;
pub const BENCH_RUNS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold_words: usize,
    pub pred_words: usize,
    pub correct_words: usize,
}

impl EvalReport {
    pub fn from_counts(gold_words: usize, pred_words: usize, correct_words: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(correct_words, pred_words);
        let recall = ratio(correct_words, gold_words);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        EvalReport {
            precision,
            recall,
            f1,
            gold_words,
            pred_words,
            correct_words,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain numeric record")
    }
}

fn spans<S: AsRef<str>>(words: &[S]) -> Vec<(usize, usize)> {
    let mut start = 0;
    words
        .iter()
        .map(|w| {
            let end = start + w.as_ref().chars().count();
            let span = (start, end);
            start = end;
            span
        })
        .collect()
}

/// Span-intersection precision, recall and F1 over a corpus.
pub fn f1_score<G: AsRef<str>, P: AsRef<str>>(
    gold: &[Vec<G>],
    pred: &[Vec<P>],
) -> Result<EvalReport> {
    if gold.len() != pred.len() {
        return Err(Error::SentenceCountMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let (mut g_total, mut p_total, mut correct) = (0, 0, 0);
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        let g_text: String = g.iter().map(AsRef::as_ref).collect();
        let p_text: String = p.iter().map(AsRef::as_ref).collect();
        if g_text != p_text {
            return Err(Error::LengthMismatch { sentence_index: i });
        }
        let g_spans: HashSet<(usize, usize)> = spans(g).into_iter().collect();
        let p_spans = spans(p);
        correct += p_spans.iter().filter(|s| g_spans.contains(s)).count();
        g_total += g.len();
        p_total += p.len();
    }
    Ok(EvalReport::from_counts(g_total, p_total, correct))
}

/// How a string occurrence in segmented text relates to the gold words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OccurrenceLabel {
    /// Exactly one gold word.
    AsToken,
    /// A proper part of one gold word.
    InsideWord,
    /// Spans at least one word boundary.
    CrossesBoundary,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LabelCounts {
    pub as_token: u64,
    pub inside_word: u64,
    pub crosses_boundary: u64,
}

impl LabelCounts {
    pub fn total(&self) -> u64 {
        self.as_token + self.inside_word + self.crosses_boundary
    }

    pub fn get(&self, label: OccurrenceLabel) -> u64 {
        match label {
            OccurrenceLabel::AsToken => self.as_token,
            OccurrenceLabel::InsideWord => self.inside_word,
            OccurrenceLabel::CrossesBoundary => self.crosses_boundary,
        }
    }

    fn add(&mut self, label: OccurrenceLabel) {
        match label {
            OccurrenceLabel::AsToken => self.as_token += 1,
            OccurrenceLabel::InsideWord => self.inside_word += 1,
            OccurrenceLabel::CrossesBoundary => self.crosses_boundary += 1,
        }
    }

    /// Share of occurrences carrying `label`; 0 for an unseen string.
    pub fn consistency(&self, label: OccurrenceLabel) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.get(label) as f64 / t as f64,
        }
    }
}

struct IndexedSentence {
    text: String,
    /// Byte offset of every character, plus the end.
    offsets: Vec<usize>,
    /// Index of the gold word containing each character.
    word_of: Vec<u32>,
    /// Whether a word starts at each character position, plus the end.
    boundary: Vec<bool>,
}

impl IndexedSentence {
    fn new<S: AsRef<str>>(words: &[S]) -> Self {
        let mut text = String::new();
        let mut offsets = Vec::new();
        let mut word_of = Vec::new();
        let mut boundary = Vec::new();
        for (wi, w) in words.iter().enumerate() {
            for (ci, c) in w.as_ref().chars().enumerate() {
                offsets.push(text.len());
                text.push(c);
                word_of.push(wi as u32);
                boundary.push(ci == 0);
            }
        }
        offsets.push(text.len());
        boundary.push(true);
        IndexedSentence {
            text,
            offsets,
            word_of,
            boundary,
        }
    }

    fn len(&self) -> usize {
        self.word_of.len()
    }

    fn slice(&self, start: usize, end: usize) -> &str {
        &self.text[self.offsets[start]..self.offsets[end]]
    }

    fn label(&self, start: usize, end: usize) -> OccurrenceLabel {
        if self.word_of[start] != self.word_of[end - 1] {
            OccurrenceLabel::CrossesBoundary
        } else if self.boundary[start] && self.boundary[end] {
            OccurrenceLabel::AsToken
        } else {
            OccurrenceLabel::InsideWord
        }
    }
}

/// Segmented training text indexed for occurrence queries.
pub struct TrainIndex {
    sentences: Vec<IndexedSentence>,
    vocab: HashSet<String>,
}

impl TrainIndex {
    pub fn new<S: AsRef<str>>(train: &[Vec<S>]) -> Self {
        let sentences = train.iter().map(|s| IndexedSentence::new(s)).collect();
        let vocab = train
            .iter()
            .flat_map(|s| s.iter().map(|w| w.as_ref().to_string()))
            .collect();
        TrainIndex { sentences, vocab }
    }

    pub fn contains_word(&self, word: &str) -> bool {
        self.vocab.contains(word)
    }

    /// Labels of every (possibly overlapping) occurrence of `word`.
    pub fn occurrences(&self, word: &str) -> LabelCounts {
        let len = word.chars().count();
        let mut counts = LabelCounts::default();
        if len == 0 {
            return counts;
        }
        for s in &self.sentences {
            for start in 0..s.len().saturating_sub(len - 1) {
                if s.slice(start, start + len) == word {
                    counts.add(s.label(start, start + len));
                }
            }
        }
        counts
    }

    /// Occurrence labels for many words in one pass over the text.
    pub fn occurrences_of(&self, words: &HashSet<&str>) -> HashMap<String, LabelCounts> {
        let lengths: Vec<usize> = {
            let mut l: Vec<usize> = words
                .iter()
                .map(|w| w.chars().count())
                .filter(|&l| l > 0)
                .collect();
            l.sort_unstable();
            l.dedup();
            l
        };
        let mut out: HashMap<String, LabelCounts> = HashMap::new();
        for s in &self.sentences {
            for start in 0..s.len() {
                for &len in &lengths {
                    let end = start + len;
                    if end > s.len() {
                        break;
                    }
                    let sub = s.slice(start, end);
                    if words.contains(sub) {
                        out.entry(sub.to_string())
                            .or_default()
                            .add(s.label(start, end));
                    }
                }
            }
        }
        out
    }
}

/// Fraction of the occurrences of `word` in the training text that carry
/// `label`.
pub fn label_consistency(word: &str, label: OccurrenceLabel, train: &TrainIndex) -> f64 {
    train.occurrences(word).consistency(label)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    /// Token-weighted mean of as-token consistency over the test corpus.
    pub mean_consistency: f64,
    pub oov_rate: f64,
    pub test_tokens: usize,
    pub per_word: BTreeMap<String, f64>,
}

pub fn dataset_distance<S: AsRef<str>, T: AsRef<str>>(
    train: &[Vec<S>],
    test: &[Vec<T>],
) -> Result<ConsistencyReport> {
    let index = TrainIndex::new(train);
    dataset_distance_indexed(&index, test)
}

pub fn dataset_distance_indexed<T: AsRef<str>>(
    train: &TrainIndex,
    test: &[Vec<T>],
) -> Result<ConsistencyReport> {
    if train.sentences.iter().all(|s| s.len() == 0) {
        return Err(Error::EmptyCorpus);
    }
    let tokens: Vec<&str> = test
        .iter()
        .flat_map(|s| s.iter().map(AsRef::as_ref))
        .collect();
    if tokens.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let distinct: HashSet<&str> = tokens.iter().copied().collect();
    let counts = train.occurrences_of(&distinct);
    let per_word: BTreeMap<String, f64> = distinct
        .iter()
        .map(|&w| {
            let psi = counts
                .get(w)
                .map_or(0.0, |c| c.consistency(OccurrenceLabel::AsToken));
            (w.to_string(), psi)
        })
        .collect();
    let sum: f64 = tokens.iter().map(|w| per_word[*w]).sum();
    let oov = tokens.iter().filter(|w| !train.contains_word(w)).count();
    Ok(ConsistencyReport {
        mean_consistency: sum / tokens.len() as f64,
        oov_rate: oov as f64 / tokens.len() as f64,
        test_tokens: tokens.len(),
        per_word,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub bytes_processed: u64,
    pub wall_seconds: f64,
    pub kb_per_s: f64,
    pub batch_size: usize,
    pub threads: usize,
    /// Timed runs in seconds; `wall_seconds` is their median.
    pub runs: Vec<f64>,
}

impl BenchReport {
    pub fn from_runs(
        bytes_processed: u64,
        mut runs: Vec<f64>,
        batch_size: usize,
        threads: usize,
    ) -> Self {
        runs.sort_by(f64::total_cmp);
        let wall_seconds = median(&runs);
        BenchReport {
            bytes_processed,
            wall_seconds,
            kb_per_s: kb_per_s(bytes_processed, wall_seconds),
            batch_size,
            threads,
            runs,
        }
    }

    pub fn meets_threshold(&self) -> bool {
        self.kb_per_s >= SPEED_THRESHOLD_KB_PER_S
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain numeric record")
    }
}

pub fn kb_per_s(bytes: u64, seconds: f64) -> f64 {
    bytes as f64 / 1024.0 / seconds
}

/// Median of a sorted, non-empty slice.
fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Times end-to-end segmentation of `corpus` on a dedicated pool of
/// `threads` workers, each task handling `batch_size` lines. One warm-up
/// run is discarded and the median of [`BENCH_RUNS`] timed runs reported.
pub fn bench_throughput<S: AsRef<str> + Sync>(
    segmenter: &Segmenter,
    corpus: &[S],
    batch_size: usize,
    threads: usize,
) -> Result<BenchReport> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput);
    }
    if batch_size == 0 || threads == 0 {
        return Err(Error::Config(
            "batch size and thread count must be >= 1".into(),
        ));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let bytes: u64 = corpus.iter().map(|s| s.as_ref().len() as u64).sum();
    let run = || -> Result<f64> {
        let start = Instant::now();
        pool.install(|| {
            corpus.par_chunks(batch_size).try_for_each(|chunk| {
                for line in chunk {
                    black_box(segmenter.segment(line.as_ref())?);
                }
                Ok::<(), Error>(())
            })
        })?;
        Ok(start.elapsed().as_secs_f64())
    };
    run()?;
    let runs = (0..BENCH_RUNS).map(|_| run()).collect::<Result<Vec<_>>>()?;
    Ok(BenchReport::from_runs(bytes, runs, batch_size, threads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split(lines: &[&str]) -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|l| l.split(' ').map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn identical_segmentation_scores_one() {
        let g = split(&["新来 的 吃鸡 主播", "a bc"]);
        let r = f1_score(&g, &g).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn single_word_prediction_scores_zero() {
        let r = f1_score(&split(&["ab c"]), &split(&["abc"])).unwrap();
        assert_eq!(r.correct_words, 0);
        assert_eq!(r.f1, 0.0);
    }

    #[test]
    fn f1_errors() {
        assert!(matches!(
            f1_score(&split(&["ab"]), &split(&["ac"])),
            Err(Error::LengthMismatch { sentence_index: 0 })
        ));
        assert!(matches!(
            f1_score(&split(&["ab", "c"]), &split(&["ab"])),
            Err(Error::SentenceCountMismatch { gold: 2, pred: 1 })
        ));
    }

    #[test]
    fn overlapping_occurrences_are_counted() {
        let idx = TrainIndex::new(&split(&["aa a"]));
        let c = idx.occurrences("aa");
        // "aaa": [0,2) is the token, [1,3) crosses the boundary.
        assert_eq!(
            c,
            LabelCounts {
                as_token: 1,
                inside_word: 0,
                crosses_boundary: 1
            }
        );
        assert_eq!(idx.occurrences("a").total(), 3);
    }

    #[test]
    fn consistency_examples() {
        let idx = TrainIndex::new(&split(&["ab c ab", "xabx"]));
        assert!(
            (label_consistency("ab", OccurrenceLabel::AsToken, &idx) - 2.0 / 3.0).abs() < 1e-15
        );
        assert_eq!(label_consistency("zz", OccurrenceLabel::AsToken, &idx), 0.0);
        assert_eq!(label_consistency("c", OccurrenceLabel::AsToken, &idx), 1.0);
    }

    #[test]
    fn batch_occurrences_match_single_queries() {
        let idx = TrainIndex::new(&split(&["ab c ab", "xabx", "a b c"]));
        let words: HashSet<&str> = ["a", "ab", "abc", "xabx", "c", "q"].into_iter().collect();
        let batch = idx.occurrences_of(&words);
        for w in words {
            assert_eq!(
                batch.get(w).copied().unwrap_or_default(),
                idx.occurrences(w),
                "{w}"
            );
        }
    }

    #[test]
    fn bench_arithmetic() {
        let r = BenchReport::from_runs(102_400, vec![1.0, 0.5, 3.0], 4, 2);
        assert_eq!(r.wall_seconds, 1.0);
        assert_eq!(r.kb_per_s, 100.0);
        assert!(r.meets_threshold());
        assert_eq!(
            r.kb_per_s,
            r.bytes_processed as f64 / 1024.0 / r.wall_seconds
        );
    }
}
