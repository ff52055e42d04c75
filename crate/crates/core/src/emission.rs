//! Per-character tag scores and tag transition weights.
//!
//! Scores come either from a linear model over a fixed window of character
//! n-gram features, trained as an averaged structured perceptron, or from
//! an external file in the emissions exchange format.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Tag, TaggedSentence, LEGAL_TRANSITIONS};
use crate::decode::viterbi_path;
use crate::error::{Error, Result};

pub const TEMPLATE_VERSION: u32 = 1;
pub const MLE_SMOOTHING: f64 = 0.1;
pub const MODEL_HEADER_LINES: usize = 16;

const BOS_TOKEN: &str = "<BOS>";
const EOS_TOKEN: &str = "<EOS>";
const MODEL_MAGIC: &str = "#pcrf-seg emission model";

/// Scores of every tag for every character, rows in `B, M, E, S` order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionMatrix {
    chars: Vec<char>,
    scores: Vec<[f64; 4]>,
}

impl EmissionMatrix {
    pub fn new(chars: Vec<char>, scores: Vec<[f64; 4]>) -> Result<Self> {
        if chars.len() != scores.len() {
            return Err(Error::ShapeMismatch {
                rows: scores.len(),
                chars: chars.len(),
            });
        }
        if scores.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("emission scores must be finite".into()));
        }
        Ok(EmissionMatrix { chars, scores })
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn scores(&self) -> &[[f64; 4]] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    #[inline]
    pub fn score(&self, i: usize, tag: Tag) -> f64 {
        self.scores[i][tag.index()]
    }
}

/// Tag-to-tag weights plus the fixed BMES legality mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionMatrix {
    weights: [[f64; 4]; 4],
}

impl Default for TransitionMatrix {
    fn default() -> Self {
        Self::zeros()
    }
}

impl TransitionMatrix {
    pub fn zeros() -> Self {
        TransitionMatrix {
            weights: [[0.0; 4]; 4],
        }
    }

    pub fn new(weights: [[f64; 4]; 4]) -> Result<Self> {
        if weights.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("transition weights must be finite".into()));
        }
        Ok(TransitionMatrix { weights })
    }

    pub fn weights(&self) -> &[[f64; 4]; 4] {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, from: Tag, to: Tag) -> f64 {
        self.weights[from.index()][to.index()]
    }

    pub fn mask() -> &'static [[bool; 4]; 4] {
        &LEGAL_TRANSITIONS
    }

    /// Smoothed log relative frequencies of adjacent tag pairs:
    /// `ln((c(i->j) + a) / (c(i->*) + 4a))` with `a = 0.1`.
    pub fn estimate_mle(corpus: &[TaggedSentence]) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let counts = transition_counts(corpus);
        let mut weights = [[0.0; 4]; 4];
        for (from, row) in counts.iter().enumerate() {
            let total: u64 = row.iter().sum();
            for (to, &c) in row.iter().enumerate() {
                weights[from][to] =
                    ((c as f64 + MLE_SMOOTHING) / (total as f64 + 4.0 * MLE_SMOOTHING)).ln();
            }
        }
        Ok(TransitionMatrix { weights })
    }
}

/// `counts[from][to]` over adjacent tag pairs.
pub fn transition_counts(corpus: &[TaggedSentence]) -> [[u64; 4]; 4] {
    let mut counts = [[0u64; 4]; 4];
    for sentence in corpus {
        for pair in sentence.tags().windows(2) {
            counts[pair[0].index()][pair[1].index()] += 1;
        }
    }
    counts
}

fn char_at(chars: &[char], pos: isize, out: &mut String) {
    if pos < 0 {
        out.push_str(BOS_TOKEN);
    } else if pos as usize >= chars.len() {
        out.push_str(EOS_TOKEN);
    } else {
        out.push(chars[pos as usize]);
    }
}

/// Calls `f` with each feature string of position `i`, reusing `buf`.
///
/// Unigrams at offsets -2..=2, then the bigrams (-1,0), (0,+1) and (-1,+1).
/// Positions outside the sentence read as `<BOS>` / `<EOS>`.
fn for_each_feature(chars: &[char], i: usize, buf: &mut String, mut f: impl FnMut(&str)) {
    const UNIGRAMS: [(&str, isize); 5] = [
        ("U-2=", -2),
        ("U-1=", -1),
        ("U0=", 0),
        ("U+1=", 1),
        ("U+2=", 2),
    ];
    const BIGRAMS: [(&str, isize, isize); 3] =
        [("B-1,0=", -1, 0), ("B0,+1=", 0, 1), ("B-1,+1=", -1, 1)];
    let i = i as isize;
    for (prefix, off) in UNIGRAMS {
        buf.clear();
        buf.push_str(prefix);
        char_at(chars, i + off, buf);
        f(buf);
    }
    for (prefix, a, b) in BIGRAMS {
        buf.clear();
        buf.push_str(prefix);
        char_at(chars, i + a, buf);
        buf.push('|');
        char_at(chars, i + b, buf);
        f(buf);
    }
}

pub fn extract_features(chars: &[char], i: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(8);
    let mut buf = String::new();
    for_each_feature(chars, i, &mut buf, |f| out.push(f.to_string()));
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrainingInfo {
    pub epochs: usize,
    pub seed: u64,
    pub updates: u64,
}

/// Linear feature scorer with learned transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionModel {
    weights: HashMap<String, [f64; 4]>,
    transitions: TransitionMatrix,
    template_version: u32,
    info: TrainingInfo,
}

impl EmissionModel {
    pub fn new(weights: HashMap<String, [f64; 4]>, transitions: TransitionMatrix) -> Self {
        EmissionModel {
            weights,
            transitions,
            template_version: TEMPLATE_VERSION,
            info: TrainingInfo::default(),
        }
    }

    pub fn transitions(&self) -> &TransitionMatrix {
        &self.transitions
    }

    pub fn weights(&self) -> &HashMap<String, [f64; 4]> {
        &self.weights
    }

    pub fn template_version(&self) -> u32 {
        self.template_version
    }

    pub fn training_info(&self) -> TrainingInfo {
        self.info
    }

    pub fn feature_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, feature: &str, tag: Tag) -> f64 {
        self.weights.get(feature).map_or(0.0, |w| w[tag.index()])
    }

    /// Sum of feature weights per tag for every character.
    pub fn score_sentence(&self, chars: &[char]) -> EmissionMatrix {
        let mut buf = String::with_capacity(16);
        let mut scores = Vec::with_capacity(chars.len());
        for i in 0..chars.len() {
            let mut row = [0.0; 4];
            for_each_feature(chars, i, &mut buf, |f| {
                if let Some(w) = self.weights.get(f) {
                    for t in 0..4 {
                        row[t] += w[t];
                    }
                }
            });
            scores.push(row);
        }
        EmissionMatrix {
            chars: chars.to_vec(),
            scores,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = self.to_tsv()?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Serializes to the TSV model format: a fixed header followed by
    /// `feature \t tag \t weight` lines sorted by feature and tag. Zero
    /// weights are omitted.
    pub fn to_tsv(&self) -> Result<String> {
        let mut out = String::new();
        let mut features: Vec<&String> = self.weights.keys().collect();
        features.sort();
        writeln!(out, "{MODEL_MAGIC}").unwrap();
        writeln!(out, "template_version\t{}", self.template_version).unwrap();
        writeln!(out, "tag_order\tB\tM\tE\tS").unwrap();
        writeln!(out, "feature_count\t{}", features.len()).unwrap();
        writeln!(out, "epochs\t{}", self.info.epochs).unwrap();
        writeln!(out, "seed\t{}", self.info.seed).unwrap();
        writeln!(out, "updates\t{}", self.info.updates).unwrap();
        writeln!(out, "transitions\t4\t4").unwrap();
        for from in Tag::ALL {
            let row = &self.transitions.weights[from.index()];
            writeln!(
                out,
                "{from}\t{}\t{}\t{}\t{}",
                row[0], row[1], row[2], row[3]
            )
            .unwrap();
        }
        for from in Tag::ALL {
            let row = LEGAL_TRANSITIONS[from.index()].map(u8::from);
            writeln!(
                out,
                "mask\t{from}\t{}\t{}\t{}\t{}",
                row[0], row[1], row[2], row[3]
            )
            .unwrap();
        }
        for feature in features {
            if feature.contains(['\t', '\n', '\r']) {
                return Err(Error::Config(format!(
                    "feature {feature:?} cannot be stored in TSV"
                )));
            }
            let w = &self.weights[feature];
            for tag in Tag::ALL {
                let v = w[tag.index()];
                if v != 0.0 {
                    writeln!(out, "{feature}\t{tag}\t{v}").unwrap();
                }
            }
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text)
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < MODEL_HEADER_LINES {
            return Err(Error::format(lines.len() + 1, "truncated model header"));
        }
        if lines[0] != MODEL_MAGIC {
            return Err(Error::format(1, "not a pcrf-seg model file"));
        }
        let header_value = |idx: usize, key: &str| -> Result<&str> {
            lines[idx]
                .strip_prefix(key)
                .and_then(|rest| rest.strip_prefix('\t'))
                .ok_or_else(|| Error::format(idx + 1, format!("expected '{key}'")))
        };
        let parse_num = |idx: usize, key: &str| -> Result<u64> {
            header_value(idx, key)?
                .parse()
                .map_err(|_| Error::format(idx + 1, format!("bad value for '{key}'")))
        };
        let version = parse_num(1, "template_version")? as u32;
        if version != TEMPLATE_VERSION {
            return Err(Error::TemplateVersion(version));
        }
        if header_value(2, "tag_order")? != "B\tM\tE\tS" {
            return Err(Error::format(3, "unsupported tag order"));
        }
        let feature_count = parse_num(3, "feature_count")? as usize;
        let info = TrainingInfo {
            epochs: parse_num(4, "epochs")? as usize,
            seed: parse_num(5, "seed")?,
            updates: parse_num(6, "updates")?,
        };
        if header_value(7, "transitions")? != "4\t4" {
            return Err(Error::format(8, "transition matrix must be 4x4"));
        }
        let mut weights = [[0.0; 4]; 4];
        for tag in Tag::ALL {
            let idx = 8 + tag.index();
            let row = header_value(idx, &tag.to_string())?;
            weights[tag.index()] = parse_row(row, idx + 1)?;
        }
        for tag in Tag::ALL {
            let idx = 12 + tag.index();
            let expected: Vec<String> = LEGAL_TRANSITIONS[tag.index()]
                .iter()
                .map(|&b| u8::from(b).to_string())
                .collect();
            if header_value(idx, &format!("mask\t{tag}"))? != expected.join("\t") {
                return Err(Error::format(
                    idx + 1,
                    "legality mask differs from BMES rules",
                ));
            }
        }
        let transitions = TransitionMatrix::new(weights)
            .map_err(|_| Error::format(9, "non-finite transition"))?;

        let mut table: HashMap<String, [f64; 4]> = HashMap::with_capacity(feature_count);
        for (idx, line) in lines.iter().enumerate().skip(MODEL_HEADER_LINES) {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.rsplitn(3, '\t');
            let (value, tag, feature) = match (parts.next(), parts.next(), parts.next()) {
                (Some(v), Some(t), Some(f)) => (v, t, f),
                _ => return Err(Error::format(idx + 1, "expected feature, tag and weight")),
            };
            let tag = single_tag(tag)
                .ok_or_else(|| Error::format(idx + 1, format!("bad tag {tag:?}")))?;
            let value: f64 = value
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::format(idx + 1, format!("bad weight {value:?}")))?;
            table.entry(feature.to_string()).or_insert([0.0; 4])[tag.index()] = value;
        }
        if table.len() != feature_count {
            return Err(Error::format(
                4,
                format!(
                    "header declares {feature_count} features, found {}",
                    table.len()
                ),
            ));
        }
        Ok(EmissionModel {
            weights: table,
            transitions,
            template_version: version,
            info,
        })
    }
}

fn single_tag(s: &str) -> Option<Tag> {
    let mut it = s.chars();
    match (it.next(), it.next()) {
        (Some(c), None) => Tag::from_char(c),
        _ => None,
    }
}

fn parse_row(s: &str, line: usize) -> Result<[f64; 4]> {
    let vals: Vec<f64> = s
        .split(['\t', ' '])
        .filter(|f| !f.is_empty())
        .map(|f| f.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::format(line, "expected 4 numbers"))?;
    if vals.len() != 4 || vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::format(line, "expected 4 finite numbers"));
    }
    Ok([vals[0], vals[1], vals[2], vals[3]])
}

/// Running sum of a weight for lazy averaging.
#[derive(Debug, Clone, Copy, Default)]
struct Averaged {
    current: f64,
    total: f64,
    stamp: u64,
}

impl Averaged {
    #[inline]
    fn update(&mut self, delta: f64, now: u64) {
        self.total += (now - self.stamp) as f64 * self.current;
        self.stamp = now;
        self.current += delta;
    }

    /// Mean of the weight over instances `1..=last`.
    fn average(&self, last: u64) -> f64 {
        let total = self.total + (last + 1 - self.stamp) as f64 * self.current;
        total / last as f64
    }
}

/// Per-epoch online accuracy from training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epoch_accuracy: Vec<f64>,
    pub updates: u64,
}

impl TrainReport {
    pub fn final_accuracy(&self) -> f64 {
        self.epoch_accuracy.last().copied().unwrap_or(0.0)
    }
}

pub fn train_perceptron(
    corpus: &[TaggedSentence],
    epochs: usize,
    seed: u64,
) -> Result<EmissionModel> {
    train_perceptron_report(corpus, epochs, seed).map(|(m, _)| m)
}

/// Averaged structured perceptron with Viterbi decoding under the legality
/// mask. Feature and transition weights are updated together whenever the
/// predicted path differs from the gold one; the sentence order of each
/// epoch is shuffled from `seed`.
pub fn train_perceptron_report(
    corpus: &[TaggedSentence],
    epochs: usize,
    seed: u64,
) -> Result<(EmissionModel, TrainReport)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if epochs == 0 {
        return Err(Error::Config("epochs must be >= 1".into()));
    }

    // Intern features once; ids follow first appearance in corpus order.
    let mut feature_ids: HashMap<String, u32> = HashMap::new();
    let mut names: Vec<String> = Vec::new();
    let mut buf = String::new();
    let sentence_features: Vec<Vec<[u32; 8]>> = corpus
        .iter()
        .map(|s| {
            (0..s.len())
                .map(|i| {
                    let mut ids = [0u32; 8];
                    let mut k = 0;
                    for_each_feature(s.chars(), i, &mut buf, |f| {
                        let id = match feature_ids.get(f) {
                            Some(&id) => id,
                            None => {
                                let id = names.len() as u32;
                                names.push(f.to_string());
                                feature_ids.insert(f.to_string(), id);
                                id
                            }
                        };
                        ids[k] = id;
                        k += 1;
                    });
                    ids
                })
                .collect()
        })
        .collect();
    drop(feature_ids);

    let mut feats = vec![[Averaged::default(); 4]; names.len()];
    let mut trans = [[Averaged::default(); 4]; 4];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut now: u64 = 0;
    let mut updates = 0u64;
    let mut report = TrainReport::default();
    let mut scores: Vec<[f64; 4]> = Vec::new();

    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut correct = 0usize;
        let mut total = 0usize;
        for &idx in &order {
            now += 1;
            let gold = corpus[idx].tags();
            let features = &sentence_features[idx];
            scores.clear();
            for ids in features {
                let mut row = [0.0; 4];
                for &id in ids {
                    let w = &feats[id as usize];
                    for t in 0..4 {
                        row[t] += w[t].current;
                    }
                }
                scores.push(row);
            }
            let mut tw = [[0.0; 4]; 4];
            for (i, row) in trans.iter().enumerate() {
                for (j, w) in row.iter().enumerate() {
                    tw[i][j] = w.current;
                }
            }
            let (pred, _) = viterbi_path(&scores, &tw, true);
            total += gold.len();
            correct += gold.iter().zip(&pred).filter(|(g, p)| g == p).count();
            if pred.as_slice() == gold {
                continue;
            }
            updates += 1;
            for (i, ids) in features.iter().enumerate() {
                let (g, p) = (gold[i], pred[i]);
                if g != p {
                    for &id in ids {
                        feats[id as usize][g.index()].update(1.0, now);
                        feats[id as usize][p.index()].update(-1.0, now);
                    }
                }
                if i > 0 {
                    let (gp, pp) = (gold[i - 1], pred[i - 1]);
                    if (gp, g) != (pp, p) {
                        trans[gp.index()][g.index()].update(1.0, now);
                        trans[pp.index()][p.index()].update(-1.0, now);
                    }
                }
            }
        }
        report.epoch_accuracy.push(correct as f64 / total as f64);
    }
    report.updates = updates;

    let mut weights = HashMap::new();
    for (name, w) in names.into_iter().zip(&feats) {
        let avg = [
            w[0].average(now),
            w[1].average(now),
            w[2].average(now),
            w[3].average(now),
        ];
        if avg.iter().any(|&v| v != 0.0) {
            weights.insert(name, avg);
        }
    }
    let mut tw = [[0.0; 4]; 4];
    for (i, row) in trans.iter().enumerate() {
        for (j, w) in row.iter().enumerate() {
            tw[i][j] = w.average(now);
        }
    }
    let model = EmissionModel {
        weights,
        transitions: TransitionMatrix { weights: tw },
        template_version: TEMPLATE_VERSION,
        info: TrainingInfo {
            epochs,
            seed,
            updates,
        },
    };
    Ok((model, report))
}

/// Reads emission matrices in the exchange format: blocks separated by a
/// blank line, each holding the characters, an `n 4` shape line and `n`
/// rows of four tab-separated scores in `B M E S` order.
pub fn load_emissions(path: impl AsRef<Path>) -> Result<Vec<EmissionMatrix>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_emissions(&text)
}

pub fn parse_emissions(text: &str) -> Result<Vec<EmissionMatrix>> {
    let mut out = Vec::new();
    let mut block: Vec<(usize, &str)> = Vec::new();
    let lines = text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l));
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            if !block.is_empty() {
                out.push(parse_block(&block, out.len() + 1)?);
                block.clear();
            }
        } else {
            block.push((idx + 1, line));
        }
    }
    if !block.is_empty() {
        out.push(parse_block(&block, out.len() + 1)?);
    }
    Ok(out)
}

fn parse_block(lines: &[(usize, &str)], block: usize) -> Result<EmissionMatrix> {
    let (_, chars_line) = lines[0];
    let chars: Vec<char> = chars_line.chars().collect();
    let (shape_no, shape) = *lines
        .get(1)
        .ok_or_else(|| Error::format(lines[0].0 + 1, "missing 'n 4' shape line"))?;
    let dims: Vec<usize> = shape
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::format(shape_no, "bad shape line"))?;
    let declared = match dims.as_slice() {
        [n, 4] => *n,
        _ => return Err(Error::format(shape_no, "shape line must be 'n 4'")),
    };
    let rows = &lines[2..];
    if rows.len() != declared {
        return Err(Error::RowCountMismatch {
            block,
            declared,
            found: rows.len(),
        });
    }
    if chars.len() != declared {
        return Err(Error::format(
            lines[0].0,
            format!("{} characters but {declared} rows declared", chars.len()),
        ));
    }
    let scores = rows
        .iter()
        .map(|&(no, row)| parse_row(row, no))
        .collect::<Result<Vec<_>>>()?;
    EmissionMatrix::new(chars, scores)
}

pub fn save_emissions(path: impl AsRef<Path>, matrices: &[EmissionMatrix]) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(format_emissions(matrices).as_bytes())
        .map_err(|e| Error::io(path, e))
}

pub fn format_emissions(matrices: &[EmissionMatrix]) -> String {
    let mut out = String::new();
    for (k, m) in matrices.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        let chars: String = m.chars.iter().collect();
        writeln!(out, "{chars}").unwrap();
        writeln!(out, "{} 4", m.len()).unwrap();
        for row in &m.scores {
            writeln!(out, "{}\t{}\t{}\t{}", row[0], row[1], row[2], row[3]).unwrap();
        }
    }
    out
}
