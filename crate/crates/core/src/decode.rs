//! Inference layers: per-character argmax, Viterbi over a linear-chain CRF,
//! and PCRF beam search, which adds a weighted language-model fluency term
//! to the CRF path score.
//!
//! A path's structural score is the sum of its emission scores and the
//! transition weights between adjacent tags. Its fluency is the mean log10
//! probability of the words it has completed so far, i.e. `-log10 PPL`.
//! PCRF ranks paths by `structural + lambda * fluency`. The fluency term is
//! not additive over positions, so the search keeps a beam of partial paths
//! instead of running a first-order dynamic program.
//!
//! Ties are broken everywhere by the lexicographically smallest tag
//! sequence under `B < M < E < S`.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::corpus::{decode_tags, is_legal_transition, normalize, repair_tags, Tag};
use crate::emission::{EmissionMatrix, EmissionModel, TransitionMatrix};
use crate::error::{Error, Result};
use crate::lm::{LmContext, NGramLM};

/// Largest sentence the brute-force oracle will enumerate.
pub const BRUTE_FORCE_MAX_LEN: usize = 12;
pub const DEFAULT_BEAM: usize = 8;
pub const DEFAULT_LAMBDA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeamWidth {
    /// Keep every distinct partial path.
    Exhaustive,
    Width(usize),
}

impl fmt::Display for BeamWidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BeamWidth::Exhaustive => write!(f, "exhaustive"),
            BeamWidth::Width(w) => write!(f, "{w}"),
        }
    }
}

impl FromStr for BeamWidth {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("exhaustive") {
            return Ok(BeamWidth::Exhaustive);
        }
        match s.parse::<usize>() {
            Ok(w) if w >= 1 => Ok(BeamWidth::Width(w)),
            _ => Err(format!(
                "beam must be a positive integer or 'exhaustive', got {s:?}"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderConfig {
    /// Weight of the fluency term.
    pub lambda: f64,
    pub beam: BeamWidth,
    pub enforce_legality: bool,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            lambda: DEFAULT_LAMBDA,
            beam: BeamWidth::Width(DEFAULT_BEAM),
            enforce_legality: true,
        }
    }
}

impl DecoderConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        DecoderConfig {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if self.beam == BeamWidth::Width(0) {
            return Err(Error::Config("beam width must be >= 1".into()));
        }
        if self.lambda > 1.0 {
            log::warn!("lambda {} is outside the usual [0, 1] range", self.lambda);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecoderKind {
    Softmax,
    Crf,
    Pcrf,
}

impl DecoderKind {
    pub fn label(self) -> &'static str {
        match self {
            DecoderKind::Softmax => "softmax",
            DecoderKind::Crf => "crf",
            DecoderKind::Pcrf => "pcrf",
        }
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DecoderKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "softmax" => Ok(DecoderKind::Softmax),
            "crf" => Ok(DecoderKind::Crf),
            "pcrf" => Ok(DecoderKind::Pcrf),
            _ => Err(format!("unknown decoder {s:?} (softmax, crf, pcrf)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub tags: Vec<Tag>,
    pub words: Vec<String>,
    /// Ranking score: structural, plus the weighted fluency for PCRF.
    pub score: f64,
    /// Emissions plus transitions along `tags`.
    pub structural_score: f64,
    pub decoder: DecoderKind,
}

impl DecodeResult {
    fn new(
        chars: &[char],
        tags: Vec<Tag>,
        score: f64,
        structural_score: f64,
        decoder: DecoderKind,
    ) -> Self {
        let words = decode_tags(chars, &tags);
        DecodeResult {
            tags,
            words,
            score,
            structural_score,
            decoder,
        }
    }
}

/// Emissions plus transitions along a tag path, summed left to right.
pub fn path_score(scores: &[[f64; 4]], trans: &[[f64; 4]; 4], tags: &[Tag]) -> f64 {
    let mut total = 0.0;
    for (i, &t) in tags.iter().enumerate() {
        if i == 0 {
            total = scores[0][t.index()];
        } else {
            total += trans[tags[i - 1].index()][t.index()];
            total += scores[i][t.index()];
        }
    }
    total
}

/// Independent argmax per character, ties going to the earlier tag. With
/// `enforce_legality` the result is repaired into a legal path.
pub fn softmax_decode(emissions: &EmissionMatrix, enforce_legality: bool) -> DecodeResult {
    let mut tags: Vec<Tag> = emissions
        .scores()
        .iter()
        .map(|row| {
            let mut best = 0;
            for t in 1..4 {
                if row[t] > row[best] {
                    best = t;
                }
            }
            Tag::ALL[best]
        })
        .collect();
    if enforce_legality {
        tags = repair_tags(&tags);
    }
    let score = tags
        .iter()
        .enumerate()
        .map(|(i, t)| emissions.score(i, *t))
        .sum();
    DecodeResult::new(emissions.chars(), tags, score, score, DecoderKind::Softmax)
}

pub fn viterbi(emissions: &EmissionMatrix, transitions: &TransitionMatrix) -> DecodeResult {
    viterbi_with(emissions, transitions, true)
}

pub fn viterbi_with(
    emissions: &EmissionMatrix,
    transitions: &TransitionMatrix,
    enforce_legality: bool,
) -> DecodeResult {
    let (tags, score) = viterbi_path(emissions.scores(), transitions.weights(), enforce_legality);
    DecodeResult::new(emissions.chars(), tags, score, score, DecoderKind::Crf)
}

/// Best tag path and its score.
///
/// Alongside the usual back-pointers each state carries the lexicographic
/// rank of its best prefix among the states at the same position, so that
/// ties resolve to the smallest complete sequence rather than the smallest
/// last step.
pub(crate) fn viterbi_path(
    scores: &[[f64; 4]],
    trans: &[[f64; 4]; 4],
    legal: bool,
) -> (Vec<Tag>, f64) {
    let n = scores.len();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let mut alpha: Vec<[Option<f64>; 4]> = vec![[None; 4]; n];
    let mut back: Vec<[u8; 4]> = vec![[0; 4]; n];
    let mut rank: [usize; 4] = [0, 1, 2, 3];

    for t in Tag::ALL {
        if !legal || t.can_start() {
            alpha[0][t.index()] = Some(scores[0][t.index()]);
        }
    }
    for i in 1..n {
        for t in Tag::ALL {
            let mut best: Option<(f64, usize)> = None;
            for p in Tag::ALL {
                let Some(prev) = alpha[i - 1][p.index()] else {
                    continue;
                };
                if legal && !is_legal_transition(p, t) {
                    continue;
                }
                let cand = prev + trans[p.index()][t.index()];
                best = match best {
                    None => Some((cand, p.index())),
                    Some((b, bp)) => {
                        if cand > b || (cand == b && rank[p.index()] < rank[bp]) {
                            Some((cand, p.index()))
                        } else {
                            Some((b, bp))
                        }
                    }
                };
            }
            if let Some((b, bp)) = best {
                alpha[i][t.index()] = Some(b + scores[i][t.index()]);
                back[i][t.index()] = bp as u8;
            }
        }
        // Re-rank the states at position i by (prefix rank of parent, tag).
        let mut live: Vec<usize> = (0..4).filter(|&t| alpha[i][t].is_some()).collect();
        live.sort_by_key(|&t| (rank[back[i][t] as usize], t));
        let mut next = [usize::MAX; 4];
        for (r, &t) in live.iter().enumerate() {
            next[t] = r;
        }
        rank = next;
    }

    let mut best: Option<(f64, usize)> = None;
    for t in Tag::ALL {
        if legal && !t.can_end() {
            continue;
        }
        let Some(s) = alpha[n - 1][t.index()] else {
            continue;
        };
        best = match best {
            None => Some((s, t.index())),
            Some((b, bt)) if s > b || (s == b && rank[t.index()] < rank[bt]) => {
                Some((s, t.index()))
            }
            keep => keep,
        };
    }
    let (score, mut cur) = best.expect("a legal path always exists");
    let mut tags = vec![Tag::S; n];
    for i in (0..n).rev() {
        tags[i] = Tag::ALL[cur];
        if i > 0 {
            cur = back[i][cur] as usize;
        }
    }
    (tags, score)
}

#[inline]
fn fluency(lm_log10_sum: f64, words_done: u32) -> f64 {
    lm_log10_sum / f64::from(words_done.max(1))
}

#[inline]
fn combine(structural: f64, lambda: f64, lm_log10_sum: f64, words_done: u32) -> f64 {
    structural + lambda * fluency(lm_log10_sum, words_done)
}

/// Partial decode state.
#[derive(Debug, Clone, Copy)]
struct BeamItem {
    /// Arena index of the node holding this item's last tag.
    node: u32,
    last_tag: Tag,
    /// First character of the word that is still open.
    pending_start: usize,
    structural: f64,
    lm_sum: f64,
    words_done: u32,
    context: LmContext,
    combined: f64,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    tag: Tag,
    parent: u32,
}

const ROOT: u32 = u32::MAX;

struct Arena {
    nodes: Vec<Node>,
}

impl Arena {
    fn push(&mut self, tag: Tag, parent: u32) -> u32 {
        self.nodes.push(Node { tag, parent });
        (self.nodes.len() - 1) as u32
    }

    fn path(&self, mut node: u32) -> Vec<Tag> {
        let mut out = Vec::new();
        while node != ROOT {
            let n = self.nodes[node as usize];
            out.push(n.tag);
            node = n.parent;
        }
        out.reverse();
        out
    }

    /// Lexicographic order of two equally long paths.
    fn cmp_paths(&self, a: u32, b: u32) -> Ordering {
        if a == b {
            return Ordering::Equal;
        }
        self.path(a).cmp(&self.path(b))
    }
}

/// Sentence text with character boundaries, for slicing out words.
struct Surface {
    text: String,
    offsets: Vec<usize>,
}

impl Surface {
    fn new(chars: &[char]) -> Self {
        let mut text = String::with_capacity(chars.len() * 3);
        let mut offsets = Vec::with_capacity(chars.len() + 1);
        for &c in chars {
            offsets.push(text.len());
            text.push(c);
        }
        offsets.push(text.len());
        Surface { text, offsets }
    }

    #[inline]
    fn word(&self, start: usize, end: usize) -> &str {
        &self.text[self.offsets[start]..self.offsets[end]]
    }
}

struct Scorer<'a> {
    lm: &'a NGramLM,
    surface: Surface,
}

impl Scorer<'_> {
    #[inline]
    fn close(&self, item: &mut BeamItem, start: usize, end: usize) {
        let id = self.lm.vocab().id_or_unk(self.surface.word(start, end));
        let (lp, context) = self.lm.advance(&item.context, id);
        item.lm_sum += lp;
        item.words_done += 1;
        item.context = context;
    }
}

/// Beam-search decoding of `structural + lambda * fluency`.
///
/// Words are scored by the language model as soon as their boundary is
/// fixed: when a tag closes a word (`E`, `S`) and, on illegal paths, before
/// a tag that opens a new word while one is still open. With
/// `lambda == 0` this is exactly [`viterbi_with`].
pub fn pcrf_decode(
    emissions: &EmissionMatrix,
    transitions: &TransitionMatrix,
    lm: Option<&NGramLM>,
    config: &DecoderConfig,
) -> Result<DecodeResult> {
    config.validate()?;
    if config.lambda == 0.0 {
        let (tags, score) = viterbi_path(
            emissions.scores(),
            transitions.weights(),
            config.enforce_legality,
        );
        return Ok(DecodeResult::new(
            emissions.chars(),
            tags,
            score,
            score,
            DecoderKind::Pcrf,
        ));
    }
    let lm = lm.ok_or(Error::LmMissing)?;
    let n = emissions.len();
    if n == 0 {
        return Ok(DecodeResult::new(
            &[],
            Vec::new(),
            0.0,
            0.0,
            DecoderKind::Pcrf,
        ));
    }
    let scores = emissions.scores();
    let trans = transitions.weights();
    let lambda = config.lambda;
    let legal = config.enforce_legality;
    let scorer = Scorer {
        lm,
        surface: Surface::new(emissions.chars()),
    };
    let mut arena = Arena {
        nodes: Vec::with_capacity(n * 16),
    };

    let root = BeamItem {
        node: ROOT,
        last_tag: Tag::S,
        pending_start: 0,
        structural: 0.0,
        lm_sum: 0.0,
        words_done: 0,
        context: lm.begin_context(),
        combined: 0.0,
    };
    let mut beam: Vec<BeamItem> = vec![root];
    let mut candidates: Vec<BeamItem> = Vec::new();

    for i in 0..n {
        let last = i + 1 == n;
        candidates.clear();
        for item in &beam {
            for t in Tag::ALL {
                if legal {
                    let ok = if i == 0 {
                        t.can_start()
                    } else {
                        is_legal_transition(item.last_tag, t)
                    };
                    if !ok || (last && !t.can_end()) {
                        continue;
                    }
                }
                let mut next = *item;
                next.structural = if i == 0 {
                    scores[0][t.index()]
                } else {
                    let s = item.structural + trans[item.last_tag.index()][t.index()];
                    s + scores[i][t.index()]
                };
                if t.opens_word() && next.pending_start < i {
                    let start = next.pending_start;
                    scorer.close(&mut next, start, i);
                    next.pending_start = i;
                }
                if t.closes_word() {
                    let start = next.pending_start;
                    scorer.close(&mut next, start, i + 1);
                    next.pending_start = i + 1;
                }
                if last && next.pending_start < n {
                    let start = next.pending_start;
                    scorer.close(&mut next, start, n);
                    next.pending_start = n;
                }
                next.last_tag = t;
                next.combined = combine(next.structural, lambda, next.lm_sum, next.words_done);
                next.node = arena.push(t, item.node);
                candidates.push(next);
            }
        }
        beam = select(&mut candidates, config.beam, &arena);
    }

    let best = beam.first().expect("beam never empties");
    let tags = arena.path(best.node);
    Ok(DecodeResult::new(
        emissions.chars(),
        tags,
        best.combined,
        best.structural,
        DecoderKind::Pcrf,
    ))
}

fn better(a: &BeamItem, b: &BeamItem, arena: &Arena) -> Ordering {
    b.combined
        .partial_cmp(&a.combined)
        .unwrap_or(Ordering::Equal)
        .then_with(|| arena.cmp_paths(a.node, b.node))
}

/// Recombines equivalent items and keeps the best `width`, best first.
///
/// With a finite width, items sharing last tag, open-word start and
/// language-model context are merged into the best-ranked one. The
/// exhaustive search also requires equal completed-word counts and only
/// drops an item when another one is at least as good in both structural
/// score and log-probability sum; every later increment is then identical
/// for the two, so the dropped item can never overtake the kept one.
fn select(candidates: &mut Vec<BeamItem>, width: BeamWidth, arena: &Arena) -> Vec<BeamItem> {
    let mut kept: Vec<BeamItem> = match width {
        BeamWidth::Width(_) => {
            let mut groups: HashMap<(Tag, usize, LmContext), usize> = HashMap::new();
            let mut kept: Vec<BeamItem> = Vec::with_capacity(candidates.len());
            for item in candidates.drain(..) {
                let key = (item.last_tag, item.pending_start, item.context);
                match groups.get(&key) {
                    Some(&slot) => {
                        if better(&item, &kept[slot], arena) == Ordering::Less {
                            kept[slot] = item;
                        }
                    }
                    None => {
                        groups.insert(key, kept.len());
                        kept.push(item);
                    }
                }
            }
            kept
        }
        BeamWidth::Exhaustive => {
            let mut groups: HashMap<(Tag, usize, LmContext, u32), Vec<BeamItem>> = HashMap::new();
            for item in candidates.drain(..) {
                groups
                    .entry((
                        item.last_tag,
                        item.pending_start,
                        item.context,
                        item.words_done,
                    ))
                    .or_default()
                    .push(item);
            }
            let mut kept = Vec::new();
            for (_, mut group) in groups {
                group.sort_by(|a, b| better(a, b, arena));
                let mut front: Vec<BeamItem> = Vec::with_capacity(group.len());
                for item in group {
                    let dominated = front
                        .iter()
                        .any(|k| k.structural >= item.structural && k.lm_sum >= item.lm_sum);
                    if !dominated {
                        front.push(item);
                    }
                }
                kept.extend(front);
            }
            kept
        }
    };
    kept.sort_by(|a, b| better(a, b, arena));
    if let BeamWidth::Width(w) = width {
        kept.truncate(w);
    }
    kept
}

/// Enumerates every tag path and returns the best under the PCRF objective
/// evaluated on the finished sentence. Verification oracle for the
/// decoders; limited to [`BRUTE_FORCE_MAX_LEN`] characters.
pub fn brute_force_decode(
    emissions: &EmissionMatrix,
    transitions: &TransitionMatrix,
    lm: Option<&NGramLM>,
    lambda: f64,
    enforce_legality: bool,
) -> Result<DecodeResult> {
    let n = emissions.len();
    if n > BRUTE_FORCE_MAX_LEN {
        return Err(Error::TooLong(n));
    }
    if lambda > 0.0 && lm.is_none() {
        return Err(Error::LmMissing);
    }
    let chars = emissions.chars();
    let mut best: Option<(f64, f64, Vec<Tag>)> = None;
    let mut path = Vec::with_capacity(n);
    enumerate(n, enforce_legality, &mut path, &mut |tags| {
        let structural = path_score(emissions.scores(), transitions.weights(), tags);
        let mut lm_sum = 0.0;
        let mut words = 0u32;
        if let (Some(lm), true) = (lm, lambda > 0.0) {
            let mut context = lm.begin_context();
            for word in decode_tags(chars, tags) {
                let lp = lm.log10_prob(&context, &word);
                context = context.push(lm.vocab().id_or_unk(&word), lm.order() - 1);
                lm_sum += lp;
                words += 1;
            }
        }
        let combined = structural + lambda * (lm_sum / f64::from(words.max(1)));
        // Paths arrive in lexicographic order, so only a strictly better
        // score replaces the incumbent.
        if best.as_ref().is_none_or(|(b, _, _)| combined > *b) {
            best = Some((combined, structural, tags.to_vec()));
        }
    });
    let kind = if lambda > 0.0 {
        DecoderKind::Pcrf
    } else {
        DecoderKind::Crf
    };
    match best {
        Some((combined, structural, tags)) => {
            Ok(DecodeResult::new(chars, tags, combined, structural, kind))
        }
        None => Ok(DecodeResult::new(chars, Vec::new(), 0.0, 0.0, kind)),
    }
}

fn enumerate(n: usize, legal: bool, path: &mut Vec<Tag>, visit: &mut impl FnMut(&[Tag])) {
    if path.len() == n {
        if n > 0 && (!legal || path[n - 1].can_end()) {
            visit(path);
        }
        return;
    }
    for t in Tag::ALL {
        if legal {
            let ok = match path.last() {
                None => t.can_start(),
                Some(&p) => is_legal_transition(p, t),
            };
            if !ok {
                continue;
            }
        }
        path.push(t);
        enumerate(n, legal, path, visit);
        path.pop();
    }
}

/// End-to-end segmentation: normalize, score, decode, split into words.
#[derive(Debug, Clone)]
pub struct Segmenter {
    model: Option<EmissionModel>,
    transitions: TransitionMatrix,
    lm: Option<NGramLM>,
    kind: DecoderKind,
    config: DecoderConfig,
}

impl Segmenter {
    pub fn new(
        model: EmissionModel,
        lm: Option<NGramLM>,
        kind: DecoderKind,
        config: DecoderConfig,
    ) -> Result<Self> {
        let transitions = *model.transitions();
        Self::build(Some(model), transitions, lm, kind, config)
    }

    /// A segmenter that only decodes externally computed emission matrices.
    pub fn for_emissions(
        transitions: TransitionMatrix,
        lm: Option<NGramLM>,
        kind: DecoderKind,
        config: DecoderConfig,
    ) -> Result<Self> {
        Self::build(None, transitions, lm, kind, config)
    }

    fn build(
        model: Option<EmissionModel>,
        transitions: TransitionMatrix,
        lm: Option<NGramLM>,
        kind: DecoderKind,
        config: DecoderConfig,
    ) -> Result<Self> {
        config.validate()?;
        if kind == DecoderKind::Pcrf && lm.is_none() {
            return Err(Error::LmMissing);
        }
        Ok(Segmenter {
            model,
            transitions,
            lm,
            kind,
            config,
        })
    }

    pub fn kind(&self) -> DecoderKind {
        self.kind
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    pub fn lm(&self) -> Option<&NGramLM> {
        self.lm.as_ref()
    }

    pub fn model(&self) -> Option<&EmissionModel> {
        self.model.as_ref()
    }

    pub fn decode(&self, emissions: &EmissionMatrix) -> Result<DecodeResult> {
        match self.kind {
            DecoderKind::Softmax => Ok(softmax_decode(emissions, self.config.enforce_legality)),
            DecoderKind::Crf => Ok(viterbi_with(
                emissions,
                &self.transitions,
                self.config.enforce_legality,
            )),
            DecoderKind::Pcrf => {
                pcrf_decode(emissions, &self.transitions, self.lm.as_ref(), &self.config)
            }
        }
    }

    /// Words of the normalized text; their concatenation equals
    /// `normalize(text)`.
    pub fn segment(&self, text: &str) -> Result<Vec<String>> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| Error::Config("segmenter has no emission model".into()))?;
        let normalized = normalize(text);
        if normalized.is_empty() {
            return Ok(Vec::new());
        }
        let chars: Vec<char> = normalized.chars().collect();
        let emissions = model.score_sentence(&chars);
        Ok(self.decode(&emissions)?.words)
    }
}

pub fn segment(text: &str, segmenter: &Segmenter) -> Result<Vec<String>> {
    segmenter.segment(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{format_tags, is_legal_path};
    use crate::lm::train_lm;

    fn matrix(rows: Vec<[f64; 4]>) -> EmissionMatrix {
        let chars = (0..rows.len())
            .map(|i| char::from(b'a' + i as u8))
            .collect();
        EmissionMatrix::new(chars, rows).unwrap()
    }

    #[test]
    fn softmax_examples() {
        let r = softmax_decode(&matrix(vec![[0.0, 0.0, 0.0, 5.0]]), true);
        assert_eq!(format_tags(&r.tags), "S");

        let r = softmax_decode(
            &matrix(vec![[3.0, 0.0, 0.0, 0.0], [0.0, 0.0, 3.0, 0.0]]),
            true,
        );
        assert_eq!(format_tags(&r.tags), "BE");

        // Ties go to B; B B B repairs to three single-character words.
        let raw = softmax_decode(&matrix(vec![[0.0; 4]; 3]), false);
        assert_eq!(format_tags(&raw.tags), "BBB");
        let fixed = softmax_decode(&matrix(vec![[0.0; 4]; 3]), true);
        assert_eq!(fixed.words, vec!["a", "b", "c"]);
        assert!(is_legal_path(&fixed.tags));
    }

    #[test]
    fn viterbi_examples() {
        let r = viterbi(
            &matrix(vec![[9.0, 9.0, 9.0, -9.0]]),
            &TransitionMatrix::zeros(),
        );
        assert_eq!(format_tags(&r.tags), "S");

        let em = matrix(vec![[2.0, 0.0, 0.0, 0.0], [0.0, 0.0, 3.0, 0.0]]);
        let r = viterbi(&em, &TransitionMatrix::zeros());
        assert_eq!(format_tags(&r.tags), "BE");
        assert_eq!(r.score, 5.0);
    }

    #[test]
    fn viterbi_tie_break_is_lexicographic() {
        // All-zero: every legal path scores 0, BE... is smallest.
        let r = viterbi(&matrix(vec![[0.0; 4]; 4]), &TransitionMatrix::zeros());
        assert_eq!(format_tags(&r.tags), "BMME");
        let b = brute_force_decode(
            &matrix(vec![[0.0; 4]; 4]),
            &TransitionMatrix::zeros(),
            None,
            0.0,
            true,
        )
        .unwrap();
        assert_eq!(b.tags, r.tags);
    }

    #[test]
    fn brute_force_small_cases() {
        let t = TransitionMatrix::zeros();
        let r =
            brute_force_decode(&matrix(vec![[5.0, 5.0, 5.0, 0.0]]), &t, None, 0.0, true).unwrap();
        assert_eq!(format_tags(&r.tags), "S");

        let r = brute_force_decode(
            &matrix(vec![[0.0, 0.0, 0.0, 1.0], [0.0, 0.0, 0.0, 1.0]]),
            &t,
            None,
            0.0,
            true,
        )
        .unwrap();
        assert_eq!(format_tags(&r.tags), "SS");
        let r = brute_force_decode(
            &matrix(vec![[2.0, 0.0, 0.0, 1.0], [0.0, 0.0, 0.0, 1.0]]),
            &t,
            None,
            0.0,
            true,
        )
        .unwrap();
        assert_eq!(format_tags(&r.tags), "BE");

        let long = matrix(vec![[0.0; 4]; 13]);
        assert!(matches!(
            brute_force_decode(&long, &t, None, 0.0, true),
            Err(Error::TooLong(13))
        ));
    }

    #[test]
    fn pcrf_requires_lm() {
        let em = matrix(vec![[0.0; 4]; 2]);
        let cfg = DecoderConfig::with_lambda(0.5);
        assert!(matches!(
            pcrf_decode(&em, &TransitionMatrix::zeros(), None, &cfg),
            Err(Error::LmMissing)
        ));
        let cfg = DecoderConfig::with_lambda(0.0);
        assert!(pcrf_decode(&em, &TransitionMatrix::zeros(), None, &cfg).is_ok());
    }

    #[test]
    fn pcrf_prefers_known_words() {
        // Emissions mildly favour splitting "ab"; the LM knows "ab".
        let em = matrix(vec![[0.0, 0.0, 0.0, 0.2], [0.0, 0.0, 0.0, 0.2]]);
        let corpus: Vec<Vec<String>> = vec![
            vec!["ab".into(), "x".into()],
            vec!["ab".into()],
            vec!["y".into(), "ab".into()],
        ];
        let lm = train_lm(&corpus, 2, 1).unwrap();
        let crf = viterbi(&em, &TransitionMatrix::zeros());
        assert_eq!(crf.words, vec!["a", "b"]);
        let cfg = DecoderConfig::with_lambda(1.0);
        let p = pcrf_decode(&em, &TransitionMatrix::zeros(), Some(&lm), &cfg).unwrap();
        assert_eq!(p.words, vec!["ab"]);
    }

    #[test]
    fn beam_and_config_parsing() {
        assert_eq!(
            "exhaustive".parse::<BeamWidth>().unwrap(),
            BeamWidth::Exhaustive
        );
        assert_eq!("4".parse::<BeamWidth>().unwrap(), BeamWidth::Width(4));
        assert!("0".parse::<BeamWidth>().is_err());
        assert_eq!("pcrf".parse::<DecoderKind>().unwrap(), DecoderKind::Pcrf);
        assert!(DecoderConfig::with_lambda(-0.1).validate().is_err());
        assert!(DecoderConfig::with_lambda(1.5).validate().is_ok());
    }

    #[test]
    fn segment_empty_and_lossless() {
        let model = EmissionModel::new(HashMap::new(), TransitionMatrix::zeros());
        let seg = Segmenter::new(model, None, DecoderKind::Crf, DecoderConfig::default()).unwrap();
        assert!(seg.segment("").unwrap().is_empty());
        assert!(seg.segment("  \t").unwrap().is_empty());
        let words = seg.segment("ＡＢ c\u{3000}的").unwrap();
        assert_eq!(words.concat(), normalize("ＡＢ c\u{3000}的"));
    }
}
