//! Word-level back-off n-gram language model and perplexity.
//!
//! Probabilities are stored as log10 values in back-off form, the same shape
//! as an ARPA file: every stored n-gram carries its probability and, below
//! the top order, the back-off weight used when it acts as a context.

mod arpa;
mod train;

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};

pub use train::{train_lm, train_lm_with, LmTrainConfig, DEFAULT_DISCOUNT};

pub type WordId = u32;

pub const MAX_ORDER: usize = 5;
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

pub const UNK_ID: WordId = 0;
pub const BOS_ID: WordId = 1;
pub const EOS_ID: WordId = 2;

/// log10 probability given to `<s>`, which is never predicted.
pub const BOS_LOGPROB: f64 = -99.0;
/// Used when a loaded model does not list `<unk>`.
pub const UNK_FLOOR: f64 = -100.0;

const PAD: WordId = WordId::MAX;

pub(crate) type Key = [WordId; MAX_ORDER];

pub(crate) fn make_key(ids: &[WordId]) -> Key {
    let mut key = [PAD; MAX_ORDER];
    key[..ids.len()].copy_from_slice(ids);
    key
}

pub(crate) fn key_slice(key: &Key) -> &[WordId] {
    let len = key.iter().position(|&id| id == PAD).unwrap_or(MAX_ORDER);
    &key[..len]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub logprob: f64,
    pub backoff: f64,
}

#[derive(Debug, Clone, Default)]
pub struct Vocab {
    words: Vec<String>,
    ids: HashMap<String, WordId>,
}

impl Vocab {
    pub(crate) fn with_reserved() -> Self {
        let mut v = Vocab::default();
        for w in [UNK, BOS, EOS] {
            v.insert(w);
        }
        v
    }

    pub(crate) fn insert(&mut self, word: &str) -> WordId {
        if let Some(&id) = self.ids.get(word) {
            return id;
        }
        let id = self.words.len() as WordId;
        self.words.push(word.to_string());
        self.ids.insert(word.to_string(), id);
        id
    }

    pub fn get(&self, word: &str) -> Option<WordId> {
        self.ids.get(word).copied()
    }

    /// Id of `word`, or `<unk>` when out of vocabulary.
    #[inline]
    pub fn id_or_unk(&self, word: &str) -> WordId {
        self.ids.get(word).copied().unwrap_or(UNK_ID)
    }

    pub fn word(&self, id: WordId) -> &str {
        &self.words[id as usize]
    }

    /// Number of types, including the reserved tokens.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (WordId, &str)> {
        self.words
            .iter()
            .enumerate()
            .map(|(i, w)| (i as WordId, w.as_str()))
    }
}

/// The last `order - 1` tokens of a history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LmContext {
    ids: [WordId; MAX_ORDER - 1],
    len: u8,
}

impl LmContext {
    pub fn empty() -> Self {
        LmContext {
            ids: [PAD; MAX_ORDER - 1],
            len: 0,
        }
    }

    pub fn as_slice(&self) -> &[WordId] {
        &self.ids[..self.len as usize]
    }

    /// Appends `word`, keeping at most `keep` most recent tokens.
    pub fn push(&self, word: WordId, keep: usize) -> LmContext {
        let mut buf = [PAD; MAX_ORDER];
        let cur = self.as_slice();
        buf[..cur.len()].copy_from_slice(cur);
        buf[cur.len()] = word;
        let total = cur.len() + 1;
        let start = total.saturating_sub(keep);
        let mut next = LmContext::empty();
        next.len = (total - start) as u8;
        next.ids[..total - start].copy_from_slice(&buf[start..total]);
        next
    }
}

#[derive(Debug, Clone)]
pub struct NGramLM {
    order: usize,
    vocab: Vocab,
    /// `tables[k - 1]` holds the n-grams of length `k`.
    tables: Vec<HashMap<Key, Entry>>,
    discount: Option<f64>,
}

/// Perplexity of a word sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PplResult {
    pub ppl: f64,
    pub log10_prob_sum: f64,
    pub word_count: usize,
}

/// Running state for incremental perplexity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PplStream {
    pub context: LmContext,
    pub log10_prob_sum: f64,
    pub word_count: usize,
}

impl PplStream {
    /// `None` until at least one word has been pushed.
    pub fn ppl(&self) -> Option<f64> {
        (self.word_count > 0).then(|| 10f64.powf(-self.log10_prob_sum / self.word_count as f64))
    }

    pub fn result(&self) -> Option<PplResult> {
        self.ppl().map(|ppl| PplResult {
            ppl,
            log10_prob_sum: self.log10_prob_sum,
            word_count: self.word_count,
        })
    }
}

impl NGramLM {
    pub(crate) fn from_parts(
        order: usize,
        vocab: Vocab,
        tables: Vec<HashMap<Key, Entry>>,
        discount: Option<f64>,
    ) -> Self {
        debug_assert_eq!(tables.len(), order);
        NGramLM {
            order,
            vocab,
            tables,
            discount,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn discount(&self) -> Option<f64> {
        self.discount
    }

    /// Number of stored n-grams per order, unigrams first.
    pub fn ngram_counts(&self) -> Vec<usize> {
        self.tables.iter().map(HashMap::len).collect()
    }

    /// Stored entry for an exact n-gram given as words.
    pub fn entry(&self, words: &[&str]) -> Option<Entry> {
        if words.is_empty() || words.len() > self.order {
            return None;
        }
        let ids: Option<Vec<WordId>> = words.iter().map(|w| self.vocab.get(w)).collect();
        self.entry_ids(&ids?)
    }

    pub fn entry_ids(&self, ids: &[WordId]) -> Option<Entry> {
        if ids.is_empty() || ids.len() > self.order {
            return None;
        }
        self.tables[ids.len() - 1].get(&make_key(ids)).copied()
    }

    /// All stored n-grams of length `n` as `(ids, entry)`, sorted by ids.
    pub fn entries_of_order(&self, n: usize) -> Vec<(Vec<WordId>, Entry)> {
        let mut out: Vec<_> = self.tables[n - 1]
            .iter()
            .map(|(k, e)| (key_slice(k).to_vec(), *e))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Context holding only `<s>`.
    pub fn begin_context(&self) -> LmContext {
        LmContext::empty().push(BOS_ID, self.order - 1)
    }

    /// log10 p(word | context) with back-off.
    pub fn log10_prob_id(&self, context: &LmContext, word: WordId) -> f64 {
        let history = context.as_slice();
        let history = &history[history.len().saturating_sub(self.order - 1)..];
        let mut buf = [PAD; MAX_ORDER];
        let mut backoff = 0.0;
        for start in 0..=history.len() {
            let ctx = &history[start..];
            buf[..ctx.len()].copy_from_slice(ctx);
            buf[ctx.len()] = word;
            for slot in buf.iter_mut().skip(ctx.len() + 1) {
                *slot = PAD;
            }
            if let Some(e) = self.tables[ctx.len()].get(&buf) {
                return backoff + e.logprob;
            }
            if !ctx.is_empty() {
                if let Some(c) = self.tables[ctx.len() - 1].get(&make_key(ctx)) {
                    backoff += c.backoff;
                }
            }
        }
        backoff + UNK_FLOOR
    }

    /// log10 p(word | context) for a surface word; OOV maps to `<unk>`.
    pub fn log10_prob(&self, context: &LmContext, word: &str) -> f64 {
        self.log10_prob_id(context, self.vocab.id_or_unk(word))
    }

    /// Scores `word` after `context` and returns the extended context.
    #[inline]
    pub fn advance(&self, context: &LmContext, word: WordId) -> (f64, LmContext) {
        let lp = self.log10_prob_id(context, word);
        (lp, context.push(word, self.order - 1))
    }

    pub fn stream_init(&self) -> PplStream {
        PplStream {
            context: self.begin_context(),
            log10_prob_sum: 0.0,
            word_count: 0,
        }
    }

    pub fn stream_push(&self, state: &PplStream, word: &str) -> PplStream {
        let (lp, context) = self.advance(&state.context, self.vocab.id_or_unk(word));
        PplStream {
            context,
            log10_prob_sum: state.log10_prob_sum + lp,
            word_count: state.word_count + 1,
        }
    }

    /// Perplexity over `words`, conditioned on `<s>`; `</s>` is not scored.
    pub fn ppl<S: AsRef<str>>(&self, words: &[S]) -> Result<PplResult> {
        self.ppl_with(words, false)
    }

    /// With `score_eos`, `p(</s> | ...)` is included and counted as a word.
    pub fn ppl_with<S: AsRef<str>>(&self, words: &[S], score_eos: bool) -> Result<PplResult> {
        if words.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut state = self.stream_init();
        for w in words {
            state = self.stream_push(&state, w.as_ref());
        }
        if score_eos {
            let lp = self.log10_prob_id(&state.context, EOS_ID);
            state.log10_prob_sum += lp;
            state.word_count += 1;
        }
        Ok(state.result().expect("non-empty input"))
    }
}
