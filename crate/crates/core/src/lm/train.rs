//! Interpolated absolute discounting with Kneser-Ney continuation counts.
//!
//! The top order uses raw counts. Lower orders use the number of distinct
//! left extensions of an n-gram, except for n-grams starting with `<s>`,
//! which cannot be extended and keep their raw counts. For a context `h`
//! with adjusted counts `a(h w)`:
//!
//! ```text
//! p(w | h) = max(a(h w) - D, 0) / A(h) + D * N(h) / A(h) * p(w | h')
//! ```
//!
//! where `A(h)` sums the adjusted counts after `h`, `N(h)` counts the
//! distinct successors and `h'` drops the oldest word. The unigram level
//! interpolates with the uniform distribution over every predictable token
//! (the vocabulary without `<s>`), which gives `<unk>` its mass.

use std::collections::HashMap;

use super::{
    key_slice, make_key, Entry, Key, NGramLM, Vocab, WordId, BOS_ID, BOS_LOGPROB, EOS_ID,
    MAX_ORDER, UNK_ID,
};
use crate::error::{Error, Result};

pub const DEFAULT_DISCOUNT: f64 = 0.75;

#[derive(Debug, Clone, Copy)]
pub struct LmTrainConfig {
    pub order: usize,
    pub min_count: usize,
    pub discount: f64,
}

impl Default for LmTrainConfig {
    fn default() -> Self {
        LmTrainConfig {
            order: 2,
            min_count: 1,
            discount: DEFAULT_DISCOUNT,
        }
    }
}

pub fn train_lm<S: AsRef<str>>(
    corpus: &[Vec<S>],
    order: usize,
    min_count: usize,
) -> Result<NGramLM> {
    train_lm_with(
        corpus,
        &LmTrainConfig {
            order,
            min_count,
            ..LmTrainConfig::default()
        },
    )
}

pub fn train_lm_with<S: AsRef<str>>(corpus: &[Vec<S>], config: &LmTrainConfig) -> Result<NGramLM> {
    let order = config.order;
    if !(2..=MAX_ORDER).contains(&order) {
        return Err(Error::InvalidOrder(order));
    }
    if config.min_count == 0 {
        return Err(Error::Config("min_count must be >= 1".into()));
    }
    if !(config.discount > 0.0 && config.discount < 1.0) {
        return Err(Error::Config("discount must lie in (0, 1)".into()));
    }
    if corpus.iter().all(|s| s.is_empty()) {
        return Err(Error::EmptyCorpus);
    }
    let discount = config.discount;

    let mut freq: HashMap<&str, usize> = HashMap::new();
    for sentence in corpus {
        for w in sentence {
            *freq.entry(w.as_ref()).or_default() += 1;
        }
    }
    let mut kept: Vec<&str> = freq
        .iter()
        .filter(|&(_, &c)| c >= config.min_count)
        .map(|(&w, _)| w)
        .collect();
    if kept.len() < 2 {
        return Err(Error::DegenerateVocab {
            min_count: config.min_count,
        });
    }
    kept.sort_unstable();
    let mut vocab = Vocab::with_reserved();
    for w in kept {
        vocab.insert(w);
    }

    // Raw counts for every order.
    let mut raw: Vec<HashMap<Key, u64>> = vec![HashMap::new(); order];
    let mut ids = Vec::new();
    for sentence in corpus.iter().filter(|s| !s.is_empty()) {
        ids.clear();
        ids.push(BOS_ID);
        ids.extend(sentence.iter().map(|w| vocab.id_or_unk(w.as_ref())));
        ids.push(EOS_ID);
        for n in 1..=order {
            for gram in ids.windows(n) {
                *raw[n - 1].entry(make_key(gram)).or_default() += 1;
            }
        }
    }

    // Adjusted counts.
    let mut adjusted: Vec<HashMap<Key, u64>> = vec![HashMap::new(); order];
    adjusted[order - 1] = raw[order - 1].clone();
    for n in (1..order).rev() {
        let mut continuation: HashMap<Key, u64> = HashMap::new();
        for key in raw[n].keys() {
            let gram = key_slice(key);
            *continuation.entry(make_key(&gram[1..])).or_default() += 1;
        }
        let level = &mut adjusted[n - 1];
        for (key, &count) in &raw[n - 1] {
            let gram = key_slice(key);
            let a = if gram[0] == BOS_ID {
                count
            } else {
                continuation.get(key).copied().unwrap_or(0)
            };
            if a > 0 {
                level.insert(*key, a);
            }
        }
    }

    let mut tables: Vec<HashMap<Key, Entry>> = vec![HashMap::new(); order];

    // Unigrams: every token except <s> is predictable.
    let predictable = (vocab.len() - 1) as f64;
    let mut total = 0u64;
    let mut types = 0u64;
    for (id, _) in vocab.iter() {
        if id == BOS_ID {
            continue;
        }
        if let Some(&a) = adjusted[0].get(&make_key(&[id])) {
            total += a;
            types += 1;
        }
    }
    let total = total as f64;
    let uniform_mass = discount * types as f64 / total;
    for (id, _) in vocab.iter() {
        let key = make_key(&[id]);
        let logprob = if id == BOS_ID {
            BOS_LOGPROB
        } else {
            let a = adjusted[0].get(&key).copied().unwrap_or(0) as f64;
            let p = (a - discount).max(0.0) / total + uniform_mass / predictable;
            p.log10()
        };
        tables[0].insert(
            key,
            Entry {
                logprob,
                backoff: 0.0,
            },
        );
    }
    debug_assert!(tables[0].contains_key(&make_key(&[UNK_ID])));

    for n in 2..=order {
        // Adjusted count total and distinct successors per context.
        let level_counts = &adjusted[n - 1];
        let mut context_stats: HashMap<Key, (u64, u64)> = HashMap::new();
        for (key, &a) in level_counts {
            let gram = key_slice(key);
            let stat = context_stats.entry(make_key(&gram[..n - 1])).or_default();
            stat.0 += a;
            stat.1 += 1;
        }

        let model = NGramLM::from_parts(
            n - 1,
            vocab.clone(),
            tables[..n - 1].to_vec(),
            Some(discount),
        );
        let mut level = HashMap::with_capacity(level_counts.len());
        for (key, &a) in level_counts {
            let gram = key_slice(key);
            let (context, word) = gram.split_at(n - 1);
            let (total, types) = context_stats[&make_key(context)];
            let gamma = discount * types as f64 / total as f64;
            let lower = lower_context(context);
            let lower_p = 10f64.powf(model.log10_prob_id(&lower, word[0]));
            let p = (a as f64 - discount).max(0.0) / total as f64 + gamma * lower_p;
            level.insert(
                *key,
                Entry {
                    logprob: p.log10(),
                    backoff: 0.0,
                },
            );
        }
        tables[n - 1] = level;

        for (ctx_key, &(total, types)) in &context_stats {
            let gamma = discount * types as f64 / total as f64;
            let entry = tables[n - 2]
                .get_mut(ctx_key)
                .expect("every observed context is itself a stored n-gram");
            entry.backoff = gamma.log10();
        }
    }

    Ok(NGramLM::from_parts(order, vocab, tables, Some(discount)))
}

fn lower_context(context: &[WordId]) -> super::LmContext {
    let mut c = super::LmContext::empty();
    for &id in &context[1..] {
        c = c.push(id, MAX_ORDER - 1);
    }
    c
}
