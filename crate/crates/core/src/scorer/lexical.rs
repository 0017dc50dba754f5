use std::collections::HashMap;

use rayon::prelude::*;
use unicode_normalization::UnicodeNormalization;

use super::{check_items, MetricId, ScoreItem, Scorer};
use crate::Result;

/// Batches at least this large are scored in parallel.
const PARALLEL_THRESHOLD: usize = 256;

fn bigram_counts(text: &str) -> HashMap<(char, char), u64> {
    let chars: Vec<char> = text.nfc().flat_map(char::to_lowercase).collect();
    let mut counts = HashMap::new();
    for w in chars.windows(2) {
        *counts.entry((w[0], w[1])).or_insert(0) += 1;
    }
    counts
}

/// Cosine similarity of character-bigram count vectors.
///
/// Inputs are NFC-normalized and lowercased first. A side without bigrams
/// (empty or a single character) scores 0.
pub fn lexical_similarity(a: &str, b: &str) -> f64 {
    let ca = bigram_counts(a);
    let cb = bigram_counts(b);
    if ca.is_empty() || cb.is_empty() {
        return 0.0;
    }
    let (small, large) = if ca.len() <= cb.len() {
        (&ca, &cb)
    } else {
        (&cb, &ca)
    };
    let dot: f64 = small
        .iter()
        .filter_map(|(k, &v)| large.get(k).map(|&w| (v * w) as f64))
        .sum();
    let norm_a: f64 = ca.values().map(|&v| (v * v) as f64).sum();
    let norm_b: f64 = cb.values().map(|&v| (v * v) as f64).sum();
    (dot / (norm_a * norm_b).sqrt()).min(1.0)
}

/// Scores each item as `lexical_similarity(src, mt)`. References are ignored.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalScorer;

impl Scorer for LexicalScorer {
    fn metric(&self) -> MetricId {
        MetricId::Lexical
    }

    fn score_batch(&self, items: &[ScoreItem]) -> Result<Vec<f64>> {
        check_items(&MetricId::Lexical, items)?;
        let score = |item: &ScoreItem| lexical_similarity(&item.src, &item.mt);
        Ok(if items.len() >= PARALLEL_THRESHOLD {
            items.par_iter().map(score).collect()
        } else {
            items.iter().map(score).collect()
        })
    }
}
