//! Multi-granularity sliding-window scoring of an aligned pair.
//!
//! For each chunk size `k`, windows of `k` consecutive aligned entries slide
//! over the document with stride 1, giving `m - k + 1` units. Each unit is
//! scored as one `(src, mt)` item, unit scores are averaged per `k`, and the
//! per-`k` means are averaged into the final score. Windows with `k > 1`
//! let a translation that merged several source sentences match them jointly.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{AlignedPair, JoinerPolicy, ReconstructedEntry};
use crate::scorer::{MetricId, ScoreItem, Scorer};
use crate::{Error, Result};

pub const DEFAULT_KS: [usize; 4] = [1, 2, 3, 4];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkUnit {
    pub k: usize,
    pub start: usize,
    pub src_text: String,
    pub mt_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkScoreSet {
    pub k: usize,
    pub unit_scores: Vec<f64>,
    pub mean: f64,
}

/// Sliding-window scores of one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ASDResult {
    pub doc_id: String,
    pub metric: MetricId,
    pub per_k: BTreeMap<usize, ChunkScoreSet>,
    #[serde(rename = "final")]
    pub final_score: f64,
    pub placeholder_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlideConfig {
    pub ks: Vec<usize>,
    pub joiner: JoinerPolicy,
}

impl Default for SlideConfig {
    fn default() -> Self {
        Self {
            ks: DEFAULT_KS.to_vec(),
            joiner: JoinerPolicy::Auto,
        }
    }
}

fn join_window(entries: &[ReconstructedEntry], glue: &str, placeholder: &str) -> String {
    let parts: Vec<&str> = entries
        .iter()
        .filter(|e| !e.is_placeholder)
        .map(|e| e.text.as_str())
        .collect();
    if parts.is_empty() {
        placeholder.to_string()
    } else {
        parts.join(glue)
    }
}

/// Cuts the `m - k + 1` windows of size `k`.
pub fn make_units(pair: &AlignedPair, k: usize, joiner: JoinerPolicy) -> Result<Vec<ChunkUnit>> {
    let m = pair.m();
    if k == 0 {
        return Err(Error::InvalidInput("chunk size must be at least 1".into()));
    }
    if k > m {
        return Err(Error::WindowTooLarge { k, m });
    }
    if pair.tgt_reconstructed.len() != m
        || pair
            .ref_reconstructed
            .as_ref()
            .is_some_and(|r| r.len() != m)
    {
        return Err(Error::InvalidInput(
            "reconstruction length differs from source".into(),
        ));
    }
    let src_glue = joiner.joiner(&pair.src.language);
    let tgt_glue = joiner.joiner(&pair.tgt_language);
    Ok((0..=m - k)
        .map(|start| ChunkUnit {
            k,
            start,
            src_text: pair.src.sentences[start..start + k].join(src_glue),
            mt_text: join_window(
                &pair.tgt_reconstructed[start..start + k],
                tgt_glue,
                &pair.placeholder,
            ),
            ref_text: pair
                .ref_reconstructed
                .as_ref()
                .map(|r| join_window(&r[start..start + k], tgt_glue, &pair.placeholder)),
        })
        .collect())
}

/// Scores all windows of size `k` with one batch call.
pub fn evaluate_k(
    pair: &AlignedPair,
    k: usize,
    scorer: &dyn Scorer,
    joiner: JoinerPolicy,
) -> Result<ChunkScoreSet> {
    let metric = scorer.metric();
    let units = make_units(pair, k, joiner)?;
    let items = units
        .into_iter()
        .map(|u| {
            let item = ScoreItem::new(u.src_text, u.mt_text);
            if metric.is_reference_based() {
                let reference = u.ref_text.ok_or_else(|| {
                    Error::MetricContract(format!("{metric} needs an aligned reference"))
                })?;
                Ok(item.with_reference(reference))
            } else {
                Ok(item)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let unit_scores = scorer.score_batch(&items)?;
    crate::scorer::check_scores(&metric, items.len(), &unit_scores)?;
    let mean = unit_scores.iter().sum::<f64>() / unit_scores.len() as f64;
    Ok(ChunkScoreSet {
        k,
        unit_scores,
        mean,
    })
}

/// Scores every feasible `k` (those not exceeding `m`) and averages the
/// per-`k` means, unweighted.
pub fn asd_score(
    pair: &AlignedPair,
    scorer: &dyn Scorer,
    config: &SlideConfig,
) -> Result<ASDResult> {
    let m = pair.m();
    if m == 0 {
        return Err(Error::InvalidInput(
            "aligned pair has no source sentences".into(),
        ));
    }
    let mut ks: Vec<usize> = config
        .ks
        .iter()
        .copied()
        .filter(|&k| k >= 1 && k <= m)
        .collect();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no chunk size in {:?} fits a document of {m} sentences",
            config.ks
        )));
    }
    let sets = ks
        .par_iter()
        .map(|&k| evaluate_k(pair, k, scorer, config.joiner))
        .collect::<Result<Vec<_>>>()?;
    let final_score = sets.iter().map(|s| s.mean).sum::<f64>() / sets.len() as f64;
    Ok(ASDResult {
        doc_id: pair.src.doc_id.clone(),
        metric: scorer.metric(),
        per_k: sets.into_iter().map(|s| (s.k, s)).collect(),
        final_score,
        placeholder_count: pair.placeholder_count,
    })
}
