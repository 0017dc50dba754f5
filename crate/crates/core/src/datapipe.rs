//! Corpus ingestion, evaluation reports, and training signals.
//!
//! Corpora are JSON lines, one document per line:
//!
//! ```json
//! {"doc_id": "d1", "src": "...", "candidates": {"sysA": "...", "sysB": "..."}, "ref": "...", "src_lang": "zh", "tgt_lang": "en"}
//! ```
//!
//! A single translation may be given as `tgt` (optionally named by
//! `system`) instead of `candidates`.

use std::collections::HashSet;
use std::io::BufRead;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use indexmap::IndexMap;
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{align_document, AlignConfig};
use crate::ranking::{rank_systems, Polarity, SystemScore};
use crate::scorer::{LexicalScorer, Scorer};
use crate::slide_eval::{asd_score, ASDResult, SlideConfig};
use crate::{Error, Result};

/// System name for records that give a single `tgt`.
pub const DEFAULT_SYSTEM: &str = "system";

/// Reward returned when a hypothesis cannot be scored.
pub const FAILED_REWARD: f64 = -1.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocRecord {
    pub doc_id: String,
    pub src: String,
    pub candidates: IndexMap<String, String>,
    #[serde(rename = "ref", skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    pub src_lang: String,
    pub tgt_lang: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    doc_id: String,
    src: String,
    #[serde(default)]
    tgt: Option<String>,
    #[serde(default)]
    system: Option<String>,
    #[serde(default)]
    candidates: Option<IndexMap<String, String>>,
    #[serde(rename = "ref", default)]
    reference: Option<String>,
    src_lang: String,
    tgt_lang: String,
}

impl TryFrom<RawRecord> for DocRecord {
    type Error = String;

    fn try_from(raw: RawRecord) -> std::result::Result<Self, String> {
        let mut candidates = raw.candidates.unwrap_or_default();
        if let Some(tgt) = raw.tgt {
            let name = raw.system.unwrap_or_else(|| DEFAULT_SYSTEM.to_string());
            if candidates.insert(name.clone(), tgt).is_some() {
                return Err(format!("`tgt` duplicates candidate `{name}`"));
            }
        } else if raw.system.is_some() {
            return Err("`system` given without `tgt`".into());
        }
        if candidates.is_empty() {
            return Err("record has no candidate translation".into());
        }
        if raw.src.trim().is_empty() {
            return Err("empty source document".into());
        }
        Ok(DocRecord {
            doc_id: raw.doc_id,
            src: raw.src,
            candidates,
            reference: raw.reference,
            src_lang: raw.src_lang,
            tgt_lang: raw.tgt_lang,
        })
    }
}

/// Parses a JSON-lines corpus. Every bad line is reported, by 1-based number.
pub fn read_corpus(reader: impl BufRead) -> Result<Vec<DocRecord>> {
    let mut records = Vec::new();
    let mut problems = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let parsed = serde_json::from_str::<RawRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(DocRecord::try_from);
        match parsed {
            Ok(record) if !ids.insert(record.doc_id.clone()) => {
                problems.push(format!(
                    "line {lineno}: duplicate doc_id `{}`",
                    record.doc_id
                ));
            }
            Ok(record) => records.push(record),
            Err(e) => problems.push(format!("line {lineno}: {e}")),
        }
    }
    if !problems.is_empty() {
        return Err(Error::InvalidInput(format!(
            "corpus has bad records:\n{}",
            problems.join("\n")
        )));
    }
    if records.is_empty() {
        return Err(Error::InvalidInput("corpus is empty".into()));
    }
    Ok(records)
}

pub fn load_corpus(path: &std::path::Path) -> Result<Vec<DocRecord>> {
    let file = std::fs::File::open(path)?;
    read_corpus(std::io::BufReader::new(file))
}

/// Scorers and settings for the full align-then-slide pipeline.
#[derive(Clone)]
pub struct Pipeline {
    pub align: AlignConfig,
    pub slide: SlideConfig,
    pub align_scorer: Arc<dyn Scorer>,
    pub eval_scorer: Arc<dyn Scorer>,
}

impl Pipeline {
    pub fn new(align_scorer: Arc<dyn Scorer>, eval_scorer: Arc<dyn Scorer>) -> Self {
        Self {
            align: AlignConfig::default(),
            slide: SlideConfig::default(),
            align_scorer,
            eval_scorer,
        }
    }

    /// Lexical scorer for both stages; hermetic.
    pub fn lexical() -> Self {
        Self::new(Arc::new(LexicalScorer), Arc::new(LexicalScorer))
    }

    /// Aligns one translation to its source and scores it.
    pub fn score(
        &self,
        doc_id: &str,
        src: &str,
        hyp: &str,
        reference: Option<&str>,
        langs: (&str, &str),
    ) -> Result<ASDResult> {
        let reference = if self.eval_scorer.metric().is_reference_based() {
            Some(reference.ok_or_else(|| {
                Error::MetricContract(format!(
                    "{} needs a reference for document {doc_id}",
                    self.eval_scorer.metric()
                ))
            })?)
        } else {
            None
        };
        let mut pair = align_document(
            src,
            hyp,
            reference,
            langs,
            &self.align,
            self.align_scorer.as_ref(),
        )?;
        pair.src.doc_id = doc_id.to_string();
        asd_score(&pair, self.eval_scorer.as_ref(), &self.slide)
    }

    fn score_candidate(&self, record: &DocRecord, system: &str) -> Result<ASDResult> {
        let hyp = record.candidates.get(system).ok_or_else(|| {
            Error::InvalidInput(format!(
                "document {} has no candidate `{system}`",
                record.doc_id
            ))
        })?;
        self.score(
            &record.doc_id,
            &record.src,
            hyp,
            record.reference.as_deref(),
            (&record.src_lang, &record.tgt_lang),
        )
    }
}

/// Scores every candidate and returns the best; ties keep candidate order.
pub fn select_best(record: &DocRecord, pipeline: &Pipeline) -> Result<(String, ASDResult)> {
    let mut best: Option<(String, ASDResult)> = None;
    let mut failures = Vec::new();
    for system in record.candidates.keys() {
        match pipeline.score_candidate(record, system) {
            Ok(result) => {
                if best
                    .as_ref()
                    .is_none_or(|(_, b)| result.final_score > b.final_score)
                {
                    best = Some((system.clone(), result));
                } else if best
                    .as_ref()
                    .is_some_and(|(_, b)| result.final_score == b.final_score)
                {
                    log::info!(
                        "{}: `{system}` ties the current best; keeping the earlier",
                        record.doc_id
                    );
                }
            }
            Err(e @ Error::ScorerUnavailable(_)) => return Err(e),
            Err(e) => failures.push(format!("{system}: {e}")),
        }
    }
    best.ok_or_else(|| Error::RecordSkipped {
        doc_id: record.doc_id.clone(),
        reason: failures.join("; "),
    })
}

/// A chosen/rejected pair for preference optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceTriplet {
    pub src: String,
    pub chosen: String,
    pub rejected: String,
    pub score_chosen: f64,
    pub score_rejected: f64,
    /// `score_chosen - score_rejected`; not part of the wire format.
    #[serde(skip)]
    pub margin: f64,
}

/// Scores candidates `a` and `b`; emits a triplet when their final scores
/// differ by more than `margin`.
pub fn build_preference_pairs(
    record: &DocRecord,
    a: &str,
    b: &str,
    pipeline: &Pipeline,
    margin: f64,
) -> Result<Option<PreferenceTriplet>> {
    if !(margin >= 0.0 && margin.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "margin must be finite and non-negative, got {margin}"
        )));
    }
    let skip = |e: Error| match e {
        e @ (Error::ScorerUnavailable(_) | Error::InvalidInput(_)) => e,
        e => Error::RecordSkipped {
            doc_id: record.doc_id.clone(),
            reason: e.to_string(),
        },
    };
    let score_a = pipeline
        .score_candidate(record, a)
        .map_err(skip)?
        .final_score;
    let score_b = pipeline
        .score_candidate(record, b)
        .map_err(skip)?
        .final_score;
    if (score_a - score_b).abs() <= margin {
        return Ok(None);
    }
    let ((chosen, score_chosen), (rejected, score_rejected)) = if score_a > score_b {
        ((a, score_a), (b, score_b))
    } else {
        ((b, score_b), (a, score_a))
    };
    Ok(Some(PreferenceTriplet {
        src: record.src.clone(),
        chosen: record.candidates[chosen].clone(),
        rejected: record.candidates[rejected].clone(),
        score_chosen,
        score_rejected,
        margin: score_chosen - score_rejected,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reward {
    pub value: f64,
    /// Why the hypothesis got [`FAILED_REWARD`], if it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

/// Final score of `hyp` as a scalar reward. Never fails: errors become
/// [`FAILED_REWARD`] with a diagnostic.
pub fn reward(src: &str, hyp: &str, langs: (&str, &str), pipeline: &Pipeline) -> Reward {
    let outcome = if pipeline.eval_scorer.metric().is_reference_based() {
        Err(Error::MetricContract(format!(
            "reward needs a reference-free metric, got {}",
            pipeline.eval_scorer.metric()
        )))
    } else {
        pipeline.score("reward", src, hyp, None, langs)
    };
    match outcome {
        Ok(result) => Reward {
            value: result.final_score,
            diagnostic: None,
        },
        Err(e) => {
            warn!("reward fell back to {FAILED_REWARD}: {e}");
            Reward {
                value: FAILED_REWARD,
                diagnostic: Some(e.to_string()),
            }
        }
    }
}

/// Rewards for a group of hypotheses of one source, in input order.
pub fn reward_batch(
    src: &str,
    hyps: &[String],
    langs: (&str, &str),
    pipeline: &Pipeline,
) -> Vec<Reward> {
    hyps.par_iter()
        .map(|hyp| reward(src, hyp, langs, pipeline))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentResult {
    pub doc_id: String,
    pub system: String,
    pub result: ASDResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedDocument {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusEvaluation {
    pub documents: Vec<DocumentResult>,
    pub skipped: Vec<SkippedDocument>,
}

const ABANDONED: &str = "abandoned after an earlier scorer failure";

/// Scores every candidate of every record on a pool of `workers` threads.
///
/// Output is ordered by `doc_id`, then candidate order. Per-document
/// failures are recorded as skipped; an unavailable scorer aborts the run.
pub fn evaluate_corpus(
    records: &[DocRecord],
    pipeline: &Pipeline,
    workers: usize,
) -> Result<CorpusEvaluation> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;

    let mut order: Vec<&DocRecord> = records.iter().collect();
    order.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    let jobs: Vec<(&DocRecord, &String)> = order
        .iter()
        .flat_map(|r| r.candidates.keys().map(move |s| (*r, s)))
        .collect();

    // Once the scorer is known to be down, the remaining jobs are not worth
    // their retries.
    let down = AtomicBool::new(false);
    let outcomes: Vec<Result<ASDResult>> = pool.install(|| {
        jobs.par_iter()
            .map(|(r, s)| {
                if down.load(Ordering::Relaxed) {
                    return Err(Error::ScorerUnavailable(ABANDONED.into()));
                }
                let outcome = pipeline.score_candidate(r, s);
                if matches!(outcome, Err(Error::ScorerUnavailable(_))) {
                    down.store(true, Ordering::Relaxed);
                }
                outcome
            })
            .collect()
    });

    let mut eval = CorpusEvaluation::default();
    let mut unavailable: Option<String> = None;
    for ((record, system), outcome) in jobs.into_iter().zip(outcomes) {
        match outcome {
            Ok(result) => eval.documents.push(DocumentResult {
                doc_id: record.doc_id.clone(),
                system: system.clone(),
                result,
            }),
            Err(Error::ScorerUnavailable(msg)) => {
                if unavailable.as_deref().is_none_or(|m| m == ABANDONED) {
                    unavailable = Some(msg);
                }
            }
            Err(e) => {
                warn!("skipping {} / {system}: {e}", record.doc_id);
                eval.skipped.push(SkippedDocument {
                    doc_id: record.doc_id.clone(),
                    system: Some(system.clone()),
                    reason: e.to_string(),
                });
            }
        }
    }
    match unavailable {
        Some(msg) => Err(Error::ScorerUnavailable(msg)),
        None => Ok(eval),
    }
}

/// Mean final score per system, in order of first appearance.
pub fn system_means(documents: &[DocumentResult]) -> Vec<(String, f64)> {
    let mut sums: IndexMap<&str, (f64, usize)> = IndexMap::new();
    for doc in documents {
        let entry = sums.entry(doc.system.as_str()).or_insert((0.0, 0));
        entry.0 += doc.result.final_score;
        entry.1 += 1;
    }
    sums.into_iter()
        .map(|(name, (sum, count))| (name.to_string(), sum / count as f64))
        .collect()
}

/// Self-describing result of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_echo: serde_json::Value,
    pub documents: Vec<DocumentResult>,
    pub systems: Vec<SystemScore>,
    pub skipped: Vec<SkippedDocument>,
}

impl Report {
    pub fn new(config_echo: serde_json::Value, eval: CorpusEvaluation) -> Result<Self> {
        let mut report = Self {
            config_echo,
            documents: eval.documents,
            systems: Vec::new(),
            skipped: eval.skipped,
        };
        report.systems = report.rerank()?;
        Ok(report)
    }

    /// System scores recomputed from the stored per-document results.
    pub fn rerank(&self) -> Result<Vec<SystemScore>> {
        let means = system_means(&self.documents);
        if means.is_empty() {
            return Ok(Vec::new());
        }
        rank_systems(&means, Polarity::HigherIsBetter)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// `system`, `score`, `rank` as tab-separated lines with a header.
    pub fn systems_tsv(&self) -> String {
        let mut out = String::from("system\tscore\trank\n");
        for s in &self.systems {
            out.push_str(&format!("{}\t{:.4}\t{}\n", s.system, s.score, s.rank));
        }
        out
    }
}
