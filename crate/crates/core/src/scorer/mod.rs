//! Scoring backends.
//!
//! Every metric is a [`Scorer`]: a batch function from `(src, mt, ref?)`
//! triples to raw real scores, higher is better. Scores are never clamped or
//! rescaled. [`build_scorer`] maps a [`MetricId`] to a backend.

mod lexical;
mod matrix;
mod oracle;
mod remote;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

pub use lexical::{lexical_similarity, LexicalScorer};
pub use matrix::{build_matrix, content_digest, MatrixCache, SimilarityMatrix};
pub use oracle::{OracleFixture, OracleGrid, OracleRule, OracleScorer};
pub use remote::{RemoteScorer, RetryPolicy};

/// Sidecar model used by the `asd-align` metric.
pub const DEFAULT_ALIGN_MODEL: &str = "wmt22-cometkiwi-da";

/// One scoring request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreItem {
    pub src: String,
    pub mt: String,
    #[serde(rename = "ref", default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

impl ScoreItem {
    pub fn new(src: impl Into<String>, mt: impl Into<String>) -> Self {
        Self {
            src: src.into(),
            mt: mt.into(),
            reference: None,
        }
    }

    pub fn with_reference(mut self, reference: impl Into<String>) -> Self {
        self.reference = Some(reference.into());
        self
    }
}

/// Identifies a metric and, through it, a scoring backend.
///
/// Textual forms: `asd-align`, `qe-remote:<model>`, `ref-remote:<model>`,
/// `lexical`, `oracle-matrix:<fixture path>`, `constant:<value>`.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricId {
    /// Reference-free alignment scorer served by the sidecar.
    AsdAlign,
    QeRemote(String),
    RefRemote(String),
    /// Character-bigram cosine; hermetic stand-in for a neural scorer.
    Lexical,
    /// Replays scores from a fixture file.
    OracleMatrix(PathBuf),
    /// Scores every item with the same value.
    Constant(f64),
}

impl MetricId {
    pub fn is_reference_based(&self) -> bool {
        matches!(self, MetricId::RefRemote(_))
    }

    /// Model name sent to the sidecar, for remote metrics.
    pub fn remote_model(&self) -> Option<&str> {
        match self {
            MetricId::AsdAlign => Some(DEFAULT_ALIGN_MODEL),
            MetricId::QeRemote(model) | MetricId::RefRemote(model) => Some(model),
            _ => None,
        }
    }

    /// All in-scope metrics are higher-is-better.
    pub fn higher_is_better(&self) -> bool {
        true
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricId::AsdAlign => f.write_str("asd-align"),
            MetricId::QeRemote(model) => write!(f, "qe-remote:{model}"),
            MetricId::RefRemote(model) => write!(f, "ref-remote:{model}"),
            MetricId::Lexical => f.write_str("lexical"),
            MetricId::OracleMatrix(path) => write!(f, "oracle-matrix:{}", path.display()),
            MetricId::Constant(c) => write!(f, "constant:{c}"),
        }
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((name, arg)) => (name, Some(arg)),
            None => (s, None),
        };
        let need_arg = |what: &str| {
            arg.filter(|a| !a.is_empty())
                .ok_or_else(|| Error::InvalidInput(format!("metric `{name}` requires {what}")))
        };
        match name {
            "asd-align" if arg.is_none() => Ok(MetricId::AsdAlign),
            "lexical" if arg.is_none() => Ok(MetricId::Lexical),
            "qe-remote" => Ok(MetricId::QeRemote(need_arg("a model name")?.to_string())),
            "ref-remote" => Ok(MetricId::RefRemote(need_arg("a model name")?.to_string())),
            "oracle-matrix" => Ok(MetricId::OracleMatrix(need_arg("a fixture path")?.into())),
            "constant" => {
                let value: f64 = need_arg("a value")?
                    .parse()
                    .map_err(|e| Error::InvalidInput(format!("bad constant: {e}")))?;
                if !value.is_finite() {
                    return Err(Error::InvalidInput("constant score must be finite".into()));
                }
                Ok(MetricId::Constant(value))
            }
            _ => Err(Error::InvalidInput(format!("unknown metric `{s}`"))),
        }
    }
}

impl Serialize for MetricId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MetricId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A batch scoring backend.
pub trait Scorer: Send + Sync {
    fn metric(&self) -> MetricId;

    /// Scores `items` in order. Implementations must be independent of how
    /// callers partition a sequence into batches.
    fn score_batch(&self, items: &[ScoreItem]) -> Result<Vec<f64>>;
}

/// Checks the item contract of `metric` before scoring.
pub fn check_items(metric: &MetricId, items: &[ScoreItem]) -> Result<()> {
    for (i, item) in items.iter().enumerate() {
        if item.src.trim().is_empty() {
            return Err(Error::MetricContract(format!(
                "item {i} has an empty source"
            )));
        }
        if metric.is_reference_based() && item.reference.is_none() {
            return Err(Error::MetricContract(format!(
                "item {i} lacks a reference required by {metric}"
            )));
        }
    }
    Ok(())
}

pub(crate) fn check_scores(metric: &MetricId, expected: usize, scores: &[f64]) -> Result<()> {
    if scores.len() != expected {
        return Err(Error::MetricContract(format!(
            "{metric} returned {} scores for {expected} items",
            scores.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::MetricContract(format!(
            "{metric} returned a non-finite score at {i}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantScorer(pub f64);

impl Scorer for ConstantScorer {
    fn metric(&self) -> MetricId {
        MetricId::Constant(self.0)
    }

    fn score_batch(&self, items: &[ScoreItem]) -> Result<Vec<f64>> {
        check_items(&self.metric(), items)?;
        Ok(vec![self.0; items.len()])
    }
}

/// Settings for constructing remote scorers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerOptions {
    pub sidecar_url: String,
    pub batch_size: usize,
    pub retry: RetryPolicy,
    #[serde(skip, default = "default_request_timeout")]
    pub request_timeout: Duration,
}

fn default_request_timeout() -> Duration {
    Duration::from_secs(300)
}

impl Default for ScorerOptions {
    fn default() -> Self {
        Self {
            sidecar_url: "http://127.0.0.1:8765".into(),
            batch_size: 64,
            retry: RetryPolicy::default(),
            request_timeout: default_request_timeout(),
        }
    }
}

/// Builds the backend for `metric`.
pub fn build_scorer(metric: &MetricId, options: &ScorerOptions) -> Result<Box<dyn Scorer>> {
    Ok(match metric {
        MetricId::Lexical => Box::new(LexicalScorer),
        MetricId::Constant(c) => Box::new(ConstantScorer(*c)),
        MetricId::OracleMatrix(path) => Box::new(OracleScorer::load(path)?),
        MetricId::AsdAlign | MetricId::QeRemote(_) | MetricId::RefRemote(_) => {
            Box::new(RemoteScorer::new(metric.clone(), options)?)
        }
    })
}
