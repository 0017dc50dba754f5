use std::thread;
use std::time::Duration;

use log::warn;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::{check_items, check_scores, MetricId, ScoreItem, Scorer, ScorerOptions};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay after the first failure; doubles after each further failure.
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff_ms: 1000,
        }
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    metric: &'a str,
    items: &'a [ScoreItem],
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

/// Client for the scoring sidecar's `POST /v1/score` endpoint.
///
/// Items are sent in batches of `batch_size`. Connection failures and 5xx
/// responses are retried; 4xx responses are contract errors and are not.
pub struct RemoteScorer {
    metric: MetricId,
    model: String,
    endpoint: String,
    batch_size: usize,
    retry: RetryPolicy,
    client: Client,
}

enum Failure {
    Retryable(String),
    Fatal(Error),
}

impl RemoteScorer {
    pub fn new(metric: MetricId, options: &ScorerOptions) -> Result<Self> {
        let model = metric
            .remote_model()
            .ok_or_else(|| Error::InvalidInput(format!("{metric} is not a remote metric")))?
            .to_string();
        if options.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be positive".into()));
        }
        if options.retry.attempts == 0 {
            return Err(Error::InvalidInput(
                "retry attempts must be positive".into(),
            ));
        }
        let client = Client::builder()
            .timeout(options.request_timeout)
            .build()
            .map_err(|e| Error::ScorerUnavailable(format!("cannot build HTTP client: {e}")))?;
        Ok(Self {
            metric,
            model,
            endpoint: format!("{}/v1/score", options.sidecar_url.trim_end_matches('/')),
            batch_size: options.batch_size,
            retry: options.retry.clone(),
            client,
        })
    }

    fn post_once(&self, batch: &[ScoreItem]) -> std::result::Result<Vec<f64>, Failure> {
        let request = ScoreRequest {
            metric: &self.model,
            items: batch,
        };
        let response = self
            .client
            .post(&self.endpoint)
            .json(&request)
            .send()
            .map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = response.status();
        if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
            let body = response.text().unwrap_or_default();
            return Err(Failure::Retryable(format!("{status}: {}", body.trim())));
        }
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(Failure::Fatal(Error::MetricContract(format!(
                "sidecar rejected {} items for {}: {status}: {}",
                batch.len(),
                self.model,
                body.trim()
            ))));
        }
        let parsed: ScoreResponse = response.json().map_err(|e| {
            Failure::Fatal(Error::MetricContract(format!(
                "malformed sidecar response: {e}"
            )))
        })?;
        check_scores(&self.metric, batch.len(), &parsed.scores).map_err(Failure::Fatal)?;
        Ok(parsed.scores)
    }

    fn post_with_retry(&self, batch: &[ScoreItem]) -> Result<Vec<f64>> {
        let mut backoff = Duration::from_millis(self.retry.initial_backoff_ms);
        let mut last = String::new();
        for attempt in 1..=self.retry.attempts {
            match self.post_once(batch) {
                Ok(scores) => return Ok(scores),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(msg)) => {
                    warn!(
                        "sidecar call {attempt}/{} to {} failed: {msg}",
                        self.retry.attempts, self.endpoint
                    );
                    last = msg;
                    if attempt < self.retry.attempts {
                        thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(Error::ScorerUnavailable(format!(
            "{} after {} attempts: {last}",
            self.endpoint, self.retry.attempts
        )))
    }
}

impl Scorer for RemoteScorer {
    fn metric(&self) -> MetricId {
        self.metric.clone()
    }

    fn score_batch(&self, items: &[ScoreItem]) -> Result<Vec<f64>> {
        check_items(&self.metric, items)?;
        // The wire contract carries `ref` only for reference-based metrics.
        let stripped: Vec<ScoreItem>;
        let items =
            if !self.metric.is_reference_based() && items.iter().any(|i| i.reference.is_some()) {
                stripped = items
                    .iter()
                    .map(|i| ScoreItem::new(i.src.clone(), i.mt.clone()))
                    .collect();
                &stripped
            } else {
                items
            };
        let mut scores = Vec::with_capacity(items.len());
        for batch in items.chunks(self.batch_size) {
            scores.extend(self.post_with_retry(batch)?);
        }
        Ok(scores)
    }
}
