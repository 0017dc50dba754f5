//! Run configuration: command-line flags (or `DOCASD_*` variables) over an
//! optional TOML file over built-in defaults.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Args;
use docasd::alignment::{AlignConfig, DpMode, DpOptions, JoinerPolicy};
use docasd::datapipe::Pipeline;
use docasd::scorer::{build_scorer, MatrixCache, MetricId, RetryPolicy, Scorer, ScorerOptions};
use docasd::segmentation::SegmenterConfig;
use docasd::slide_eval::{SlideConfig, DEFAULT_KS};
use serde::{Deserialize, Serialize};

use crate::UsageError;

pub const DEFAULT_EVAL_METRIC: &str = "qe-remote:wmt22-cometkiwi-da";

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// TOML file with defaults for any of the options below.
    #[arg(long, env = "DOCASD_CONFIG", global = true)]
    pub config: Option<PathBuf>,
    /// Similarity metric for alignment, e.g. asd-align, lexical, oracle-matrix:PATH.
    #[arg(long, env = "DOCASD_METRIC_ALIGN", global = true)]
    pub metric_align: Option<MetricId>,
    /// Metric for window scoring, e.g. qe-remote:MODEL, ref-remote:MODEL, lexical.
    #[arg(long, env = "DOCASD_METRIC_EVAL", global = true)]
    pub metric_eval: Option<MetricId>,
    /// Window sizes, comma separated.
    #[arg(long, env = "DOCASD_KS", value_delimiter = ',', global = true)]
    pub ks: Option<Vec<usize>>,
    /// strict pins the first and last target to the first and last source.
    #[arg(long, env = "DOCASD_DP_MODE", global = true)]
    pub dp_mode: Option<DpMode>,
    /// Never map two targets to the same source sentence.
    #[arg(long, env = "DOCASD_FORBID_ZERO_STEP", global = true)]
    pub forbid_zero_step: bool,
    /// Text standing in for omitted sentences.
    #[arg(long, env = "DOCASD_PLACEHOLDER", global = true)]
    pub placeholder: Option<String>,
    /// space, none or auto.
    #[arg(long, env = "DOCASD_JOINER", global = true)]
    pub joiner: Option<JoinerPolicy>,
    #[arg(long, env = "DOCASD_SIDECAR_URL", global = true)]
    pub sidecar_url: Option<String>,
    /// Items per scoring request.
    #[arg(long, env = "DOCASD_BATCH_SIZE", global = true)]
    pub batch_size: Option<usize>,
    /// Directory for cached similarity matrices.
    #[arg(long, env = "DOCASD_CACHE_DIR", global = true)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, env = "DOCASD_WORKERS", global = true)]
    pub workers: Option<usize>,
    /// External segmenter command; reads text on stdin, writes one sentence
    /// per line. `{lang}` is replaced with the language code.
    #[arg(long, env = "DOCASD_SEGMENTER_CMD", global = true)]
    pub segmenter_cmd: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    metric_align: Option<MetricId>,
    metric_eval: Option<MetricId>,
    ks: Option<Vec<usize>>,
    dp_mode: Option<DpMode>,
    forbid_zero_step: Option<bool>,
    placeholder: Option<String>,
    joiner: Option<JoinerPolicy>,
    sidecar_url: Option<String>,
    batch_size: Option<usize>,
    cache_dir: Option<PathBuf>,
    workers: Option<usize>,
    segmenter_cmd: Option<String>,
    segmenter_timeout_secs: Option<u64>,
    retry_attempts: Option<u32>,
    retry_backoff_ms: Option<u64>,
}

/// Fully resolved settings, echoed into every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub metric_align: MetricId,
    pub metric_eval: MetricId,
    pub ks: Vec<usize>,
    pub dp: DpOptions,
    pub placeholder: String,
    pub joiner: JoinerPolicy,
    pub segmenter: SegmenterConfig,
    pub scorer: ScorerOptions,
    pub cache_dir: Option<PathBuf>,
    pub workers: usize,
}

fn load_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
}

impl RunConfig {
    pub fn resolve(args: &RunArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => load_file(path)?,
            None => FileConfig::default(),
        };
        let defaults = ScorerOptions::default();

        let mut ks = args
            .ks
            .clone()
            .or(file.ks)
            .unwrap_or_else(|| DEFAULT_KS.to_vec());
        ks.sort_unstable();
        ks.dedup();
        if ks.is_empty() || ks.iter().any(|k| !DEFAULT_KS.contains(k)) {
            return Err(UsageError(format!(
                "--ks must be a non-empty subset of {DEFAULT_KS:?}, got {ks:?}"
            ))
            .into());
        }
        let batch_size = args
            .batch_size
            .or(file.batch_size)
            .unwrap_or(defaults.batch_size);
        if batch_size == 0 {
            return Err(UsageError("--batch-size must be positive".into()).into());
        }
        let workers = args
            .workers
            .or(file.workers)
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if workers == 0 {
            return Err(UsageError("--workers must be positive".into()).into());
        }

        let mut segmenter = match args.segmenter_cmd.clone().or(file.segmenter_cmd) {
            Some(cmd) => SegmenterConfig::external(cmd),
            None => SegmenterConfig::default(),
        };
        if let Some(secs) = file.segmenter_timeout_secs {
            segmenter.external_timeout = Duration::from_secs(secs);
        }

        let metric_eval = match args.metric_eval.clone().or(file.metric_eval) {
            Some(metric) => metric,
            None => DEFAULT_EVAL_METRIC.parse()?,
        };
        Ok(Self {
            metric_align: args
                .metric_align
                .clone()
                .or(file.metric_align)
                .unwrap_or(MetricId::AsdAlign),
            metric_eval,
            ks,
            dp: DpOptions {
                mode: args.dp_mode.or(file.dp_mode).unwrap_or_default(),
                forbid_zero_step: args.forbid_zero_step || file.forbid_zero_step.unwrap_or(false),
            },
            placeholder: args
                .placeholder
                .clone()
                .or(file.placeholder)
                .unwrap_or_default(),
            joiner: args.joiner.or(file.joiner).unwrap_or_default(),
            segmenter,
            scorer: ScorerOptions {
                sidecar_url: args
                    .sidecar_url
                    .clone()
                    .or(file.sidecar_url)
                    .unwrap_or(defaults.sidecar_url),
                batch_size,
                retry: RetryPolicy {
                    attempts: file.retry_attempts.unwrap_or(defaults.retry.attempts),
                    initial_backoff_ms: file
                        .retry_backoff_ms
                        .unwrap_or(defaults.retry.initial_backoff_ms),
                },
                request_timeout: defaults.request_timeout,
            },
            cache_dir: args.cache_dir.clone().or(file.cache_dir),
            workers,
        })
    }

    pub fn align_config(&self) -> AlignConfig {
        AlignConfig {
            segmenter: self.segmenter.clone(),
            dp: self.dp,
            placeholder: self.placeholder.clone(),
            joiner: self.joiner,
            cache: self.cache_dir.as_ref().map(MatrixCache::new),
        }
    }

    pub fn scorer(&self, metric: &MetricId) -> Result<Arc<dyn Scorer>> {
        Ok(Arc::from(build_scorer(metric, &self.scorer)?))
    }

    pub fn pipeline(&self) -> Result<Pipeline> {
        let mut pipeline = Pipeline::new(
            self.scorer(&self.metric_align)?,
            self.scorer(&self.metric_eval)?,
        );
        pipeline.align = self.align_config();
        pipeline.slide = SlideConfig {
            ks: self.ks.clone(),
            joiner: self.joiner,
        };
        Ok(pipeline)
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes")
    }
}
