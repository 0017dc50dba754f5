use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{check_scores, MetricId, ScoreItem, Scorer};
use crate::segmentation::SentenceList;
use crate::{Error, Result};

/// Raw scores between every source and target sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub m: usize,
    pub n: usize,
    /// `values[i][j]` scores source `i` against target `j`.
    pub values: Vec<Vec<f64>>,
    pub metric: MetricId,
    pub src_digest: String,
    pub tgt_digest: String,
}

impl SimilarityMatrix {
    /// Wraps explicit rows. Digests are left empty.
    pub fn from_rows(rows: Vec<Vec<f64>>, metric: MetricId) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        let matrix = Self {
            m,
            n,
            values: rows,
            metric,
            src_digest: String::new(),
            tgt_digest: String::new(),
        };
        matrix.validate()?;
        Ok(matrix)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.m || self.values.iter().any(|r| r.len() != self.n) {
            return Err(Error::InvalidInput(format!(
                "matrix rows do not form a {}x{} grid",
                self.m, self.n
            )));
        }
        if self.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "matrix holds a non-finite value".into(),
            ));
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }
}

/// SHA-256 over the sentence texts, length-prefixed.
pub fn content_digest(list: &SentenceList) -> String {
    let mut hasher = Sha256::new();
    for sentence in &list.sentences {
        hasher.update((sentence.len() as u64).to_le_bytes());
        hasher.update(sentence.as_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Directory of cached matrices, one JSON file per
/// `(src_digest, tgt_digest, metric)` key. Writes are atomic renames, so
/// concurrent writers of the same key leave one complete file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatrixCache {
    dir: PathBuf,
}

impl MatrixCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, src_digest: &str, tgt_digest: &str, metric: &MetricId) -> PathBuf {
        let mut hasher = Sha256::new();
        for part in [src_digest, tgt_digest, &metric.to_string()] {
            hasher.update((part.len() as u64).to_le_bytes());
            hasher.update(part.as_bytes());
        }
        self.dir
            .join(format!("{}.json", hex::encode(hasher.finalize())))
    }

    /// Returns the cached matrix, or `None` when absent or unusable.
    pub fn load(
        &self,
        src_digest: &str,
        tgt_digest: &str,
        metric: &MetricId,
    ) -> Option<SimilarityMatrix> {
        let path = self.path_for(src_digest, tgt_digest, metric);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return None,
            Err(e) => {
                warn!(
                    "cannot read cached matrix {}: {e}; recomputing",
                    path.display()
                );
                return None;
            }
        };
        match serde_json::from_str::<SimilarityMatrix>(&text) {
            Ok(matrix)
                if matrix.validate().is_ok()
                    && matrix.src_digest == src_digest
                    && matrix.tgt_digest == tgt_digest
                    && matrix.metric == *metric =>
            {
                debug!("matrix cache hit {}", path.display());
                Some(matrix)
            }
            Ok(_) => {
                warn!(
                    "cached matrix {} does not match its key; recomputing",
                    path.display()
                );
                None
            }
            Err(e) => {
                warn!("corrupt cached matrix {}: {e}; recomputing", path.display());
                None
            }
        }
    }

    pub fn store(&self, matrix: &SimilarityMatrix) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let path = self.path_for(&matrix.src_digest, &matrix.tgt_digest, &matrix.metric);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        serde_json::to_writer(&mut tmp, matrix)?;
        tmp.flush()?;
        tmp.persist(&path).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }
}

/// Scores every `(src[i], tgt[j])` pair.
///
/// All `m * n` items go to the scorer in one row-major call, so a remote
/// scorer issues `ceil(m * n / batch_size)` requests. With a cache the
/// result is read back on later calls instead of rescored.
pub fn build_matrix(
    src: &SentenceList,
    tgt: &SentenceList,
    scorer: &dyn Scorer,
    cache: Option<&MatrixCache>,
) -> Result<SimilarityMatrix> {
    let (m, n) = (src.len(), tgt.len());
    if m == 0 || n == 0 {
        return Err(Error::InvalidInput(format!(
            "cannot build a {m}x{n} similarity matrix"
        )));
    }
    let metric = scorer.metric();
    let src_digest = content_digest(src);
    let tgt_digest = content_digest(tgt);
    if let Some(cached) = cache.and_then(|c| c.load(&src_digest, &tgt_digest, &metric)) {
        return Ok(cached);
    }

    let items: Vec<ScoreItem> = src
        .iter()
        .flat_map(|s| tgt.iter().map(move |t| ScoreItem::new(s, t)))
        .collect();
    let flat = scorer.score_batch(&items)?;
    check_scores(&metric, items.len(), &flat)?;
    let values = flat.chunks(n).map(<[f64]>::to_vec).collect();

    let matrix = SimilarityMatrix {
        m,
        n,
        values,
        metric,
        src_digest,
        tgt_digest,
    };
    if let Some(cache) = cache {
        if let Err(e) = cache.store(&matrix) {
            warn!(
                "cannot write matrix cache in {}: {e}",
                cache.dir().display()
            );
        }
    }
    Ok(matrix)
}
