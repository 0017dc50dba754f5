//! Source-anchored sentence alignment.
//!
//! Every target sentence is assigned to exactly one source sentence such that
//! source indices never decrease along the target. The best assignment
//! maximizes the summed similarity and is found by dynamic programming over
//! target positions with a running prefix maximum, in `O(m * n)` time. The
//! target is then rebuilt to exactly `m` entries: targets sharing a source
//! are concatenated and unmatched sources get a placeholder.

use serde::{Deserialize, Serialize};

use crate::scorer::{build_matrix, MatrixCache, Scorer, SimilarityMatrix};
use crate::segmentation::{segment, SegmenterConfig, SentenceList};
use crate::{Error, Result};

/// Largest number of candidate paths [`brute_force_search`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DpMode {
    /// The path starts at source 0 and ends at source `m - 1`.
    #[default]
    Strict,
    /// The first and last targets may match any source.
    Relaxed,
}

impl std::str::FromStr for DpMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(DpMode::Strict),
            "relaxed" => Ok(DpMode::Relaxed),
            other => Err(Error::InvalidInput(format!("unknown dp mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DpOptions {
    pub mode: DpMode,
    /// Require the source index to strictly increase at every step, so no two
    /// targets share a source.
    #[serde(default)]
    pub forbid_zero_step: bool,
}

impl From<DpMode> for DpOptions {
    fn from(mode: DpMode) -> Self {
        Self {
            mode,
            forbid_zero_step: false,
        }
    }
}

impl DpOptions {
    /// Endpoint pinning. A single target cannot sit at both ends of a longer
    /// source, so strict mode leaves it free.
    fn pinned(&self, m: usize, n: usize) -> bool {
        self.mode == DpMode::Strict && (n > 1 || m == 1)
    }
}

/// Assignment of each target sentence (in order) to a source sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentPath {
    /// `(source_index, target_index)` with target indices `0..n` in order.
    pub pairs: Vec<(usize, usize)>,
    pub total: f64,
}

impl AlignmentPath {
    pub fn source_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.pairs.iter().map(|&(i, _)| i)
    }

    /// Checks the structural invariants against an `m x n` problem.
    pub fn validate(&self, m: usize, n: usize) -> Result<()> {
        if self.pairs.len() != n {
            return Err(Error::InvalidInput(format!(
                "path has {} pairs for {n} targets",
                self.pairs.len()
            )));
        }
        let mut prev = 0;
        for (t, &(i, j)) in self.pairs.iter().enumerate() {
            if j != t || i >= m || i < prev {
                return Err(Error::InvalidInput(format!(
                    "pair {t} = ({i}, {j}) breaks a monotone path over {m} sources"
                )));
            }
            prev = i;
        }
        Ok(())
    }
}

fn check_matrix(matrix: &SimilarityMatrix) -> Result<()> {
    if matrix.m == 0 || matrix.n == 0 {
        return Err(Error::InvalidInput("empty similarity matrix".into()));
    }
    matrix.validate()
}

/// Finds the maximum-total monotone path.
pub fn dp_search(matrix: &SimilarityMatrix, mode: DpMode) -> Result<AlignmentPath> {
    dp_search_with(matrix, mode.into())
}

/// [`dp_search`] with full options.
///
/// `best[t][i]` is the best total over targets `0..=t` with target `t` at
/// source `i`; it extends the maximum of `best[t - 1][..=i]` (or `..i` when
/// zero steps are forbidden). Ties go to the smallest source index, both at
/// the final target and at every backtrack step.
pub fn dp_search_with(matrix: &SimilarityMatrix, options: DpOptions) -> Result<AlignmentPath> {
    check_matrix(matrix)?;
    let (m, n) = (matrix.m, matrix.n);
    let pinned = options.pinned(m, n);
    let infeasible = || Error::InvalidInput(format!("no feasible path through a {m}x{n} matrix"));

    let mut prev: Vec<f64> = (0..m)
        .map(|i| {
            if pinned && i != 0 {
                f64::NEG_INFINITY
            } else {
                matrix.get(i, 0)
            }
        })
        .collect();
    let mut cur = vec![f64::NEG_INFINITY; m];
    // back[t * m + i]: source index of target t - 1 on the best path through (i, t).
    let mut back = vec![usize::MAX; m * n];

    for t in 1..n {
        let mut run_val = f64::NEG_INFINITY;
        let mut run_idx = usize::MAX;
        for i in 0..m {
            if !options.forbid_zero_step && prev[i] > run_val {
                run_val = prev[i];
                run_idx = i;
            }
            if run_val == f64::NEG_INFINITY {
                cur[i] = f64::NEG_INFINITY;
            } else {
                cur[i] = run_val + matrix.get(i, t);
                back[t * m + i] = run_idx;
            }
            if options.forbid_zero_step && prev[i] > run_val {
                run_val = prev[i];
                run_idx = i;
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }

    let end = if pinned {
        m - 1
    } else {
        let mut best = 0;
        for i in 1..m {
            if prev[i] > prev[best] {
                best = i;
            }
        }
        best
    };
    let total = prev[end];
    if total == f64::NEG_INFINITY {
        return Err(infeasible());
    }

    let mut pairs = vec![(0, 0); n];
    let mut i = end;
    for t in (0..n).rev() {
        pairs[t] = (i, t);
        if t > 0 {
            i = back[t * m + i];
        }
    }
    Ok(AlignmentPath { pairs, total })
}

fn count_paths(m: usize, n: usize, options: DpOptions) -> u128 {
    // Multisets (or sets, without zero steps) of size n over m sources.
    let (pool, k) = if options.forbid_zero_step {
        (m as u128, n as u128)
    } else {
        ((m + n - 1) as u128, n as u128)
    };
    if k > pool {
        return 0;
    }
    let k = k.min(pool - k);
    let mut c: u128 = 1;
    for r in 0..k {
        c = c.saturating_mul(pool - r) / (r + 1);
    }
    c
}

/// Exhaustive search over all monotone paths; an oracle for [`dp_search`].
pub fn brute_force_search(matrix: &SimilarityMatrix, mode: DpMode) -> Result<AlignmentPath> {
    brute_force_search_with(matrix, mode.into())
}

/// [`brute_force_search`] with full options.
///
/// Among equal totals it keeps the path whose source indices, read from the
/// last target backwards, are lexicographically smallest; this is the path
/// the DP backtrack produces.
pub fn brute_force_search_with(
    matrix: &SimilarityMatrix,
    options: DpOptions,
) -> Result<AlignmentPath> {
    check_matrix(matrix)?;
    let (m, n) = (matrix.m, matrix.n);
    let paths = count_paths(m, n, options);
    if paths > BRUTE_FORCE_LIMIT {
        return Err(Error::OracleTooLarge { paths });
    }
    let pinned = options.pinned(m, n);

    struct Search<'a> {
        matrix: &'a SimilarityMatrix,
        options: DpOptions,
        pinned: bool,
        current: Vec<usize>,
        best: Option<(f64, Vec<usize>)>,
    }

    impl Search<'_> {
        fn visit(&mut self) {
            let (m, n) = (self.matrix.m, self.matrix.n);
            let t = self.current.len();
            if t == n {
                if self.pinned && self.current[n - 1] != m - 1 {
                    return;
                }
                let mut total = 0.0;
                for (t, &i) in self.current.iter().enumerate() {
                    total = if t == 0 {
                        self.matrix.get(i, 0)
                    } else {
                        total + self.matrix.get(i, t)
                    };
                }
                let better = match &self.best {
                    None => true,
                    Some((best_total, best_path)) => {
                        total > *best_total
                            || (total == *best_total
                                && self.current.iter().rev().lt(best_path.iter().rev()))
                    }
                };
                if better {
                    self.best = Some((total, self.current.clone()));
                }
                return;
            }
            let lo = match self.current.last() {
                None => 0,
                Some(&p) if self.options.forbid_zero_step => p + 1,
                Some(&p) => p,
            };
            let hi = if t == 0 && self.pinned { 0 } else { m - 1 };
            for i in lo..=hi {
                self.current.push(i);
                self.visit();
                self.current.pop();
            }
        }
    }

    let mut search = Search {
        matrix,
        options,
        pinned,
        current: Vec::with_capacity(n),
        best: None,
    };
    search.visit();
    let (total, indices) = search
        .best
        .ok_or_else(|| Error::InvalidInput(format!("no feasible path through a {m}x{n} matrix")))?;
    Ok(AlignmentPath {
        pairs: indices
            .into_iter()
            .enumerate()
            .map(|(t, i)| (i, t))
            .collect(),
        total,
    })
}

/// How concatenated sentences are glued together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JoinerPolicy {
    Space,
    None,
    /// No separator for zh, ja, ko and th; a space otherwise.
    #[default]
    Auto,
}

impl std::str::FromStr for JoinerPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "space" => Ok(JoinerPolicy::Space),
            "none" => Ok(JoinerPolicy::None),
            "auto" => Ok(JoinerPolicy::Auto),
            other => Err(Error::InvalidInput(format!("unknown joiner `{other}`"))),
        }
    }
}

impl JoinerPolicy {
    pub fn joiner(self, language: &str) -> &'static str {
        match self {
            JoinerPolicy::Space => " ",
            JoinerPolicy::None => "",
            JoinerPolicy::Auto => {
                let primary = language.split(['-', '_']).next().unwrap_or_default();
                match primary.to_ascii_lowercase().as_str() {
                    "zh" | "ja" | "ko" | "th" | "yue" => "",
                    _ => " ",
                }
            }
        }
    }
}

/// One slot of the rebuilt target, aligned to one source sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconstructedEntry {
    pub text: String,
    pub target_indices: Vec<usize>,
    pub is_placeholder: bool,
}

/// A source document with its target rebuilt to the same length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub src: SentenceList,
    pub tgt_language: String,
    pub tgt_reconstructed: Vec<ReconstructedEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_reconstructed: Option<Vec<ReconstructedEntry>>,
    pub path: AlignmentPath,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_path: Option<AlignmentPath>,
    pub placeholder_count: usize,
    pub placeholder: String,
}

impl AlignedPair {
    pub fn m(&self) -> usize {
        self.src.len()
    }
}

/// Rebuilds `tgt` as one entry per source sentence, following `path`.
pub fn reconstruct_entries(
    m: usize,
    tgt: &SentenceList,
    path: &AlignmentPath,
    placeholder: &str,
    joiner: JoinerPolicy,
) -> Result<Vec<ReconstructedEntry>> {
    path.validate(m, tgt.len())?;
    let glue = joiner.joiner(&tgt.language);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); m];
    for &(i, j) in &path.pairs {
        groups[i].push(j);
    }
    Ok(groups
        .into_iter()
        .map(|target_indices| {
            if target_indices.is_empty() {
                ReconstructedEntry {
                    text: placeholder.to_string(),
                    target_indices,
                    is_placeholder: true,
                }
            } else {
                let parts: Vec<&str> = target_indices
                    .iter()
                    .map(|&j| tgt.sentences[j].as_str())
                    .collect();
                ReconstructedEntry {
                    text: parts.join(glue),
                    target_indices,
                    is_placeholder: false,
                }
            }
        })
        .collect())
}

/// Builds the aligned pair for `src` and `tgt` along `path`.
pub fn reconstruct(
    src: &SentenceList,
    tgt: &SentenceList,
    path: &AlignmentPath,
    placeholder: &str,
    joiner: JoinerPolicy,
) -> Result<AlignedPair> {
    let entries = reconstruct_entries(src.len(), tgt, path, placeholder, joiner)?;
    let placeholder_count = entries.iter().filter(|e| e.is_placeholder).count();
    Ok(AlignedPair {
        src: src.clone(),
        tgt_language: tgt.language.clone(),
        tgt_reconstructed: entries,
        ref_reconstructed: None,
        path: path.clone(),
        ref_path: None,
        placeholder_count,
        placeholder: placeholder.to_string(),
    })
}

#[derive(Debug, Clone, Default)]
pub struct AlignConfig {
    pub segmenter: SegmenterConfig,
    pub dp: DpOptions,
    /// Text of entries with no matched target. Empty by default.
    pub placeholder: String,
    pub joiner: JoinerPolicy,
    pub cache: Option<MatrixCache>,
}

/// Aligns an already segmented target to `src`. An empty target yields an
/// all-placeholder reconstruction.
pub fn align_segmented(
    src: &SentenceList,
    tgt: &SentenceList,
    config: &AlignConfig,
    scorer: &dyn Scorer,
) -> Result<(AlignmentPath, Vec<ReconstructedEntry>)> {
    let path = if tgt.is_empty() {
        AlignmentPath {
            pairs: Vec::new(),
            total: 0.0,
        }
    } else {
        let matrix = build_matrix(src, tgt, scorer, config.cache.as_ref())?;
        dp_search_with(&matrix, config.dp)?
    };
    let entries = reconstruct_entries(src.len(), tgt, &path, &config.placeholder, config.joiner)?;
    Ok((path, entries))
}

fn segment_target(doc: &str, language: &str, config: &SegmenterConfig) -> Result<SentenceList> {
    if doc.trim().is_empty() {
        return Ok(SentenceList::from_sentences(language, Vec::<String>::new()));
    }
    segment(doc, language, config)
}

/// Segments, scores, searches and rebuilds in one go.
///
/// `langs` is `(source, target)`. A reference, when given, is aligned to the
/// same source segmentation by the identical procedure; pass one only when
/// the evaluation metric is reference-based.
pub fn align_document(
    src_doc: &str,
    tgt_doc: &str,
    ref_doc: Option<&str>,
    langs: (&str, &str),
    config: &AlignConfig,
    scorer: &dyn Scorer,
) -> Result<AlignedPair> {
    let src = segment(src_doc, langs.0, &config.segmenter)?;
    let tgt = segment_target(tgt_doc, langs.1, &config.segmenter)?;
    let (path, entries) = align_segmented(&src, &tgt, config, scorer)?;
    let placeholder_count = entries.iter().filter(|e| e.is_placeholder).count();

    let (ref_path, ref_reconstructed) = match ref_doc {
        Some(doc) => {
            let reference = segment_target(doc, langs.1, &config.segmenter)?;
            let (p, e) = align_segmented(&src, &reference, config, scorer)?;
            (Some(p), Some(e))
        }
        None => (None, None),
    };

    Ok(AlignedPair {
        src,
        tgt_language: langs.1.to_string(),
        tgt_reconstructed: entries,
        ref_reconstructed,
        path,
        ref_path,
        placeholder_count,
        placeholder: config.placeholder.clone(),
    })
}
