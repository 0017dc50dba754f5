use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{check_items, MetricId, ScoreItem, Scorer};
use crate::{Error, Result};

/// Fixed source-by-target grid, looked up by exact sentence text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleGrid {
    pub src: Vec<String>,
    pub tgt: Vec<String>,
    /// Row-major, `values[i][j]` scores `(src[i], tgt[j])`.
    pub values: Vec<Vec<f64>>,
}

/// Scores any item whose hypothesis contains `mt_contains`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRule {
    pub mt_contains: String,
    pub score: f64,
}

/// On-disk form of an oracle metric.
///
/// Lookup order: the grid (exact `src`/`mt` match), then the first matching
/// rule, then `default`. An item matching none of them is an error.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleFixture {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<OracleGrid>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rules: Vec<OracleRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<f64>,
}

impl OracleFixture {
    pub fn validate(&self) -> Result<()> {
        if let Some(grid) = &self.matrix {
            let m = grid.src.len();
            let n = grid.tgt.len();
            if grid.values.len() != m || grid.values.iter().any(|row| row.len() != n) {
                return Err(Error::InvalidInput(format!(
                    "oracle grid must be {m}x{n} to match its sentence lists"
                )));
            }
            if grid.values.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(
                    "oracle grid holds a non-finite value".into(),
                ));
            }
        }
        if self.rules.iter().any(|r| !r.score.is_finite())
            || self.default.is_some_and(|d| !d.is_finite())
        {
            return Err(Error::InvalidInput("oracle scores must be finite".into()));
        }
        Ok(())
    }

    fn lookup(&self, item: &ScoreItem) -> Option<f64> {
        if let Some(grid) = &self.matrix {
            let i = grid.src.iter().position(|s| *s == item.src);
            let j = grid.tgt.iter().position(|t| *t == item.mt);
            if let (Some(i), Some(j)) = (i, j) {
                return Some(grid.values[i][j]);
            }
        }
        self.rules
            .iter()
            .find(|r| item.mt.contains(&r.mt_contains))
            .map(|r| r.score)
            .or(self.default)
    }
}

/// Replays scores from an [`OracleFixture`].
#[derive(Debug, Clone)]
pub struct OracleScorer {
    path: PathBuf,
    fixture: OracleFixture,
}

impl OracleScorer {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidInput(format!(
                "cannot read oracle fixture {}: {e}",
                path.display()
            ))
        })?;
        let fixture: OracleFixture = serde_json::from_str(&text)?;
        Self::new(path, fixture)
    }

    pub fn new(path: impl Into<PathBuf>, fixture: OracleFixture) -> Result<Self> {
        fixture.validate()?;
        Ok(Self {
            path: path.into(),
            fixture,
        })
    }

    pub fn fixture(&self) -> &OracleFixture {
        &self.fixture
    }
}

impl Scorer for OracleScorer {
    fn metric(&self) -> MetricId {
        MetricId::OracleMatrix(self.path.clone())
    }

    fn score_batch(&self, items: &[ScoreItem]) -> Result<Vec<f64>> {
        check_items(&self.metric(), items)?;
        items
            .iter()
            .enumerate()
            .map(|(i, item)| {
                self.fixture.lookup(item).ok_or_else(|| {
                    Error::MetricContract(format!(
                        "oracle {} has no score for item {i} ({:?}, {:?})",
                        self.path.display(),
                        item.src,
                        item.mt
                    ))
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_fixture() -> OracleFixture {
        OracleFixture {
            matrix: Some(OracleGrid {
                src: vec!["s0".into(), "s1".into()],
                tgt: vec!["t0".into(), "t1".into(), "t2".into()],
                values: vec![vec![0.1, 0.2, 0.3], vec![0.4, 0.5, 0.6]],
            }),
            rules: vec![OracleRule {
                mt_contains: "marker".into(),
                score: 0.75,
            }],
            default: None,
        }
    }

    #[test]
    fn replays_grid_row_by_row() {
        let scorer = OracleScorer::new("grid.json", grid_fixture()).unwrap();
        let grid = scorer.fixture().matrix.clone().unwrap();
        let items: Vec<ScoreItem> = grid
            .src
            .iter()
            .flat_map(|s| {
                grid.tgt
                    .iter()
                    .map(move |t| ScoreItem::new(s.clone(), t.clone()))
            })
            .collect();
        let scores = scorer.score_batch(&items).unwrap();
        let expected: Vec<f64> = grid.values.concat();
        assert_eq!(scores, expected);
    }

    #[test]
    fn rules_then_default() {
        let mut fixture = grid_fixture();
        let scorer = OracleScorer::new("f.json", fixture.clone()).unwrap();
        assert_eq!(
            scorer
                .score_batch(&[ScoreItem::new("x", "has marker")])
                .unwrap(),
            [0.75]
        );
        assert!(matches!(
            scorer.score_batch(&[ScoreItem::new("x", "nothing")]),
            Err(Error::MetricContract(_))
        ));
        fixture.default = Some(0.05);
        let scorer = OracleScorer::new("f.json", fixture).unwrap();
        assert_eq!(
            scorer
                .score_batch(&[ScoreItem::new("x", "nothing")])
                .unwrap(),
            [0.05]
        );
    }

    #[test]
    fn rejects_ragged_grid() {
        let mut fixture = grid_fixture();
        fixture.matrix.as_mut().unwrap().values[1].pop();
        assert!(OracleScorer::new("f.json", fixture).is_err());
    }
}
