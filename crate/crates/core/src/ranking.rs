//! System ranking and agreement with human rankings.
//!
//! Agreement is measured on rank vectors: Pearson correlation of the two
//! rank vectors (Spearman's rho when there are no ties) and Kendall's tau-b.

use std::collections::HashSet;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    #[default]
    HigherIsBetter,
    /// e.g. MQM error scores.
    LowerIsBetter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemScore {
    pub system: String,
    pub score: f64,
    /// 1 is best; exact ties share the average of their positions.
    pub rank: f64,
}

/// Fractional ranks: the best value gets 1, ties get their mean position.
pub fn average_ranks(values: &[f64], polarity: Polarity) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        let ord = values[a].total_cmp(&values[b]);
        match polarity {
            Polarity::HigherIsBetter => ord.reverse(),
            Polarity::LowerIsBetter => ord,
        }
    });
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // Positions i+1 ..= j share their mean.
        let rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = rank;
        }
        i = j;
    }
    ranks
}

/// Ranks systems by score. Output keeps the input order.
pub fn rank_systems(scores: &[(String, f64)], polarity: Polarity) -> Result<Vec<SystemScore>> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("no systems to rank".into()));
    }
    let mut seen = HashSet::new();
    for (name, score) in scores {
        if !seen.insert(name.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate system `{name}`")));
        }
        if !score.is_finite() {
            return Err(Error::InvalidInput(format!(
                "system `{name}` has a non-finite score"
            )));
        }
    }
    let values: Vec<f64> = scores.iter().map(|(_, s)| *s).collect();
    let ranks = average_ranks(&values, polarity);
    Ok(scores
        .iter()
        .zip(ranks)
        .map(|((system, score), rank)| SystemScore {
            system: system.clone(),
            score: *score,
            rank,
        })
        .collect())
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput("need at least two observations".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite observation".into()));
    }
    Ok(())
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateInput("zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Kendall's tau-b; equals tau-a when neither side has ties.
pub fn kendall(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len();
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut tied_x, mut tied_y) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].total_cmp(&x[j]);
            let dy = y[i].total_cmp(&y[j]);
            use std::cmp::Ordering::Equal;
            match (dx, dy) {
                (Equal, Equal) => {
                    tied_x += 1;
                    tied_y += 1;
                }
                (Equal, _) => tied_x += 1,
                (_, Equal) => tied_y += 1,
                (a, b) if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    let denom = (((pairs - tied_x) * (pairs - tied_y)) as f64).sqrt();
    if denom == 0.0 {
        return Err(Error::DegenerateInput("all observations tied".into()));
    }
    Ok(((concordant - discordant) as f64 / denom).clamp(-1.0, 1.0))
}

/// A ranking of systems, with optional raw scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanRanking {
    pub ranks: IndexMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<IndexMap<String, f64>>,
    #[serde(default)]
    pub polarity: Polarity,
}

impl From<&[SystemScore]> for HumanRanking {
    fn from(scores: &[SystemScore]) -> Self {
        Self {
            ranks: scores.iter().map(|s| (s.system.clone(), s.rank)).collect(),
            scores: Some(scores.iter().map(|s| (s.system.clone(), s.score)).collect()),
            polarity: Polarity::HigherIsBetter,
        }
    }
}

impl HumanRanking {
    /// Raw scores flipped so that larger is always better.
    fn oriented_score(&self, system: &str) -> Option<f64> {
        let s = *self.scores.as_ref()?.get(system)?;
        Some(match self.polarity {
            Polarity::HigherIsBetter => s,
            Polarity::LowerIsBetter => -s,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub pearson_on_ranks: f64,
    pub kendall_tau: f64,
    #[serde(rename = "K")]
    pub systems: usize,
    /// Pearson over polarity-aligned raw scores, when both sides carry them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pearson_on_scores: Option<f64>,
}

/// Correlates two rankings over the same system set.
pub fn correlate(reference: &HumanRanking, candidate: &HumanRanking) -> Result<CorrelationReport> {
    let missing: Vec<&str> = reference
        .ranks
        .keys()
        .filter(|s| !candidate.ranks.contains_key(*s))
        .map(String::as_str)
        .collect();
    let extra: Vec<&str> = candidate
        .ranks
        .keys()
        .filter(|s| !reference.ranks.contains_key(*s))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::InvalidInput(format!(
            "system sets differ: missing from automatic ranking {missing:?}, not in human ranking {extra:?}"
        )));
    }
    let systems: Vec<&String> = reference.ranks.keys().collect();
    let x: Vec<f64> = systems.iter().map(|s| reference.ranks[*s]).collect();
    let y: Vec<f64> = systems.iter().map(|s| candidate.ranks[*s]).collect();

    let raw: Option<(Vec<f64>, Vec<f64>)> = systems
        .iter()
        .map(|s| Some((reference.oriented_score(s)?, candidate.oriented_score(s)?)))
        .collect::<Option<Vec<_>>>()
        .map(|v| v.into_iter().unzip());
    let pearson_on_scores = raw.and_then(|(a, b)| pearson(&a, &b).ok());

    Ok(CorrelationReport {
        pearson_on_ranks: pearson(&x, &y)?,
        kendall_tau: kendall(&x, &y)?,
        systems: systems.len(),
        pearson_on_scores,
    })
}

/// Correlates automatic system scores with a human ranking.
pub fn correlate_rankings(human: &HumanRanking, auto: &[SystemScore]) -> Result<CorrelationReport> {
    correlate(human, &HumanRanking::from(auto))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingEntry {
    pub system: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<f64>,
}

/// File form of a ranking: a named column of a results table.
///
/// Entries may carry a score, a rank, or both. Missing ranks are derived
/// from scores; when both are present they must agree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingTable {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub polarity: Polarity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub systems: Vec<RankingEntry>,
}

impl RankingTable {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn from_system_scores(name: impl Into<String>, scores: &[SystemScore]) -> Self {
        Self {
            name: name.into(),
            polarity: Polarity::HigherIsBetter,
            note: None,
            systems: scores
                .iter()
                .map(|s| RankingEntry {
                    system: s.system.clone(),
                    score: Some(s.score),
                    rank: Some(s.rank),
                })
                .collect(),
        }
    }

    pub fn to_ranking(&self) -> Result<HumanRanking> {
        let has_scores = self.systems.iter().all(|e| e.score.is_some());
        let computed = if has_scores {
            let scores: Vec<(String, f64)> = self
                .systems
                .iter()
                .map(|e| (e.system.clone(), e.score.unwrap_or_default()))
                .collect();
            Some(rank_systems(&scores, self.polarity)?)
        } else {
            None
        };
        let mut ranks = IndexMap::new();
        for (i, entry) in self.systems.iter().enumerate() {
            let derived = computed.as_ref().map(|c| c[i].rank);
            let rank = match (entry.rank, derived) {
                (Some(given), Some(derived)) if given != derived => {
                    return Err(Error::InvalidInput(format!(
                        "{}: `{}` has rank {given} but its score ranks {derived}",
                        self.name, entry.system
                    )));
                }
                (Some(r), _) | (None, Some(r)) => r,
                (None, None) => {
                    return Err(Error::InvalidInput(format!(
                        "{}: `{}` has neither score nor rank",
                        self.name, entry.system
                    )));
                }
            };
            if ranks.insert(entry.system.clone(), rank).is_some() {
                return Err(Error::InvalidInput(format!(
                    "duplicate system `{}`",
                    entry.system
                )));
            }
        }
        let scores = has_scores.then(|| {
            self.systems
                .iter()
                .map(|e| (e.system.clone(), e.score.unwrap_or_default()))
                .collect()
        });
        Ok(HumanRanking {
            ranks,
            scores,
            polarity: self.polarity,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ranks(v: &[u32]) -> Vec<f64> {
        v.iter().map(|&r| f64::from(r)).collect()
    }

    /// Spearman by the closed form 1 - 6 sum(d^2) / (n (n^2 - 1)).
    fn spearman_closed_form(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
        1.0 - 6.0 * d2 / (n * (n * n - 1.0))
    }

    /// Tau-a by direct pair counting.
    fn tau_a(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += ((x[i] - x[j]) * (y[i] - y[j])).signum();
            }
        }
        s / (n * (n - 1) / 2) as f64
    }

    #[test]
    fn pearson_basics() {
        let x = [1.0, 2.0, 3.5, 4.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(
            pearson(&x, &[1.0; 4]),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(
            pearson(&x, &[1.0; 3]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            pearson(&[1.0], &[1.0]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn two_adjacent_swaps() {
        let human = ranks(&[1, 2, 3, 4, 5, 6, 7]);
        let auto = ranks(&[2, 1, 3, 5, 4, 6, 7]);
        // sum d^2 = 4 over n = 7.
        let expected = spearman_closed_form(&human, &auto);
        assert!((expected - (1.0 - 24.0 / 336.0)).abs() < 1e-15);
        assert!((pearson(&human, &auto).unwrap() - expected).abs() < 1e-12);
        assert!((kendall(&human, &auto).unwrap() - 17.0 / 21.0).abs() < 1e-12);
        assert!((tau_a(&human, &auto) - 17.0 / 21.0).abs() < 1e-12);
    }

    #[test]
    fn five_discordant_pairs() {
        let human = ranks(&[1, 2, 3, 4, 5, 6, 7]);
        let auto = ranks(&[3, 1, 2, 5, 6, 7, 4]);
        assert!((kendall(&human, &auto).unwrap() - 11.0 / 21.0).abs() < 1e-12);
        assert!(
            (pearson(&human, &auto).unwrap() - spearman_closed_form(&human, &auto)).abs() < 1e-12
        );
    }

    #[test]
    fn kendall_with_ties_is_tau_b() {
        // x has one tied pair; tau-b = (C - D) / sqrt((n0 - n1)(n0 - n2)).
        let x = [1.0, 1.0, 2.0, 3.0];
        let y = [1.0, 2.0, 3.0, 4.0];
        let expected = 5.0 / (5.0f64 * 6.0).sqrt();
        assert!((kendall(&x, &y).unwrap() - expected).abs() < 1e-12);
        assert!(matches!(
            kendall(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn ranking_with_polarity_and_ties() {
        let scores = vec![
            ("a".to_string(), 0.5),
            ("b".to_string(), 0.7),
            ("c".to_string(), 0.5),
        ];
        let ranked = rank_systems(&scores, Polarity::HigherIsBetter).unwrap();
        let r: Vec<f64> = ranked.iter().map(|s| s.rank).collect();
        assert_eq!(r, [2.5, 1.0, 2.5]);
        let ranked = rank_systems(&scores, Polarity::LowerIsBetter).unwrap();
        let r: Vec<f64> = ranked.iter().map(|s| s.rank).collect();
        assert_eq!(r, [1.5, 3.0, 1.5]);

        let two = vec![("x".to_string(), 1.0), ("y".to_string(), 1.0)];
        assert!(rank_systems(&two, Polarity::HigherIsBetter)
            .unwrap()
            .iter()
            .all(|s| s.rank == 1.5));
    }

    #[test]
    fn duplicate_systems_rejected() {
        let scores = vec![("a".to_string(), 0.5), ("a".to_string(), 0.7)];
        assert!(matches!(
            rank_systems(&scores, Polarity::HigherIsBetter),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn correlate_reports_set_difference() {
        let human = HumanRanking {
            ranks: [("a".to_string(), 1.0), ("b".to_string(), 2.0)]
                .into_iter()
                .collect(),
            scores: None,
            polarity: Polarity::LowerIsBetter,
        };
        let auto = rank_systems(
            &[("a".into(), 0.2), ("c".into(), 0.1)],
            Polarity::HigherIsBetter,
        )
        .unwrap();
        let err = correlate_rankings(&human, &auto).unwrap_err().to_string();
        assert!(err.contains("\"b\"") && err.contains("\"c\""), "{err}");
    }

    #[test]
    fn table_rank_must_match_score() {
        let table: RankingTable = serde_json::from_str(
            r#"{"name": "t", "systems": [
                {"system": "a", "score": 0.4, "rank": 1},
                {"system": "b", "score": 0.5, "rank": 2}]}"#,
        )
        .unwrap();
        assert!(table.to_ranking().is_err());
    }

    proptest! {
        #[test]
        fn monotone_transform_keeps_rank_correlation(
            raw in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..12),
            power in 0.2f64..5.0,
            shift in -3.0f64..3.0,
        ) {
            let names: Vec<String> = (0..raw.len()).map(|i| format!("s{i}")).collect();
            let a: Vec<(String, f64)> = names.iter().cloned().zip(raw.iter().map(|p| p.0)).collect();
            let b: Vec<(String, f64)> = names.iter().cloned().zip(raw.iter().map(|p| p.1)).collect();
            let b2: Vec<(String, f64)> = b.iter().map(|(n, v)| (n.clone(), v.powf(power) * 2.0 + shift)).collect();
            let human = HumanRanking::from(rank_systems(&a, Polarity::HigherIsBetter).unwrap().as_slice());
            let r1 = correlate_rankings(&human, &rank_systems(&b, Polarity::HigherIsBetter).unwrap());
            let r2 = correlate_rankings(&human, &rank_systems(&b2, Polarity::HigherIsBetter).unwrap());
            match (r1, r2) {
                (Ok(r1), Ok(r2)) => {
                    prop_assert_eq!(r1.pearson_on_ranks, r2.pearson_on_ranks);
                    prop_assert_eq!(r1.kendall_tau, r2.kendall_tau);
                }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false),
            }
        }

        #[test]
        fn kendall_bounded_and_antisymmetric(perm in Just((1..=8).map(f64::from).collect::<Vec<_>>()).prop_shuffle()) {
            let base: Vec<f64> = (1..=8).map(f64::from).collect();
            let tau = kendall(&base, &perm).unwrap();
            prop_assert!((-1.0..=1.0).contains(&tau));
            let reversed: Vec<f64> = perm.iter().map(|r| 9.0 - r).collect();
            prop_assert!((kendall(&base, &reversed).unwrap() + tau).abs() < 1e-12);
            prop_assert!((tau - tau_a(&base, &perm)).abs() < 1e-12);
        }

        #[test]
        fn self_correlation_is_one(raw in prop::collection::vec(0.0f64..1.0, 2..10)) {
            let scores: Vec<(String, f64)> = raw.iter().enumerate().map(|(i, v)| (format!("s{i}"), *v)).collect();
            let ranked = rank_systems(&scores, Polarity::HigherIsBetter).unwrap();
            if let Ok(report) = correlate_rankings(&HumanRanking::from(ranked.as_slice()), &ranked) {
                prop_assert!((report.pearson_on_ranks - 1.0).abs() < 1e-12);
                prop_assert!((report.kendall_tau - 1.0).abs() < 1e-12);
            }
        }
    }
}
