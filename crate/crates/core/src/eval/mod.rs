//! Evaluation statistics: paired-comparison models, quasi-variances, the
//! cumulative-probit rating model, similarity analysis, classification
//! metrics and the judging tournament.

mod bt;
mod classify;
mod davidson;
pub mod io;
mod newton;
mod qv;
mod rasch;
mod similarity;
pub mod synth;
mod tournament;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbedError;
use crate::llm::LlmError;
use crate::model::Metric;

pub use bt::{fit_bradley_terry, BtFit, BtOptions, Identification};
pub use classify::{classification_metrics, classify_relations, ClassMetrics, LabeledPair, MetricsReport};
pub use davidson::{fit_davidson, DavidsonFit};
pub use qv::{comparison_interval, nnls, quasi_variances, quasi_variances_from_cov, PairError, QuasiVariances, QvObjective};
pub use rasch::{fit_rasch_map, CellEffect, ParamSe, RaschData, RaschFit, RaschModel, RaschPriors, Rating};
pub use similarity::{median, temporal_similarity_eval, PairedHypothesis, SimilarityReport};
pub use tournament::{run_pairwise_tournament, Tournament};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("comparison graph is disconnected; components: {}", format_components(.0))]
    Disconnected(Vec<Vec<String>>),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("row {row}: {message}")]
    Schema { row: usize, message: String },
    #[error("embedding: {0}")]
    Embed(#[from] EmbedError),
    #[error("language model: {0}")]
    Llm(#[from] LlmError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn format_components(c: &[Vec<String>]) -> String {
    c.iter()
        .map(|g| format!("{{{}}}", g.join(", ")))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    #[serde(rename = "first")]
    FirstWins,
    #[serde(rename = "second")]
    SecondWins,
    Tie,
}

impl Outcome {
    /// Win credit to the first-presented system; a tie counts half.
    pub fn first_score(self) -> f64 {
        match self {
            Outcome::FirstWins => 1.0,
            Outcome::SecondWins => 0.0,
            Outcome::Tie => 0.5,
        }
    }
}

/// One judged comparison, with `first` the system presented first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub first: String,
    pub second: String,
    pub metric: Metric,
    pub outcome: Outcome,
}

impl ComparisonRecord {
    pub fn new(first: impl Into<String>, second: impl Into<String>, metric: Metric, outcome: Outcome) -> Self {
        Self {
            first: first.into(),
            second: second.into(),
            metric,
            outcome,
        }
    }
}

/// Dense indices for system ids, in sorted order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Systems {
    pub names: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Systems {
    pub fn from_records(records: &[ComparisonRecord]) -> Result<Self, EvalError> {
        let mut index = BTreeMap::new();
        for (row, r) in records.iter().enumerate() {
            if r.first == r.second {
                return Err(EvalError::Input(format!(
                    "comparison {} pits `{}` against itself",
                    row + 1,
                    r.first
                )));
            }
            index.insert(r.first.clone(), 0);
            index.insert(r.second.clone(), 0);
        }
        if index.len() < 2 {
            return Err(EvalError::Input("need comparisons among at least two systems".into()));
        }
        let names: Vec<String> = index.keys().cloned().collect();
        for (i, n) in names.iter().enumerate() {
            index.insert(n.clone(), i);
        }
        Ok(Self { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn idx(&self, name: &str) -> usize {
        self.index[name]
    }

    /// Connected components of the comparison graph, each sorted; `None`
    /// when connected.
    pub fn components(&self, records: &[ComparisonRecord]) -> Option<Vec<Vec<String>>> {
        let mut parent: Vec<usize> = (0..self.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for r in records {
            let a = find(&mut parent, self.idx(&r.first));
            let b = find(&mut parent, self.idx(&r.second));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for i in 0..self.len() {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().push(self.names[i].clone());
        }
        (groups.len() > 1).then(|| groups.into_values().collect())
    }
}

/// Aggregated first-vs-second counts for one ordered pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PairCounts {
    pub first: usize,
    pub second: usize,
    pub first_wins: f64,
    pub second_wins: f64,
    pub ties: f64,
}

impl PairCounts {
    pub fn total(&self) -> f64 {
        self.first_wins + self.second_wins + self.ties
    }
}

pub(crate) fn aggregate(records: &[ComparisonRecord], systems: &Systems) -> Vec<PairCounts> {
    let mut map: BTreeMap<(usize, usize), PairCounts> = BTreeMap::new();
    for r in records {
        let key = (systems.idx(&r.first), systems.idx(&r.second));
        let e = map.entry(key).or_insert(PairCounts {
            first: key.0,
            second: key.1,
            first_wins: 0.0,
            second_wins: 0.0,
            ties: 0.0,
        });
        match r.outcome {
            Outcome::FirstWins => e.first_wins += 1.0,
            Outcome::SecondWins => e.second_wins += 1.0,
            Outcome::Tie => e.ties += 1.0,
        }
    }
    map.into_values().collect()
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

/// Kendall's tau-a between two score vectors.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let mut s = 0.0;
    let mut pairs = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let sign = |x: f64, y: f64| x.partial_cmp(&y).map_or(0.0, |o| o as i8 as f64);
            s += sign(a[i], a[j]) * sign(b[i], b[j]);
            pairs += 1.0;
        }
    }
    if pairs == 0.0 {
        1.0
    } else {
        s / pairs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn components_reported() {
        let recs = vec![
            ComparisonRecord::new("A", "B", Metric::Novelty, Outcome::FirstWins),
            ComparisonRecord::new("C", "D", Metric::Novelty, Outcome::Tie),
        ];
        let s = Systems::from_records(&recs).unwrap();
        let c = s.components(&recs).unwrap();
        assert_eq!(c, vec![vec!["A".to_string(), "B".into()], vec!["C".into(), "D".into()]]);
    }

    #[test]
    fn self_comparison_rejected() {
        let recs = vec![ComparisonRecord::new("A", "A", Metric::Novelty, Outcome::Tie)];
        assert!(Systems::from_records(&recs).is_err());
    }

    #[test]
    fn kendall_extremes() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[0.1, 0.2, 0.9]), 1.0);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        // tied pairs count as neither concordant nor discordant
        assert_eq!(kendall_tau(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]), 2.0 / 3.0);
    }
}
