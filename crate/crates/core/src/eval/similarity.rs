use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::embed::{cosine_similarity, Embedder};

/// A generated hypothesis and the gold hypothesis for the same background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedHypothesis {
    pub background: String,
    pub generated: String,
    pub gold: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    /// Similarity of each generated hypothesis to its own gold hypothesis.
    pub matched: Vec<f64>,
    /// Similarities between gold hypotheses of different backgrounds.
    pub null: Vec<f64>,
    pub matched_median: f64,
    pub null_median: Option<f64>,
}

impl SimilarityReport {
    /// Rows of `(pair_type, similarity)`.
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        self.matched
            .iter()
            .map(|&s| ("matched", s))
            .chain(self.null.iter().map(|&s| ("null", s)))
            .collect()
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Matched similarities against a null of unrelated gold pairs.
pub fn temporal_similarity_eval(pairs: &[PairedHypothesis], embedder: &dyn Embedder) -> Result<SimilarityReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Input("no gold hypotheses".into()));
    }
    let gold: Vec<Vec<f64>> = pairs.iter().map(|p| embedder.embed(&p.gold)).collect::<Result<_, _>>()?;
    let mut matched = Vec::with_capacity(pairs.len());
    for (p, g) in pairs.iter().zip(&gold) {
        let e = embedder.embed(&p.generated)?;
        matched.push(cosine_similarity(&e, g)?);
    }
    let mut null = Vec::new();
    for i in 0..pairs.len() {
        for j in i + 1..pairs.len() {
            if pairs[i].background != pairs[j].background {
                null.push(cosine_similarity(&gold[i], &gold[j])?);
            }
        }
    }
    Ok(SimilarityReport {
        matched_median: median(&matched).expect("nonempty"),
        null_median: median(&null),
        matched,
        null,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashedEmbedder;

    #[test]
    fn identical_texts_have_unit_median() {
        let pairs: Vec<PairedHypothesis> = ["a b c", "d e f", "g h"]
            .iter()
            .enumerate()
            .map(|(i, t)| PairedHypothesis {
                background: i.to_string(),
                generated: t.to_string(),
                gold: t.to_string(),
            })
            .collect();
        let r = temporal_similarity_eval(&pairs, &HashedEmbedder::default()).unwrap();
        assert!((r.matched_median - 1.0).abs() < 1e-12);
        assert_eq!(r.null.len(), 3);
    }

    #[test]
    fn empty_is_input_error() {
        assert!(temporal_similarity_eval(&[], &HashedEmbedder::default()).is_err());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}
