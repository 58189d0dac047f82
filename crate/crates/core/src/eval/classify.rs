use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::llm::LlmCall;
use crate::protocol::{parse_relation, render_prompt, PromptContext, PromptKind, Relation};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: BTreeMap<Relation, ClassMetrics>,
    /// Unweighted mean over classes; `support` is the total count.
    pub macro_avg: ClassMetrics,
    pub accuracy: f64,
    /// `confusion[truth][predicted]`, indexed positive then negative.
    pub confusion: [[usize; 2]; 2],
}

const CLASSES: [Relation; 2] = [Relation::Positive, Relation::Negative];

fn class_index(r: Relation) -> usize {
    match r {
        Relation::Positive => 0,
        Relation::Negative => 1,
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class and macro precision, recall and F1 plus accuracy. Undefined
/// ratios (no predictions or no support) are reported as 0.
pub fn classification_metrics(predicted: &[Relation], truth: &[Relation]) -> Result<MetricsReport, EvalError> {
    if predicted.len() != truth.len() {
        return Err(EvalError::Input(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(EvalError::Input("no labels".into()));
    }
    let mut confusion = [[0usize; 2]; 2];
    for (p, t) in predicted.iter().zip(truth) {
        confusion[class_index(*t)][class_index(*p)] += 1;
    }
    let mut per_class = BTreeMap::new();
    for c in CLASSES {
        let i = class_index(c);
        let tp = confusion[i][i];
        let predicted_c = confusion[0][i] + confusion[1][i];
        let support = confusion[i][0] + confusion[i][1];
        let precision = ratio(tp, predicted_c);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.insert(
            c,
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            },
        );
    }
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.values().map(f).sum::<f64>() / CLASSES.len() as f64;
    let macro_avg = ClassMetrics {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        support: truth.len(),
    };
    Ok(MetricsReport {
        accuracy: ratio(confusion[0][0] + confusion[1][1], truth.len()),
        per_class,
        macro_avg,
        confusion,
    })
}

/// An entity pair, a hypothesis relating them and the true relation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub source: String,
    pub target: String,
    pub hypothesis: String,
    pub label: Relation,
}

/// Asks the classifier for each item's relation. Unparseable replies are
/// `None` with a warning; transport failures abort.
pub fn classify_relations(items: &[LabeledPair], llm: &dyn LlmCall) -> Result<(Vec<Option<Relation>>, Vec<String>), EvalError> {
    let mut out = Vec::with_capacity(items.len());
    let mut warnings = Vec::new();
    for (i, it) in items.iter().enumerate() {
        let prompt = render_prompt(
            &PromptContext::new(PromptKind::Classifier)
                .keywords([it.source.as_str(), it.target.as_str()])
                .hypothesis(&it.hypothesis),
        )
        .map_err(|e| EvalError::Input(format!("item {}: {e}", i + 1)))?;
        let reply = llm.call(&prompt)?;
        match parse_relation(&reply) {
            Ok(r) => out.push(Some(r)),
            Err(e) => {
                warnings.push(format!("item {}: {e}", i + 1));
                out.push(None);
            }
        }
    }
    Ok((out, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Relation::{Negative as N, Positive as P};

    #[test]
    fn perfect_predictions() {
        let t = [P, N, P, N];
        let r = classification_metrics(&t, &t).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.macro_avg.f1, 1.0);
    }

    #[test]
    fn flipped_predictions() {
        let t = [P, N, P, N];
        let p = [N, P, N, P];
        let r = classification_metrics(&p, &t).unwrap();
        assert_eq!(r.accuracy, 0.0);
        assert_eq!(r.macro_avg.f1, 0.0);
    }

    #[test]
    fn length_mismatch_and_empty() {
        assert!(classification_metrics(&[P], &[]).is_err());
        assert!(classification_metrics(&[], &[]).is_err());
    }
}
