use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ComparisonRecord, EvalError, Outcome};
use crate::llm::LlmCall;
use crate::model::Metric;
use crate::protocol::{parse_pairwise, render_prompt, PromptContext, PromptKind, Winner};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tournament {
    pub records: Vec<ComparisonRecord>,
    /// One entry per judged pair whose verdict could not be parsed.
    pub skipped: Vec<String>,
}

/// Judges every unordered system pair on every shared topic once, with the
/// presentation order drawn from a seeded generator. Each verdict yields
/// one record per metric.
pub fn run_pairwise_tournament(
    hypotheses: &BTreeMap<String, BTreeMap<String, String>>,
    judge: &dyn LlmCall,
    seed: u64,
) -> Result<Tournament, EvalError> {
    if hypotheses.len() < 2 {
        return Err(EvalError::Input("a tournament needs at least two systems".into()));
    }
    let mut topics: Option<BTreeSet<&String>> = None;
    for by_topic in hypotheses.values() {
        let keys: BTreeSet<&String> = by_topic.keys().collect();
        topics = Some(match topics {
            None => keys,
            Some(t) => t.intersection(&keys).copied().collect(),
        });
    }
    let topics = topics.unwrap_or_default();
    if topics.is_empty() {
        return Err(EvalError::Input("systems share no topics".into()));
    }
    let systems: Vec<&String> = hypotheses.keys().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for topic in topics {
        for i in 0..systems.len() {
            for j in i + 1..systems.len() {
                let (mut first, mut second) = (systems[i], systems[j]);
                if rng.gen_bool(0.5) {
                    std::mem::swap(&mut first, &mut second);
                }
                let prompt = render_prompt(
                    &PromptContext::new(PromptKind::PairwiseJudge)
                        .topic(topic.as_str())
                        .pair(&hypotheses[first][topic], &hypotheses[second][topic]),
                )
                .map_err(|e| EvalError::Input(e.to_string()))?;
                let reply = judge.call(&prompt)?;
                match parse_pairwise(&reply) {
                    Ok(v) => {
                        for m in Metric::ALL {
                            let outcome = match v.winner(m) {
                                Winner::First => Outcome::FirstWins,
                                Winner::Second => Outcome::SecondWins,
                                Winner::Tie => Outcome::Tie,
                            };
                            records.push(ComparisonRecord::new(first.as_str(), second.as_str(), m, outcome));
                        }
                    }
                    Err(e) => {
                        log::warn!("skipping {first} vs {second} on `{topic}`: {e}");
                        skipped.push(format!("{first} vs {second} on `{topic}`: {e}"));
                    }
                }
            }
        }
    }
    Ok(Tournament { records, skipped })
}
