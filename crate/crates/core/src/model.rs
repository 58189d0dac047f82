//! Shared domain types: metric scores, hypotheses, evidence, and pipeline
//! configuration.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::Subgraph;

/// Largest value any single metric may take on the internal critic scale.
pub const METRIC_MAX: u8 = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("{metric} score {value} outside 0..={max}")]
    ScoreOutOfRange { metric: Metric, value: i64, max: u8 },
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
}

/// The four evaluation dimensions shared by the critic, the judges and the
/// human rating schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Novelty,
    Relevance,
    Significance,
    Verifiability,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Novelty,
        Metric::Relevance,
        Metric::Significance,
        Metric::Verifiability,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Novelty => "Novelty",
            Metric::Relevance => "Relevance",
            Metric::Significance => "Significance",
            Metric::Verifiability => "Verifiability",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Metric::Novelty => 0,
            Metric::Relevance => 1,
            Metric::Significance => 2,
            Metric::Verifiability => 3,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Metric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(&lower))
            .ok_or_else(|| ModelError::UnknownMetric(s.to_string()))
    }
}

/// Integer 0 to 5 ratings on the four metrics. Construct through
/// [`MetricScores::new`] to enforce the range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MetricScores {
    novelty: u8,
    relevance: u8,
    significance: u8,
    verifiability: u8,
}

impl MetricScores {
    pub fn new(
        novelty: u8,
        relevance: u8,
        significance: u8,
        verifiability: u8,
    ) -> Result<Self, ModelError> {
        let scores = Self {
            novelty,
            relevance,
            significance,
            verifiability,
        };
        for m in Metric::ALL {
            let v = scores.get(m);
            if v > METRIC_MAX {
                return Err(ModelError::ScoreOutOfRange {
                    metric: m,
                    value: i64::from(v),
                    max: METRIC_MAX,
                });
            }
        }
        Ok(scores)
    }

    /// Builds scores from values indexed by [`Metric::index`].
    pub fn from_array(values: [u8; 4]) -> Result<Self, ModelError> {
        Self::new(values[0], values[1], values[2], values[3])
    }

    pub fn get(&self, metric: Metric) -> u8 {
        match metric {
            Metric::Novelty => self.novelty,
            Metric::Relevance => self.relevance,
            Metric::Significance => self.significance,
            Metric::Verifiability => self.verifiability,
        }
    }

    pub fn as_array(&self) -> [u8; 4] {
        [
            self.novelty,
            self.relevance,
            self.significance,
            self.verifiability,
        ]
    }

    /// Sum of the four metrics, out of 20.
    pub fn overall(&self) -> u8 {
        overall_score(self)
    }
}

pub fn overall_score(scores: &MetricScores) -> u8 {
    scores.novelty + scores.relevance + scores.significance + scores.verifiability
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub id: String,
    pub text: String,
    pub generation: u32,
    pub parent_id: Option<String>,
    pub scores: Option<MetricScores>,
    /// One entry per metric, in [`Metric::ALL`] order, when scored.
    #[serde(default)]
    pub rationale: Vec<(Metric, String)>,
}

impl Hypothesis {
    pub fn initial(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            generation: 0,
            parent_id: None,
            scores: None,
            rationale: Vec::new(),
        }
    }

    pub fn refined_from(parent: &Hypothesis, id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            generation: parent.generation + 1,
            parent_id: Some(parent.id.clone()),
            scores: None,
            rationale: Vec::new(),
        }
    }

    pub fn overall(&self) -> Option<u8> {
        self.scores.map(|s| s.overall())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiteratureRecord {
    pub pmid: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub pub_date: NaiveDate,
    /// Controlled-vocabulary headings, when the source provides them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mesh_terms: Vec<String>,
}

/// Evidence attached to a hypothesis branch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvidenceBundle {
    pub literature: Vec<LiteratureRecord>,
    pub subgraph: Option<Subgraph>,
    pub subgraph_text: Option<String>,
    pub background: Option<String>,
}

impl EvidenceBundle {
    pub fn is_empty(&self) -> bool {
        self.literature.is_empty() && self.subgraph_text.is_none() && self.background.is_none()
    }

    /// Adds records whose pmid is not already held; returns how many were new.
    pub fn merge_literature(&mut self, records: impl IntoIterator<Item = LiteratureRecord>) -> usize {
        let mut added = 0;
        for record in records {
            if self.literature.iter().all(|r| r.pmid != record.pmid) {
                self.literature.push(record);
                added += 1;
            }
        }
        added
    }

    /// Merges a subgraph into the held one and refreshes the rendered text.
    /// Returns the number of edges and paths that were new.
    pub fn merge_subgraph(&mut self, incoming: Subgraph) -> usize {
        let added = match self.subgraph.as_mut() {
            Some(held) => held.merge(incoming),
            None => {
                let n = incoming.direct_edges.len() + incoming.multihop_paths.len();
                self.subgraph = Some(incoming);
                n
            }
        };
        self.subgraph_text = self.subgraph.as_ref().map(crate::kg::serialize_subgraph);
        added
    }

    pub fn pmids(&self) -> Vec<String> {
        self.literature.iter().map(|r| r.pmid.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgentRole {
    Planner,
    Background,
    Explorer,
    Scientist,
    Critic,
    Reviewer,
    Refiner,
    Classifier,
    Judge,
}

impl AgentRole {
    pub const ALL: [AgentRole; 9] = [
        AgentRole::Planner,
        AgentRole::Background,
        AgentRole::Explorer,
        AgentRole::Scientist,
        AgentRole::Critic,
        AgentRole::Reviewer,
        AgentRole::Refiner,
        AgentRole::Classifier,
        AgentRole::Judge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Planner => "Planner",
            AgentRole::Background => "Background",
            AgentRole::Explorer => "Explorer",
            AgentRole::Scientist => "Scientist",
            AgentRole::Critic => "Critic",
            AgentRole::Reviewer => "Reviewer",
            AgentRole::Refiner => "Refiner",
            AgentRole::Classifier => "Classifier",
            AgentRole::Judge => "Judge",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Knowledge-graph retrieval knobs used for initial generation. Reviewer
/// overrides replace `depth` and the relation filter during refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KgSettings {
    pub depth: usize,
    pub max_edges: usize,
    pub max_paths: usize,
    /// Candidates kept per keyword during entity linking.
    pub link_k: usize,
    pub min_similarity: f64,
}

impl Default for KgSettings {
    fn default() -> Self {
        Self {
            depth: 2,
            max_edges: 20,
            max_paths: 10,
            link_k: 5,
            min_similarity: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LitSettings {
    /// Fewer hits than this triggers the relaxation ladder.
    pub min_hits: usize,
    pub retmax: usize,
}

impl Default for LitSettings {
    fn default() -> Self {
        Self {
            min_hits: 3,
            retmax: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub max_cycles: u32,
    pub n_initial_hypotheses: usize,
    pub accept_threshold: u8,
    pub emit_floor: u8,
    pub temporal_cutoff: Option<NaiveDate>,
    pub temperature: f64,
    pub seed: u64,
    /// Total token budget for a run; `None` means unlimited.
    pub token_budget: Option<u64>,
    /// Whether to request the optional numbered research plan.
    pub emit_plan: bool,
    pub kg: KgSettings,
    pub literature: LitSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            max_cycles: 3,
            n_initial_hypotheses: 3,
            accept_threshold: 18,
            emit_floor: 15,
            temporal_cutoff: None,
            temperature: 0.3,
            seed: 42,
            token_budget: None,
            emit_plan: true,
            kg: KgSettings::default(),
            literature: LitSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.max_cycles < 1 {
            return Err(ModelError::Config("max_cycles must be at least 1".into()));
        }
        if self.n_initial_hypotheses < 1 {
            return Err(ModelError::Config(
                "n_initial_hypotheses must be at least 1".into(),
            ));
        }
        if !(0 < self.emit_floor
            && self.emit_floor <= self.accept_threshold
            && self.accept_threshold <= 20)
        {
            return Err(ModelError::Config(format!(
                "need 0 < emit_floor ({}) <= accept_threshold ({}) <= 20",
                self.emit_floor, self.accept_threshold
            )));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ModelError::Config(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.kg.depth < 1 || self.kg.link_k < 1 {
            return Err(ModelError::Config("kg depth and link_k must be >= 1".into()));
        }
        Ok(())
    }
}
