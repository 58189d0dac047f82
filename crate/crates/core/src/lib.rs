//! Multi-agent hypothesis generation grounded in literature and
//! knowledge-graph evidence, plus the statistics used to evaluate it.

pub mod cli;
pub mod demo;
pub mod embed;
pub mod eval;
pub mod kg;
pub mod lit;
pub mod llm;
pub mod model;
pub mod pipeline;
pub mod protocol;
pub mod ratelimit;
pub mod trace;

pub use model::{
    overall_score, AgentRole, EvidenceBundle, Hypothesis, LiteratureRecord, Metric, MetricScores,
    PipelineConfig,
};
