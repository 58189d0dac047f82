use std::fmt::Write as _;

use thiserror::Error;

use super::templates;
use crate::lit::SearchMode;
use crate::model::{AgentRole, LiteratureRecord};

/// Which template to render. Several kinds share an [`AgentRole`] for
/// tracing purposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptKind {
    Planner,
    QueryPlanner,
    Background,
    Explorer,
    Scientist,
    Critic,
    Reviewer,
    Refiner,
    Classifier,
    DirectJudge,
    PairwiseJudge,
}

impl PromptKind {
    pub fn role(self) -> AgentRole {
        match self {
            PromptKind::Planner | PromptKind::QueryPlanner => AgentRole::Planner,
            PromptKind::Background => AgentRole::Background,
            PromptKind::Explorer => AgentRole::Explorer,
            PromptKind::Scientist => AgentRole::Scientist,
            PromptKind::Critic => AgentRole::Critic,
            PromptKind::Reviewer => AgentRole::Reviewer,
            PromptKind::Refiner => AgentRole::Refiner,
            PromptKind::Classifier => AgentRole::Classifier,
            PromptKind::DirectJudge | PromptKind::PairwiseJudge => AgentRole::Judge,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContextError {
    #[error("{kind:?} prompt requires `{field}`")]
    Missing { kind: PromptKind, field: &'static str },
    #[error("direct evaluator scale must be 3 or 5, got {0}")]
    Scale(u8),
}

/// Inputs for one prompt. Only the fields a kind needs are read; missing
/// required fields are reported by [`render_prompt`].
#[derive(Debug, Clone)]
pub struct PromptContext {
    pub kind: PromptKind,
    pub topic: Option<String>,
    pub keywords: Vec<String>,
    pub background: Option<String>,
    pub subgraph_text: Option<String>,
    pub hypothesis: Option<String>,
    pub critic_feedback: Option<String>,
    pub new_information: Option<String>,
    pub pair: Option<(String, String)>,
    /// Rendered article blocks for the background agent.
    pub literature: Option<String>,
    /// Candidate node names for the explorer.
    pub candidates: Vec<String>,
    /// Supporting evidence summary shown to the critic.
    pub evidence: Option<String>,
    pub search_mode: Option<SearchMode>,
    pub scale_max: u8,
}

impl PromptContext {
    pub fn new(kind: PromptKind) -> Self {
        Self {
            kind,
            topic: None,
            keywords: Vec::new(),
            background: None,
            subgraph_text: None,
            hypothesis: None,
            critic_feedback: None,
            new_information: None,
            pair: None,
            literature: None,
            candidates: Vec::new(),
            evidence: None,
            search_mode: None,
            scale_max: 3,
        }
    }

    pub fn topic(mut self, v: impl Into<String>) -> Self {
        self.topic = Some(v.into());
        self
    }
    pub fn keywords<I, S>(mut self, v: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.keywords = v.into_iter().map(Into::into).collect();
        self
    }
    pub fn background(mut self, v: impl Into<String>) -> Self {
        self.background = Some(v.into());
        self
    }
    pub fn subgraph_text(mut self, v: impl Into<String>) -> Self {
        self.subgraph_text = Some(v.into());
        self
    }
    pub fn hypothesis(mut self, v: impl Into<String>) -> Self {
        self.hypothesis = Some(v.into());
        self
    }
    pub fn critic_feedback(mut self, v: impl Into<String>) -> Self {
        self.critic_feedback = Some(v.into());
        self
    }
    pub fn new_information(mut self, v: impl Into<String>) -> Self {
        self.new_information = Some(v.into());
        self
    }
    pub fn pair(mut self, a: impl Into<String>, b: impl Into<String>) -> Self {
        self.pair = Some((a.into(), b.into()));
        self
    }
    pub fn literature(mut self, v: impl Into<String>) -> Self {
        self.literature = Some(v.into());
        self
    }
    pub fn candidates<I, S>(mut self, v: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.candidates = v.into_iter().map(Into::into).collect();
        self
    }
    pub fn evidence(mut self, v: impl Into<String>) -> Self {
        self.evidence = Some(v.into());
        self
    }
    pub fn search_mode(mut self, v: SearchMode) -> Self {
        self.search_mode = Some(v);
        self
    }
    pub fn scale_max(mut self, v: u8) -> Self {
        self.scale_max = v;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub kind: PromptKind,
    pub system: String,
    pub user: String,
}

impl RenderedPrompt {
    pub fn role(&self) -> AgentRole {
        self.kind.role()
    }

    /// System and user parts joined by a blank line.
    pub fn text(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }
}

fn need<'a>(kind: PromptKind, field: &'static str, v: &'a Option<String>) -> Result<&'a str, ContextError> {
    match v.as_deref() {
        Some(s) if !s.trim().is_empty() => Ok(s),
        _ => Err(ContextError::Missing { kind, field }),
    }
}

fn need_list<'a>(kind: PromptKind, field: &'static str, v: &'a [String]) -> Result<&'a [String], ContextError> {
    if v.iter().any(|s| !s.trim().is_empty()) {
        Ok(v)
    } else {
        Err(ContextError::Missing { kind, field })
    }
}

/// Renders the template for `ctx.kind` with its context substituted.
pub fn render_prompt(ctx: &PromptContext) -> Result<RenderedPrompt, ContextError> {
    let kind = ctx.kind;
    let mut user = String::new();
    let system: String = match kind {
        PromptKind::Planner => {
            let topic = need(kind, "topic", &ctx.topic)?;
            let _ = write!(user, "Research topic: {topic}");
            if let Some(bg) = ctx.background.as_deref() {
                let _ = write!(user, "\n\nBackground:\n{bg}");
            }
            templates::PLANNER.into()
        }
        PromptKind::QueryPlanner => {
            let keywords = need_list(kind, "keywords", &ctx.keywords)?;
            let mode = ctx.search_mode.ok_or(ContextError::Missing {
                kind,
                field: "search_mode",
            })?;
            let _ = write!(user, "Mode: {}\nKeywords: {}", mode.as_str(), keywords.join(", "));
            match mode {
                SearchMode::Background => {}
                SearchMode::Evaluation => {
                    let h = need(kind, "hypothesis", &ctx.hypothesis)?;
                    let _ = write!(user, "\nHypothesis: {h}");
                }
                SearchMode::Revision => {
                    let h = need(kind, "hypothesis", &ctx.hypothesis)?;
                    let f = need(kind, "critic_feedback", &ctx.critic_feedback)?;
                    let _ = write!(user, "\nHypothesis: {h}\nFeedback:\n{f}");
                }
            }
            templates::QUERY_PLANNER.into()
        }
        PromptKind::Background => {
            let keywords = need_list(kind, "keywords", &ctx.keywords)?;
            let lit = need(kind, "literature", &ctx.literature)?;
            let _ = write!(user, "Core entities: {}\n\nArticles:\n{lit}", keywords.join(", "));
            templates::BACKGROUND.into()
        }
        PromptKind::Explorer => {
            let bg = need(kind, "background", &ctx.background)?;
            let cands = need_list(kind, "candidates", &ctx.candidates)?;
            let json = serde_json::to_string(cands).expect("strings serialize");
            let _ = write!(user, "Background:\n{bg}\n\nCandidates:\n{json}");
            templates::EXPLORER.into()
        }
        PromptKind::Scientist => {
            let bg = need(kind, "background", &ctx.background)?;
            let sg = need(kind, "subgraph_text", &ctx.subgraph_text)?;
            let _ = write!(user, "Background:\n{bg}\n\nKG context:\n{sg}");
            templates::SCIENTIST.into()
        }
        PromptKind::Critic => {
            let h = need(kind, "hypothesis", &ctx.hypothesis)?;
            let bg = need(kind, "background", &ctx.background)?;
            let _ = write!(user, "Hypothesis: {h}\n\nBackground:\n{bg}");
            if let Some(ev) = ctx.evidence.as_deref() {
                let _ = write!(user, "\n\nReferences:\n{ev}");
            }
            templates::CRITIC.into()
        }
        PromptKind::Reviewer => {
            let fb = need(kind, "critic_feedback", &ctx.critic_feedback)?;
            let h = need(kind, "hypothesis", &ctx.hypothesis)?;
            let bg = need(kind, "background", &ctx.background)?;
            let _ = write!(user, "Critique:\n{fb}\n\nHypothesis: {h}\n\nBackground:\n{bg}");
            templates::REVIEWER.into()
        }
        PromptKind::Refiner => {
            let h = need(kind, "hypothesis", &ctx.hypothesis)?;
            let fb = need(kind, "critic_feedback", &ctx.critic_feedback)?;
            let info = need(kind, "new_information", &ctx.new_information)?;
            let _ = write!(
                user,
                "Hypothesis: {h}\n\nCritic feedback:\n{fb}\n\nNew information:\n{info}"
            );
            if let Some(bg) = ctx.background.as_deref() {
                let _ = write!(user, "\n\nBackground:\n{bg}");
            }
            templates::REFINER.into()
        }
        PromptKind::Classifier => {
            let h = need(kind, "hypothesis", &ctx.hypothesis)?;
            if ctx.keywords.len() < 2 {
                return Err(ContextError::Missing {
                    kind,
                    field: "keywords (entity pair)",
                });
            }
            let _ = write!(
                user,
                "Entities: {}, {}\nHypothesis: {h}",
                ctx.keywords[0], ctx.keywords[1]
            );
            templates::CLASSIFIER.into()
        }
        PromptKind::DirectJudge => {
            if !matches!(ctx.scale_max, 3 | 5) {
                return Err(ContextError::Scale(ctx.scale_max));
            }
            let topic = need(kind, "topic", &ctx.topic)?;
            let h = need(kind, "hypothesis", &ctx.hypothesis)?;
            let _ = write!(user, "User Input: {topic}\nHypothesis: {h}");
            templates::DIRECT_JUDGE.replace("{scale_max}", &ctx.scale_max.to_string())
        }
        PromptKind::PairwiseJudge => {
            let topic = need(kind, "topic", &ctx.topic)?;
            let (a, b) = ctx.pair.as_ref().ok_or(ContextError::Missing { kind, field: "pair" })?;
            let _ = write!(user, "User Input: {topic}\nH_A: {a}\nH_B: {b}");
            templates::PAIRWISE_JUDGE.into()
        }
    };
    Ok(RenderedPrompt { kind, system, user })
}

/// Metadata blocks fed to the background agent, one per record.
pub fn format_article_blocks(records: &[LiteratureRecord]) -> String {
    records
        .iter()
        .map(|r| {
            format!(
                "PMID: {}\nTitle: {}\nDate: {}\nAbstract: {}",
                r.pmid,
                r.title,
                r.pub_date.format("%Y-%m-%d"),
                r.abstract_text
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scientist_prompt_contains_line_rule() {
        let ctx = PromptContext::new(PromptKind::Scientist)
            .background("GPR153 plays a crucial role")
            .subgraph_text("Nodes: GPR153 (gene/protein)");
        let p = render_prompt(&ctx).unwrap();
        assert!(p.text().contains("one hypothesis per line"));
        assert!(p.user.contains("Nodes: GPR153 (gene/protein)"));
    }

    #[test]
    fn refiner_without_feedback_is_context_error() {
        let ctx = PromptContext::new(PromptKind::Refiner)
            .hypothesis("h")
            .new_information("info");
        assert_eq!(
            render_prompt(&ctx).unwrap_err(),
            ContextError::Missing {
                kind: PromptKind::Refiner,
                field: "critic_feedback"
            }
        );
    }

    #[test]
    fn pairwise_prompt_places_both_hypotheses() {
        let ctx = PromptContext::new(PromptKind::PairwiseJudge)
            .topic("topic")
            .pair("first text", "second text");
        let p = render_prompt(&ctx).unwrap();
        assert!(p.text().contains("H_A: first text"));
        assert!(p.text().contains("H_B: second text"));
        assert_eq!(p.role(), AgentRole::Judge);
    }

    #[test]
    fn rendering_is_byte_stable() {
        let ctx = PromptContext::new(PromptKind::Critic)
            .hypothesis("h")
            .background("bg")
            .evidence("refs");
        assert_eq!(render_prompt(&ctx).unwrap(), render_prompt(&ctx).unwrap());
    }

    #[test]
    fn direct_judge_scale_substitution() {
        let three = render_prompt(
            &PromptContext::new(PromptKind::DirectJudge)
                .topic("t")
                .hypothesis("h"),
        )
        .unwrap();
        assert!(three.system.contains("The score range should be 0 to 3."));
        assert!(!three.system.contains("{scale_max}"));
        let five = render_prompt(
            &PromptContext::new(PromptKind::DirectJudge)
                .topic("t")
                .hypothesis("h")
                .scale_max(5),
        )
        .unwrap();
        assert!(five.system.contains("0 to 5"));
        let bad = PromptContext::new(PromptKind::DirectJudge)
            .topic("t")
            .hypothesis("h")
            .scale_max(4);
        assert_eq!(render_prompt(&bad).unwrap_err(), ContextError::Scale(4));
    }

    #[test]
    fn revision_query_requires_feedback() {
        let ctx = PromptContext::new(PromptKind::QueryPlanner)
            .keywords(["GPR153"])
            .search_mode(SearchMode::Revision)
            .hypothesis("h");
        assert!(render_prompt(&ctx).is_err());
        let ok = ctx.critic_feedback("Novelty low");
        let p = render_prompt(&ok).unwrap();
        assert!(p.user.starts_with("Mode: revision"));
    }
}
