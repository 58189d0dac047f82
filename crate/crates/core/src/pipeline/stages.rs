use std::collections::{BTreeSet, HashSet};

use super::keywords::entity_terms;
use super::{BranchState, PipelineError, Services};
use crate::kg::{
    parse_selection, retrieve_subgraph, serialize_subgraph, EntityIndex, EntityNode, RelationFilter,
    RetrievalLimits, Subgraph,
};
use crate::lit::{plan_queries, search_with_relaxation, summarize_background, LitError, PlanContext, SearchMode};
use crate::llm::LlmCall;
use crate::model::{LiteratureRecord, PipelineConfig};
use crate::protocol::{format_article_blocks, render_prompt, PromptContext, PromptKind, RefinementAction, RefinementDirective};

/// Asks the planner for a numbered research plan.
pub fn emit_plan(topic: &str, llm: &dyn LlmCall) -> Result<String, PipelineError> {
    if topic.trim().is_empty() {
        return Err(PipelineError::Input("topic is empty".into()));
    }
    let prompt = render_prompt(&PromptContext::new(PromptKind::Planner).topic(topic.trim()))?;
    let reply = llm.call(&prompt)?;
    let plan = reply.trim();
    if plan.is_empty() {
        return Err(PipelineError::Protocol("planner returned an empty plan".into()));
    }
    Ok(plan.to_string())
}

pub(crate) fn lit_error(e: LitError) -> PipelineError {
    match e {
        LitError::Llm(l) => PipelineError::Llm(l),
        other => PipelineError::Lit(other),
    }
}

pub(crate) struct BackgroundOutcome {
    pub text: String,
    pub records: Vec<LiteratureRecord>,
    pub warnings: Vec<String>,
}

/// Background-mode search on the topic keywords followed by a summary.
pub(crate) fn build_background(
    topic: &str,
    keywords: &[String],
    config: &PipelineConfig,
    services: &Services<'_>,
    llm: &dyn LlmCall,
) -> Result<BackgroundOutcome, PipelineError> {
    let ctx = PlanContext {
        hypothesis: None,
        feedback: None,
        cutoff: config.temporal_cutoff,
        retmax: config.literature.retmax,
    };
    let plan = plan_queries(keywords, SearchMode::Background, &ctx, llm).map_err(lit_error)?;
    let mut warnings = plan.warnings;
    let found = search_with_relaxation(&plan.value, services.literature, config.literature.min_hits)
        .map_err(lit_error)?;
    warnings.extend(found.warnings);
    if found.records.is_empty() {
        warnings.push("background search found no literature; using the topic as background".into());
        return Ok(BackgroundOutcome {
            text: topic.trim().to_string(),
            records: Vec::new(),
            warnings,
        });
    }
    let summary = summarize_background(&found.records, keywords, llm).map_err(lit_error)?;
    warnings.extend(summary.warnings);
    Ok(BackgroundOutcome {
        text: summary.value,
        records: found.records,
        warnings,
    })
}

/// Links `terms` to graph nodes, lets the explorer choose seeds and
/// retrieves their subgraph.
pub(crate) fn explore(
    terms: &[String],
    background: &str,
    depth: usize,
    filter: &RelationFilter,
    config: &PipelineConfig,
    services: &Services<'_>,
    llm: &dyn LlmCall,
) -> Result<(Subgraph, Vec<String>), PipelineError> {
    let mut warnings = Vec::new();
    let index = EntityIndex::build(services.graph, services.embedder)?;
    let mut seen = HashSet::new();
    let mut candidates: Vec<EntityNode> = Vec::new();
    for term in terms {
        for c in index.link(term, config.kg.link_k)? {
            if c.similarity >= config.kg.min_similarity && seen.insert(c.node.node_id.clone()) {
                candidates.push(c.node);
            }
        }
    }
    if candidates.is_empty() {
        warnings.push("no graph nodes linked to the keywords; subgraph left empty".into());
        return Ok((Subgraph::default(), warnings));
    }
    let names: Vec<String> = candidates.iter().map(|c| c.name.clone()).collect();
    let prompt = render_prompt(
        &PromptContext::new(PromptKind::Explorer)
            .background(background)
            .candidates(names),
    )?;
    let reply = llm.call(&prompt)?;
    let seeds: Vec<String> = match parse_selection(&reply, &candidates) {
        Ok(sel) => {
            warnings.extend(sel.warnings);
            sel.value.into_iter().map(|n| n.node_id).collect()
        }
        Err(e) => {
            warnings.push(format!("explorer selection unusable ({e}); using top linked candidates"));
            candidates.iter().take(crate::kg::MIN_SELECTED).map(|n| n.node_id.clone()).collect()
        }
    };
    let limits = RetrievalLimits {
        max_edges: config.kg.max_edges,
        max_paths: config.kg.max_paths,
    };
    let sg = retrieve_subgraph(services.graph, &seeds, depth, filter, limits)?;
    Ok((sg, warnings))
}

/// Evaluation-mode search for the branch's current hypothesis; new records
/// are merged into the branch evidence.
pub(crate) fn evaluation_search(
    state: &mut BranchState,
    keywords: &[String],
    config: &PipelineConfig,
    services: &Services<'_>,
    llm: &dyn LlmCall,
) -> Result<Vec<String>, PipelineError> {
    let terms = search_terms(&state.hypothesis.text, keywords);
    let ctx = PlanContext {
        hypothesis: Some(&state.hypothesis.text),
        feedback: None,
        cutoff: config.temporal_cutoff,
        retmax: config.literature.retmax,
    };
    let plan = plan_queries(&terms, SearchMode::Evaluation, &ctx, llm).map_err(lit_error)?;
    let mut warnings = plan.warnings;
    let found = search_with_relaxation(&plan.value, services.literature, config.literature.min_hits)
        .map_err(lit_error)?;
    warnings.extend(found.warnings);
    state.evidence.merge_literature(found.records);
    Ok(warnings)
}

fn search_terms(hypothesis: &str, keywords: &[String]) -> Vec<String> {
    let mut out = entity_terms(hypothesis);
    let mut seen: HashSet<String> = out.iter().map(|t| t.to_lowercase()).collect();
    for k in keywords {
        if seen.insert(k.to_lowercase()) {
            out.push(k.clone());
        }
    }
    out
}

/// Evidence text shown to the critic: the subgraph and held literature.
pub(crate) fn evidence_text(state: &BranchState) -> String {
    let mut parts = Vec::new();
    if let Some(sg) = &state.evidence.subgraph_text {
        parts.push(format!("KG context: {sg}"));
    }
    if !state.evidence.literature.is_empty() {
        parts.push(format!("Literature:\n{}", format_article_blocks(&state.evidence.literature)));
    }
    if parts.is_empty() {
        "(none)".into()
    } else {
        parts.join("\n\n")
    }
}

/// Everything `apply_directive` needs besides the branch state.
pub struct DirectiveContext<'a> {
    pub topic: &'a str,
    pub keywords: &'a [String],
    pub critic_feedback: &'a str,
    pub config: &'a PipelineConfig,
    pub services: &'a Services<'a>,
    pub llm: &'a dyn LlmCall,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectiveOutcome {
    /// Text handed to the refiner describing what was retrieved.
    pub new_information: String,
    pub warnings: Vec<String>,
    /// Actions that completed without error.
    pub succeeded: BTreeSet<RefinementAction>,
}

/// Runs each requested action and merges its evidence into the branch.
/// Failed actions become warnings; language-model failures abort.
pub fn apply_directive(
    directive: &RefinementDirective,
    state: &mut BranchState,
    ctx: &DirectiveContext<'_>,
) -> Result<DirectiveOutcome, PipelineError> {
    if directive.actions.is_empty() {
        return Err(PipelineError::Input("directive has no actions".into()));
    }
    let mut sections = Vec::new();
    let mut warnings = Vec::new();
    let mut succeeded = BTreeSet::new();
    for action in &directive.actions {
        let result = match action {
            RefinementAction::Kg => kg_action(directive, state, ctx),
            RefinementAction::Literature => literature_action(state, ctx),
            RefinementAction::Background => background_action(state, ctx),
        };
        match result {
            Ok((text, mut w)) => {
                warnings.append(&mut w);
                sections.push(text);
                succeeded.insert(*action);
            }
            Err(PipelineError::Llm(e)) => return Err(PipelineError::Llm(e)),
            Err(e) => warnings.push(format!("{} action failed: {e}", action.wire_token())),
        }
    }
    if succeeded.is_empty() {
        warnings.push("every refinement action failed; refining with existing evidence".into());
        sections.push("No new information was retrieved.".into());
    }
    Ok(DirectiveOutcome {
        new_information: sections.join("\n\n"),
        warnings,
        succeeded,
    })
}

type ActionResult = Result<(String, Vec<String>), PipelineError>;

fn kg_action(directive: &RefinementDirective, state: &mut BranchState, ctx: &DirectiveContext<'_>) -> ActionResult {
    let depth = directive.depth_override.unwrap_or(ctx.config.kg.depth);
    let filter: RelationFilter = directive
        .rels_override
        .as_ref()
        .map(|r| r.iter().cloned().collect());
    let terms = search_terms(&state.hypothesis.text, ctx.keywords);
    let background = format!(
        "Hypothesis: {}\n\n{}",
        state.hypothesis.text,
        state.evidence.background.as_deref().unwrap_or_default()
    );
    let (sg, warnings) = explore(&terms, &background, depth, &filter, ctx.config, ctx.services, ctx.llm)?;
    let text = serialize_subgraph(&sg);
    let added = state.evidence.merge_subgraph(sg);
    Ok((
        format!("New knowledge-graph context ({added} new relations): {text}"),
        warnings,
    ))
}

fn literature_action(state: &mut BranchState, ctx: &DirectiveContext<'_>) -> ActionResult {
    let terms = search_terms(&state.hypothesis.text, ctx.keywords);
    let pc = PlanContext {
        hypothesis: Some(&state.hypothesis.text),
        feedback: Some(ctx.critic_feedback),
        cutoff: ctx.config.temporal_cutoff,
        retmax: ctx.config.literature.retmax,
    };
    let plan = plan_queries(&terms, SearchMode::Revision, &pc, ctx.llm).map_err(lit_error)?;
    let mut warnings = plan.warnings;
    let found = search_with_relaxation(&plan.value, ctx.services.literature, ctx.config.literature.min_hits)
        .map_err(lit_error)?;
    warnings.extend(found.warnings);
    let held: HashSet<String> = state.evidence.pmids().into_iter().collect();
    let fresh: Vec<LiteratureRecord> = found
        .records
        .iter()
        .filter(|r| !held.contains(&r.pmid))
        .cloned()
        .collect();
    state.evidence.merge_literature(found.records);
    let text = if fresh.is_empty() {
        "New literature: no articles beyond those already held.".to_string()
    } else {
        format!("New literature:\n{}", format_article_blocks(&fresh))
    };
    Ok((text, warnings))
}

fn background_action(state: &mut BranchState, ctx: &DirectiveContext<'_>) -> ActionResult {
    let out = build_background(ctx.topic, ctx.keywords, ctx.config, ctx.services, ctx.llm)?;
    state.evidence.merge_literature(out.records);
    state.evidence.background = Some(out.text.clone());
    Ok((format!("Revised background: {}", out.text), out.warnings))
}
