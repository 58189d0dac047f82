//! The generation state machine: plan, background, exploration, initial
//! hypotheses, then a Critic → Reviewer → evidence → Refiner loop per branch
//! with the branches running in parallel.

mod keywords;
mod stages;

use std::cmp::Ordering;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embed::Embedder;
use crate::kg::{serialize_subgraph, KgError, KnowledgeGraph};
use crate::lit::{LitError, LiteratureSource};
use crate::llm::{Gateway, LlmCall, LlmError};
use crate::model::{AgentRole, EvidenceBundle, Hypothesis, MetricScores, ModelError, PipelineConfig};
use crate::protocol::{
    parse_critic, parse_hypotheses, parse_refiner, parse_reviewer, render_prompt, ContextError, ParseError,
    PromptContext, PromptKind, RefinementAction, RefinementDirective, RenderedPrompt,
};
use crate::trace::{RunTrace, StepRecord, TraceError};

pub use keywords::{entity_terms, topic_keywords};
pub use stages::{apply_directive, emit_plan, DirectiveContext, DirectiveOutcome};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("configuration: {0}")]
    Config(#[from] ModelError),
    #[error("language model: {0}")]
    Llm(#[from] LlmError),
    #[error("knowledge graph: {0}")]
    Kg(#[from] KgError),
    #[error("literature: {0}")]
    Lit(LitError),
    #[error("{role} reply: {source}")]
    Parse { role: AgentRole, source: ParseError },
    #[error("prompt context: {0}")]
    Context(#[from] ContextError),
    #[error("malformed reply: {0}")]
    Protocol(String),
    #[error("trace: {0}")]
    Trace(#[from] TraceError),
    #[error("branch thread panicked")]
    Panic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Accept,
    Refine,
    Discard,
    Exhaust,
}

/// Accept at or above the threshold; otherwise refine while cycles remain;
/// otherwise keep (Exhaust) at or above the floor, else Discard.
pub fn decide(scores: &MetricScores, cycle: u32, config: &PipelineConfig) -> Decision {
    let overall = scores.overall();
    if overall >= config.accept_threshold {
        Decision::Accept
    } else if cycle < config.max_cycles {
        Decision::Refine
    } else if overall >= config.emit_floor {
        Decision::Exhaust
    } else {
        Decision::Discard
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchStatus {
    Active,
    Accepted,
    Discarded,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchState {
    pub hypothesis: Hypothesis,
    pub evidence: EvidenceBundle,
    pub cycle: u32,
    pub status: BranchStatus,
}

/// Shared read-only services. Every member must be safe to use from
/// several branch threads at once.
#[derive(Clone, Copy)]
pub struct Services<'a> {
    pub gateway: &'a Gateway,
    pub graph: &'a KnowledgeGraph,
    pub embedder: &'a dyn Embedder,
    pub literature: &'a dyn LiteratureSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedOutput {
    pub hypothesis: Hypothesis,
    pub scores: MetricScores,
    pub evidence: EvidenceBundle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreStep {
    pub generation: u32,
    pub overall: u8,
    pub scores: [u8; 4],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchSummary {
    pub branch: usize,
    pub status: BranchStatus,
    pub critic_calls: u32,
    pub refinement_cycles: u32,
    pub best_overall: Option<u8>,
    /// Critic scores for every evaluated generation, in order.
    pub history: Vec<ScoreStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: String,
    pub topic: String,
    pub plan: Option<String>,
    pub outputs: Vec<RankedOutput>,
    pub discarded: Vec<Hypothesis>,
    pub branches: Vec<BranchSummary>,
    pub warnings: Vec<String>,
    pub tokens_in: u64,
    pub tokens_out: u64,
    pub trace_path: Option<PathBuf>,
}

impl RunResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run result serializes")
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub result: RunResult,
    pub steps: Vec<StepRecord>,
}

/// Stable run identifier derived from the topic and seed.
pub fn run_id_for(topic: &str, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(topic.trim().as_bytes());
    h.update([0u8]);
    h.update(seed.to_le_bytes());
    format!("run-{}", &hex::encode(h.finalize())[..16])
}

struct PendingStep {
    role: AgentRole,
    digest: String,
    output: String,
    tokens_in: u64,
    tokens_out: u64,
}

/// Gateway wrapper that buffers one step per agent call. Buffers are
/// flushed to the trace in a fixed order so parallel branches still yield
/// a deterministic trace.
struct Recorder<'a> {
    gateway: &'a Gateway,
    steps: Mutex<Vec<PendingStep>>,
}

impl<'a> Recorder<'a> {
    fn new(gateway: &'a Gateway) -> Self {
        Self {
            gateway,
            steps: Mutex::new(Vec::new()),
        }
    }

    fn flush_into(&self, trace: &RunTrace) -> Result<(), TraceError> {
        let steps = std::mem::take(&mut *self.steps.lock().expect("recorder lock poisoned"));
        for s in steps {
            trace.append_next(s.role, s.digest, s.output, s.tokens_in, s.tokens_out)?;
        }
        Ok(())
    }
}

impl LlmCall for Recorder<'_> {
    fn call(&self, prompt: &RenderedPrompt) -> Result<String, LlmError> {
        let c = self.gateway.complete(prompt)?;
        self.steps.lock().expect("recorder lock poisoned").push(PendingStep {
            role: prompt.role(),
            digest: c.digest,
            output: c.response.text.clone(),
            tokens_in: c.response.tokens_in,
            tokens_out: c.response.tokens_out,
        });
        Ok(c.response.text)
    }
}

struct Shared<'a> {
    topic: &'a str,
    keywords: Vec<String>,
    config: &'a PipelineConfig,
    services: Services<'a>,
    background: String,
    subgraph: Option<crate::kg::Subgraph>,
}

struct BranchOutcome {
    best: Option<(Hypothesis, MetricScores, EvidenceBundle)>,
    summary: BranchSummary,
    warnings: Vec<String>,
}

/// Executes a full generation run. When `trace_dir` is given the trace is
/// written there as `<run_id>.trace.jsonl`; on error the steps recorded so
/// far stay in that file.
pub fn run_pipeline(
    topic: &str,
    config: &PipelineConfig,
    services: Services<'_>,
    trace_dir: Option<&Path>,
) -> Result<RunOutcome, PipelineError> {
    if topic.trim().is_empty() {
        return Err(PipelineError::Input("topic is empty".into()));
    }
    config.validate()?;
    let run_id = run_id_for(topic, config.seed);
    let trace = match trace_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(TraceError::from)?;
            RunTrace::create(&run_id, dir.join(format!("{run_id}.trace.jsonl")))?
        }
        None => RunTrace::in_memory(&run_id),
    };
    let usage_before = services.gateway.usage();
    let mut warnings = Vec::new();

    let head = Recorder::new(services.gateway);
    let prelude = prelude(topic, config, services, &head, &mut warnings);
    head.flush_into(&trace)?;
    let (plan, shared, initial) = prelude?;

    let recorders: Vec<Recorder<'_>> = initial.iter().map(|_| Recorder::new(services.gateway)).collect();
    let outcomes: Vec<Result<BranchOutcome, PipelineError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = initial
            .iter()
            .enumerate()
            .map(|(i, text)| {
                let rec = &recorders[i];
                let shared = &shared;
                scope.spawn(move || run_branch(i + 1, text, shared, rec))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or(Err(PipelineError::Panic)))
            .collect()
    });
    for rec in &recorders {
        rec.flush_into(&trace)?;
    }

    let mut outputs = Vec::new();
    let mut discarded = Vec::new();
    let mut branches = Vec::new();
    for outcome in outcomes {
        let o = outcome?;
        warnings.extend(o.warnings.into_iter().map(|w| format!("branch {}: {w}", o.summary.branch)));
        match (o.summary.status, o.best) {
            (BranchStatus::Accepted | BranchStatus::Exhausted, Some((h, s, e))) => outputs.push(RankedOutput {
                hypothesis: h,
                scores: s,
                evidence: e,
            }),
            (_, Some((h, _, _))) => discarded.push(h),
            (_, None) => {}
        }
        branches.push(o.summary);
    }
    outputs.sort_by(rank_order);
    trace.close()?;
    let (tokens_in, tokens_out) = trace.token_totals();
    let usage = services.gateway.usage();
    debug_assert_eq!(usage.tokens_in - usage_before.tokens_in, tokens_in);
    let result = RunResult {
        run_id,
        topic: topic.trim().to_string(),
        plan,
        outputs,
        discarded,
        branches,
        warnings,
        tokens_in,
        tokens_out,
        trace_path: trace.path().map(Path::to_path_buf),
    };
    Ok(RunOutcome {
        result,
        steps: trace.records(),
    })
}

fn rank_order(a: &RankedOutput, b: &RankedOutput) -> Ordering {
    b.scores
        .overall()
        .cmp(&a.scores.overall())
        .then(a.hypothesis.generation.cmp(&b.hypothesis.generation))
        .then_with(|| a.hypothesis.id.cmp(&b.hypothesis.id))
}

type Prelude<'a> = (Option<String>, Shared<'a>, Vec<String>);

fn prelude<'a>(
    topic: &'a str,
    config: &'a PipelineConfig,
    services: Services<'a>,
    llm: &Recorder<'_>,
    warnings: &mut Vec<String>,
) -> Result<Prelude<'a>, PipelineError> {
    let plan = if config.emit_plan {
        match emit_plan(topic, llm) {
            Ok(p) => Some(p),
            Err(e) => {
                warnings.push(format!("planner step skipped: {e}"));
                None
            }
        }
    } else {
        None
    };
    let keywords = topic_keywords(topic);
    if keywords.is_empty() {
        return Err(PipelineError::Input("topic has no content words".into()));
    }
    let bg = stages::build_background(topic, &keywords, config, &services, llm)?;
    warnings.extend(bg.warnings);
    let (subgraph, w) = stages::explore(
        &keywords,
        &bg.text,
        config.kg.depth,
        &None,
        config,
        &services,
        llm,
    )?;
    warnings.extend(w);
    let sg_text = serialize_subgraph(&subgraph);
    let prompt = render_prompt(
        &PromptContext::new(PromptKind::Scientist)
            .background(&bg.text)
            .subgraph_text(&sg_text),
    )?;
    let reply = llm.call(&prompt)?;
    let parsed = parse_hypotheses(&reply).map_err(|source| PipelineError::Parse {
        role: AgentRole::Scientist,
        source,
    })?;
    warnings.extend(parsed.warnings);
    let mut initial = parsed.value;
    if initial.len() > config.n_initial_hypotheses {
        warnings.push(format!(
            "scientist proposed {} hypotheses; keeping {}",
            initial.len(),
            config.n_initial_hypotheses
        ));
        initial.truncate(config.n_initial_hypotheses);
    }
    let shared = Shared {
        topic,
        keywords,
        config,
        services,
        background: bg.text,
        subgraph: (!subgraph.is_empty()).then_some(subgraph),
    };
    Ok((plan, shared, initial))
}

fn run_branch(branch: usize, text: &str, shared: &Shared<'_>, llm: &Recorder<'_>) -> Result<BranchOutcome, PipelineError> {
    let config = shared.config;
    let mut evidence = EvidenceBundle {
        background: Some(shared.background.clone()),
        ..Default::default()
    };
    if let Some(sg) = &shared.subgraph {
        evidence.merge_subgraph(sg.clone());
    }
    let mut state = BranchState {
        hypothesis: Hypothesis::initial(format!("b{branch}-g0"), text.trim()),
        evidence,
        cycle: 0,
        status: BranchStatus::Active,
    };
    let mut warnings = Vec::new();
    let mut best: Option<(Hypothesis, MetricScores, EvidenceBundle)> = None;
    let mut summary = BranchSummary {
        branch,
        status: BranchStatus::Active,
        critic_calls: 0,
        refinement_cycles: 0,
        best_overall: None,
        history: Vec::new(),
    };

    let halted = |e: &PipelineError| matches!(e, PipelineError::Llm(LlmError::BudgetExhausted { .. }));

    loop {
        match stages::evaluation_search(&mut state, &shared.keywords, config, &shared.services, llm) {
            Ok(w) => warnings.extend(w),
            Err(e) if halted(&e) => {
                warnings.push(e.to_string());
                break;
            }
            Err(PipelineError::Llm(e)) => return Err(PipelineError::Llm(e)),
            Err(e) => warnings.push(format!("evaluation search failed: {e}")),
        }
        let critic_prompt = render_prompt(
            &PromptContext::new(PromptKind::Critic)
                .hypothesis(&state.hypothesis.text)
                .background(state.evidence.background.as_deref().unwrap_or_default())
                .evidence(stages::evidence_text(&state)),
        )?;
        let critique = match llm.call(&critic_prompt) {
            Ok(c) => c,
            Err(e @ LlmError::BudgetExhausted { .. }) => {
                warnings.push(e.to_string());
                break;
            }
            Err(e) => return Err(e.into()),
        };
        summary.critic_calls += 1;
        let assessment = match parse_critic(&critique) {
            Ok(a) => a,
            Err(e) => {
                warnings.push(format!("critic reply unusable, branch stopped: {e}"));
                break;
            }
        };
        state.hypothesis.scores = Some(assessment.scores);
        state.hypothesis.rationale = assessment.rationales.clone();
        summary.history.push(ScoreStep {
            generation: state.hypothesis.generation,
            overall: assessment.scores.overall(),
            scores: assessment.scores.as_array(),
        });
        // ties go to the later version
        if best
            .as_ref()
            .map_or(true, |(_, s, _)| assessment.scores.overall() >= s.overall())
        {
            best = Some((state.hypothesis.clone(), assessment.scores, state.evidence.clone()));
        }

        match decide(&assessment.scores, state.cycle, config) {
            Decision::Accept => {
                state.status = BranchStatus::Accepted;
                break;
            }
            Decision::Exhaust | Decision::Discard => break,
            Decision::Refine => {}
        }

        let review_prompt = render_prompt(
            &PromptContext::new(PromptKind::Reviewer)
                .critic_feedback(&critique)
                .hypothesis(&state.hypothesis.text)
                .background(state.evidence.background.as_deref().unwrap_or_default()),
        )?;
        let review = match llm.call(&review_prompt) {
            Ok(r) => r,
            Err(e) if matches!(e, LlmError::BudgetExhausted { .. }) => {
                warnings.push(e.to_string());
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let directive = parse_reviewer(&review).unwrap_or_else(|e| {
            warnings.push(format!("reviewer reply unusable ({e}); searching literature"));
            RefinementDirective {
                actions: [RefinementAction::Literature].into_iter().collect(),
                depth_override: None,
                rels_override: None,
            }
        });
        let dctx = DirectiveContext {
            topic: shared.topic,
            keywords: &shared.keywords,
            critic_feedback: &critique,
            config,
            services: &shared.services,
            llm,
        };
        let outcome = match apply_directive(&directive, &mut state, &dctx) {
            Ok(o) => o,
            Err(e) if halted(&e) => {
                warnings.push(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        };
        warnings.extend(outcome.warnings);

        let mut refine_ctx = PromptContext::new(PromptKind::Refiner)
            .hypothesis(&state.hypothesis.text)
            .critic_feedback(&critique)
            .new_information(&outcome.new_information);
        if let Some(bg) = state.evidence.background.as_deref() {
            refine_ctx = refine_ctx.background(bg);
        }
        let refined = match llm.call(&render_prompt(&refine_ctx)?) {
            Ok(r) => r,
            Err(e) if matches!(e, LlmError::BudgetExhausted { .. }) => {
                warnings.push(e.to_string());
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let parsed = match parse_refiner(&refined) {
            Ok(p) => p,
            Err(e) => {
                warnings.push(format!("refiner reply unusable, branch stopped: {e}"));
                break;
            }
        };
        warnings.extend(parsed.warnings);
        state.cycle += 1;
        summary.refinement_cycles = state.cycle;
        let next_id = format!("b{branch}-g{}", state.hypothesis.generation + 1);
        state.hypothesis = Hypothesis::refined_from(&state.hypothesis, next_id, parsed.value.refined_hypothesis);
    }

    if state.status != BranchStatus::Accepted {
        state.status = match &best {
            Some((_, s, _)) if s.overall() >= config.emit_floor => BranchStatus::Exhausted,
            _ => BranchStatus::Discarded,
        };
    }
    summary.status = state.status;
    summary.best_overall = best.as_ref().map(|(_, s, _)| s.overall());
    Ok(BranchOutcome {
        best,
        summary,
        warnings,
    })
}
