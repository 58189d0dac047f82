//! Literature evidence: LLM-planned boolean query strategies, a relaxation
//! ladder for low recall, PubMed E-utilities and in-memory sources, and the
//! background summary.

mod corpus;
mod eutils;

use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{LlmCall, LlmError};
use crate::model::LiteratureRecord;
use crate::protocol::{format_article_blocks, render_prompt, Parsed, PromptContext, PromptKind};

pub use corpus::InMemoryCorpus;
pub use eutils::{
    EutilsClient, GetTransport, RecordingTransport, ReplayTransport, UreqGetTransport, ENV_NCBI_KEY,
};

pub const BACKGROUND_WORD_LIMIT: usize = 150;

#[derive(Debug, Error)]
pub enum LitError {
    #[error("malformed reply: {0}")]
    Protocol(String),
    #[error("transport failed after {attempts} attempt(s): {last}")]
    Transport { attempts: u32, last: String },
    #[error("E-utilities returned HTTP {status}")]
    Http { status: u16 },
    #[error("relaxation ladder exhausted at stage {0}")]
    Exhausted(u32),
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SearchMode {
    Background,
    Evaluation,
    Revision,
}

impl SearchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SearchMode::Background => "background",
            SearchMode::Evaluation => "evaluation",
            SearchMode::Revision => "revision",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Field {
    Mesh,
    Tiab,
    Any,
}

impl Field {
    fn qualifier(self) -> &'static str {
        match self {
            Field::Mesh => "[MeSH Terms]",
            Field::Tiab => "[Title/Abstract]",
            Field::Any => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermGroup {
    pub terms: Vec<String>,
    pub field: Field,
}

/// Terms are ORed inside a group; groups are ANDed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryStrategy {
    pub groups: Vec<TermGroup>,
    pub min_date: Option<NaiveDate>,
    pub max_date: Option<NaiveDate>,
    pub retmax: usize,
}

impl QueryStrategy {
    pub fn validate(&self) -> Result<(), LitError> {
        if self.groups.is_empty() {
            return Err(LitError::Input("strategy has no term groups".into()));
        }
        if self.groups.iter().any(|g| g.terms.is_empty()) {
            return Err(LitError::Input("strategy has an empty term group".into()));
        }
        if let (Some(lo), Some(hi)) = (self.min_date, self.max_date) {
            if lo > hi {
                return Err(LitError::Input(format!("min_date {lo} after max_date {hi}")));
            }
        }
        Ok(())
    }

    /// Boolean query with PubMed field qualifiers; multi-word terms quoted.
    pub fn render(&self) -> String {
        self.groups
            .iter()
            .map(|g| {
                let terms: Vec<String> = g
                    .terms
                    .iter()
                    .map(|t| {
                        let t = t.replace('"', "");
                        if t.contains(char::is_whitespace) {
                            format!("\"{t}\"{}", g.field.qualifier())
                        } else {
                            format!("{t}{}", g.field.qualifier())
                        }
                    })
                    .collect();
                format!("({})", terms.join(" OR "))
            })
            .collect::<Vec<_>>()
            .join(" AND ")
    }

    pub fn admits_date(&self, date: NaiveDate) -> bool {
        self.min_date.map_or(true, |lo| date >= lo) && self.max_date.map_or(true, |hi| date <= hi)
    }
}

impl fmt::Display for QueryStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Deserialize)]
struct WireGroup {
    terms: Vec<String>,
    #[serde(default = "default_field")]
    field: Field,
}

fn default_field() -> Field {
    Field::Any
}

#[derive(Deserialize)]
struct WireStrategy {
    groups: Vec<WireGroup>,
    #[serde(default)]
    min_date: Option<String>,
    #[serde(default)]
    max_date: Option<String>,
    #[serde(default)]
    retmax: Option<usize>,
}

/// Parses `YYYY/MM/DD`, `YYYY-MM-DD`, `YYYY/MM` or `YYYY`. Partial dates
/// resolve to the start of the period when `end` is false and to its last
/// day otherwise.
pub fn parse_partial_date(text: &str, end: bool) -> Option<NaiveDate> {
    let parts: Vec<&str> = text.trim().split(['/', '-']).collect();
    let year: i32 = parts.first()?.parse().ok()?;
    let month: Option<u32> = match parts.get(1) {
        Some(m) => Some(m.parse().ok()?),
        None => None,
    };
    let day: Option<u32> = match parts.get(2) {
        Some(d) => Some(d.parse().ok()?),
        None => None,
    };
    if parts.len() > 3 {
        return None;
    }
    match (month, day) {
        (Some(m), Some(d)) => NaiveDate::from_ymd_opt(year, m, d),
        (Some(m), None) if end => last_day_of_month(year, m),
        (Some(m), None) => NaiveDate::from_ymd_opt(year, m, 1),
        (None, _) if end => NaiveDate::from_ymd_opt(year, 12, 31),
        (None, _) => NaiveDate::from_ymd_opt(year, 1, 1),
    }
}

pub(crate) fn last_day_of_month(year: i32, month: u32) -> Option<NaiveDate> {
    let first_next = if month == 12 {
        NaiveDate::from_ymd_opt(year + 1, 1, 1)?
    } else {
        NaiveDate::from_ymd_opt(year, month + 1, 1)?
    };
    first_next.pred_opt().filter(|d| d.month() == month)
}

/// Parses the query planner's JSON reply. The upper date bound is clamped
/// to `cutoff`; a lower bound after the cutoff is an error.
pub fn parse_strategy(
    reply: &str,
    cutoff: Option<NaiveDate>,
    default_retmax: usize,
) -> Result<Parsed<QueryStrategy>, LitError> {
    let wire: WireStrategy = serde_json::from_str(reply.trim())
        .map_err(|e| LitError::Protocol(format!("query planner reply is not a strategy object: {e}")))?;
    let mut warnings = Vec::new();
    let mut groups = Vec::new();
    for g in wire.groups {
        let terms: Vec<String> = g
            .terms
            .into_iter()
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty())
            .collect();
        if terms.is_empty() {
            warnings.push("empty term group dropped".to_string());
            continue;
        }
        groups.push(TermGroup { terms, field: g.field });
    }
    if groups.is_empty() {
        return Err(LitError::Protocol("query planner produced no terms".into()));
    }
    let date = |s: Option<String>, end: bool| -> Result<Option<NaiveDate>, LitError> {
        match s.as_deref().map(str::trim) {
            None | Some("") => Ok(None),
            Some(t) => parse_partial_date(t, end)
                .map(Some)
                .ok_or_else(|| LitError::Protocol(format!("unparseable date '{t}'"))),
        }
    };
    let min_date = date(wire.min_date, false)?;
    let mut max_date = date(wire.max_date, true)?;
    if let Some(cut) = cutoff {
        if min_date.is_some_and(|lo| lo > cut) {
            return Err(LitError::Input(format!(
                "planner min_date {} is after the temporal cutoff {cut}",
                min_date.expect("checked")
            )));
        }
        if max_date.map_or(true, |hi| hi > cut) {
            if max_date.is_some() {
                warnings.push(format!("max_date clamped to cutoff {cut}"));
            }
            max_date = Some(cut);
        }
    }
    let strategy = QueryStrategy {
        groups,
        min_date,
        max_date,
        retmax: wire.retmax.filter(|&r| r > 0).unwrap_or(default_retmax),
    };
    strategy.validate()?;
    Ok(Parsed {
        value: strategy,
        warnings,
    })
}

/// Context needed by the query planner for each search mode.
#[derive(Debug, Clone, Default)]
pub struct PlanContext<'a> {
    pub hypothesis: Option<&'a str>,
    pub feedback: Option<&'a str>,
    pub cutoff: Option<NaiveDate>,
    pub retmax: usize,
}

pub fn plan_queries(
    keywords: &[String],
    mode: SearchMode,
    ctx: &PlanContext<'_>,
    llm: &dyn LlmCall,
) -> Result<Parsed<QueryStrategy>, LitError> {
    if keywords.is_empty() {
        return Err(LitError::Input("no keywords to plan a search from".into()));
    }
    let mut pc = PromptContext::new(PromptKind::QueryPlanner)
        .keywords(keywords.iter().cloned())
        .search_mode(mode);
    if let Some(h) = ctx.hypothesis {
        pc = pc.hypothesis(h);
    }
    if let Some(f) = ctx.feedback {
        pc = pc.critic_feedback(f);
    }
    let prompt = render_prompt(&pc).map_err(|e| LitError::Input(e.to_string()))?;
    let reply = llm.call(&prompt)?;
    parse_strategy(&reply, ctx.cutoff, ctx.retmax.max(1))
}

/// Relaxation ladder, applied cumulatively: 1 widens every field to ANY,
/// 2 merges the two smallest groups, 3 drops the smallest remaining group
/// (never the last). Date bounds are kept. Stages past 3 signal exhaustion.
pub fn relax(original: &QueryStrategy, stage: u32) -> Result<QueryStrategy, LitError> {
    if stage == 0 {
        return Err(LitError::Input("relaxation stages start at 1".into()));
    }
    if stage > 3 {
        return Err(LitError::Exhausted(stage));
    }
    let mut s = original.clone();
    for g in &mut s.groups {
        g.field = Field::Any;
    }
    if stage >= 2 && s.groups.len() >= 2 {
        let (a, b) = two_smallest(&s.groups);
        let absorbed = s.groups.remove(b);
        for t in absorbed.terms {
            if !s.groups[a].terms.contains(&t) {
                s.groups[a].terms.push(t);
            }
        }
    }
    if stage >= 3 && s.groups.len() >= 2 {
        let (a, _) = two_smallest(&s.groups);
        s.groups.remove(a);
    }
    Ok(s)
}

/// Indices (ascending) of the two groups with fewest terms; earlier groups
/// win ties. The first index returned is the smaller group's.
fn two_smallest(groups: &[TermGroup]) -> (usize, usize) {
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by_key(|&i| (groups[i].terms.len(), i));
    let (x, y) = (order[0], order[1]);
    (x.min(y), x.max(y))
}

pub trait LiteratureSource: Send + Sync {
    fn search(&self, strategy: &QueryStrategy) -> Result<Vec<LiteratureRecord>, LitError>;
}

/// Runs one strategy and re-applies its date bounds and `retmax` locally.
pub fn execute_search(
    strategy: &QueryStrategy,
    source: &dyn LiteratureSource,
) -> Result<Parsed<Vec<LiteratureRecord>>, LitError> {
    strategy.validate()?;
    let mut warnings = Vec::new();
    let raw = source.search(strategy)?;
    let mut kept = Vec::with_capacity(raw.len());
    for r in raw {
        if strategy.admits_date(r.pub_date) {
            kept.push(r);
        } else {
            warnings.push(format!("PMID {} dated {} outside the query range; dropped", r.pmid, r.pub_date));
        }
    }
    kept.truncate(strategy.retmax);
    Ok(Parsed { value: kept, warnings })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub records: Vec<LiteratureRecord>,
    /// Relaxation stage that produced `records` (0 = original strategy).
    pub stage: u32,
    pub queries: Vec<String>,
    pub warnings: Vec<String>,
}

/// Executes `strategy`, walking the relaxation ladder while fewer than
/// `min_hits` records come back.
pub fn search_with_relaxation(
    strategy: &QueryStrategy,
    source: &dyn LiteratureSource,
    min_hits: usize,
) -> Result<SearchOutcome, LitError> {
    let mut queries = vec![strategy.render()];
    let mut first = execute_search(strategy, source)?;
    let mut warnings = std::mem::take(&mut first.warnings);
    let mut records = first.value;
    let mut stage = 0;
    while records.len() < min_hits {
        let next = match relax(strategy, stage + 1) {
            Ok(s) => s,
            Err(LitError::Exhausted(_)) => {
                warnings.push(format!(
                    "only {} record(s) after relaxing to stage {stage}",
                    records.len()
                ));
                break;
            }
            Err(e) => return Err(e),
        };
        stage += 1;
        queries.push(next.render());
        let mut out = execute_search(&next, source)?;
        warnings.append(&mut out.warnings);
        records = out.value;
    }
    Ok(SearchOutcome {
        records,
        stage,
        queries,
        warnings,
    })
}

pub fn summarize_background(
    records: &[LiteratureRecord],
    keywords: &[String],
    llm: &dyn LlmCall,
) -> Result<Parsed<String>, LitError> {
    if records.is_empty() {
        return Err(LitError::Input("no literature records to summarize".into()));
    }
    if keywords.is_empty() {
        return Err(LitError::Input("no core entities given".into()));
    }
    let prompt = render_prompt(
        &PromptContext::new(PromptKind::Background)
            .keywords(keywords.iter().cloned())
            .literature(format_article_blocks(records)),
    )
    .map_err(|e| LitError::Input(e.to_string()))?;
    let reply = llm.call(&prompt)?;
    let text = reply.trim();
    if text.is_empty() {
        return Err(LitError::Protocol("background agent returned an empty reply".into()));
    }
    let mut warnings = Vec::new();
    let words = text.split_whitespace().count();
    if words > BACKGROUND_WORD_LIMIT {
        warnings.push(format!("background runs to {words} words (limit {BACKGROUND_WORD_LIMIT})"));
    }
    Ok(Parsed {
        value: text.to_string(),
        warnings,
    })
}
