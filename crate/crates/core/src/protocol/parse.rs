//! Strict parsers for agent and evaluator replies.
//!
//! Metric lines are matched by name rather than position. A reason or
//! rationale belongs to every metric on the line it trails, and to the
//! following lines up to the next metric line; the overall-score line is cut
//! out before attachment.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Metric, MetricScores, METRIC_MAX};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty reply")]
    Empty,
    #[error("missing score for {0}")]
    MissingMetric(Metric),
    #[error("missing rationale for {0}")]
    MissingRationale(Metric),
    #[error("missing `Overall Score: <value>/20` line")]
    MissingOverall,
    #[error("{metric} value {value} outside 0..={max}")]
    Range { metric: Metric, value: i64, max: u8 },
    #[error("stated overall {stated} does not equal metric sum {sum}")]
    Consistency { stated: i64, sum: u8 },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("unrecognized token `{token}` for {field}")]
    Token { field: String, token: String },
    #[error("no hypotheses in reply")]
    NoHypotheses,
    #[error("refiner reply needs reasoning steps before the hypothesis")]
    NoReasoning,
    #[error("no recognizable relation label: {0}")]
    Relation(String),
    #[error("scale maximum must be 3 or 5, got {0}")]
    Scale(u8),
}

/// A parsed value plus non-fatal notes about how the reply deviated from
/// the requested format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parsed<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

impl<T> Parsed<T> {
    fn clean(value: T) -> Self {
        Self {
            value,
            warnings: Vec::new(),
        }
    }
}

fn require_text(text: &str) -> Result<(), ParseError> {
    if text.trim().is_empty() {
        Err(ParseError::Empty)
    } else {
        Ok(())
    }
}

// --- metric line scanning -------------------------------------------------

const METRIC_NAMES: &str = r"(?i)\b(novelty|relevance|significance|verifiability)\b[\s*_]*:[\s*_]*";

fn score_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(&format!(r"{METRIC_NAMES}(?:score\s*:?\s*)?(-?\d+)")).unwrap())
}

fn verdict_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(&format!(r#"{METRIC_NAMES}"?([A-Za-z0-9]+)"?"#)).unwrap())
}

fn overall_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)overall\s+score\s*:?\s*\**\s*(-?\d+)\s*/\s*20").unwrap())
}

struct MetricScan {
    values: BTreeMap<Metric, String>,
    reasons: BTreeMap<Metric, String>,
}

fn trim_separators(s: &str) -> &str {
    s.trim_start_matches(|c: char| c.is_whitespace() || ".;,:-\u{2013}\u{2014}*|".contains(c) || c == '…')
        .trim_end()
}

fn scan_metrics(text: &str, re: &Regex) -> MetricScan {
    let mut values = BTreeMap::new();
    let mut reasons: BTreeMap<Metric, String> = BTreeMap::new();
    // metrics waiting for reason lines that follow their score line
    let mut open: Vec<Metric> = Vec::new();

    for line in text.lines() {
        let hits: Vec<_> = re.captures_iter(line).collect();
        if hits.is_empty() {
            let extra = trim_separators(line);
            if !extra.is_empty() {
                for m in &open {
                    let r = reasons.entry(*m).or_default();
                    if !r.is_empty() {
                        r.push(' ');
                    }
                    r.push_str(extra);
                }
            }
            continue;
        }
        open.clear();
        let mut last_end = 0;
        for cap in &hits {
            let metric: Metric = cap[1].parse().expect("regex only matches metric names");
            last_end = cap.get(0).unwrap().end();
            if values.contains_key(&metric) {
                continue;
            }
            values.insert(metric, cap[2].to_string());
            open.push(metric);
        }
        let tail = trim_separators(&line[last_end..]);
        if !tail.is_empty() {
            for m in &open {
                reasons.insert(*m, tail.to_string());
            }
        }
    }
    MetricScan { values, reasons }
}

// --- critic ---------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CriticAssessment {
    pub scores: MetricScores,
    /// In [`Metric::ALL`] order.
    pub rationales: Vec<(Metric, String)>,
    pub stated_overall: u8,
}

pub fn parse_critic(text: &str) -> Result<CriticAssessment, ParseError> {
    require_text(text)?;
    let mut stated = None;
    for cap in overall_re().captures_iter(text) {
        stated = Some(cap[1].parse::<i64>().map_err(|_| ParseError::MissingOverall)?);
    }
    let body = overall_re().replace_all(text, "\n");
    let scan = scan_metrics(&body, score_re());

    let mut values = [0u8; 4];
    for m in Metric::ALL {
        let raw = scan.values.get(&m).ok_or(ParseError::MissingMetric(m))?;
        let v: i64 = raw.parse().map_err(|_| ParseError::MissingMetric(m))?;
        if !(0..=i64::from(METRIC_MAX)).contains(&v) {
            return Err(ParseError::Range {
                metric: m,
                value: v,
                max: METRIC_MAX,
            });
        }
        values[m.index()] = v as u8;
    }
    let mut rationales = Vec::with_capacity(4);
    for m in Metric::ALL {
        let r = scan.reasons.get(&m).ok_or(ParseError::MissingRationale(m))?;
        rationales.push((m, r.clone()));
    }
    let scores = MetricScores::from_array(values).expect("range checked above");
    let stated = stated.ok_or(ParseError::MissingOverall)?;
    if stated != i64::from(scores.overall()) {
        return Err(ParseError::Consistency {
            stated,
            sum: scores.overall(),
        });
    }
    Ok(CriticAssessment {
        scores,
        rationales,
        stated_overall: stated as u8,
    })
}

// --- reviewer -------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RefinementAction {
    /// Knowledge-graph query, wire token `neo4j`.
    Kg,
    /// Literature search, wire token `pubmed`.
    Literature,
    /// Re-run background synthesis, wire token `background`.
    Background,
}

impl RefinementAction {
    pub fn wire_token(self) -> &'static str {
        match self {
            RefinementAction::Kg => "neo4j",
            RefinementAction::Literature => "pubmed",
            RefinementAction::Background => "background",
        }
    }

    pub fn from_wire(token: &str) -> Option<Self> {
        match token {
            "neo4j" => Some(RefinementAction::Kg),
            "pubmed" => Some(RefinementAction::Literature),
            "background" => Some(RefinementAction::Background),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementDirective {
    pub actions: BTreeSet<RefinementAction>,
    pub depth_override: Option<usize>,
    pub rels_override: Option<Vec<String>>,
}

impl fmt::Display for RefinementDirective {
    /// The three-line wire form accepted by [`parse_reviewer`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let actions: Vec<_> = self.actions.iter().map(|a| a.wire_token()).collect();
        writeln!(f, "ACTIONS:{}", actions.join(","))?;
        match self.depth_override {
            Some(d) => writeln!(f, "DEPTH_OVERRIDE:{d}")?,
            None => writeln!(f, "DEPTH_OVERRIDE:")?,
        }
        write!(
            f,
            "RELS_OVERRIDE:{}",
            self.rels_override.as_deref().unwrap_or_default().join(",")
        )
    }
}

fn keyed_value<'a>(line: &'a str, key: &str) -> Result<&'a str, ParseError> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(':'))
        .map(str::trim)
        .ok_or_else(|| ParseError::Protocol(format!("expected `{key}:` line, got `{line}`")))
}

pub fn parse_reviewer(text: &str) -> Result<RefinementDirective, ParseError> {
    require_text(text)?;
    let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    if lines.len() != 3 {
        return Err(ParseError::Protocol(format!(
            "expected exactly 3 lines, got {}",
            lines.len()
        )));
    }
    let mut actions = BTreeSet::new();
    for token in keyed_value(lines[0], "ACTIONS")?
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
    {
        let action = RefinementAction::from_wire(token).ok_or_else(|| ParseError::Token {
            field: "ACTIONS".into(),
            token: token.into(),
        })?;
        actions.insert(action);
    }
    if actions.is_empty() {
        return Err(ParseError::Protocol("ACTIONS lists no action".into()));
    }
    let depth_raw = keyed_value(lines[1], "DEPTH_OVERRIDE")?;
    let depth_override = if depth_raw.is_empty() {
        None
    } else {
        match depth_raw.parse::<usize>() {
            Ok(d) if d >= 1 => Some(d),
            _ => {
                return Err(ParseError::Token {
                    field: "DEPTH_OVERRIDE".into(),
                    token: depth_raw.into(),
                })
            }
        }
    };
    let rels: Vec<String> = keyed_value(lines[2], "RELS_OVERRIDE")?
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect();
    Ok(RefinementDirective {
        actions,
        depth_override,
        rels_override: (!rels.is_empty()).then_some(rels),
    })
}

// --- scientist / refiner --------------------------------------------------

pub const MAX_HYPOTHESES: usize = 3;
pub const MAX_REASONING_STEPS: usize = 4;

pub fn parse_hypotheses(text: &str) -> Result<Parsed<Vec<String>>, ParseError> {
    let mut lines: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if lines.is_empty() {
        return Err(ParseError::NoHypotheses);
    }
    let mut out = Parsed::clean(Vec::new());
    if lines.len() > MAX_HYPOTHESES {
        out.warnings.push(format!(
            "scientist returned {} hypotheses; keeping the first {MAX_HYPOTHESES}",
            lines.len()
        ));
        lines.truncate(MAX_HYPOTHESES);
    }
    out.value = lines;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefinerOutput {
    pub reasoning_steps: Vec<String>,
    pub refined_hypothesis: String,
}

pub fn parse_refiner(text: &str) -> Result<Parsed<RefinerOutput>, ParseError> {
    require_text(text)?;
    let mut lines: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    if lines.len() < 2 {
        return Err(ParseError::NoReasoning);
    }
    let refined_hypothesis = lines.pop().expect("at least two lines");
    let mut out = Parsed::clean(RefinerOutput {
        reasoning_steps: lines,
        refined_hypothesis,
    });
    let n = out.value.reasoning_steps.len();
    if n > MAX_REASONING_STEPS {
        out.warnings.push(format!(
            "refiner gave {n} reasoning steps (expected 1-{MAX_REASONING_STEPS})"
        ));
    }
    Ok(out)
}

// --- evaluators -----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Winner {
    First,
    Second,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairwiseVerdict {
    /// Indexed by [`Metric::index`].
    pub winners: [Winner; 4],
    pub reasons: [String; 4],
}

impl PairwiseVerdict {
    pub fn winner(&self, metric: Metric) -> Winner {
        self.winners[metric.index()]
    }
}

pub fn parse_pairwise(text: &str) -> Result<PairwiseVerdict, ParseError> {
    require_text(text)?;
    let scan = scan_metrics(text, verdict_re());
    let mut winners = [Winner::Tie; 4];
    let mut reasons: [String; 4] = Default::default();
    for m in Metric::ALL {
        let token = scan.values.get(&m).ok_or(ParseError::MissingMetric(m))?;
        winners[m.index()] = match token.as_str() {
            "A" => Winner::First,
            "B" => Winner::Second,
            "0" => Winner::Tie,
            other => {
                return Err(ParseError::Token {
                    field: m.name().into(),
                    token: other.into(),
                })
            }
        };
    }
    for m in Metric::ALL {
        reasons[m.index()] = scan
            .reasons
            .get(&m)
            .cloned()
            .ok_or(ParseError::MissingRationale(m))?;
    }
    Ok(PairwiseVerdict { winners, reasons })
}

/// Direct-evaluator scores indexed by [`Metric::index`].
pub fn parse_direct(text: &str, scale_max: u8) -> Result<[u8; 4], ParseError> {
    if !matches!(scale_max, 3 | 5) {
        return Err(ParseError::Scale(scale_max));
    }
    require_text(text)?;
    let scan = scan_metrics(text, score_re());
    let mut out = [0u8; 4];
    for m in Metric::ALL {
        let raw = scan.values.get(&m).ok_or(ParseError::MissingMetric(m))?;
        let v: i64 = raw.parse().map_err(|_| ParseError::MissingMetric(m))?;
        if !(0..=i64::from(scale_max)).contains(&v) {
            return Err(ParseError::Range {
                metric: m,
                value: v,
                max: scale_max,
            });
        }
        out[m.index()] = v as u8;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Positive,
    Negative,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Positive => "positive",
            Relation::Negative => "negative",
        }
    }
}

impl std::str::FromStr for Relation {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_relation(s)
    }
}

fn relation_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(positive|stimulate|negative|inhibit)\b").unwrap())
}

fn no_relation_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bno[\s_-]+relation\b").unwrap())
}

pub fn parse_relation(text: &str) -> Result<Relation, ParseError> {
    require_text(text)?;
    if no_relation_re().is_match(text) {
        return Err(ParseError::Relation("`no relation` is not a supported class".into()));
    }
    let found: BTreeSet<Relation> = relation_re()
        .captures_iter(text)
        .map(|c| match c[1].to_ascii_lowercase().as_str() {
            "positive" | "stimulate" => Relation::Positive,
            _ => Relation::Negative,
        })
        .collect();
    match found.len() {
        1 => Ok(*found.iter().next().unwrap()),
        0 => Err(ParseError::Relation(text.trim().chars().take(60).collect())),
        _ => Err(ParseError::Relation("reply names both polarities".into())),
    }
}
