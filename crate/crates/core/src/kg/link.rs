use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{EntityNode, KgError, KnowledgeGraph};
use crate::embed::{cosine_similarity, norm, Embedder};
use crate::protocol::Parsed;

pub const MIN_SELECTED: usize = 5;
pub const MAX_SELECTED: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkCandidate {
    pub keyword: String,
    pub node: EntityNode,
    pub similarity: f64,
}

/// Node-name embeddings computed once per graph. Nodes whose names embed to
/// the zero vector cannot be ranked and are left out.
pub struct EntityIndex<'e> {
    embedder: &'e dyn Embedder,
    entries: Vec<(EntityNode, Vec<f64>)>,
}

impl<'e> EntityIndex<'e> {
    pub fn build(graph: &KnowledgeGraph, embedder: &'e dyn Embedder) -> Result<Self, KgError> {
        let mut entries = Vec::with_capacity(graph.node_count());
        for node in graph.nodes() {
            if node.name.trim().is_empty() {
                continue;
            }
            let v = embedder.embed(&node.name)?;
            if norm(&v) > 0.0 {
                entries.push((node.clone(), v));
            }
        }
        Ok(Self { embedder, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Top-`k` nodes for one keyword by cosine similarity, ties broken by
    /// ascending node id.
    pub fn link(&self, keyword: &str, k: usize) -> Result<Vec<LinkCandidate>, KgError> {
        if k == 0 {
            return Err(KgError::ZeroK);
        }
        if keyword.trim().is_empty() {
            return Err(KgError::EmptyKeyword);
        }
        let q = self.embedder.embed(keyword)?;
        if norm(&q) == 0.0 {
            return Ok(Vec::new());
        }
        let mut scored = Vec::with_capacity(self.entries.len());
        for (node, v) in &self.entries {
            scored.push((cosine_similarity(&q, v)?, node));
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.node_id.cmp(&b.1.node_id)));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(similarity, node)| LinkCandidate {
                keyword: keyword.to_string(),
                node: node.clone(),
                similarity,
            })
            .collect())
    }
}

/// Links each keyword to its top-`k` graph nodes.
pub fn link_keywords(
    graph: &KnowledgeGraph,
    keywords: &[String],
    embedder: &dyn Embedder,
    k: usize,
) -> Result<Vec<Vec<LinkCandidate>>, KgError> {
    if k == 0 {
        return Err(KgError::ZeroK);
    }
    if keywords.iter().any(|kw| kw.trim().is_empty()) {
        return Err(KgError::EmptyKeyword);
    }
    let index = EntityIndex::build(graph, embedder)?;
    keywords.iter().map(|kw| index.link(kw, k)).collect()
}

/// Parses the explorer's JSON array of node names against the candidate
/// set. Unknown and repeated names are dropped with a warning; selections
/// outside 5 to 10 are kept (truncated above 10) with a warning.
pub fn parse_selection(reply: &str, candidates: &[EntityNode]) -> Result<Parsed<Vec<EntityNode>>, KgError> {
    let names: Vec<String> = serde_json::from_str(reply.trim())
        .map_err(|e| KgError::Selection(format!("reply is not a JSON array of strings: {e}")))?;
    let mut warnings = Vec::new();
    let mut chosen: Vec<EntityNode> = Vec::new();
    let mut seen = HashSet::new();
    for name in names {
        let hit = candidates
            .iter()
            .find(|c| c.name == name)
            .or_else(|| candidates.iter().find(|c| c.name.eq_ignore_ascii_case(&name)));
        match hit {
            Some(node) if seen.insert(node.node_id.clone()) => chosen.push(node.clone()),
            Some(_) => warnings.push(format!("duplicate selection '{name}' ignored")),
            None => warnings.push(format!("selected name '{name}' is not a candidate; dropped")),
        }
    }
    if chosen.is_empty() {
        return Err(KgError::Selection("no candidate nodes selected".into()));
    }
    if chosen.len() > MAX_SELECTED {
        warnings.push(format!(
            "{} nodes selected; keeping the first {MAX_SELECTED}",
            chosen.len()
        ));
        chosen.truncate(MAX_SELECTED);
    } else if chosen.len() < MIN_SELECTED {
        warnings.push(format!(
            "only {} nodes selected (expected {MIN_SELECTED}-{MAX_SELECTED})",
            chosen.len()
        ));
    }
    Ok(Parsed {
        value: chosen,
        warnings,
    })
}
