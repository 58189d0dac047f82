//! Knowledge-graph evidence: graph loading, keyword-to-entity linking,
//! subgraph retrieval and the plaintext rendering consumed by the agents.

mod graph;
mod link;
mod retrieve;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::EmbedError;

pub use graph::KnowledgeGraph;
pub use link::{link_keywords, parse_selection, EntityIndex, LinkCandidate, MAX_SELECTED, MIN_SELECTED};
pub use retrieve::{retrieve_subgraph, RelationFilter, RetrievalLimits};

#[derive(Debug, Error)]
pub enum KgError {
    #[error("line {line}: {message}")]
    Load { line: usize, message: String },
    #[error("unknown seed node '{0}'")]
    UnknownSeed(String),
    #[error("no seed nodes given")]
    NoSeeds,
    #[error("traversal depth must be at least 1")]
    Depth,
    #[error("empty keyword")]
    EmptyKeyword,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("node selection failed: {0}")]
    Selection(String),
    #[error("embedding: {0}")]
    Embed(#[from] EmbedError),
    #[error("graph io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityNode {
    pub node_id: String,
    pub name: String,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: String,
    pub relation: String,
    pub dst: String,
}

impl Edge {
    pub fn new(src: impl Into<String>, relation: impl Into<String>, dst: impl Into<String>) -> Self {
        Self {
            src: src.into(),
            relation: relation.into(),
            dst: dst.into(),
        }
    }

    /// The endpoint opposite `id`, if `id` is an endpoint.
    pub fn other(&self, id: &str) -> Option<&str> {
        if self.src == id {
            Some(&self.dst)
        } else if self.dst == id {
            Some(&self.src)
        } else {
            None
        }
    }
}

/// A walk through the graph in traversal order: `relations[i]` joins
/// `nodes[i]` and `nodes[i + 1]`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Path {
    pub nodes: Vec<String>,
    pub relations: Vec<String>,
}

impl Path {
    pub fn hops(&self) -> usize {
        self.relations.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subgraph {
    pub nodes: Vec<EntityNode>,
    pub direct_edges: Vec<Edge>,
    pub multihop_paths: Vec<Path>,
}

impl Subgraph {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty() && self.direct_edges.is_empty() && self.multihop_paths.is_empty()
    }

    pub fn node(&self, id: &str) -> Option<&EntityNode> {
        self.nodes.iter().find(|n| n.node_id == id)
    }

    /// Appends items from `other` not already present (nodes by id, edges
    /// by (src, relation, dst), paths by full sequence). Returns the number
    /// of new edges and paths.
    pub fn merge(&mut self, other: Subgraph) -> usize {
        let mut ids: HashSet<String> = self.nodes.iter().map(|n| n.node_id.clone()).collect();
        for n in other.nodes {
            if ids.insert(n.node_id.clone()) {
                self.nodes.push(n);
            }
        }
        let mut edges: HashSet<Edge> = self.direct_edges.iter().cloned().collect();
        let mut added = 0;
        for e in other.direct_edges {
            if edges.insert(e.clone()) {
                self.direct_edges.push(e);
                added += 1;
            }
        }
        let mut paths: HashSet<Path> = self.multihop_paths.iter().cloned().collect();
        for p in other.multihop_paths {
            if paths.insert(p.clone()) {
                self.multihop_paths.push(p);
                added += 1;
            }
        }
        added
    }
}

fn display_name<'a>(sg: &'a Subgraph, id: &'a str) -> &'a str {
    sg.node(id).map(|n| n.name.as_str()).unwrap_or(id)
}

/// Renders `Nodes: … Direct Edges: … MultiHop Paths: …` with arrows
/// between node names and relation types.
pub fn serialize_subgraph(sg: &Subgraph) -> String {
    fn section(items: Vec<String>, sep: &str) -> String {
        if items.is_empty() {
            "(none)".to_string()
        } else {
            items.join(sep)
        }
    }
    let nodes = section(
        sg.nodes
            .iter()
            .map(|n| format!("{} ({})", n.name, n.category))
            .collect(),
        ", ",
    );
    let edges = section(
        sg.direct_edges
            .iter()
            .map(|e| {
                format!(
                    "{} → {} → {}",
                    display_name(sg, &e.src),
                    e.relation,
                    display_name(sg, &e.dst)
                )
            })
            .collect(),
        "; ",
    );
    let paths = section(
        sg.multihop_paths
            .iter()
            .map(|p| {
                let mut s = display_name(sg, &p.nodes[0]).to_string();
                for (rel, id) in p.relations.iter().zip(&p.nodes[1..]) {
                    s.push_str(&format!(" → {rel} → {}", display_name(sg, id)));
                }
                s
            })
            .collect(),
        "; ",
    );
    format!("Nodes: {nodes} Direct Edges: {edges} MultiHop Paths: {paths}")
}
