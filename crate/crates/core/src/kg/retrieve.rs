use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::{Edge, KgError, KnowledgeGraph, Path, Subgraph};

/// Relation types allowed during retrieval; `None` admits every relation.
pub type RelationFilter = Option<BTreeSet<String>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalLimits {
    pub max_edges: usize,
    pub max_paths: usize,
}

impl Default for RetrievalLimits {
    fn default() -> Self {
        Self {
            max_edges: 20,
            max_paths: 10,
        }
    }
}

fn admits(filter: &RelationFilter, relation: &str) -> bool {
    filter.as_ref().map_or(true, |f| f.contains(relation))
}

/// Direct edges touch a seed; multihop paths are simple paths of 2..=depth
/// hops joining two distinct seeds, oriented from the smaller seed id.
/// Both lists are ordered deterministically and capped by `limits`. Nodes
/// are the endpoints of what was kept, seeds first, each group by id.
pub fn retrieve_subgraph(
    graph: &KnowledgeGraph,
    seeds: &[String],
    depth: usize,
    relation_filter: &RelationFilter,
    limits: RetrievalLimits,
) -> Result<Subgraph, KgError> {
    if seeds.is_empty() {
        return Err(KgError::NoSeeds);
    }
    if depth == 0 {
        return Err(KgError::Depth);
    }
    let seeds: BTreeSet<&str> = seeds.iter().map(String::as_str).collect();
    for s in &seeds {
        if !graph.contains(s) {
            return Err(KgError::UnknownSeed(s.to_string()));
        }
    }

    let mut direct: BTreeSet<(&str, &str, &str)> = BTreeSet::new();
    for s in &seeds {
        for e in graph.incident(s) {
            if admits(relation_filter, &e.relation) {
                direct.insert((&e.relation, &e.src, &e.dst));
            }
        }
    }
    let direct_edges: Vec<Edge> = direct
        .into_iter()
        .take(limits.max_edges)
        .map(|(r, s, d)| Edge::new(s, r, d))
        .collect();

    let mut paths = Vec::new();
    if depth >= 2 {
        for &start in &seeds {
            let targets: BTreeSet<&str> = seeds.iter().copied().filter(|t| *t > start).collect();
            if targets.is_empty() {
                break;
            }
            let dist = distance_to(graph, &targets, relation_filter, depth);
            let mut stack_nodes = vec![start.to_string()];
            let mut stack_rels = Vec::new();
            extend(
                graph,
                relation_filter,
                depth,
                &targets,
                &dist,
                &mut stack_nodes,
                &mut stack_rels,
                &mut paths,
            );
        }
    }
    paths.sort_by(|a: &Path, b: &Path| a.hops().cmp(&b.hops()).then_with(|| a.cmp(b)));
    paths.dedup();
    paths.truncate(limits.max_paths);

    let mut ids: BTreeSet<&str> = BTreeSet::new();
    for e in &direct_edges {
        ids.insert(&e.src);
        ids.insert(&e.dst);
    }
    for p in &paths {
        ids.extend(p.nodes.iter().map(String::as_str));
    }
    let (mut nodes, others): (Vec<&str>, Vec<&str>) = ids.into_iter().partition(|id| seeds.contains(id));
    nodes.extend(others);
    let nodes = nodes
        .into_iter()
        .map(|id| graph.node(id).expect("edge endpoints are nodes").clone())
        .collect();
    Ok(Subgraph {
        nodes,
        direct_edges,
        multihop_paths: paths,
    })
}

/// Hop distance from every node to the nearest target, up to `limit`.
fn distance_to<'g>(
    graph: &'g KnowledgeGraph,
    targets: &BTreeSet<&'g str>,
    filter: &RelationFilter,
    limit: usize,
) -> HashMap<&'g str, usize> {
    let mut dist: HashMap<&str, usize> = targets.iter().map(|t| (*t, 0)).collect();
    let mut queue: VecDeque<&str> = targets.iter().copied().collect();
    while let Some(u) = queue.pop_front() {
        let du = dist[u];
        if du >= limit {
            continue;
        }
        for e in graph.incident(u) {
            if !admits(filter, &e.relation) {
                continue;
            }
            let v = e.other(u).expect("incident edge");
            if !dist.contains_key(v) {
                dist.insert(v, du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

#[allow(clippy::too_many_arguments)]
fn extend(
    graph: &KnowledgeGraph,
    filter: &RelationFilter,
    depth: usize,
    targets: &BTreeSet<&str>,
    dist: &HashMap<&str, usize>,
    nodes: &mut Vec<String>,
    rels: &mut Vec<String>,
    out: &mut Vec<Path>,
) {
    let here = nodes.last().expect("nonempty").clone();
    if rels.len() >= 2 && targets.contains(here.as_str()) {
        out.push(Path {
            nodes: nodes.clone(),
            relations: rels.clone(),
        });
    }
    if rels.len() == depth {
        return;
    }
    for e in graph.incident(&here) {
        if !admits(filter, &e.relation) {
            continue;
        }
        let next = e.other(&here).expect("incident edge");
        if nodes.iter().any(|n| n == next) {
            continue;
        }
        match dist.get(next) {
            Some(&d) if rels.len() + 1 + d <= depth => {}
            _ => continue,
        }
        nodes.push(next.to_string());
        rels.push(e.relation.clone());
        extend(graph, filter, depth, targets, dist, nodes, rels, out);
        nodes.pop();
        rels.pop();
    }
}
