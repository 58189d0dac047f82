//! Links free-text keywords to knowledge-graph entities by embedding
//! similarity, then extracts the multi-hop subgraph around them.
//!
//! cargo run --example graph_retrieval [-- "keyword" ...]

use hypoforge::demo::case_study_graph;
use hypoforge::embed::HashedEmbedder;
use hypoforge::kg::{retrieve_subgraph, serialize_subgraph, EntityIndex, RetrievalLimits};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut keywords: Vec<String> = std::env::args().skip(1).collect();
    if keywords.is_empty() {
        keywords = vec!["GPR153".into(), "vascular injury".into()];
    }
    let graph = case_study_graph();
    let embedder = HashedEmbedder::default();
    let index = EntityIndex::build(&graph, &embedder)?;

    let mut seeds = Vec::new();
    for kw in &keywords {
        let hits = index.link(kw, 3)?;
        println!("{kw}:");
        for h in &hits {
            println!("  {:<24} {:.3}", h.node.name, h.similarity);
        }
        if let Some(best) = hits.first() {
            seeds.push(best.node.node_id.clone());
        }
    }
    seeds.dedup();

    let sg = retrieve_subgraph(&graph, &seeds, 2, &None, RetrievalLimits::default())?;
    println!(
        "\n{} nodes, {} direct edges, {} paths",
        sg.nodes.len(),
        sg.direct_edges.len(),
        sg.multihop_paths.len()
    );
    println!("{}", serialize_subgraph(&sg));
    Ok(())
}
