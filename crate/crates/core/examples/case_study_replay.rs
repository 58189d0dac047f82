//! Replays the bundled GPR153 case study through the full agent pipeline
//! with recorded model replies, then prints each branch's score trajectory.
//!
//! cargo run --example case_study_replay

use std::path::PathBuf;
use std::sync::Arc;

use hypoforge::cli::load_config_file;
use hypoforge::demo::CASE_TOPIC;
use hypoforge::embed::HashedEmbedder;
use hypoforge::kg::KnowledgeGraph;
use hypoforge::lit::InMemoryCorpus;
use hypoforge::llm::{Gateway, ScriptedBackend};
use hypoforge::pipeline::{run_pipeline, Services};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/case_study");
    let config = load_config_file(&dir.join("config.toml"))?;
    let graph = KnowledgeGraph::load_tsv_path(dir.join("graph.tsv"))?;
    let corpus = InMemoryCorpus::from_jsonl_path(dir.join("corpus.jsonl"))?;
    let gateway = Gateway::new(Arc::new(ScriptedBackend::from_dir(dir.join("llm"))?)).with_seed(Some(config.seed));
    let embedder = HashedEmbedder::default();
    let services = Services {
        gateway: &gateway,
        graph: &graph,
        embedder: &embedder,
        literature: &corpus,
    };

    let outcome = run_pipeline(CASE_TOPIC, &config, services, None)?;
    let r = &outcome.result;
    println!("{} ({} model calls)", r.run_id, outcome.steps.len());
    for b in &r.branches {
        let path: Vec<String> = b.history.iter().map(|s| s.overall.to_string()).collect();
        println!("branch {}: {:?}, scores {}", b.branch, b.status, path.join(" -> "));
    }
    for (i, o) in r.outputs.iter().enumerate() {
        println!("\n#{} [{}/20] {}", i + 1, o.scores.overall(), o.hypothesis.text);
        let kg = o.evidence.subgraph.as_ref().map_or(0, |s| s.direct_edges.len());
        println!("   evidence: {} papers, {} graph edges", o.evidence.literature.len(), kg);
    }
    Ok(())
}
