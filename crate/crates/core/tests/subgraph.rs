mod common;

use std::collections::BTreeSet;

use hypoforge::kg::{retrieve_subgraph, Edge, EntityNode, KnowledgeGraph, RetrievalLimits};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::brute_force_subgraph;

const RELATIONS: [&str; 3] = ["protein_protein", "drug_protein", "disease_protein"];

fn random_graph(rng: &mut ChaCha8Rng) -> KnowledgeGraph {
    let n = rng.gen_range(2..=12);
    let nodes: Vec<EntityNode> = (0..n)
        .map(|i| EntityNode {
            node_id: format!("v{i:02}"),
            name: format!("N{i}"),
            category: "gene/protein".into(),
        })
        .collect();
    let mut triples = BTreeSet::new();
    let m = rng.gen_range(1..=2 * n);
    for _ in 0..m {
        let a = rng.gen_range(0..n);
        let mut b = rng.gen_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let r = *RELATIONS.choose(rng).unwrap();
        triples.insert((a, r, b));
    }
    let edges = triples
        .into_iter()
        .map(|(a, r, b)| Edge::new(format!("v{a:02}"), r, format!("v{b:02}")))
        .collect();
    KnowledgeGraph::from_parts(nodes, edges).unwrap()
}

#[test]
fn retrieval_equals_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut nonempty_paths = 0;
    for g in 0..100 {
        let graph = random_graph(&mut rng);
        let ids: Vec<String> = graph.nodes().iter().map(|n| n.node_id.clone()).collect();
        for depth in 1..=3 {
            let k = rng.gen_range(1..=ids.len().min(4));
            let seeds: Vec<String> = ids.choose_multiple(&mut rng, k).cloned().collect();
            let filter = if rng.gen_bool(0.3) {
                Some(RELATIONS[..2].iter().map(|s| s.to_string()).collect())
            } else {
                None
            };
            let limits = if rng.gen_bool(0.2) {
                RetrievalLimits {
                    max_edges: 3,
                    max_paths: 2,
                }
            } else {
                RetrievalLimits {
                    max_edges: 1000,
                    max_paths: 1000,
                }
            };
            let got = retrieve_subgraph(&graph, &seeds, depth, &filter, limits).unwrap();
            let want = brute_force_subgraph(&graph, &seeds, depth, &filter, limits.max_edges, limits.max_paths);
            assert_eq!(got, want, "graph {g}, depth {depth}, seeds {seeds:?}");
            nonempty_paths += usize::from(!got.multihop_paths.is_empty());
        }
    }
    assert!(nonempty_paths > 20, "only {nonempty_paths} cases exercised paths");
}

#[test]
fn star_query_returns_both_spokes() {
    let graph = hypoforge::demo::eval_data::star_graph();
    let sg = retrieve_subgraph(&graph, &["A".to_string()], 1, &None, RetrievalLimits::default()).unwrap();
    assert_eq!(sg.direct_edges.len(), 2);
    assert!(sg.multihop_paths.is_empty());
}
