//! Scores generated hypotheses against held-out gold statements by
//! embedding similarity, against a null of mismatched gold pairs, then
//! evaluates a relation judge with precision, recall and F1.
//!
//! cargo run --example similarity_eval

use std::fs::File;
use std::path::PathBuf;
use std::sync::Arc;

use hypoforge::demo::eval_data::{labeled_pairs, relation_judge_reply};
use hypoforge::embed::HashedEmbedder;
use hypoforge::eval::io::read_similarity_pairs;
use hypoforge::eval::{classification_metrics, classify_relations, temporal_similarity_eval};
use hypoforge::llm::{FnBackend, Gateway};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/similarity_pairs.csv");
    let pairs = read_similarity_pairs(File::open(path)?)?;
    let report = temporal_similarity_eval(&pairs, &HashedEmbedder::default())?;
    for (p, s) in pairs.iter().zip(&report.matched) {
        println!("{s:.3}  {}", p.background);
    }
    println!("matched median {:.3}", report.matched_median);
    if let Some(m) = report.null_median {
        println!("null median    {m:.3}");
    }

    let items = labeled_pairs();
    let judge = Gateway::new(Arc::new(FnBackend::new(|_, req| relation_judge_reply(req))));
    let (predicted, warnings) = classify_relations(&items, &judge)?;
    let predicted: Vec<_> = predicted.into_iter().flatten().collect();
    let truth: Vec<_> = items.iter().map(|i| i.label).collect();
    let m = classification_metrics(&predicted, &truth)?;
    println!("\nrelation judge: accuracy {:.2}, macro F1 {:.2}", m.accuracy, m.macro_avg.f1);
    for w in warnings {
        println!("warning: {w}");
    }
    Ok(())
}
