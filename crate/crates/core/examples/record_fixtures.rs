//! Regenerates every bundled fixture: the replayable case study under
//! `case_study/` plus the evaluation and graph data beside it.
//!
//! cargo run --example record_fixtures -- crates/core/fixtures

use std::path::PathBuf;

use hypoforge::demo::eval_data::write_eval_fixtures;
use hypoforge::demo::record_case_study;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    let outcome = record_case_study(&dir.join("case_study"))?;
    let r = &outcome.result;
    println!("case study: {} model calls recorded", outcome.steps.len());
    for b in &r.branches {
        println!("  branch {}: {:?}, best {:?}", b.branch, b.status, b.best_overall);
    }
    write_eval_fixtures(&dir)?;
    println!("evaluation fixtures written to {}", dir.display());
    Ok(())
}
