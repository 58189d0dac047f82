//! Ranks systems from a pairwise tournament: Bradley-Terry with an order
//! effect, quasi-variance comparison intervals, and the Davidson tie model.
//!
//! cargo run --example pairwise_ranking [-- comparisons.csv]

use std::fs::File;
use std::path::PathBuf;

use hypoforge::eval::io::read_comparisons;
use hypoforge::eval::{fit_bradley_terry, fit_davidson, quasi_variances, BtOptions, QvObjective};
use hypoforge::model::Metric;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/tournament_comparisons.csv"));
    let records = read_comparisons(File::open(&path)?)?;

    for metric in Metric::ALL {
        let subset: Vec<_> = records.iter().filter(|r| r.metric == metric).cloned().collect();
        if subset.is_empty() {
            continue;
        }
        let bt = fit_bradley_terry(&subset, &BtOptions::default())?;
        let qv = quasi_variances(&bt, QvObjective::Variance)?;
        let dv = fit_davidson(&subset, &BtOptions::default())?;

        println!("{} ({} comparisons)", metric.name(), subset.len());
        let mut order: Vec<&String> = bt.systems.iter().collect();
        order.sort_by(|a, b| bt.beta[*b].total_cmp(&bt.beta[*a]));
        for s in order {
            let (b, half) = (bt.beta[s], 1.96 * qv.q[s].sqrt());
            println!(
                "  {s:<14} {b:>7.3}  [{:>6.3}, {:>6.3}]  davidson {:>7.3}",
                b - half,
                b + half,
                dv.beta[s]
            );
        }
        println!(
            "  order effect {:.3}, tie parameter {:.3}, worst qv error {:.1}%",
            bt.alpha.unwrap_or(0.0),
            dv.nu,
            100.0 * qv.max_abs_relative_error()
        );
    }
    Ok(())
}
