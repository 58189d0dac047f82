//! Fits the cumulative-probit rating model to simulated expert scores and
//! compares the estimates with the values used to simulate them.
//!
//! cargo run --example rating_model

use hypoforge::eval::synth::{generate_ratings, RatingSpec};
use hypoforge::eval::{fit_rasch_map, RaschData, RaschPriors};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = RatingSpec::small();
    let data = RaschData {
        ratings: generate_ratings(&spec),
        k: spec.k,
    };
    let fit = fit_rasch_map(&data, RaschPriors::default())?;
    println!(
        "{} ratings, {} raters, converged {} after {} iterations",
        data.ratings.len(),
        spec.raters,
        fit.converged,
        fit.iterations
    );
    println!("thresholds (true, fitted):");
    for (t, f) in spec.tau.iter().zip(&fit.tau) {
        println!("  {t:>6.2} {f:>7.3}");
    }
    println!("metric effects relative to {}:", spec.metrics[0].name());
    for (m, b) in &fit.beta_m {
        println!("  {:<14} {b:>7.3}", m.name());
    }
    println!("rater severity:");
    for (r, u) in &fit.u {
        println!("  {r:<6} {u:>7.3}");
    }
    for w in &fit.warnings {
        println!("note: {w}");
    }
    Ok(())
}
