//! Builds a PubMed-style query, applies a publication cutoff and walks the
//! relaxation ladder against an offline corpus until enough records match.
//! Also shows the E-utilities request a live search would issue.
//!
//! cargo run --example literature_search

use chrono::NaiveDate;
use hypoforge::demo::{case_study_corpus, case_study_cutoff};
use hypoforge::lit::{search_with_relaxation, EutilsClient, Field, InMemoryCorpus, QueryStrategy, TermGroup};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = InMemoryCorpus::new(case_study_corpus());
    let strategy = QueryStrategy {
        groups: vec![
            TermGroup {
                terms: vec!["GPR153".into()],
                field: Field::Tiab,
            },
            TermGroup {
                terms: vec!["Vascular System Injuries".into(), "Neointima".into()],
                field: Field::Mesh,
            },
            TermGroup {
                terms: vec!["smooth muscle".into()],
                field: Field::Tiab,
            },
        ],
        min_date: None,
        max_date: Some(case_study_cutoff()),
        retmax: 10,
    };

    let outcome = search_with_relaxation(&strategy, &corpus, 3)?;
    for (stage, q) in outcome.queries.iter().enumerate() {
        println!("stage {stage}: {q}");
    }
    println!("{} records at stage {}:", outcome.records.len(), outcome.stage);
    for r in &outcome.records {
        println!("  {} {} {}", r.pmid, r.pub_date, r.title);
    }
    for w in &outcome.warnings {
        println!("warning: {w}");
    }
    let late = corpus
        .records()
        .iter()
        .filter(|r| r.pub_date > case_study_cutoff())
        .count();
    println!("{late} corpus records fall after the cutoff and were never eligible");

    let client = EutilsClient::from_env();
    let open = QueryStrategy {
        min_date: NaiveDate::from_ymd_opt(2015, 1, 1),
        ..strategy
    };
    println!(
        "\nlive esearch ({} requests/s):\n{}",
        client.requests_per_second(),
        client.esearch_url(&open)
    );
    Ok(())
}
