//! Parses the line-oriented replies each agent is asked to produce and
//! shows how a malformed reply is rejected.
//!
//! cargo run --example protocol_parsing

use hypoforge::model::Metric;
use hypoforge::protocol::{parse_critic, parse_pairwise, parse_relation, parse_reviewer};

const CRITIC: &str = "\
Novelty: Score 4
Links GPR153 to CEBPB signalling, which has not been reported.
Relevance: Score 5
Directly concerns vascular injury.
Significance: Score 4
Could identify a new target for restenosis.
Verifiability: Score 4
Testable with knockout mice and wire injury.
Overall Score: 17/20";

const REVIEWER: &str = "ACTIONS:neo4j,pubmed\nDEPTH_OVERRIDE:3\nRELS_OVERRIDE:protein_protein";

const PAIRWISE: &str = "Novelty: A - names a new regulator\nRelevance: 0 - both on topic\nSignificance: B - wider clinical reach\nVerifiability: A - simpler assay";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let critic = parse_critic(CRITIC)?;
    println!("critic scores {:?} = {}", critic.scores.as_array(), critic.scores.overall());

    let directive = parse_reviewer(REVIEWER)?;
    println!("reviewer directive: {directive:?}");

    let verdict = parse_pairwise(PAIRWISE)?;
    for m in Metric::ALL {
        println!("pairwise {}: {:?}", m.name(), verdict.winner(m));
    }

    println!("relation: {:?}", parse_relation("Relation: inhibit")?);

    let broken = CRITIC.replace("Overall Score: 17/20", "Overall Score: 18/20");
    match parse_critic(&broken) {
        Ok(_) => println!("inconsistent total accepted"),
        Err(e) => println!("rejected: {e}"),
    }
    Ok(())
}
