//! A self-contained GPR153 case study: a small graph, a literature corpus,
//! a rule-based responder standing in for the language model, and a
//! recorder that turns a run into replayable fixtures.
//!
//! The responder recognises each agent by its instruction text and answers
//! from fixed tables keyed by hypothesis text, so a run is deterministic.

pub mod eval_data;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;
use thiserror::Error;

use crate::embed::HashedEmbedder;
use crate::kg::{Edge, EntityNode, KgError, KnowledgeGraph};
use crate::lit::InMemoryCorpus;
use crate::llm::{ChatRequest, FnBackend, Gateway, LlmError};
use crate::model::{AgentRole, KgSettings, LiteratureRecord, PipelineConfig};
use crate::pipeline::{entity_terms, run_pipeline, PipelineError, RunOutcome, Services};
use crate::protocol::templates;

pub const CASE_TOPIC: &str = "Role of GPR153 in vascular injury and disease";

pub const CASE_INITIAL: &str = "GPR153 activation in vascular smooth muscle cells enhances pro-inflammatory gene expression via the YAP/TAZ pathway, promoting neointima formation following vascular injury";
pub const CASE_CYCLE_1: &str = "GPR153 activation in vascular smooth muscle cells enhances pro-inflammatory gene expression by promoting CEBPB-mediated YAP1 signalling, thereby potentially integrating with EGR1 and GSK3B pathways to exacerbate neointima formation following vascular injury";
pub const CASE_CYCLE_2: &str = "GPR153 activation in vascular smooth muscle cells enhances pro-inflammatory gene expression by facilitating CEBPB-mediated network involving YAP1, EGR1, and GSK3B, creating a complex signalling cascade that drives neointima formation after vascular injury";
pub const CASE_FINAL: &str = "GPR153 activation in vascular smooth muscle cells enhances pro-inflammatory gene expression through a CEBPB-mediated network, integrating NRF1 and CD7 interactions with YAP1 and GSK3B, thereby orchestrating a multifaceted signalling cascade that drives neointima formation following vascular injury";

const BRANCH_2: [&str; 4] = [
    "GPR153 deficiency in endothelial cells attenuates leukocyte adhesion after arterial injury by reducing cAMP-dependent VCAM1 expression",
    "GPR153 deficiency in endothelial cells attenuates leukocyte adhesion after arterial injury by reducing cAMP-dependent VCAM1 expression through diminished CEBPB activity",
    "GPR153 deficiency in endothelial cells attenuates leukocyte adhesion after arterial injury by lowering CEBPB-driven VCAM1 transcription downstream of cAMP",
    "GPR153 deficiency in endothelial cells attenuates leukocyte adhesion after arterial injury by lowering CEBPB-driven VCAM1 transcription downstream of cAMP and YAP1",
];

const BRANCH_3: [&str; 4] = [
    "GPR153 signalling in adventitial fibroblasts promotes collagen deposition and vascular stiffening after injury",
    "GPR153 signalling in adventitial fibroblasts promotes collagen deposition and vascular stiffening after injury through TGF-beta activation",
    "GPR153 signalling in adventitial fibroblasts promotes collagen deposition and vascular stiffening after injury through TGF-beta and YAP1 activation",
    "GPR153 signalling in adventitial fibroblasts increases collagen deposition and vascular stiffening after injury through TGF-beta and YAP1 activation",
];

const CASE_BACKGROUND: &str = "GPR153 plays a crucial role in vascular injury responses by modulating critical signaling pathways such as cAMP, YAP/TAZ and inflammatory transcription programs in vascular smooth muscle cells. Loss of GPR153 lowers intracellular cAMP, which relieves inhibition of YAP/TAZ and favours smooth muscle proliferation and migration after arterial damage. Transcription factors including CEBPB link these signals to pro-inflammatory gene expression, while EGR1 and GSK3B shape the proliferative response that drives neointima formation. Together these findings position GPR153 as an upstream regulator connecting receptor signaling to vascular remodeling and disease progression.";

const PLAN: &str = "1. Domain selection: vascular biology, focusing on GPR153 in vascular injury.
2. Knowledge graph retrieval: link GPR153 and injury-related entities and extract their direct and multi-hop relations.
3. Hypothesis generation: propose mechanistic hypotheses that connect GPR153 signaling to neointima formation.
4. Iterative refinement: score each hypothesis, retrieve literature and graph evidence for weak metrics and revise.
5. Final decision-making: keep the highest-scoring hypotheses that pass the quality threshold.";

const INITIAL_SEEDS: [&str; 9] = [
    "GPR153",
    "CEBPB",
    "GRN",
    "CDK4",
    "TTR",
    "YAP1",
    "SCAMP1",
    "Acamprosate",
    "camptodactyly",
];
const CYCLE_1_SEEDS: [&str; 7] = ["GPR153", "CEBPB", "YAP1", "EGR1", "GSK3B", "NRF1", "CD7"];
const CYCLE_2_SEEDS: [&str; 9] = ["GPR153", "CEBPB", "YAP1", "GSK3B", "NRF1", "CD7", "PHYHIP", "PPP2CA", "TTR"];

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("pipeline: {0}")]
    Pipeline(#[from] PipelineError),
    #[error("graph: {0}")]
    Kg(#[from] KgError),
    #[error("language model: {0}")]
    Llm(#[from] LlmError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Config(String),
}

fn node(i: usize, name: &str, category: &str) -> EntityNode {
    EntityNode {
        node_id: format!("n{i:02}"),
        name: name.into(),
        category: category.into(),
    }
}

/// A 21-node toy graph. Ids follow the listing order so GPR153 sorts first.
pub fn case_study_graph() -> KnowledgeGraph {
    let names: [(&str, &str); 21] = [
        ("GPR153", "gene/protein"),
        ("CEBPB", "gene/protein"),
        ("GRN", "gene/protein"),
        ("CDK4", "gene/protein"),
        ("TTR", "gene/protein"),
        ("YAP1", "gene/protein"),
        ("SCAMP1", "gene/protein"),
        ("Acamprosate", "drug"),
        ("camptodactyly", "disease"),
        ("NRF1", "gene/protein"),
        ("CD7", "gene/protein"),
        ("EGR1", "gene/protein"),
        ("PHYHIP", "gene/protein"),
        ("PPP2CA", "gene/protein"),
        ("GSK3B", "gene/protein"),
        ("cAMP signaling", "pathway"),
        ("Hippo signaling", "pathway"),
        ("vascular disease", "disease"),
        ("VCAM1", "gene/protein"),
        ("TGFB1", "gene/protein"),
        ("collagen binding", "molecular_function"),
    ];
    let nodes: Vec<EntityNode> = names
        .iter()
        .enumerate()
        .map(|(i, (n, c))| node(i + 1, n, c))
        .collect();
    let id = |name: &str| -> String {
        nodes
            .iter()
            .find(|n| n.name == name)
            .expect("known node")
            .node_id
            .clone()
    };
    let e = |a: &str, r: &str, b: &str| Edge::new(id(a), r, id(b));
    let edges = vec![
        e("GPR153", "protein_protein", "CEBPB"),
        e("GPR153", "protein_protein", "YAP1"),
        e("GPR153", "protein_protein", "SCAMP1"),
        e("GPR153", "pathway_protein", "cAMP signaling"),
        e("CEBPB", "protein_protein", "GRN"),
        e("CEBPB", "protein_protein", "CDK4"),
        e("CEBPB", "protein_protein", "NRF1"),
        e("CEBPB", "protein_protein", "VCAM1"),
        e("NRF1", "protein_protein", "CD7"),
        e("CD7", "protein_protein", "YAP1"),
        e("YAP1", "protein_protein", "EGR1"),
        e("YAP1", "protein_protein", "GSK3B"),
        e("YAP1", "pathway_protein", "Hippo signaling"),
        e("YAP1", "disease_protein", "vascular disease"),
        e("EGR1", "protein_protein", "GSK3B"),
        e("GSK3B", "protein_protein", "PPP2CA"),
        e("PHYHIP", "protein_protein", "TTR"),
        e("TTR", "molfunc_protein", "PPP2CA"),
        e("TTR", "disease_protein", "camptodactyly"),
        e("Acamprosate", "drug_protein", "GRN"),
        e("CDK4", "protein_protein", "TGFB1"),
        e("TGFB1", "molfunc_protein", "collagen binding"),
    ];
    KnowledgeGraph::from_parts(nodes, edges).expect("case-study graph is consistent")
}

fn record(pmid: &str, title: &str, abstract_text: &str, date: (i32, u32, u32), mesh: &[&str]) -> LiteratureRecord {
    LiteratureRecord {
        pmid: pmid.into(),
        title: title.into(),
        abstract_text: abstract_text.into(),
        pub_date: NaiveDate::from_ymd_opt(date.0, date.1, date.2).expect("valid date"),
        mesh_terms: mesh.iter().map(|s| s.to_string()).collect(),
    }
}

/// Synthetic abstracts. The last two are dated after the case-study
/// cutoff and must never reach a prompt.
pub fn case_study_corpus() -> Vec<LiteratureRecord> {
    vec![
        record(
            "90000001",
            "GPR153 deletion increases neointima formation after vascular injury",
            "Mice lacking GPR153 developed larger neointimal lesions after carotid ligation. Smooth muscle cells showed reduced cAMP and increased YAP nuclear localisation.",
            (2019, 5, 14),
            &["Neointima", "Vascular System Injuries"],
        ),
        record(
            "90000002",
            "cAMP signalling restrains YAP/TAZ activity in vascular smooth muscle",
            "Elevated cAMP inhibited YAP and TAZ through LATS activation and limited smooth muscle proliferation after vascular injury in GPR153 reporter mice.",
            (2018, 9, 3),
            &["Cyclic AMP", "Muscle, Smooth, Vascular"],
        ),
        record(
            "90000003",
            "Orphan receptor GPR153 in arterial disease",
            "Expression of the orphan receptor GPR153 rises in human atherosclerotic plaques and correlates with inflammatory gene expression in vascular disease.",
            (2021, 2, 20),
            &["Receptors, G-Protein-Coupled"],
        ),
        record(
            "90000004",
            "CEBPB drives pro-inflammatory transcription in injured arteries",
            "CEBPB bound promoters of inflammatory genes in smooth muscle cells after vascular injury and cooperated with YAP1 to sustain their expression.",
            (2020, 7, 1),
            &["CCAAT-Enhancer-Binding Protein-beta"],
        ),
        record(
            "90000005",
            "EGR1 and GSK3B coordinate smooth muscle proliferation",
            "EGR1 induction after injury depended on GSK3B inhibition, and both factors modulated YAP1 target genes during neointima growth.",
            (2017, 11, 8),
            &["Early Growth Response Protein 1"],
        ),
        record(
            "90000006",
            "NRF1 and CD7 in vascular inflammation",
            "NRF1 regulated mitochondrial genes in injured vessels, while CD7 positive lymphocytes accumulated in the adventitia after vascular injury.",
            (2022, 4, 12),
            &["Vasculitis"],
        ),
        record(
            "90000007",
            "GPR153 and cAMP-dependent adhesion molecule expression in endothelium",
            "Endothelial GPR153 knockdown reduced cAMP and VCAM1 expression and lowered leukocyte adhesion after arterial injury.",
            (2023, 1, 30),
            &["Endothelium, Vascular", "Vascular Cell Adhesion Molecule-1"],
        ),
        record(
            "90000008",
            "Adventitial fibroblasts, TGF-beta and vascular stiffening",
            "TGF-beta activation in adventitial fibroblasts increased collagen deposition and stiffening after vascular injury; GPR153 was detected in these cells.",
            (2016, 6, 6),
            &["Fibroblasts", "Transforming Growth Factor beta"],
        ),
        record(
            "90000009",
            "PPP2CA dephosphorylates YAP1 in smooth muscle cells",
            "The phosphatase PPP2CA promoted YAP1 nuclear entry and smooth muscle proliferation in models of vascular injury and disease.",
            (2024, 8, 19),
            &["Protein Phosphatase 2"],
        ),
        record(
            "90000010",
            "YAP/TAZ in vascular remodeling: a review",
            "YAP and TAZ integrate mechanical and receptor inputs in vascular cells, and their activation promotes neointima formation after injury.",
            (2015, 3, 10),
            &["Vascular Remodeling"],
        ),
        record(
            "90000011",
            "GPR153 agonism reverses neointima formation after vascular injury",
            "A selective GPR153 agonist restored cAMP, suppressed YAP1, CEBPB and EGR1 activity and reversed neointima formation in injured arteries.",
            (2025, 3, 2),
            &["Neointima"],
        ),
        record(
            "90000012",
            "Single-cell atlas of GPR153 in vascular disease",
            "Single-cell sequencing mapped GPR153 expression across smooth muscle, endothelial and fibroblast populations in vascular disease and injury.",
            (2025, 6, 17),
            &["Single-Cell Analysis"],
        ),
    ]
}

pub fn case_study_cutoff() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 12, 31).expect("valid date")
}

/// Settings used by the recorded run. The acceptance threshold of 20 lets
/// the refinement continue through every cycle, as in the case study.
pub fn case_study_config() -> PipelineConfig {
    PipelineConfig {
        max_cycles: 3,
        n_initial_hypotheses: 3,
        accept_threshold: 20,
        emit_floor: 15,
        temporal_cutoff: Some(case_study_cutoff()),
        kg: KgSettings {
            link_k: 25,
            ..KgSettings::default()
        },
        ..PipelineConfig::default()
    }
}

fn line_value<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(key)).map(str::trim)
}

fn critic_reply(hypothesis: &str) -> String {
    let (scores, lines): ([u8; 4], [&str; 4]) = match hypothesis {
        CASE_INITIAL => (
            [4, 5, 4, 4],
            [
                "It extends known YAP/TAZ involvement to a GPR153-specific inflammatory mechanism.",
                "It follows directly from the background on GPR153, cAMP and YAP/TAZ.",
                "It could explain how receptor signalling shapes neointima formation.",
                "The hypothesis can be tested using genetic manipulation, however, the complexity of the regulatory networks may introduce challenges in isolating effects.",
            ],
        ),
        CASE_CYCLE_1 | CASE_CYCLE_2 | CASE_FINAL => (
            [5, 5, 5, 4],
            [
                "It proposes a previously undescribed CEBPB-centred network downstream of GPR153.",
                "It stays anchored in the vascular injury background and the retrieved graph context.",
                "It links a receptor to transcriptional control of vascular remodelling.",
                "Each interaction is testable, although the number of interacting factors makes isolating individual contributions demanding.",
            ],
        ),
        h if h == BRANCH_2[0] => (
            [4, 4, 4, 3],
            [
                "It moves GPR153 into endothelial adhesion biology.",
                "It relates to injury responses in the background.",
                "Adhesion control could matter for vascular inflammation.",
                "The cAMP dependence is asserted without a measurable intermediate.",
            ],
        ),
        h if BRANCH_2.contains(&h) => (
            [4, 4, 4, 4],
            [
                "It adds a transcriptional step to the endothelial mechanism.",
                "It relates to injury responses in the background.",
                "Adhesion control could matter for vascular inflammation.",
                "VCAM1 expression and adhesion assays make it testable.",
            ],
        ),
        h if BRANCH_3.contains(&h) => (
            [3, 3, 3, 3],
            [
                "Fibroblast involvement in stiffening is already established.",
                "Adventitial fibroblasts are peripheral to the background.",
                "The clinical consequence is unclear.",
                "Stiffening is measurable but the GPR153 link is indirect.",
            ],
        ),
        _ => (
            [2, 2, 2, 2],
            [
                "Little beyond the background.",
                "Weakly connected to the topic.",
                "Limited impact.",
                "Hard to test as stated.",
            ],
        ),
    };
    let names = ["Novelty", "Relevance", "Significance", "Verifiability"];
    let mut out = String::new();
    for i in 0..4 {
        out.push_str(&format!("{}: Score {}\n{}\n", names[i], scores[i], lines[i]));
    }
    out.push_str(&format!("Overall Score: {}/20", scores.iter().sum::<u8>()));
    out
}

fn reviewer_reply(hypothesis: &str) -> &'static str {
    match hypothesis {
        CASE_INITIAL => "ACTIONS:neo4j\nDEPTH_OVERRIDE:2\nRELS_OVERRIDE:protein_protein",
        CASE_CYCLE_1 => "ACTIONS:neo4j,pubmed\nDEPTH_OVERRIDE:3\nRELS_OVERRIDE:",
        h if BRANCH_3.contains(&h) => "ACTIONS:background\nDEPTH_OVERRIDE:\nRELS_OVERRIDE:",
        _ => "ACTIONS:pubmed\nDEPTH_OVERRIDE:\nRELS_OVERRIDE:",
    }
}

fn next_version(hypothesis: &str) -> Option<&'static str> {
    let case = [CASE_INITIAL, CASE_CYCLE_1, CASE_CYCLE_2, CASE_FINAL];
    for track in [&case, &BRANCH_2, &BRANCH_3] {
        if let Some(i) = track.iter().position(|h| *h == hypothesis) {
            return track.get(i + 1).copied().or(Some(track[i]));
        }
    }
    None
}

fn refiner_reply(hypothesis: &str) -> String {
    let next = next_version(hypothesis).unwrap_or(hypothesis);
    let steps = match hypothesis {
        CASE_INITIAL => [
            "Step 1: The hypothesis names the YAP/TAZ pathway but no transcriptional mediator of the inflammatory response.",
            "Step 2: The new subgraph links GPR153 to CEBPB and YAP1, with YAP1 connected to EGR1 and GSK3B.",
            "Step 3: Adding CEBPB-mediated YAP1 signalling and the EGR1 and GSK3B links sharpens the mechanism.",
        ],
        CASE_CYCLE_1 => [
            "Step 1: The interplay among CEBPB, YAP1, EGR1 and GSK3B is stated loosely.",
            "Step 2: New literature and deeper graph paths connect these factors in injured smooth muscle.",
            "Step 3: Framing them as one CEBPB-mediated network makes the cascade explicit.",
        ],
        CASE_CYCLE_2 => [
            "Step 1: Verifiability is limited by the breadth of the network.",
            "Step 2: The graph context adds NRF1 and CD7 interactions that connect CEBPB with YAP1.",
            "Step 3: Naming NRF1 and CD7 alongside YAP1 and GSK3B gives concrete interactions to test.",
        ],
        _ => [
            "Step 1: The weakest metric lacks a measurable intermediate.",
            "Step 2: The new information offers a modest refinement.",
            "Step 3: The hypothesis is revised to include it.",
        ],
    };
    format!("{}\n{next}", steps.join("\n"))
}

fn explorer_reply(user: &str) -> String {
    let candidates: Vec<String> = user
        .split("Candidates:\n")
        .nth(1)
        .and_then(|json| serde_json::from_str(json.trim()).ok())
        .unwrap_or_default();
    let want: &[&str] = match line_value(user, "Hypothesis:") {
        Some(CASE_INITIAL) => &CYCLE_1_SEEDS,
        Some(CASE_CYCLE_1) => &CYCLE_2_SEEDS,
        Some(_) => &["GPR153", "CEBPB", "YAP1", "VCAM1", "TGFB1"],
        None => &INITIAL_SEEDS,
    };
    let have: BTreeSet<&str> = candidates.iter().map(String::as_str).collect();
    let mut picked: Vec<&str> = want.iter().copied().filter(|w| have.contains(w)).collect();
    for c in &candidates {
        if picked.len() >= 5 {
            break;
        }
        if !picked.contains(&c.as_str()) {
            picked.push(c);
        }
    }
    serde_json::to_string(&picked).expect("strings serialize")
}

fn query_planner_reply(user: &str) -> String {
    let keywords: Vec<&str> = line_value(user, "Keywords:")
        .map(|k| k.split(", ").map(str::trim).filter(|k| !k.is_empty()).collect())
        .unwrap_or_default();
    let (entities, words): (Vec<&str>, Vec<&str>) = keywords.into_iter().partition(|k| !entity_terms(k).is_empty());
    let mut groups = Vec::new();
    for g in [entities, words] {
        if !g.is_empty() {
            groups.push(serde_json::json!({"terms": g, "field": "TIAB"}));
        }
    }
    serde_json::json!({"groups": groups, "retmax": 20}).to_string()
}

/// Rule-based stand-in for every agent in a case-study run.
pub fn case_study_reply(_role: AgentRole, req: &ChatRequest) -> Result<String, LlmError> {
    let system = req.system_prompt.as_str();
    let user = req.user_prompt.as_str();
    let hypothesis = line_value(user, "Hypothesis:").unwrap_or_default();
    let reply = if system == templates::PLANNER {
        PLAN.to_string()
    } else if system == templates::QUERY_PLANNER {
        query_planner_reply(user)
    } else if system == templates::BACKGROUND {
        CASE_BACKGROUND.to_string()
    } else if system == templates::EXPLORER {
        explorer_reply(user)
    } else if system == templates::SCIENTIST {
        [CASE_INITIAL, BRANCH_2[0], BRANCH_3[0]].join("\n")
    } else if system == templates::CRITIC {
        critic_reply(hypothesis)
    } else if system == templates::REVIEWER {
        reviewer_reply(hypothesis).to_string()
    } else if system == templates::REFINER {
        refiner_reply(hypothesis)
    } else {
        return Err(LlmError::Protocol(format!(
            "case-study responder has no reply for this prompt: {}",
            system.lines().next().unwrap_or_default()
        )));
    };
    Ok(reply)
}

/// Writes `graph.tsv`, `corpus.jsonl`, `config.toml` and one reply file
/// per prompt under `llm/`, by running the case study against the
/// rule-based responder.
pub fn record_case_study(dir: &Path) -> Result<RunOutcome, DemoError> {
    fs::create_dir_all(dir)?;
    let graph = case_study_graph();
    let mut tsv = Vec::new();
    graph.write_tsv(&mut tsv)?;
    fs::write(dir.join("graph.tsv"), tsv)?;
    let mut corpus = String::new();
    for r in case_study_corpus() {
        corpus.push_str(&serde_json::to_string(&r).expect("record serializes"));
        corpus.push('\n');
    }
    fs::write(dir.join("corpus.jsonl"), corpus)?;
    let config = case_study_config();
    let toml = toml::to_string(&config).map_err(|e| DemoError::Config(e.to_string()))?;
    fs::write(dir.join("config.toml"), toml)?;

    let llm_dir = dir.join("llm");
    if llm_dir.exists() {
        fs::remove_dir_all(&llm_dir)?;
    }
    let backend = FnBackend::new(case_study_reply).recording_to(&llm_dir)?;
    let gateway = Gateway::new(Arc::new(backend)).with_seed(Some(config.seed));
    let embedder = HashedEmbedder::default();
    let corpus = InMemoryCorpus::new(case_study_corpus());
    let services = Services {
        gateway: &gateway,
        graph: &graph,
        embedder: &embedder,
        literature: &corpus,
    };
    Ok(run_pipeline(CASE_TOPIC, &config, services, None)?)
}
