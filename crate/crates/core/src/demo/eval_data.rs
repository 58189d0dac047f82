//! Bundled evaluation data: small comparison sets, a judged tournament,
//! toy ratings, similarity pairs, relation labels and toy graphs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::DemoError;
use crate::eval::synth::{generate_comparisons, generate_ratings, ComparisonSpec, RatingSpec};
use crate::eval::{io, run_pairwise_tournament, ComparisonRecord, EvalError, LabeledPair, Outcome, PairedHypothesis};
use crate::kg::{Edge, EntityNode, KnowledgeGraph};
use crate::llm::{ChatRequest, LlmCall, LlmError};
use crate::model::Metric;
use crate::protocol::{templates, RenderedPrompt, Relation};

/// Latent quality of each tournament system.
pub const TOURNAMENT_SYSTEMS: [(&str, f64); 6] = [
    ("hypoforge", 0.9),
    ("no-kg", 0.5),
    ("no-literature", 0.3),
    ("single-pass", 0.0),
    ("baseline-rag", -0.4),
    ("baseline-llm", -0.8),
];
pub const TOURNAMENT_TOPICS: usize = 30;
pub const TOURNAMENT_SEED: u64 = 11;
const JUDGE_ORDER_EFFECT: f64 = 0.3;
const JUDGE_TIE_BAND: f64 = 0.2;

fn metric_shift(m: Metric) -> f64 {
    match m {
        Metric::Novelty => 0.1,
        Metric::Relevance => -0.1,
        Metric::Significance => 0.05,
        Metric::Verifiability => -0.05,
    }
}

/// Hypothesis texts keyed by system, then topic. Each text names its
/// system so the judge can recover it.
pub fn tournament_hypotheses() -> BTreeMap<String, BTreeMap<String, String>> {
    TOURNAMENT_SYSTEMS
        .iter()
        .map(|(s, _)| {
            let by_topic = (1..=TOURNAMENT_TOPICS)
                .map(|t| {
                    let topic = format!("topic {t:02}");
                    (topic.clone(), format!("[{s}] candidate mechanism for {topic}"))
                })
                .collect();
            (s.to_string(), by_topic)
        })
        .collect()
}

fn uniform(key: &str) -> f64 {
    let d = Sha256::digest(key.as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&d[..8]);
    (u64::from_le_bytes(b) >> 11) as f64 / (1u64 << 53) as f64
}

fn system_of(line: &str) -> Option<f64> {
    let name = line.split('[').nth(1)?.split(']').next()?;
    TOURNAMENT_SYSTEMS.iter().find(|(s, _)| *s == name).map(|(_, q)| *q)
}

/// Deterministic judge: for each metric the first hypothesis wins with
/// probability `σ(0.3 + q_A − q_B)`, with a symmetric tie band, using a
/// hash of the prompt as the random draw.
pub fn tournament_judge_reply(req: &ChatRequest) -> Result<String, LlmError> {
    let field = |key: &str| req.user_prompt.lines().find_map(|l| l.strip_prefix(key)).and_then(system_of);
    let (Some(a), Some(b)) = (field("H_A: "), field("H_B: ")) else {
        return Err(LlmError::Protocol("judge needs two tournament hypotheses".into()));
    };
    let mut out = Vec::new();
    for m in Metric::ALL {
        let p = 1.0 / (1.0 + (-(JUDGE_ORDER_EFFECT + a - b + metric_shift(m) * (a - b))).exp());
        let t = JUDGE_TIE_BAND.min(2.0 * p).min(2.0 * (1.0 - p));
        let u = uniform(&format!("{}\n{}", req.user_prompt, m.name()));
        let (token, reason) = if u < p - t / 2.0 {
            ("A", "A is stronger.")
        } else if u < p + t / 2.0 {
            ("0", "No clear difference.")
        } else {
            ("B", "B is stronger.")
        };
        out.push(format!("{}: {token} - {reason}", m.name()));
    }
    Ok(out.join("\n"))
}

struct FnJudge<F>(F);

impl<F: Fn(&ChatRequest) -> Result<String, LlmError> + Sync> LlmCall for FnJudge<F> {
    fn call(&self, prompt: &RenderedPrompt) -> Result<String, LlmError> {
        (self.0)(&ChatRequest::new(prompt.system.clone(), prompt.user.clone()))
    }
}

/// The judged tournament over [`tournament_hypotheses`].
pub fn tournament_records() -> Result<Vec<ComparisonRecord>, EvalError> {
    let t = run_pairwise_tournament(&tournament_hypotheses(), &FnJudge(tournament_judge_reply), TOURNAMENT_SEED)?;
    Ok(t.records)
}

fn rec(a: &str, b: &str, o: Outcome, times: usize) -> Vec<ComparisonRecord> {
    vec![ComparisonRecord::new(a, b, Metric::Novelty, o); times]
}

/// Comparison sets over at most three systems, small enough for an
/// exhaustive grid search over the parameters.
pub fn small_bt_sets() -> Vec<(&'static str, Vec<ComparisonRecord>)> {
    use Outcome::{FirstWins as W, SecondWins as L, Tie as T};
    let two = [
        rec("A", "B", W, 7),
        rec("A", "B", L, 3),
        rec("A", "B", T, 2),
        rec("B", "A", W, 4),
        rec("B", "A", L, 5),
        rec("B", "A", T, 1),
    ]
    .concat();
    let three = [
        rec("A", "B", W, 6),
        rec("A", "B", L, 4),
        rec("B", "A", W, 3),
        rec("B", "A", L, 5),
        rec("B", "C", W, 7),
        rec("B", "C", L, 3),
        rec("B", "C", T, 2),
        rec("C", "B", W, 4),
        rec("C", "B", L, 6),
        rec("A", "C", W, 8),
        rec("A", "C", L, 2),
        rec("C", "A", W, 3),
        rec("C", "A", L, 6),
        rec("C", "A", T, 1),
    ]
    .concat();
    let chain = [
        rec("A", "B", W, 5),
        rec("A", "B", L, 4),
        rec("B", "A", W, 4),
        rec("B", "A", L, 4),
        rec("B", "C", W, 6),
        rec("B", "C", L, 2),
        rec("C", "B", W, 3),
        rec("C", "B", L, 5),
        rec("C", "B", T, 2),
    ]
    .concat();
    vec![("two_systems", two), ("three_systems", three), ("three_chain", chain)]
}

pub fn toy_rating_spec() -> RatingSpec {
    RatingSpec {
        raters: 2,
        ..RatingSpec::small()
    }
}

pub fn similarity_pairs() -> Vec<PairedHypothesis> {
    let rows = [
        (
            "GPR153 in vascular injury",
            "GPR153 loss increases YAP activity in smooth muscle after injury",
            "GPR153 deficiency activates YAP in smooth muscle cells after vascular injury",
        ),
        (
            "TREM2 in microglial lipid handling",
            "TREM2 signalling drives lipid droplet clearance in microglia",
            "TREM2 promotes microglial clearance of lipid droplets",
        ),
        (
            "PCSK9 and hepatic LDL receptor",
            "PCSK9 inhibition raises hepatic LDL receptor recycling",
            "Blocking PCSK9 increases LDL receptor recycling in hepatocytes",
        ),
        (
            "SGLT2 and cardiac fibrosis",
            "SGLT2 inhibition lowers cardiac fibroblast activation",
            "SGLT2 inhibitors reduce activation of cardiac fibroblasts",
        ),
    ];
    rows.iter()
        .map(|(b, g, o)| PairedHypothesis {
            background: b.to_string(),
            generated: g.to_string(),
            gold: o.to_string(),
        })
        .collect()
}

/// Ten predictions with a hand-counted confusion matrix: truth positive
/// predicted positive 4, truth positive predicted negative 2, truth
/// negative predicted positive 1, truth negative predicted negative 3.
pub fn label_fixture() -> (Vec<Relation>, Vec<Relation>) {
    use Relation::{Negative as N, Positive as P};
    let pairs = [
        (P, P),
        (P, P),
        (N, P),
        (P, P),
        (N, N),
        (P, N),
        (N, P),
        (N, N),
        (P, P),
        (N, N),
    ];
    pairs.iter().copied().unzip()
}

pub fn labeled_pairs() -> Vec<LabeledPair> {
    let rows = [
        ("TNF", "NFKB1", "TNF activates NFKB1 signalling in endothelial cells", Relation::Positive),
        ("miR-145", "KLF4", "miR-145 inhibits KLF4 expression in smooth muscle", Relation::Negative),
        ("IL6", "STAT3", "IL6 increases STAT3 phosphorylation in hepatocytes", Relation::Positive),
        ("metformin", "MTOR", "metformin suppresses MTOR activity through AMPK", Relation::Negative),
        ("VEGFA", "KDR", "VEGFA stimulates KDR signalling during angiogenesis", Relation::Positive),
        ("PTEN", "AKT1", "PTEN decreases AKT1 activation in neurons", Relation::Negative),
    ];
    rows.iter()
        .map(|(s, t, h, l)| LabeledPair {
            source: s.to_string(),
            target: t.to_string(),
            hypothesis: h.to_string(),
            label: *l,
        })
        .collect()
}

/// Keyword classifier used as a scripted judge for [`labeled_pairs`].
pub fn relation_judge_reply(req: &ChatRequest) -> Result<String, LlmError> {
    if req.system_prompt != templates::CLASSIFIER {
        return Err(LlmError::Protocol("relation judge only answers the classifier prompt".into()));
    }
    let text = req.user_prompt.to_lowercase();
    let negative = ["inhibit", "suppress", "decrease", "repress", "lower"]
        .iter()
        .any(|w| text.contains(w));
    Ok(format!("Relation: {}", if negative { "negative" } else { "positive" }))
}

fn toy_graph(nodes: &[(&str, &str, &str)], edges: &[(&str, &str, &str)]) -> KnowledgeGraph {
    let nodes = nodes
        .iter()
        .map(|(id, name, cat)| EntityNode {
            node_id: id.to_string(),
            name: name.to_string(),
            category: cat.to_string(),
        })
        .collect();
    let edges = edges.iter().map(|(a, r, b)| Edge::new(*a, *r, *b)).collect();
    KnowledgeGraph::from_parts(nodes, edges).expect("toy graph is consistent")
}

/// Three genes in a triangle.
pub fn triangle_graph() -> KnowledgeGraph {
    toy_graph(
        &[("A", "GENE_A", "gene/protein"), ("B", "GENE_B", "gene/protein"), ("C", "GENE_C", "gene/protein")],
        &[("A", "protein_protein", "B"), ("B", "protein_protein", "C"), ("A", "protein_protein", "C")],
    )
}

/// `A` joined to `B` and `C`.
pub fn star_graph() -> KnowledgeGraph {
    toy_graph(
        &[("A", "HUB", "gene/protein"), ("B", "LEAF_B", "gene/protein"), ("C", "LEAF_C", "drug")],
        &[("A", "protein_protein", "B"), ("C", "drug_protein", "A")],
    )
}

pub const PRIMEKG_SAMPLE: &str = "\
relation,display_relation,x_index,x_id,x_type,x_name,x_source,y_index,y_id,y_type,y_name,y_source
protein_protein,ppi,0,9796,gene/protein,PHYHIP,NCBI,1,56992,gene/protein,KIF15,NCBI
protein_protein,ppi,2,7918,gene/protein,GPANK1,NCBI,3,9240,gene/protein,PNMA1,NCBI
drug_protein,target,4,DB00945,drug,Aspirin,DrugBank,5,5742,gene/protein,PTGS1,NCBI
disease_protein,associated with,6,5044,disease,atherosclerosis,MONDO,5,5742,gene/protein,PTGS1,NCBI
protein_protein,ppi,5,5742,gene/protein,PTGS1,NCBI,0,9796,gene/protein,PHYHIP,NCBI
";

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), DemoError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<(), EvalError>) -> Result<Vec<u8>, DemoError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| DemoError::Config(e.to_string()))?;
    Ok(buf)
}

/// Writes every bundled evaluation and graph fixture under `dir`.
pub fn write_eval_fixtures(dir: &Path) -> Result<(), DemoError> {
    for (name, recs) in small_bt_sets() {
        write(&dir.join(format!("bt/{name}.csv")), csv_bytes(|b| io::write_comparisons(b, &recs))?)?;
    }
    let synth = generate_comparisons(&ComparisonSpec::standard());
    write(&dir.join("synthetic_comparisons.csv"), csv_bytes(|b| io::write_comparisons(b, &synth))?)?;
    let tournament = tournament_records().map_err(|e| DemoError::Config(e.to_string()))?;
    write(
        &dir.join("tournament_comparisons.csv"),
        csv_bytes(|b| io::write_comparisons(b, &tournament))?,
    )?;
    let ratings = generate_ratings(&toy_rating_spec());
    write(&dir.join("ratings_toy.csv"), csv_bytes(|b| io::write_ratings(b, &ratings))?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(io::PAIR_HEADER).map_err(|e| DemoError::Config(e.to_string()))?;
    for p in similarity_pairs() {
        w.write_record([&p.background, &p.generated, &p.gold])
            .map_err(|e| DemoError::Config(e.to_string()))?;
    }
    write(&dir.join("similarity_pairs.csv"), w.into_inner().map_err(|e| DemoError::Config(e.to_string()))?)?;

    let (pred, truth) = label_fixture();
    let mut labels = format!("{}\n", io::LABEL_HEADER.join(","));
    for (p, t) in pred.iter().zip(&truth) {
        labels.push_str(&format!("{},{}\n", p.as_str(), t.as_str()));
    }
    write(&dir.join("labels.csv"), labels)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(io::LABELED_PAIR_HEADER).map_err(|e| DemoError::Config(e.to_string()))?;
    for p in labeled_pairs() {
        w.write_record([&p.source, &p.target, &p.hypothesis, p.label.as_str()])
            .map_err(|e| DemoError::Config(e.to_string()))?;
    }
    write(&dir.join("labeled_pairs.csv"), w.into_inner().map_err(|e| DemoError::Config(e.to_string()))?)?;

    for (name, g) in [("triangle", triangle_graph()), ("star", star_graph())] {
        let mut buf = Vec::new();
        g.write_tsv(&mut buf)?;
        write(&dir.join(format!("kg/{name}.tsv")), buf)?;
    }
    write(&dir.join("kg/primekg_sample.csv"), PRIMEKG_SAMPLE)?;
    let g = KnowledgeGraph::import_primekg(PRIMEKG_SAMPLE.as_bytes())?;
    let mut buf = Vec::new();
    g.write_tsv(&mut buf)?;
    write(&dir.join("kg/primekg_sample.tsv"), buf)?;
    Ok(())
}
