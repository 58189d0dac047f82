//! Independent reference implementations used as test oracles. None of
//! these call into the library's numerical code.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use hypoforge::eval::{ComparisonRecord, Outcome, Rating};
use hypoforge::kg::{Edge, KnowledgeGraph, Path, Subgraph};
use hypoforge::llm::{ChatBackend, ChatRequest, ChatResponse, LlmError};
use hypoforge::model::{AgentRole, Metric};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn case_dir() -> PathBuf {
    fixtures().join("case_study")
}

// --- paired comparisons ---------------------------------------------------

/// Sorted system names.
pub fn system_names(records: &[ComparisonRecord]) -> Vec<String> {
    let s: BTreeSet<String> = records.iter().flat_map(|r| [r.first.clone(), r.second.clone()]).collect();
    s.into_iter().collect()
}

fn ln_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Bradley-Terry log-likelihood with ties as half wins. `beta` is indexed
/// like [`system_names`].
pub fn bt_loglik(records: &[ComparisonRecord], names: &[String], beta: &[f64], alpha: f64) -> f64 {
    let idx = |n: &str| names.iter().position(|x| x == n).unwrap();
    records
        .iter()
        .map(|r| {
            let d = alpha + beta[idx(&r.first)] - beta[idx(&r.second)];
            let w = match r.outcome {
                Outcome::FirstWins => 1.0,
                Outcome::SecondWins => 0.0,
                Outcome::Tie => 0.5,
            };
            w * ln_sigmoid(d) + (1.0 - w) * ln_sigmoid(-d)
        })
        .sum()
}

/// Davidson log-likelihood: `P(first) = e^{d/2}/D`, `P(second) = e^{-d/2}/D`,
/// `P(tie) = ν/D` with `D = e^{d/2} + e^{-d/2} + ν`.
pub fn davidson_loglik(records: &[ComparisonRecord], names: &[String], beta: &[f64], alpha: f64, nu: f64) -> f64 {
    let idx = |n: &str| names.iter().position(|x| x == n).unwrap();
    records
        .iter()
        .map(|r| {
            let d = alpha + beta[idx(&r.first)] - beta[idx(&r.second)];
            let denom = (d / 2.0).exp() + (-d / 2.0).exp() + nu;
            let num = match r.outcome {
                Outcome::FirstWins => (d / 2.0).exp(),
                Outcome::SecondWins => (-d / 2.0).exp(),
                Outcome::Tie => nu,
            };
            (num / denom).ln()
        })
        .sum()
}

/// Coarse-to-fine grid maximisation: an 11-point grid per coordinate,
/// recentred on the best point and narrowed threefold each round.
pub fn grid_maximize(dim: usize, half_width: f64, tol: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let pts = 11usize;
    let mut center = vec![0.0; dim];
    let mut h = half_width;
    while h > tol {
        let mut best = (f64::NEG_INFINITY, center.clone());
        let total = pts.pow(dim as u32);
        let mut x = vec![0.0; dim];
        for k in 0..total {
            let mut rem = k;
            for (d, xd) in x.iter_mut().enumerate() {
                let step = rem % pts;
                rem /= pts;
                *xd = center[d] - h + 2.0 * h * step as f64 / (pts - 1) as f64;
            }
            let v = f(&x);
            if v > best.0 {
                best = (v, x.clone());
            }
        }
        center = best.1;
        h /= 3.0;
    }
    center
}

/// Grid-search MLE. Returns abilities relative to the first system
/// (`β_0 = 0`) and the order effect (0 when not fitted).
pub fn bt_grid_oracle(records: &[ComparisonRecord], order_effect: bool) -> (Vec<f64>, f64) {
    let names = system_names(records);
    let n = names.len();
    let dim = n - 1 + usize::from(order_effect);
    let unpack = |x: &[f64]| {
        let mut beta = vec![0.0];
        beta.extend_from_slice(&x[..n - 1]);
        let alpha = if order_effect { x[n - 1] } else { 0.0 };
        (beta, alpha)
    };
    let x = grid_maximize(dim, 4.0, 1e-7, |x| {
        let (b, a) = unpack(x);
        bt_loglik(records, &names, &b, a)
    });
    unpack(&x)
}

/// Grid-search Davidson MLE: abilities relative to the first system, the
/// order effect and ν.
pub fn davidson_grid_oracle(records: &[ComparisonRecord]) -> (Vec<f64>, f64, f64) {
    let names = system_names(records);
    let n = names.len();
    let x = grid_maximize(n + 1, 4.0, 1e-7, |x| {
        let mut beta = vec![0.0];
        beta.extend_from_slice(&x[..n - 1]);
        davidson_loglik(records, &names, &beta, x[n - 1], x[n].exp())
    });
    let mut beta = vec![0.0];
    beta.extend_from_slice(&x[..n - 1]);
    (beta, x[n - 1], x[n].exp())
}

// --- quasi-variances ------------------------------------------------------

/// Least-squares quasi-variances by cyclic coordinate descent on
/// `Σ_{i<j} (q_i + q_j − v_ij)²` with `q ≥ 0`.
pub fn qv_coordinate_descent(cov: &[Vec<f64>]) -> Vec<f64> {
    let n = cov.len();
    let v = |i: usize, j: usize| cov[i][i] + cov[j][j] - 2.0 * cov[i][j];
    let mut q: Vec<f64> = (0..n).map(|i| cov[i][i].max(0.0)).collect();
    for _ in 0..100_000 {
        let mut change: f64 = 0.0;
        for i in 0..n {
            let s: f64 = (0..n).filter(|&j| j != i).map(|j| v(i, j) - q[j]).sum();
            let new = (s / (n - 1) as f64).max(0.0);
            change = change.max((new - q[i]).abs());
            q[i] = new;
        }
        if change < 1e-15 {
            break;
        }
    }
    q
}

// --- ordered probit -------------------------------------------------------

fn phi(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// Ordered-probit log-likelihood for categories `1..=k` with a shift
/// `beta2` on items flagged `true`.
pub fn ordered_probit_loglik(data: &[(u8, bool)], k: u8, tau: &[f64], beta2: f64) -> f64 {
    if tau.windows(2).any(|w| w[1] <= w[0]) {
        return f64::NEG_INFINITY;
    }
    data.iter()
        .map(|&(y, flag)| {
            let eta = if flag { beta2 } else { 0.0 };
            let upper = if y == k { 1.0 } else { phi(tau[y as usize - 1] - eta) };
            let lower = if y == 1 { 0.0 } else { phi(tau[y as usize - 2] - eta) };
            (upper - lower).ln()
        })
        .sum()
}

/// Ordered-probit MLE by Newton's method with finite-difference
/// derivatives. Returns `(τ, β₂)`.
pub fn ordered_probit_oracle(data: &[(u8, bool)], k: u8) -> (Vec<f64>, f64) {
    let m = k as usize - 1;
    let f = |x: &[f64]| ordered_probit_loglik(data, k, &x[..m], x[m]);
    let mut x: Vec<f64> = (0..m).map(|i| -1.0 + 2.0 * i as f64 / m.max(1) as f64).collect();
    x.push(0.0);
    let d = m + 1;
    let h = 1e-4;
    let grad = |x: &[f64]| -> Vec<f64> {
        (0..d)
            .map(|i| {
                let mut a = x.to_vec();
                let mut b = x.to_vec();
                a[i] += h;
                b[i] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect()
    };
    for _ in 0..200 {
        let g = grad(&x);
        let mut hess = nalgebra::DMatrix::zeros(d, d);
        for j in 0..d {
            let mut a = x.clone();
            let mut b = x.clone();
            a[j] += h;
            b[j] -= h;
            let (ga, gb) = (grad(&a), grad(&b));
            for i in 0..d {
                hess[(i, j)] = (ga[i] - gb[i]) / (2.0 * h);
            }
        }
        let hess = (&hess + hess.transpose()) * 0.5;
        let step = (-hess)
            .lu()
            .solve(&nalgebra::DVector::from_vec(g.clone()))
            .unwrap_or_else(|| nalgebra::DVector::from_vec(g.clone()));
        let base = f(&x);
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-10 {
            let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            if f(&cand) >= base {
                x = cand;
                moved = true;
                break;
            }
            t /= 2.0;
        }
        if !moved || step.amax() * t < 1e-10 {
            break;
        }
    }
    let beta2 = x[m];
    x.truncate(m);
    (x, beta2)
}

// --- subgraphs ------------------------------------------------------------

/// Exhaustive subgraph enumeration straight from the edge list.
pub fn brute_force_subgraph(
    graph: &KnowledgeGraph,
    seeds: &[String],
    depth: usize,
    filter: &Option<BTreeSet<String>>,
    max_edges: usize,
    max_paths: usize,
) -> Subgraph {
    let ok = |e: &Edge| filter.as_ref().map_or(true, |f| f.contains(&e.relation));
    let seed_set: BTreeSet<&String> = seeds.iter().collect();

    let mut direct: Vec<Edge> = graph
        .edges()
        .iter()
        .filter(|e| ok(e) && (seed_set.contains(&e.src) || seed_set.contains(&e.dst)))
        .cloned()
        .collect();
    direct.sort_by(|a, b| (&a.relation, &a.src, &a.dst).cmp(&(&b.relation, &b.src, &b.dst)));
    direct.dedup();
    direct.truncate(max_edges);

    fn walk(
        edges: &[Edge],
        ok: &dyn Fn(&Edge) -> bool,
        nodes: &mut Vec<String>,
        rels: &mut Vec<String>,
        target: &str,
        depth: usize,
        out: &mut Vec<Path>,
    ) {
        let here = nodes.last().unwrap().clone();
        if rels.len() >= 2 && here == target {
            out.push(Path {
                nodes: nodes.clone(),
                relations: rels.clone(),
            });
        }
        if rels.len() == depth {
            return;
        }
        for e in edges {
            if !ok(e) {
                continue;
            }
            let next = if e.src == here {
                &e.dst
            } else if e.dst == here {
                &e.src
            } else {
                continue;
            };
            if nodes.contains(next) {
                continue;
            }
            nodes.push(next.clone());
            rels.push(e.relation.clone());
            walk(edges, ok, nodes, rels, target, depth, out);
            nodes.pop();
            rels.pop();
        }
    }

    let mut paths = Vec::new();
    if depth >= 2 {
        for s in &seed_set {
            for t in &seed_set {
                if t > s {
                    let mut nodes = vec![(*s).clone()];
                    walk(graph.edges(), &ok, &mut nodes, &mut Vec::new(), t, depth, &mut paths);
                }
            }
        }
    }
    paths.sort_by(|a, b| {
        a.relations
            .len()
            .cmp(&b.relations.len())
            .then_with(|| (&a.nodes, &a.relations).cmp(&(&b.nodes, &b.relations)))
    });
    paths.dedup();
    paths.truncate(max_paths);

    let mut ids: BTreeSet<String> = BTreeSet::new();
    for e in &direct {
        ids.insert(e.src.clone());
        ids.insert(e.dst.clone());
    }
    for p in &paths {
        ids.extend(p.nodes.iter().cloned());
    }
    let mut order: Vec<String> = ids.iter().filter(|i| seed_set.contains(i)).cloned().collect();
    order.extend(ids.iter().filter(|i| !seed_set.contains(i)).cloned());
    Subgraph {
        nodes: order.iter().map(|id| graph.node(id).unwrap().clone()).collect(),
        direct_edges: direct,
        multihop_paths: paths,
    }
}

// --- prompt capture -------------------------------------------------------

/// Wraps a backend and keeps every request it sees.
pub struct CapturingBackend<B> {
    pub inner: B,
    pub seen: Arc<Mutex<Vec<ChatRequest>>>,
}

impl<B: ChatBackend> CapturingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            seen: Arc::new(Mutex::new(Vec::new())),
        }
    }
}

impl<B: ChatBackend> ChatBackend for CapturingBackend<B> {
    fn complete(&self, role: AgentRole, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        self.seen.lock().unwrap().push(request.clone());
        self.inner.complete(role, request)
    }
}

// --- protocol samples -----------------------------------------------------

pub const CRITIC_INLINE: &str = "Novelty: 4; Relevance: 5; Significance: 4; Verifiability: 4. The hypothesis can be tested using genetic manipulation ... however, the complexity of the regulatory networks may introduce challenges in isolating ... Overall Score: 17/20";

pub const CRITIC_BLOCK: &str = "Novelty: Score 4
The hypothesis extends known YAP/TAZ involvement to a GPR153-specific mechanism.
Relevance: Score 5
It follows directly from the background.
Significance: Score 4
It could explain how receptor signalling shapes neointima formation.
Verifiability: Score 4
The hypothesis can be tested using genetic manipulation, however, the complexity of the regulatory networks may introduce challenges in isolating effects.
Overall Score: 17/20";

pub const DIRECTIVE: &str = "ACTIONS:neo4j,pubmed\nDEPTH_OVERRIDE:3\nRELS_OVERRIDE:protein_protein,drug_protein";

pub const PAIRWISE: &str = "Novelty: A - integrates more regulators.
Relevance: 0 - both address the input.
Significance: B - broader clinical reach.
Verifiability: 0 - comparable assays.";

pub const REFINER: &str = "Step 1: The hypothesis lacks a mechanism linking Wnt inhibition to reduced fibrosis.
Step 2: New PubMed evidence suggests TGF-β mediates this process.
Step 3: Adding TGF-β clarifies the pathway.
Inhibition of Wnt signaling reduces cardiac fibrosis via downregulation of TGF-β activity.";

pub fn mutants(text: &str) -> Vec<(usize, String)> {
    let lines: Vec<&str> = text.lines().collect();
    (0..lines.len())
        .map(|skip| {
            let kept: Vec<&str> = lines.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, l)| *l).collect();
            (skip, kept.join("\n"))
        })
        .collect()
}

// --- case-study runs ------------------------------------------------------

pub struct CaseRun {
    pub outcome: hypoforge::pipeline::RunOutcome,
    pub requests: Vec<ChatRequest>,
}

/// Runs the topic against the case-study graph and corpus with `backend`,
/// recording every request.
pub fn run_with_backend<B: ChatBackend + 'static>(
    backend: B,
    topic: &str,
    config: &hypoforge::model::PipelineConfig,
    trace_dir: Option<&std::path::Path>,
) -> Result<CaseRun, hypoforge::pipeline::PipelineError> {
    use hypoforge::embed::HashedEmbedder;
    use hypoforge::lit::InMemoryCorpus;
    use hypoforge::llm::Gateway;
    use hypoforge::pipeline::{run_pipeline, Services};

    let capture = CapturingBackend::new(backend);
    let seen = capture.seen.clone();
    let gateway = Gateway::new(Arc::new(capture)).with_seed(Some(config.seed)).with_budget(config.token_budget);
    let graph = KnowledgeGraph::load_tsv_path(case_dir().join("graph.tsv")).unwrap();
    let corpus = InMemoryCorpus::from_jsonl_path(case_dir().join("corpus.jsonl")).unwrap();
    let embedder = HashedEmbedder::default();
    let services = Services {
        gateway: &gateway,
        graph: &graph,
        embedder: &embedder,
        literature: &corpus,
    };
    let outcome = run_pipeline(topic, config, services, trace_dir)?;
    let requests = seen.lock().unwrap().clone();
    Ok(CaseRun { outcome, requests })
}

pub fn case_config() -> hypoforge::model::PipelineConfig {
    let text = std::fs::read_to_string(case_dir().join("config.toml")).unwrap();
    toml::from_str(&text).unwrap()
}

/// Replays the recorded case study.
pub fn replay_case(config: &hypoforge::model::PipelineConfig) -> CaseRun {
    let backend = hypoforge::llm::ScriptedBackend::from_dir(case_dir().join("llm")).unwrap();
    run_with_backend(backend, hypoforge::demo::CASE_TOPIC, config, None).unwrap()
}

/// Post-cutoff corpus records that leak into any request or evidence
/// bundle, as `(pmid, where)` pairs.
pub fn temporal_leaks(run: &CaseRun, cutoff: chrono::NaiveDate) -> Vec<(String, String)> {
    let corpus = hypoforge::lit::InMemoryCorpus::from_jsonl_path(case_dir().join("corpus.jsonl")).unwrap();
    let late: Vec<_> = corpus.records().iter().filter(|r| r.pub_date > cutoff).collect();
    assert!(!late.is_empty(), "fixture corpus has no post-cutoff records");
    let mut leaks = Vec::new();
    for (i, req) in run.requests.iter().enumerate() {
        for r in &late {
            for needle in [&r.title, &r.abstract_text] {
                if req.user_prompt.contains(needle.as_str()) || req.system_prompt.contains(needle.as_str()) {
                    leaks.push((r.pmid.clone(), format!("request {i}")));
                }
            }
            if req.user_prompt.contains(&format!("PMID: {}", r.pmid)) {
                leaks.push((r.pmid.clone(), format!("request {i}")));
            }
        }
    }
    let result = &run.outcome.result;
    for o in &result.outputs {
        for rec in &o.evidence.literature {
            if rec.pub_date > cutoff {
                leaks.push((rec.pmid.clone(), format!("evidence of {}", o.hypothesis.id)));
            }
        }
    }
    leaks
}

pub const LOW_CRITIC: &str = "Novelty: Score 3\nFamiliar.\nRelevance: Score 3\nOn topic.\nSignificance: Score 2\nModest.\nVerifiability: Score 2\nVague.\nOverall Score: 10/20";

/// Case-study responder whose critic always scores 10/20.
pub fn low_score_reply(role: AgentRole, req: &ChatRequest) -> Result<String, LlmError> {
    if req.system_prompt == hypoforge::protocol::templates::CRITIC {
        Ok(LOW_CRITIC.to_string())
    } else {
        hypoforge::demo::case_study_reply(role, req)
    }
}

/// One rater, 60 hypotheses, two metrics, probit latent with fixed thresholds.
pub fn single_rater(seed: u64) -> Vec<Rating> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).unwrap();
    let tau = [-1.0, 0.0, 0.8, 1.6];
    let mut out = Vec::new();
    for h in 0..60 {
        for (metric, shift) in [(Metric::Novelty, 0.0), (Metric::Significance, 0.4)] {
            let latent = shift + std.inverse_cdf(rng.gen_range(1e-9..1.0 - 1e-9));
            let cat = tau.iter().take_while(|&&t| latent > t).count() as u8 + 1;
            out.push(Rating {
                rater: "R1".into(),
                hypothesis: format!("H{h}"),
                metric,
                rating: cat,
            });
        }
    }
    out
}
