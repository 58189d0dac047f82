//! Acceptance run: one line per criterion, nonzero exit if any fails.

mod common;

use std::fs::{self, File};
use std::sync::Arc;
use std::time::{Duration, Instant};

use hypoforge::demo::eval_data::{label_fixture, labeled_pairs, relation_judge_reply, small_bt_sets};
use hypoforge::demo::{CASE_FINAL, CASE_TOPIC};
use hypoforge::eval::io::read_comparisons;
use hypoforge::eval::synth::{generate_comparisons, generate_ratings, ComparisonSpec, RatingSpec};
use hypoforge::eval::{
    classification_metrics, classify_relations, fit_bradley_terry, fit_davidson, fit_rasch_map, kendall_tau, pearson,
    quasi_variances_from_cov, BtOptions, ComparisonRecord, QvObjective, RaschData, RaschModel, RaschPriors,
};
use hypoforge::kg::{retrieve_subgraph, Edge, EntityNode, KnowledgeGraph, RetrievalLimits};
use hypoforge::llm::{FnBackend, Gateway};
use hypoforge::model::Metric;
use hypoforge::pipeline::{BranchStatus, RunResult};
use hypoforge::protocol::{parse_critic, parse_pairwise, parse_relation, parse_reviewer, Relation, Winner};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

type Check = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn c1_case_study() -> Check {
    let out_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fixture = case_dir();
    let argv = [
        "hypoforge",
        "generate",
        "--topic",
        CASE_TOPIC,
        "--scripted",
        fixture.to_str().unwrap(),
        "--out",
        out_dir.path().to_str().unwrap(),
    ];
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = hypoforge::cli::run(argv, &mut out, &mut err);
    ensure!(code == 0, "exit {code}: {}", String::from_utf8_lossy(&err));
    let json = fs::read_dir(out_dir.path())
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .find(|p| p.to_string_lossy().ends_with(".result.json"))
        .ok_or("no result file")?;
    let r: RunResult = serde_json::from_str(&fs::read_to_string(json).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let h = &r.branches[0].history;
    let overall: Vec<u8> = h.iter().map(|s| s.overall).collect();
    ensure!(h.first().map(|s| s.scores) == Some([4, 5, 4, 4]), "initial scores {:?}", h.first());
    ensure!(overall.first() == Some(&17) && overall.get(1) == Some(&19), "trajectory {overall:?}");
    ensure!(h.last().map(|s| s.scores) == Some([5, 5, 5, 4]), "final scores {:?}", h.last());
    let top = r.outputs.first().ok_or("no outputs")?;
    ensure!(top.hypothesis.text == CASE_FINAL, "final text differs: {}", top.hypothesis.text);
    Ok(format!("trajectory {overall:?}, final text byte-identical"))
}

fn c2_bt_recovery() -> Check {
    let spec = ComparisonSpec::standard();
    ensure!(spec.seed == 7 && spec.n == 2000 && spec.systems.len() == 5, "generator settings changed");
    let recs = generate_comparisons(&spec);
    let fit = fit_bradley_terry(&recs, &BtOptions::default()).map_err(|e| e.to_string())?;
    let truth: Vec<f64> = spec.systems.iter().map(|s| s.1).collect();
    let est: Vec<f64> = spec.systems.iter().map(|s| fit.beta[&s.0]).collect();
    let tau = kendall_tau(&truth, &est);
    let mean = est.iter().sum::<f64>() / est.len() as f64;
    let worst = est.iter().zip(&truth).map(|(e, t)| (e - mean - t).abs()).fold(0.0, f64::max);
    let alpha = fit.alpha.ok_or("no order effect")?;
    let detail = format!("tau {tau}, max |beta error| {worst:.4}, alpha {alpha:.4}");
    ensure!(tau == 1.0 && worst <= 0.15 && (alpha - 0.4).abs() <= 0.1, "{detail}");
    Ok(detail)
}

fn bundled_bt_sets() -> Result<Vec<(String, Vec<ComparisonRecord>)>, String> {
    let mut out = Vec::new();
    for entry in fs::read_dir(fixtures().join("bt")).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let recs = read_comparisons(File::open(&path).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        out.push((path.file_name().unwrap().to_string_lossy().into_owned(), recs));
    }
    out.sort();
    Ok(out)
}

fn c3_bt_oracle() -> Check {
    let sets = bundled_bt_sets()?;
    ensure!(sets.len() == small_bt_sets().len(), "missing bundled sets");
    let mut worst = 0.0f64;
    for (name, recs) in &sets {
        for order in [true, false] {
            let opts = if order { BtOptions::default() } else { BtOptions::without_order_effect() };
            let fit = fit_bradley_terry(recs, &opts).map_err(|e| e.to_string())?;
            let (beta, alpha) = bt_grid_oracle(recs, order);
            let b = fit.beta_vec();
            for i in 0..b.len() {
                worst = worst.max((b[i] - b[0] - beta[i]).abs());
            }
            worst = worst.max((fit.alpha.unwrap_or(0.0) - alpha).abs());
            ensure!(worst < 1e-3, "{name} order={order}: deviation {worst:.2e}");
        }
    }
    Ok(format!("{} fixtures, max deviation {worst:.2e}", sets.len()))
}

fn c4_quasi_variance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_add = 0.0f64;
    for n in 3..=7 {
        let d: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.02..0.02)).collect();
        let cov = DMatrix::from_fn(n, n, |i, j| if i == j { d[i] } else { 0.0 } + a[i] + a[j] + 0.5);
        let names: Vec<String> = (0..n).map(|i| format!("S{i}")).collect();
        for obj in [QvObjective::Variance, QvObjective::Log] {
            let qv = quasi_variances_from_cov(&names, &cov, obj).map_err(|e| e.to_string())?;
            worst_add = worst_add.max(qv.max_abs_relative_error());
        }
    }
    ensure!(worst_add <= 1e-10, "additive relative error {worst_add:.2e}");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_cd = 0.0f64;
    for trial in 0..5 {
        let n = 4 + trial % 3;
        let a = DMatrix::from_fn(n, n + 2, |_, _| rng.gen_range(-1.0..1.0));
        let cov = &a * a.transpose();
        let names: Vec<String> = (0..n).map(|i| format!("S{i}")).collect();
        let qv = quasi_variances_from_cov(&names, &cov, QvObjective::Variance).map_err(|e| e.to_string())?;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| cov.row(i).iter().copied().collect()).collect();
        for (x, y) in qv.q_vec().iter().zip(qv_coordinate_descent(&rows)) {
            worst_cd = worst_cd.max((x - y).abs());
        }
    }
    ensure!(worst_cd < 1e-6, "coordinate descent gap {worst_cd:.2e}");
    Ok(format!("additive max rel error {worst_add:.1e}, PSD gap {worst_cd:.1e}"))
}

fn c5_davidson() -> Check {
    let recs = read_comparisons(File::open(fixtures().join("tournament_comparisons.csv")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let mut lowest = 1.0f64;
    for m in Metric::ALL {
        let subset: Vec<_> = recs.iter().filter(|r| r.metric == m).cloned().collect();
        let bt = fit_bradley_terry(&subset, &BtOptions::default()).map_err(|e| e.to_string())?;
        let dv = fit_davidson(&subset, &BtOptions::default()).map_err(|e| e.to_string())?;
        lowest = lowest.min(pearson(&bt.beta_vec(), &dv.beta_vec()).ok_or("pearson undefined")?);
    }
    ensure!(lowest >= 0.99, "lowest r {lowest:.4}");
    Ok(format!("lowest Pearson r over metrics {lowest:.5}"))
}

fn c6_rasch() -> Check {
    let data = RaschData {
        ratings: generate_ratings(&RatingSpec::small()),
        k: 5,
    };
    let model = RaschModel::new(&data, RaschPriors::default()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst_grad = 0.0f64;
    for _ in 0..10 {
        let theta: Vec<f64> = model.initial().iter().map(|x| x + rng.gen_range(-0.5..0.5)).collect();
        let g = model.gradient(&theta);
        let scale = g.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for i in 0..theta.len() {
            let h = 1e-5 * theta[i].abs().max(1.0);
            let (mut a, mut b) = (theta.clone(), theta.clone());
            a[i] += h;
            b[i] -= h;
            let fd = (model.log_posterior(&a) - model.log_posterior(&b)) / (2.0 * h);
            worst_grad = worst_grad.max((g[i] - fd).abs() / scale);
        }
    }
    ensure!(worst_grad <= 1e-6, "gradient relative error {worst_grad:.2e}");

    let mut worst_probit = 0.0f64;
    let single = RaschPriors {
        sigma_u: 1.0,
        sigma_v: None,
        tau_sd: None,
    };
    let mut fits = Vec::new();
    for seed in [1, 2, 3] {
        let ratings = single_rater(seed);
        let fit = fit_rasch_map(&RaschData { ratings: ratings.clone(), k: 5 }, single).map_err(|e| e.to_string())?;
        let flat: Vec<(u8, bool)> = ratings.iter().map(|r| (r.rating, r.metric == Metric::Significance)).collect();
        let (tau, beta2) = ordered_probit_oracle(&flat, 5);
        for (a, b) in fit.tau.iter().zip(&tau) {
            worst_probit = worst_probit.max((a - b).abs());
        }
        worst_probit = worst_probit.max((fit.beta_m[&Metric::Significance] - beta2).abs());
        fits.push(fit);
    }
    ensure!(worst_probit < 1e-4, "ordered probit gap {worst_probit:.2e}");
    for seed in 0..5 {
        let spec = RatingSpec { seed, ..RatingSpec::small() };
        let data = RaschData {
            ratings: generate_ratings(&spec),
            k: 5,
        };
        fits.push(fit_rasch_map(&data, RaschPriors::default()).map_err(|e| e.to_string())?);
    }
    let unordered = fits.iter().filter(|f| !f.tau.windows(2).all(|w| w[0] < w[1])).count();
    ensure!(unordered == 0, "{unordered} fits with unordered thresholds");
    Ok(format!(
        "gradient {worst_grad:.1e}, probit gap {worst_probit:.1e}, {} fits ordered",
        fits.len()
    ))
}

fn c7_temporal() -> Check {
    let config = case_config();
    let cutoff = config.temporal_cutoff.ok_or("fixture config has no cutoff")?;
    let run = replay_case(&config);
    let leaks = temporal_leaks(&run, cutoff);
    ensure!(leaks.is_empty(), "leaks: {leaks:?}");
    Ok(format!("{} prompts scanned, no record after {cutoff}", run.requests.len()))
}

fn c8_parsers() -> Check {
    let a = parse_critic(CRITIC_BLOCK).map_err(|e| e.to_string())?;
    ensure!(a.scores.as_array() == [4, 5, 4, 4], "critic block scores {:?}", a.scores.as_array());
    ensure!(parse_critic(CRITIC_INLINE).is_ok(), "inline critic rejected");
    let d = parse_reviewer(DIRECTIVE).map_err(|e| e.to_string())?;
    ensure!(d.actions.len() == 2, "directive actions {:?}", d.actions);
    ensure!(
        parse_reviewer("ACTIONS:neo4j,pubmed\nDEPTH_OVERRIDE:\nRELS_OVERRIDE:").is_ok(),
        "bare directive rejected"
    );
    let v = parse_pairwise(PAIRWISE).map_err(|e| e.to_string())?;
    ensure!(
        v.winner(Metric::Novelty) == Winner::First && v.winner(Metric::Relevance) == Winner::Tie,
        "pairwise verdicts"
    );
    for (text, want) in [
        ("positive", Relation::Positive),
        ("negative", Relation::Negative),
        ("stimulate", Relation::Positive),
        ("inhibit", Relation::Negative),
    ] {
        ensure!(parse_relation(text).ok() == Some(want), "relation `{text}`");
    }
    let mut n = 0;
    for (i, m) in mutants(CRITIC_BLOCK) {
        ensure!(parse_critic(&m).is_err(), "critic mutant {i} accepted");
        n += 1;
    }
    for (i, m) in mutants(DIRECTIVE) {
        ensure!(parse_reviewer(&m).is_err(), "directive mutant {i} accepted");
        n += 1;
    }
    for (i, m) in mutants(PAIRWISE) {
        ensure!(parse_pairwise(&m).is_err(), "pairwise mutant {i} accepted");
        n += 1;
    }
    Ok(format!("all samples parsed, {n} mutants rejected"))
}

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
    let mut triples = std::collections::BTreeSet::new();
    for _ in 0..rng.gen_range(1..=2 * n) {
        let a = rng.gen_range(0..n);
        let mut b = rng.gen_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        triples.insert((a, *RELATIONS.choose(rng).unwrap(), b));
    }
    let edges = triples
        .into_iter()
        .map(|(a, r, b)| Edge::new(format!("v{a:02}"), r, format!("v{b:02}")))
        .collect();
    KnowledgeGraph::from_parts(nodes, edges).unwrap()
}

fn c9_subgraph() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut cases = 0;
    for g in 0..100 {
        let graph = random_graph(&mut rng);
        let ids: Vec<String> = graph.nodes().iter().map(|n| n.node_id.clone()).collect();
        for depth in 1..=3 {
            let k = rng.gen_range(1..=ids.len().min(4));
            let seeds: Vec<String> = ids.choose_multiple(&mut rng, k).cloned().collect();
            let limits = RetrievalLimits {
                max_edges: 1000,
                max_paths: 1000,
            };
            let got = retrieve_subgraph(&graph, &seeds, depth, &None, limits).map_err(|e| e.to_string())?;
            let want = brute_force_subgraph(&graph, &seeds, depth, &None, limits.max_edges, limits.max_paths);
            ensure!(got == want, "graph {g} depth {depth} seeds {seeds:?}");
            cases += 1;
        }
    }
    Ok(format!("{cases} graph/depth cases identical"))
}

fn c10_determinism() -> Check {
    let config = case_config();
    let a = replay_case(&config).outcome;
    let b = replay_case(&config).outcome;
    ensure!(a.result == b.result, "run results differ");
    ensure!(
        a.steps.len() == b.steps.len() && a.steps.iter().zip(&b.steps).all(|(x, y)| x.same_content(y)),
        "step records differ"
    );
    let over = a
        .result
        .branches
        .iter()
        .filter(|br| br.refinement_cycles > config.max_cycles)
        .count();
    ensure!(over == 0, "{over} branches exceed max_cycles");
    let tin: u64 = a.steps.iter().map(|s| s.tokens_in).sum();
    let tout: u64 = a.steps.iter().map(|s| s.tokens_out).sum();
    ensure!(
        (tin, tout) == (a.result.tokens_in, a.result.tokens_out),
        "token totals {:?} vs steps {:?}",
        (a.result.tokens_in, a.result.tokens_out),
        (tin, tout)
    );
    let mut tight = config.clone();
    tight.max_cycles = 1;
    let t = replay_case(&tight).outcome.result;
    ensure!(
        t.branches.iter().all(|b| b.refinement_cycles <= 1 && b.critic_calls <= 2),
        "max_cycles 1 not honoured"
    );
    ensure!(
        a.result.branches.iter().any(|b| b.status == BranchStatus::Exhausted),
        "case run never reached the cycle cap"
    );
    Ok(format!("{} steps identical, {tin} in / {tout} out tokens", a.steps.len()))
}

fn c11_classification() -> Check {
    let (pred, truth) = label_fixture();
    let r = classification_metrics(&pred, &truth).map_err(|e| e.to_string())?;
    ensure!(r.confusion == [[4, 2], [1, 3]], "confusion {:?}", r.confusion);
    ensure!(r.accuracy == 0.7, "accuracy {}", r.accuracy);
    let items = labeled_pairs();
    let gateway = Gateway::new(Arc::new(FnBackend::new(|_, req| relation_judge_reply(req))));
    let (pred, _) = classify_relations(&items, &gateway).map_err(|e| e.to_string())?;
    let pred: Vec<Relation> = pred.into_iter().collect::<Option<_>>().ok_or("unparsed judge reply")?;
    let truth: Vec<Relation> = items.iter().map(|i| i.label).collect();
    let e2e = classification_metrics(&pred, &truth).map_err(|e| e.to_string())?;
    ensure!(e2e.accuracy == 1.0, "end-to-end accuracy {}", e2e.accuracy);
    Ok(format!("confusion {:?}, end-to-end accuracy {}", r.confusion, e2e.accuracy))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("case-study replay", Duration::from_secs(5), c1_case_study),
        ("Bradley-Terry recovery", Duration::from_secs(2), c2_bt_recovery),
        ("Bradley-Terry grid oracle", Duration::from_secs(5), c3_bt_oracle),
        ("quasi-variance exactness", Duration::from_secs(1), c4_quasi_variance),
        ("Davidson cross-check", Duration::from_secs(2), c5_davidson),
        ("cumulative probit correctness", Duration::from_secs(10), c6_rasch),
        ("temporal soundness", Duration::from_secs(5), c7_temporal),
        ("protocol parsers", Duration::from_secs(1), c8_parsers),
        ("subgraph oracle", Duration::from_secs(10), c9_subgraph),
        ("pipeline determinism and bounds", Duration::from_secs(5), c10_determinism),
        ("classification metrics", Duration::from_secs(1), c11_classification),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= *limit => (true, d),
            Ok(d) => (false, format!("{d}; too slow")),
            Err(e) => (false, e),
        };
        failed += usize::from(!ok);
        println!(
            "criterion {:>2} {name:<32} {} ({detail}; {:.2}s of {}s)",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
