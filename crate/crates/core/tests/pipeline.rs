mod common;

use std::collections::BTreeMap;
use std::fs;

use hypoforge::demo::eval_data::write_eval_fixtures;
use hypoforge::demo::{case_study_reply, record_case_study, CASE_CYCLE_1, CASE_FINAL, CASE_TOPIC};
use hypoforge::llm::{FnBackend, LlmError, ScriptedBackend};
use hypoforge::model::AgentRole;
use hypoforge::pipeline::BranchStatus;
use hypoforge::protocol::templates;
use hypoforge::trace::read_trace;

use common::*;

#[test]
fn case_study_trajectory() {
    let run = replay_case(&case_config());
    let r = &run.outcome.result;
    let b1 = &r.branches[0];
    let overall: Vec<u8> = b1.history.iter().map(|s| s.overall).collect();
    assert_eq!(overall, [17, 19, 19, 19]);
    assert_eq!(b1.history[0].scores, [4, 5, 4, 4]);
    assert_eq!(b1.history[3].scores, [5, 5, 5, 4]);
    assert_eq!(b1.status, BranchStatus::Exhausted);
    let top = &r.outputs[0];
    assert_eq!(top.scores.overall(), 19);
    assert_eq!(top.hypothesis.text, CASE_FINAL);
    assert_eq!(top.hypothesis.generation, 3);
    let statuses: Vec<_> = r.branches.iter().map(|b| b.status).collect();
    assert_eq!(statuses, [BranchStatus::Exhausted, BranchStatus::Exhausted, BranchStatus::Discarded]);
    assert_eq!(r.outputs.len(), 2);
    assert_eq!(r.discarded.len(), 1);
}

#[test]
fn lower_threshold_accepts_after_one_refinement() {
    let mut config = case_config();
    config.accept_threshold = 18;
    let r = replay_case(&config).outcome.result;
    assert_eq!(r.branches[0].status, BranchStatus::Accepted);
    assert_eq!(r.branches[0].refinement_cycles, 1);
    assert_eq!(r.outputs[0].hypothesis.text, CASE_CYCLE_1);
}

#[test]
fn first_subgraph_lists_gpr153_first() {
    let run = replay_case(&case_config());
    let scientist = run
        .requests
        .iter()
        .find(|q| q.system_prompt == templates::SCIENTIST)
        .expect("scientist prompt");
    assert!(scientist.user_prompt.contains("Nodes: GPR153 (gene/protein), CEBPB (gene/protein)"));
}

#[test]
fn runs_are_deterministic_and_tokens_add_up() {
    let config = case_config();
    let a = replay_case(&config).outcome;
    let b = replay_case(&config).outcome;
    assert_eq!(a.result, b.result);
    assert_eq!(a.steps.len(), b.steps.len());
    assert!(a.steps.iter().zip(&b.steps).all(|(x, y)| x.same_content(y)));
    let tin: u64 = a.steps.iter().map(|s| s.tokens_in).sum();
    let tout: u64 = a.steps.iter().map(|s| s.tokens_out).sum();
    assert_eq!((a.result.tokens_in, a.result.tokens_out), (tin, tout));
    let indices: Vec<u64> = a.steps.iter().map(|s| s.step_index).collect();
    assert_eq!(indices, (0..a.steps.len() as u64).collect::<Vec<_>>());
}

#[test]
fn refinement_never_exceeds_max_cycles() {
    for max_cycles in 1..=3 {
        let mut config = case_config();
        config.max_cycles = max_cycles;
        let run = replay_case(&config);
        let r = &run.outcome.result;
        for b in &r.branches {
            assert!(b.refinement_cycles <= max_cycles);
            assert!(b.critic_calls <= max_cycles + 1);
        }
        let critic_steps = run.outcome.steps.iter().filter(|s| s.agent_role == AgentRole::Critic).count() as u32;
        assert_eq!(critic_steps, r.branches.iter().map(|b| b.critic_calls).sum::<u32>());
        if max_cycles == 1 {
            assert!(r.branches.iter().all(|b| b.critic_calls == 2));
        }
    }
}

#[test]
fn trace_file_matches_in_memory_steps() {
    let dir = tempfile::tempdir().unwrap();
    let backend = ScriptedBackend::from_dir(case_dir().join("llm")).unwrap();
    let run = run_with_backend(backend, CASE_TOPIC, &case_config(), Some(dir.path())).unwrap();
    let path = run.outcome.result.trace_path.clone().expect("trace path");
    assert!(path.file_name().unwrap().to_string_lossy().ends_with(".trace.jsonl"));
    let on_disk = read_trace(&path).unwrap();
    assert_eq!(on_disk.len(), run.outcome.steps.len());
    assert!(on_disk.iter().zip(&run.outcome.steps).all(|(a, b)| a.same_content(b)));
}

#[test]
fn no_post_cutoff_literature_reaches_any_prompt() {
    let config = case_config();
    let cutoff = config.temporal_cutoff.expect("fixture config sets a cutoff");
    let run = replay_case(&config);
    assert_eq!(temporal_leaks(&run, cutoff), Vec::<(String, String)>::new());

    // Without the cutoff the same corpus does leak, so the check has teeth.
    let mut open = config.clone();
    open.temporal_cutoff = None;
    let uncut = run_with_backend(FnBackend::new(case_study_reply), CASE_TOPIC, &open, None).unwrap();
    assert!(!temporal_leaks(&uncut, cutoff).is_empty());
}

#[test]
fn low_scores_discard_every_branch() {
    let backend = FnBackend::new(low_score_reply);
    let run = run_with_backend(backend, CASE_TOPIC, &case_config(), None).unwrap();
    let r = run.outcome.result;
    assert!(r.outputs.is_empty());
    assert_eq!(r.discarded.len(), 3);
    assert!(r.branches.iter().all(|b| b.status == BranchStatus::Discarded));
}

#[test]
fn budget_exhaustion_stops_branches_with_warnings() {
    let mut config = case_config();
    config.token_budget = Some(6000);
    let backend = ScriptedBackend::from_dir(case_dir().join("llm")).unwrap();
    match run_with_backend(backend, CASE_TOPIC, &config, None) {
        Ok(run) => assert!(!run.outcome.result.warnings.is_empty()),
        Err(e) => assert!(e.to_string().to_lowercase().contains("budget"), "{e}"),
    }
}

#[test]
fn transport_failures_abort_the_run() {
    let backend = FnBackend::new(|role, req| {
        if req.system_prompt == templates::REFINER {
            Err(LlmError::Protocol("connection reset".into()))
        } else {
            case_study_reply(role, req)
        }
    });
    assert!(run_with_backend(backend, CASE_TOPIC, &case_config(), None).is_err());
}

fn snapshot(dir: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn committed_fixtures_match_their_generators() {
    let tmp = tempfile::tempdir().unwrap();
    record_case_study(&tmp.path().join("case_study")).unwrap();
    write_eval_fixtures(tmp.path()).unwrap();
    let fresh = snapshot(tmp.path());
    let committed = snapshot(&fixtures());
    let fresh_names: Vec<_> = fresh.keys().collect();
    let committed_names: Vec<_> = committed.keys().collect();
    assert_eq!(fresh_names, committed_names, "fixture file sets differ");
    for (name, bytes) in &fresh {
        assert!(committed[name] == *bytes, "{name} drifted; rerun the record_fixtures example");
    }
}
