mod common;

use solver_verifier::evaluation::MetricsReport;
use solver_verifier::model::{read_jsonl, CodeCandidate, RunConfig};
use solver_verifier::orchestrator::{Engine, EvalRequest, EvalTask};

fn run(task: EvalTask, with_cot: bool, with_mv: bool, rerank: bool) -> (MetricsReport, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let (config, benchmark) = common::bench::write_fixture(dir.path());
    let engine = Engine::new(RunConfig::load(&config).unwrap()).unwrap();
    let req = EvalRequest {
        benchmark,
        task,
        with_cot,
        with_mv,
        rerank,
        negatives: None,
        out_dir: dir.path().join("out"),
    };
    (engine.evaluate(&req).unwrap(), dir)
}

#[test]
fn code_task_metrics() {
    let (m, _dir) = run(EvalTask::Code, false, false, true);
    assert_eq!(m.pass_pct, Some(40.0));
    assert_eq!(m.case_pass_pct, Some(53.33));
    // Predicted suites rescue items 1-9; item 10's suite prefers `x * 10 + 1`.
    assert_eq!(m.rerank_pass_pct, Some(90.0));
    assert_eq!(m.rerank_case_pass_pct, Some(90.0));
    assert_eq!(m.acc_pct, None);
}

#[test]
fn test_task_metrics() {
    let (m, dir) = run(EvalTask::Test, true, true, false);
    assert_eq!(m.acc_pct, Some(86.67));
    assert_eq!(m.test_pass_pct, Some(70.0));
    assert_eq!(m.test_case_pass_pct, Some(86.67));
    assert_eq!(m.fp_pct, Some(11.11));
    assert!(dir.path().join("out/metrics.json").exists());
    assert!(dir.path().join("out/suites.jsonl").exists());
    let negatives: Vec<CodeCandidate> = read_jsonl(&dir.path().join("out/negatives.jsonl")).unwrap();
    assert_eq!(negatives.len(), 18);
    assert!(negatives.iter().all(|n| n.sample_index < 2));
}

#[test]
fn recorded_negatives_are_reused() {
    let dir = tempfile::tempdir().unwrap();
    let (config, benchmark) = common::bench::write_fixture(dir.path());
    let engine = Engine::new(RunConfig::load(&config).unwrap()).unwrap();
    let mut req = EvalRequest {
        benchmark,
        task: EvalTask::Test,
        with_cot: true,
        with_mv: true,
        rerank: false,
        negatives: None,
        out_dir: dir.path().join("first"),
    };
    let first = engine.evaluate(&req).unwrap();
    req.negatives = Some(dir.path().join("first/negatives.jsonl"));
    req.out_dir = dir.path().join("second");
    let second = engine.evaluate(&req).unwrap();
    assert_eq!(first.fp_pct, second.fp_pct);
    assert!(!dir.path().join("second/negatives.jsonl").exists());
}

#[test]
fn greedy_prediction_without_votes() {
    let (m, _dir) = run(EvalTask::Test, true, false, false);
    // One sample per input: item 7 still lacks x=3, item 9 keeps 28, and
    // item 10 now takes the first (wrong) sample.
    assert_eq!(m.acc_pct, Some(86.67));
}
