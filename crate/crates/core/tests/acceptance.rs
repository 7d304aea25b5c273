//! Acceptance criteria, one line of output per criterion.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use solver_verifier::evaluation::{
    agreement, agreement_from_verdicts, case_pass_rate, load_items, pass_at_1, relative_change, rerank_by_tests,
    BenchmarkItem, BenchmarkRecord, Direction,
};
use solver_verifier::model::{
    canonical_hash, read_jsonl, CaseLabel, CodeCandidate, Epsilon, ExecutionOutcome, Limits, OutcomeStatus, RejectPick,
    RunConfig, ScoreReport, SelectionTrace, TestCandidate, TestCase, TestInput, TestSuite,
};
use solver_verifier::orchestrator::{Engine, EvalRequest, EvalTask, IterateOptions, StageName};
use solver_verifier::pairs::ensemble_survivors;
use solver_verifier::sandbox::ShimClient;
use solver_verifier::selection::{majority_vote, select_coverage};

const LIMITS: Limits = Limits {
    time_ms: 2000,
    memory_mb: 256,
};
/// Absolute tolerance on reported percentages.
const PCT_TOL: f64 = 0.01;
const SCORE_BUDGET: Duration = Duration::from_secs(60);
const SUITE_BUDGET: Duration = Duration::from_secs(300);

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/pairs")
}

fn engine(config: &Path) -> Engine {
    Engine::new(RunConfig::load(config).unwrap()).unwrap()
}

// Score oracle and label law share one fixture set.

struct ScoreFixture {
    candidate: CodeCandidate,
    suite: TestSuite,
    expected: u32,
}

/// `f_n(x) = x * a + b` for x below a cutoff, `x - 1` above it; some
/// candidates fail at import. The expected count follows from the formula.
fn score_fixtures(n: usize) -> Vec<ScoreFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    (0..n)
        .map(|i| {
            let name = format!("f{i}");
            let (a, b, cut) = (
                rng.random_range(-3i64..4),
                rng.random_range(-5i64..6),
                rng.random_range(0i64..8),
            );
            let broken = rng.random_ratio(1, 10);
            let mut source =
                format!("def {name}(x):\n    if x < {cut}:\n        return x * {a} + {b}\n    return x - 1\n");
            if broken {
                source.push_str("boom = 1 // 0\n");
            }
            let f = |x: i64| if x < cut { x * a + b } else { x - 1 };
            let size = rng.random_range(1..7);
            let mut seen = BTreeSet::new();
            let mut cases = Vec::new();
            let mut expected = 0;
            while cases.len() < size {
                let x = rng.random_range(-4i64..10);
                let truth = f(x);
                let y = if rng.random_bool(0.6) {
                    truth
                } else {
                    truth + rng.random_range(1..3)
                };
                if !seen.insert((x, y)) {
                    continue;
                }
                expected += u32::from(!broken && y == truth);
                cases.push(common::case(&format!("{name}({x})"), &y.to_string()));
            }
            ScoreFixture {
                candidate: common::candidate(&format!("p{i}"), &source, 0),
                suite: TestSuite::new(format!("p{i}"), cases, SelectionTrace::default()).unwrap(),
                expected,
            }
        })
        .collect()
}

fn score_oracle() {
    let start = Instant::now();
    let fx = score_fixtures(100);
    let sandbox = common::sandbox(8);
    let candidates: Vec<CodeCandidate> = fx.iter().map(|f| f.candidate.clone()).collect();
    let suites: Vec<TestSuite> = fx.iter().map(|f| f.suite.clone()).collect();
    let reports = sandbox.run_matrix(&candidates, &suites, LIMITS).unwrap();
    assert_eq!(reports.len(), fx.len());
    let shim = ShimClient::new(common::shim_command()).unwrap();
    for (f, r) in fx.iter().zip(&reports) {
        let mut passed = 0;
        for case in &f.suite.cases {
            let outcome = shim
                .run(
                    &f.candidate.source,
                    &case.assertion(),
                    Some(case.input.function_name()),
                    LIMITS.time_ms,
                    LIMITS.memory_mb,
                )
                .unwrap();
            passed += u32::from(outcome.status == OutcomeStatus::Pass);
        }
        assert_eq!(
            r.exact().passed,
            passed,
            "{} against sequential re-execution",
            r.problem_id
        );
        assert_eq!(r.exact().passed, f.expected, "{} against construction", r.problem_id);
        assert_eq!(r.exact().total as usize, f.suite.cases.len());
    }
    assert!(start.elapsed() < SCORE_BUDGET, "took {:?}", start.elapsed());
}

fn label_law() {
    let fx = score_fixtures(100);
    let sandbox = common::sandbox(8);
    let mut seen_full = 0;
    for f in &fx {
        let r = sandbox.score(&f.candidate, &f.suite, LIMITS).unwrap();
        r.validate().unwrap();
        assert_eq!(r.label_y == 1, r.score == 1.0, "{}", r.problem_id);
        assert_eq!(r.label_y == 1, r.exact().is_full());
        seen_full += usize::from(r.label_y == 1);
    }
    assert!(seen_full > 0 && seen_full < fx.len(), "fixtures exercise both labels");

    assert!(TestSuite::new("p".into(), vec![], SelectionTrace::default()).is_err());
    let empty = TestSuite {
        problem_id: "p".into(),
        cases: vec![],
        selection_trace: SelectionTrace::default(),
    };
    assert!(sandbox.score(&fx[0].candidate, &empty, LIMITS).is_err());
    assert!(ScoreReport::new(&fx[0].candidate, &empty, Vec::<ExecutionOutcome>::new()).is_err());
}

// Greedy coverage.

/// Plain bitmask greedy: highest gain, then higher margin, then lower
/// index; stops on zero gain and fills by margin.
fn greedy_oracle(sets: &[u32], margins: &[f64], k: usize) -> Vec<usize> {
    let mut covered = 0u32;
    let mut picked = Vec::new();
    let better = |i: usize, j: usize, gi: u32, gj: u32| gi > gj || (gi == gj && margins[i] > margins[j]);
    while picked.len() < k {
        let mut best: Option<(usize, u32)> = None;
        for i in 0..sets.len() {
            if picked.contains(&i) {
                continue;
            }
            let gain = (sets[i] & !covered).count_ones();
            if gain == 0 {
                continue;
            }
            if best.map_or(true, |(j, gj)| better(i, j, gain, gj)) {
                best = Some((i, gain));
            }
        }
        let Some((i, _)) = best else { break };
        covered |= sets[i];
        picked.push(i);
    }
    let mut rest: Vec<usize> = (0..sets.len()).filter(|i| !picked.contains(i)).collect();
    rest.sort_by(|&a, &b| margins[b].partial_cmp(&margins[a]).unwrap().then(a.cmp(&b)));
    picked.extend(rest.into_iter().take(k.saturating_sub(picked.len())));
    picked
}

fn best_coverage(sets: &[u32], k: usize) -> u32 {
    (0u32..1 << sets.len())
        .filter(|m| m.count_ones() as usize <= k)
        .map(|m| {
            (0..sets.len())
                .filter(|i| m >> i & 1 == 1)
                .fold(0u32, |acc, i| acc | sets[i])
                .count_ones()
        })
        .max()
        .unwrap()
}

fn greedy_coverage() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let bound = 1.0 - (-1.0f64).exp();
    for instance in 0..200 {
        let universe = rng.random_range(1..=12u32);
        let pool_len = rng.random_range(1..=8usize);
        let k = rng.random_range(1..=4usize);
        let sets: Vec<u32> = (0..pool_len).map(|_| rng.random_range(0..1u32 << universe)).collect();
        let margins: Vec<f64> = (0..pool_len)
            .map(|_| f64::from(rng.random_range(1..=3u32)) / 3.0)
            .collect();
        let pool: Vec<TestCase> = (0..pool_len)
            .map(|i| TestCase {
                vote_margin: margins[i],
                ..common::case(&format!("f({i})"), "0")
            })
            .collect();
        let coverage: Vec<BTreeSet<u32>> = sets
            .iter()
            .map(|&m| (0..universe).filter(|b| m >> b & 1 == 1).collect())
            .collect();
        let picks = select_coverage(&pool, &coverage, k).unwrap();
        assert_eq!(picks, greedy_oracle(&sets, &margins, k), "instance {instance}");
        let achieved = picks.iter().fold(0u32, |acc, &i| acc | sets[i]).count_ones();
        let optimum = best_coverage(&sets, k);
        assert!(
            f64::from(achieved) >= bound * f64::from(optimum),
            "instance {instance}: {achieved} vs optimum {optimum}"
        );
    }
}

// Majority voting.

/// Spellings grouped by value; 1, 1.0 and True are different values.
const VOCAB: &[&[&str]] = &[
    &["(1,2)", "(1, 2)"],
    &["'a'", "\"a\""],
    &["[1,2]", "[1, 2]"],
    &["1"],
    &["1.0"],
    &["True"],
    &["None"],
];

fn majority_voting() {
    let sandbox = common::sandbox(4);
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for round in 0..1000 {
        let n = rng.random_range(1..=7usize);
        let palette: Vec<usize> = (0..rng.random_range(1..=3))
            .map(|_| rng.random_range(0..VOCAB.len()))
            .collect();
        let mut indices: Vec<u32> = (0..n as u32).map(|i| i * 2 + rng.random_range(0..2)).collect();
        let mut samples: Vec<(u32, usize, &str)> = indices
            .drain(..)
            .map(|idx| {
                let value = palette[rng.random_range(0..palette.len())];
                let spellings = VOCAB[value];
                (idx, value, spellings[rng.random_range(0..spellings.len())])
            })
            .collect();
        // Frequency count; ties go to the value whose first sample is earliest.
        let mut counts: BTreeMap<usize, (usize, u32, &str)> = BTreeMap::new();
        for &(idx, value, spelling) in &samples {
            let e = counts.entry(value).or_insert((0, idx, spelling));
            e.0 += 1;
        }
        let (_, &(count, _, spelling)) = counts
            .iter()
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
            .unwrap();

        let mut shuffled = samples.clone();
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        samples = shuffled;
        let pool: Vec<TestCandidate> = samples
            .iter()
            .map(|&(idx, _, spelling)| TestCandidate {
                problem_id: "p".into(),
                input: TestInput {
                    call_expression: "f(3)".into(),
                    case_label: CaseLabel::General,
                },
                expected_literal: spelling.into(),
                rationale: format!("sample {idx}"),
                sample_index: idx,
            })
            .collect();
        let vote = majority_vote(&pool, &sandbox).unwrap();
        assert_eq!(vote.case.expected_literal, spelling, "round {round}: {samples:?}");
        assert_eq!(vote.groups[vote.winner].count(), count, "round {round}");
        assert_eq!(vote.case.vote_margin, count as f64 / n as f64, "round {round}");
        assert_eq!(vote.groups.len(), counts.len(), "round {round}");
    }
}

// Pair construction.

fn pair_construction() {
    let inputs = fixtures().join("inputs");
    for epsilon in Epsilon::ALL {
        for pick in RejectPick::ALL {
            let label = format!("{}-{}", epsilon.as_str(), pick.as_str());
            let dir = tempfile::tempdir().unwrap();
            let config = common::e2e::write_fixture(dir.path(), 1, false, epsilon.as_str(), pick.as_str());
            engine(&config).iterate(IterateOptions::default()).unwrap();
            let it = dir.path().join("run/iter_1");
            for name in [
                "problems.jsonl",
                "solutions.jsonl",
                "votes.jsonl",
                "suites.jsonl",
                "scores.jsonl",
            ] {
                assert_eq!(
                    fs::read(it.join(name)).unwrap(),
                    fs::read(inputs.join(name)).unwrap(),
                    "{label}: {name} drifted from the fixture inputs"
                );
            }
            let golden = fixtures().join("golden").join(&label);
            for name in ["sft.jsonl", "dpo.jsonl"] {
                assert_eq!(
                    fs::read_to_string(it.join(name)).unwrap(),
                    fs::read_to_string(golden.join(name)).unwrap(),
                    "{label}: {name}"
                );
            }
            pair_structure(&it, epsilon);
        }
    }
}

fn output_section(target: &str) -> &str {
    target.rsplit_once("<OUTPUT4 >").map_or("", |(_, o)| o)
}

fn pair_structure(it: &Path, epsilon: Epsilon) {
    let solutions: Vec<CodeCandidate> = read_jsonl(&it.join("solutions.jsonl")).unwrap();
    let scores: Vec<ScoreReport> = read_jsonl(&it.join("scores.jsonl")).unwrap();
    let by_id: HashMap<String, &ScoreReport> = scores.iter().map(|r| (r.candidate_id.clone(), r)).collect();
    let score_of = |pid: &str, target: &str| {
        let c = solutions
            .iter()
            .find(|c| c.problem_id == pid && target.contains(c.source.trim()))
            .expect("pair text comes from a candidate");
        by_id[&c.candidate_id()].exact()
    };
    let dpo: Vec<solver_verifier::model::DpoExample> = read_jsonl(&it.join("dpo.jsonl")).unwrap();
    for d in &dpo {
        assert_ne!(d.chosen, d.rejected);
        match d.role {
            solver_verifier::model::Role::Solver => {
                let pid = &d.provenance.problem_id;
                assert!(score_of(pid, &d.chosen) > score_of(pid, &d.rejected));
            }
            solver_verifier::model::Role::Verifier => {
                let (c, r) = (output_section(&d.chosen), output_section(&d.rejected));
                let call = |s: &str| s.split_once(" == ").map(|(a, _)| a.to_string());
                assert!(call(c).is_some());
                assert_eq!(call(c), call(r), "verifier pair differs outside the literal");
            }
        }
    }
    if epsilon == Epsilon::Strict {
        let sft: Vec<solver_verifier::model::SftExample> = read_jsonl(&it.join("sft.jsonl")).unwrap();
        for s in sft.iter().filter(|s| s.role == solver_verifier::model::Role::Solver) {
            assert!(score_of(&s.provenance.problem_id, &s.target).is_full());
        }
    }
}

// Δ reproduction.

fn delta_reproduction() {
    let a = relative_change(12.75, 9.60, Direction::LowerBetter).unwrap();
    let b = relative_change(20.76, 18.63, Direction::LowerBetter).unwrap();
    assert!((a - 24.71).abs() <= PCT_TOL, "{a}");
    assert!((b - 10.26).abs() <= PCT_TOL, "{b}");
}

// Synthetic benchmark.

fn assert_pct(name: &str, got: Option<f64>, want: f64) {
    let got = got.unwrap_or_else(|| panic!("{name} missing"));
    assert!((got - want).abs() <= PCT_TOL, "{name}: {got} vs {want}");
}

fn benchmark_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (config, benchmark) = common::bench::write_fixture(dir.path());
    let e = engine(&config);
    let request = |task, with_cot, with_mv, rerank| EvalRequest {
        benchmark: benchmark.clone(),
        task,
        with_cot,
        with_mv,
        rerank,
        negatives: None,
        out_dir: dir.path().join(format!("{task:?}")),
    };
    let code = e.evaluate(&request(EvalTask::Code, false, false, false)).unwrap();
    assert_pct("pass@1", code.pass_pct, 40.00);
    assert_pct("case pass", code.case_pass_pct, 53.33);
    let test = e.evaluate(&request(EvalTask::Test, true, true, false)).unwrap();
    assert_pct("Acc%", test.acc_pct, 86.67);
    assert_pct("test pass", test.test_pass_pct, 70.00);
    assert_pct("test case pass", test.test_case_pass_pct, 86.67);
    assert_pct("FP%", test.fp_pct, 11.11);

    // Reranking: poor suites favour a wrong candidate, gold suites a right one.
    let records: Vec<BenchmarkRecord> = common::bench::records()
        .into_iter()
        .map(|r| serde_json::from_value(r).unwrap())
        .collect();
    let items = load_items(&records, &e.sandbox, LIMITS).unwrap();
    let pool: Vec<CodeCandidate> = (1..=common::bench::ITEMS)
        .flat_map(|j| {
            let pid = items[j - 1].id().to_string();
            [
                common::bench::greedy(j),
                common::bench::off_by_one(j),
                common::bench::correct(j),
            ]
            .into_iter()
            .enumerate()
            .map(move |(k, s)| common::candidate(&pid, &s, k as u32))
        })
        .collect();
    let greedy: Vec<CodeCandidate> = pool.iter().filter(|c| c.sample_index == 0).cloned().collect();
    let poor: Vec<TestSuite> = (1..=common::bench::ITEMS)
        .map(|j| {
            let cases: Vec<(String, String)> = (1..=3)
                .map(|x| (format!("mul_{j}({x})"), (x * j + 1).to_string()))
                .collect();
            let refs: Vec<(&str, &str)> = cases.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
            common::suite(items[j - 1].id(), &refs)
        })
        .collect();
    let gold: Vec<TestSuite> = items.iter().map(BenchmarkItem::gold_suite).collect();
    let on_gold = |cands: &[CodeCandidate]| {
        let reports = e.sandbox.run_matrix(cands, &gold, LIMITS).unwrap();
        pass_at_1(&items, &reports).unwrap()
    };
    let rerank = |suites: &[TestSuite]| {
        let reports = e.sandbox.run_matrix(&pool, suites, LIMITS).unwrap();
        on_gold(&rerank_by_tests(&pool, &reports))
    };
    let base = on_gold(&greedy);
    assert_eq!(base, 40.0);
    let (low, high) = (rerank(&poor), rerank(&gold));
    assert!(low < base, "poor suites: {low} vs greedy {base}");
    assert!(high > base, "gold suites: {high} vs greedy {base}");
    let reports = e.sandbox.run_matrix(&greedy, &gold, LIMITS).unwrap();
    assert_eq!(case_pass_rate(&items, &reports).unwrap(), 53.33);
}

// Agreement and ensemble.

fn agreement_law() {
    let dir = tempfile::tempdir().unwrap();
    let (config, _) = common::bench::write_fixture(dir.path());
    let e = engine(&config);
    let records: Vec<BenchmarkRecord> = common::bench::records()
        .into_iter()
        .map(|r| serde_json::from_value(r).unwrap())
        .collect();
    let items = load_items(&records, &e.sandbox, LIMITS).unwrap();
    // Half the suites misjudge the gold solution.
    let x: Vec<TestSuite> = items
        .iter()
        .enumerate()
        .map(|(n, item)| {
            let mut s = item.gold_suite();
            if n % 2 == 1 {
                s.cases[0].expected_literal = "-1".into();
            }
            s
        })
        .collect();
    let same = agreement(&e.sandbox, &items, &x, &x, LIMITS).unwrap();
    assert_eq!(same.agreement_pct, 100.0);
    assert_eq!(same.acc_a_pct, 50.0);

    let four = agreement_from_verdicts(&[(true, true), (true, false), (false, false), (false, true)]).unwrap();
    assert_eq!(four.agreement_pct, 50.0);
    assert_eq!((four.acc_a_pct, four.acc_b_pct), (50.0, 50.0));

    // Three candidates against two iterations' suites: c0 passes both, c1
    // only the first, c2 only the second. Problem q has no second suite.
    let sandbox = common::sandbox(2);
    let sources = [
        "def g(x):\n    return x * 2\n",
        "def g(x):\n    return 4 if x == 2 else x * 2 + 1\n",
        "def g(x):\n    return 0 if x == 2 else x * 2\n",
    ];
    let cands: Vec<CodeCandidate> = sources
        .iter()
        .enumerate()
        .map(|(i, s)| common::candidate("p", s, i as u32))
        .collect();
    let q = common::candidate("q", sources[0], 0);
    let first = [
        common::suite("p", &[("g(2)", "4")]),
        common::suite("q", &[("g(1)", "2")]),
    ];
    let second = [common::suite("p", &[("g(3)", "6"), ("g(0)", "0")])];
    let mut all = cands.clone();
    all.push(q);
    let a = sandbox.run_matrix(&all, &first, LIMITS).unwrap();
    let b = sandbox.run_matrix(&all, &second, LIMITS).unwrap();
    let survivors = ensemble_survivors(&a, &b);
    let want: BTreeMap<String, BTreeSet<String>> = [("p".to_string(), [cands[0].candidate_id()].into_iter().collect())]
        .into_iter()
        .collect();
    assert_eq!(survivors, want);
}

// End-to-end determinism.

fn iteration_files(run: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(run).unwrap() {
        let dir = entry.unwrap().path();
        let Some(name) = dir
            .file_name()
            .and_then(|n| n.to_str())
            .filter(|n| n.starts_with("iter_"))
        else {
            continue;
        };
        for file in fs::read_dir(&dir).unwrap() {
            let path = file.unwrap().path();
            let file_name = path.file_name().unwrap().to_str().unwrap().to_string();
            if file_name != "manifest.json" {
                out.insert(format!("{name}/{file_name}"), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn assert_no_duplicates(files: &BTreeMap<String, Vec<u8>>) {
    for (name, bytes) in files.iter().filter(|(n, _)| n.ends_with(".jsonl")) {
        let mut seen = HashSet::new();
        for line in String::from_utf8_lossy(bytes).lines() {
            let value: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(seen.insert(canonical_hash(&value)), "{name} repeats a record");
        }
    }
}

fn end_to_end_determinism() {
    let run = |stop: Option<(u32, StageName)>| {
        let dir = tempfile::tempdir().unwrap();
        let config = common::e2e::write_fixture(dir.path(), 3, true, "strict", "random");
        if let Some(at) = stop {
            let out = engine(&config)
                .iterate(IterateOptions { stop_after: Some(at) })
                .unwrap();
            assert!(out.stopped);
        }
        engine(&config).iterate(IterateOptions::default()).unwrap();
        let files = iteration_files(&dir.path().join("run"));
        (dir, files)
    };
    let (_a, first) = run(None);
    let (_b, second) = run(None);
    assert_eq!(first.len(), 8 + 7 + 7, "{:?}", first.keys().collect::<Vec<_>>());
    assert_eq!(first, second, "two runs with seed 7 differ");
    assert_no_duplicates(&first);
    for at in [
        (1, StageName::Suites),
        (2, StageName::Scores),
        (3, StageName::TestCandidates),
    ] {
        let (_c, resumed) = run(Some(at));
        assert_eq!(first, resumed, "resume after {at:?}");
        assert_no_duplicates(&resumed);
    }

    // Resuming into the pairs stage reads recorded scores only.
    let dir = tempfile::tempdir().unwrap();
    let config = common::e2e::write_fixture(dir.path(), 1, false, "strict", "random");
    engine(&config)
        .iterate(IterateOptions {
            stop_after: Some((1, StageName::Scores)),
        })
        .unwrap();
    let e = engine(&config);
    assert!(e.run_stage(1, StageName::Pairs).unwrap());
    assert_eq!(e.sandbox.invocations(), 0);
    assert_eq!(
        fs::read(dir.path().join("run/iter_1/dpo.jsonl")).unwrap(),
        first["iter_1/dpo.jsonl"]
    );
}

/// Straight to the stderr handle, which the test harness does not capture.
fn report(line: std::fmt::Arguments<'_>) {
    let _ = writeln!(std::io::stderr(), "{line}");
}

#[test]
fn acceptance() {
    let start = Instant::now();
    let criteria: [(&str, fn()); 9] = [
        ("score oracle equivalence", score_oracle),
        ("label law", label_law),
        ("greedy coverage", greedy_coverage),
        ("majority voting", majority_voting),
        ("pair construction", pair_construction),
        ("delta reproduction", delta_reproduction),
        ("synthetic benchmark metrics", benchmark_metrics),
        ("agreement law", agreement_law),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    let mut failed = Vec::new();
    for (name, check) in criteria {
        let t = Instant::now();
        let ok = catch_unwind(AssertUnwindSafe(check)).is_ok();
        report(format_args!(
            "{} {name} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        ));
        if !ok {
            failed.push(name);
        }
    }
    let total = start.elapsed();
    report(format_args!(
        "{} total runtime ({:.1}s)",
        if total < SUITE_BUDGET { "PASS" } else { "FAIL" },
        total.as_secs_f64()
    ));
    assert!(failed.is_empty(), "failed: {failed:?}");
    assert!(total < SUITE_BUDGET);
}
