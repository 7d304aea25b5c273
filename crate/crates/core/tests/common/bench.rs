//! Ten-item benchmark: item `j` asks for `mul_j(x) = x * j` with gold
//! tests at x = 1, 2, 3, plus a scripted backend for every evaluation
//! stage.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;
use solver_verifier::gateway::{MockRule, MockScript};

pub const ITEMS: usize = 10;

pub fn correct(j: usize) -> String {
    format!("def mul_{j}(x):\n    return x * {j}\n")
}

pub fn off_by_one(j: usize) -> String {
    format!("def mul_{j}(x):\n    return x * {j} + 1\n")
}

/// Right for x < 3, zero afterwards.
pub fn truncated(j: usize) -> String {
    format!("def mul_{j}(x):\n    if x < 3:\n        return x * {j}\n    return 0\n")
}

/// Right except `mul_9(3) == 28`.
pub fn item9_trick() -> String {
    "def mul_9(x):\n    if x == 3:\n        return 28\n    return x * 9\n".to_string()
}

fn fenced(source: &str) -> String {
    format!("```python\n{source}```\n\n</SOLUTION4>")
}

/// Greedy solution per item: 1-4 right, 5-6 right on two of three tests,
/// 7-10 wrong everywhere.
pub fn greedy(j: usize) -> String {
    match j {
        1..=4 => correct(j),
        5 | 6 => truncated(j),
        _ => off_by_one(j),
    }
}

/// Twenty samples per item; items 1-9 have two flawed ones, item 10 none.
pub fn negative_samples(j: usize) -> Vec<String> {
    (0..20)
        .map(|k| match (j, k) {
            (10, _) => correct(j),
            (_, 0) => off_by_one(j),
            (9, 1) => item9_trick(),
            (_, 1) => truncated(j),
            _ => correct(j),
        })
        .collect()
}

fn output(call: &str, literal: &str) -> String {
    format!("The product is {literal}.\n\n</ANALYSIS4 >\n\n<OUTPUT4 >\n\nassert {call} == {literal}\n\n</OUTPUT4 >")
}

/// Three output samples for `mul_j(x)`.
pub fn output_samples(j: usize, x: usize) -> Vec<String> {
    let call = format!("mul_{j}({x})");
    let v = x * j;
    let lit = |n: usize| output(&call, &n.to_string());
    match (j, x) {
        (7, 3) => vec!["I am not sure.".to_string(); 3],
        (8, 2) => vec![output(&call, "(16)"), output(&call, "(16)"), lit(16)],
        (9, 3) => vec![lit(28), lit(28), lit(27)],
        (10, 2) | (10, 3) => vec![lit(v + 1), lit(v + 1), lit(v)],
        _ => vec![lit(v); 3],
    }
}

pub fn mock_script() -> MockScript {
    let mut rules = Vec::new();
    for j in 1..=ITEMS {
        let key = format!("multiplies x by {j}.");
        let rule = |contains: String, scope: &str, samples: Vec<String>| MockRule {
            contains,
            scope: Some(scope.to_string()),
            replies: vec![samples],
        };
        rules.push(rule(key.clone(), "eval/code/solution", vec![fenced(&greedy(j))]));
        rules.push(rule(
            key.clone(),
            "eval/negatives/solution",
            negative_samples(j).iter().map(|s| fenced(s)).collect(),
        ));
        rules.push(rule(
            key,
            "eval/rerank/solution",
            vec![fenced(&greedy(j)), fenced(&off_by_one(j)), fenced(&correct(j))],
        ));
        for x in 1..=3 {
            rules.push(rule(
                format!("mul_{j}({x})"),
                "eval/test/test_output",
                output_samples(j, x),
            ));
        }
    }
    MockScript {
        rules,
        ..MockScript::default()
    }
}

pub fn records() -> Vec<serde_json::Value> {
    (1..=ITEMS)
        .map(|j| {
            json!({
                "id": format!("mul{j}"),
                "description": format!("Write a function that multiplies x by {j}."),
                "signature": format!("mul_{j}(x: int) -> int"),
                "gold_solution": correct(j),
                "gold_tests": (1..=3).map(|x| format!("assert mul_{j}({x}) == {}", x * j)).collect::<Vec<_>>(),
            })
        })
        .collect()
}

/// Benchmark, mock script and config under `dir`; returns (config, benchmark).
pub fn write_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    fs::create_dir_all(dir).unwrap();
    let bench = dir.join("bench.jsonl");
    let lines: String = records().iter().map(|r| r.to_string() + "\n").collect();
    fs::write(&bench, lines).unwrap();
    fs::write(
        dir.join("mock.json"),
        serde_json::to_string_pretty(&mock_script()).unwrap(),
    )
    .unwrap();
    let config = json!({
        "samples": {"solutions": 3, "inputs": 3, "outputs": 3, "negatives": 20},
        "limits": {"time_ms": 2000, "memory_mb": 256},
        "backend": {"kind": "mock", "mock_script": "mock.json", "max_concurrency": 4},
        "sandbox": {"shim_command": super::shim_command(), "workers": 4},
        "run_dir": "run",
    });
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    (path, bench)
}
