//! Scripted five-problem run: problem `i` asks for `add_i(x) = x + i`,
//! each gets four solutions that are correct below a per-sample threshold,
//! and five inputs `add_i(0)..add_i(4)` with three output samples each.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;
use solver_verifier::gateway::{MockRule, MockScript};

pub const PROBLEMS: usize = 5;

/// Cases passed (out of 5) by each of the four samples of problem `i`.
pub const THRESHOLDS: [[u32; 4]; PROBLEMS] = [[5, 3, 1, 0], [4, 2, 2, 0], [1, 3, 0, 3], [0, 1, 0, 0], [0, 0, 0, 0]];

fn solution(i: usize, t: u32) -> String {
    let body = if t >= 5 {
        format!("def add_{i}(x):\n    return x + {i}\n")
    } else {
        format!("def add_{i}(x):\n    if x < {t}:\n        return x + {i}\n    return -1\n")
    };
    format!("```python\n{body}```\n\n</SOLUTION4>")
}

fn output(call: &str, literal: &str, note: &str) -> String {
    format!("{note}\n\n</ANALYSIS4 >\n\n<OUTPUT4 >\n\nassert {call} == {literal}\n\n</OUTPUT4 >")
}

/// Output samples for `add_i(x)` in iteration `iter`.
fn output_samples(i: usize, x: u32, iter: u32, twist: bool) -> Vec<String> {
    let call = format!("add_{i}({x})");
    let v = x as usize + i;
    let right = output(&call, &v.to_string(), &format!("Adding {i} to {x} gives {v}."));
    let wrong = |w: usize| output(&call, &w.to_string(), &format!("Adding {i} to {x} gives {w}."));
    if twist && iter == 2 && i == 1 && x == 4 {
        return vec![wrong(99), wrong(99), right];
    }
    match x {
        1 => vec![right.clone(), right, wrong(v + 1)],
        3 if i % 2 == 0 => vec![wrong(v + 10), right.clone(), right],
        2 if i == 3 => vec![
            right.clone(),
            output(&call, &format!("({v})"), &format!("{i} plus {x} is {v}.")),
            wrong(0),
        ],
        _ => vec![right.clone(), right.clone(), right],
    }
}

pub fn mock_script(iterations: u32, twist: bool) -> MockScript {
    let mut rules = Vec::new();
    let rule = |contains: String, scope: String, samples: Vec<String>| MockRule {
        contains,
        scope: Some(scope),
        replies: vec![samples],
    };
    for i in 1..=PROBLEMS {
        let description = format!("Write a function that adds {i} to an integer x.");
        rules.push(rule(format!("helper_{i}("), "iter_1/problem".into(), vec![description]));
        rules.push(rule(
            format!("adds {i} to"),
            "iter_1/signature".into(),
            vec![format!("add_{i}(x: int) -> int\n\n</Signature2>")],
        ));
    }
    for iter in 1..=iterations {
        for i in 1..=PROBLEMS {
            let key = format!("adds {i} to");
            let inputs: String = (0..5).map(|x| format!("add_{i}({x})\n")).collect();
            rules.push(rule(
                key.clone(),
                format!("iter_{iter}/test_input"),
                vec![format!(
                    "- Case 1: small integers.\n\n</ANALYSIS2>\n\n<INPUTS2>\n\n{inputs}\n</INPUTS2>"
                )],
            ));
            let sols = THRESHOLDS[i - 1].iter().map(|&t| solution(i, t)).collect();
            rules.push(rule(key, format!("iter_{iter}/solution"), sols));
            for x in 0..5 {
                rules.push(rule(
                    format!("add_{i}({x})"),
                    format!("iter_{iter}/test_output"),
                    output_samples(i, x, iter, twist),
                ));
            }
        }
    }
    MockScript {
        rules,
        ..MockScript::default()
    }
}

/// Write config, mock script and inputs under `dir`; returns the config path.
pub fn write_fixture(dir: &Path, iterations: u32, twist: bool, epsilon: &str, reject_pick: &str) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let snippets: String = (1..=PROBLEMS)
        .map(|i| {
            json!({"id": format!("s{i}"), "code": format!("def helper_{i}(v):\n    return v + {i}\n")}).to_string()
                + "\n"
        })
        .collect();
    fs::write(dir.join("snippets.jsonl"), snippets).unwrap();
    let template = json!({"id": "t1", "text": "Write a function to add two numbers."}).to_string() + "\n";
    fs::write(dir.join("templates.jsonl"), template).unwrap();
    fs::write(
        dir.join("mock.json"),
        serde_json::to_string_pretty(&mock_script(iterations, twist)).unwrap(),
    )
    .unwrap();
    let config = json!({
        "iteration_count": iterations,
        "problem_count": 12,
        "samples": {"solutions": 4, "inputs": 5, "outputs": 3, "negatives": 20},
        "suite_size": 5,
        "seed": 7,
        "epsilon": epsilon,
        "reject_pick": reject_pick,
        "max_verifier_pairs_per_problem": 8,
        "limits": {"time_ms": 2000, "memory_mb": 256},
        "backend": {"kind": "mock", "mock_script": "mock.json", "max_concurrency": 4},
        "sandbox": {"shim_command": super::shim_command(), "workers": 4},
        "run_dir": "run",
        "inputs": {"snippets": "snippets.jsonl", "description_templates": "templates.jsonl"},
    });
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}
