//! Stand-in runner shim that interprets a small Python subset.
//!
//! Speaks the same one-line JSON protocol as the real runner so the pipeline
//! can be exercised without a Python interpreter. Reported durations are
//! always zero.

mod interp;
mod lexer;
mod parser;
mod value;

use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use interp::{Exc, Interp, TIMEOUT_KIND};
use parser::{Parser, Stmt, StmtKind};

#[derive(Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
enum Payload {
    Run {
        solution_source: String,
        test_statement: String,
        #[serde(default)]
        function_name: Option<String>,
        time_limit_ms: u64,
        #[allow(dead_code)]
        memory_limit_mb: u64,
    },
    Compile {
        solution_source: String,
        function_name: String,
    },
    LiteralCheck {
        a: String,
    },
    LiteralCompare {
        a: String,
        b: String,
    },
}

fn parse_module(src: &str) -> Result<Vec<Stmt>, String> {
    Parser::new(lexer::tokenize(src)?).parse_module()
}

fn parse_expr(src: &str) -> Result<parser::Expr, String> {
    Parser::new(lexer::tokenize(src.trim())?).parse_lone_expr()
}

fn run_reply(status: &str, kind: &str, message: &str, covered: Vec<u32>) -> serde_json::Value {
    let message: String = message.chars().take(2000).collect();
    json!({
        "status": status,
        "error_kind": kind,
        "message": message,
        "duration_ms": 0,
        "covered_lines": covered,
    })
}

fn failure(phase_setup: bool, e: Exc, covered: Vec<u32>) -> serde_json::Value {
    if e.kind == TIMEOUT_KIND {
        return run_reply("timeout", "Timeout", &e.msg, covered);
    }
    let status = match (phase_setup, e.kind.as_str()) {
        (true, _) => "setup_error",
        (false, "AssertionError") => "assertion_fail",
        (false, _) => "runtime_error",
    };
    run_reply(status, &e.kind, &e.msg, covered)
}

fn run(solution: &str, test: &str, function_name: Option<&str>, limit_ms: u64) -> serde_json::Value {
    let module = match parse_module(solution) {
        Ok(m) => m,
        Err(msg) => return run_reply("setup_error", "SyntaxError", &msg, vec![]),
    };
    let test = match parse_module(test) {
        Ok(t) => t,
        Err(msg) => return run_reply("runtime_error", "SyntaxError", &msg, vec![]),
    };
    let mut it = Interp::new(Some(Instant::now() + Duration::from_millis(limit_ms)));
    if let Err(e) = it.run_module(&module) {
        return failure(true, e, vec![]);
    }
    if let Some(name) = function_name {
        if !it.globals.contains_key(name) {
            return run_reply(
                "setup_error",
                "NameError",
                &format!("name '{name}' is not defined"),
                vec![],
            );
        }
    }
    it.tracing = true;
    let result = it.run_module(&test);
    let covered: Vec<u32> = std::mem::take(&mut it.covered).into_iter().collect();
    match result {
        Ok(()) => run_reply("pass", "", "", covered),
        Err(e) => failure(false, e, covered),
    }
}

fn compile(solution: &str, function_name: &str) -> serde_json::Value {
    match parse_module(solution) {
        Ok(module) => {
            let defines = module
                .iter()
                .any(|s| matches!(&s.kind, StmtKind::Def(d) if d.name == function_name));
            json!({"ok": true, "defines_function": defines, "error_kind": ""})
        }
        Err(_) => json!({"ok": false, "defines_function": false, "error_kind": "SyntaxError"}),
    }
}

fn literal_value(src: &str) -> Option<value::Value> {
    let e = parse_expr(src).ok()?;
    if !e.is_literal() {
        return None;
    }
    Interp::new(None).eval(&e, &mut None).ok()
}

fn main() {
    let Some(path) = std::env::args().nth(1) else {
        eprintln!("usage: fake-shim <payload.json>");
        std::process::exit(2);
    };
    let payload: Payload = match std::fs::read_to_string(&path)
        .map_err(|e| e.to_string())
        .and_then(|text| serde_json::from_str(&text).map_err(|e| e.to_string()))
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("malformed payload: {e}");
            std::process::exit(2);
        }
    };
    let reply = match payload {
        Payload::Run {
            solution_source,
            test_statement,
            function_name,
            time_limit_ms,
            ..
        } => run(
            &solution_source,
            &test_statement,
            function_name.as_deref(),
            time_limit_ms,
        ),
        Payload::Compile {
            solution_source,
            function_name,
        } => compile(&solution_source, &function_name),
        Payload::LiteralCheck { a } => json!({"is_literal": literal_value(&a).is_some()}),
        Payload::LiteralCompare { a, b } => match (literal_value(&a), literal_value(&b)) {
            (Some(x), Some(y)) => {
                json!({"equal": x.py_eq(&y), "type_equal": x.type_name() == y.type_name()})
            }
            _ => json!({"equal": false, "type_equal": false}),
        },
    };
    println!("{reply}");
}
