mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_solver-verifier"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(dir.path(), &[]).status.code(), Some(1));
    assert_eq!(cli(dir.path(), &["iterate"]).status.code(), Some(1));
    assert_eq!(cli(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(cli(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"suite_size": 0, "surprise": true}"#).unwrap();
    let out = cli(dir.path(), &["iterate", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn locked_run_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    common::e2e::write_fixture(dir.path(), 1, false, "strict", "random");
    fs::create_dir_all(dir.path().join("run")).unwrap();
    fs::write(dir.path().join("run/.lock"), "").unwrap();
    let out = cli(dir.path(), &["iterate", "--config", "config.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("locked"));
}

#[test]
fn staged_commands_reproduce_recorded_scores() {
    let dir = tempfile::tempdir().unwrap();
    common::e2e::write_fixture(dir.path(), 1, false, "strict", "random");
    for args in [
        &["gen-problems", "--config", "config.json"][..],
        &["gen-solutions", "--config", "config.json", "--iteration", "1"],
        &["gen-tests", "--config", "config.json", "--iteration", "1"],
        &["execute", "--config", "config.json", "--iteration", "1"],
    ] {
        let out = cli(dir.path(), args);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/pairs/inputs/scores.jsonl");
    assert_eq!(
        fs::read(dir.path().join("run/iter_1/scores.jsonl")).unwrap(),
        fs::read(golden).unwrap()
    );
    let again = cli(dir.path(), &["execute", "--config", "config.json", "--iteration", "1"]);
    assert!(again.status.success());
    assert!(String::from_utf8_lossy(&again.stderr).contains("skipped"));

    let out = cli(
        dir.path(),
        &["build-pairs", "--config", "config.json", "--iteration", "1"],
    );
    assert!(out.status.success());
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/pairs/golden/strict-random/dpo.jsonl");
    assert_eq!(
        fs::read(dir.path().join("run/iter_1/dpo.jsonl")).unwrap(),
        fs::read(golden).unwrap()
    );
}

#[test]
fn evaluate_and_agreement_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (_, bench) = common::bench::write_fixture(dir.path());
    let bench = bench.to_str().unwrap();
    let out = cli(
        dir.path(),
        &[
            "evaluate",
            "--config",
            "config.json",
            "--benchmark",
            bench,
            "--task",
            "test",
            "--with-cot",
            "--with-mv",
            "--out",
            "t",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("86.67"), "{stdout}");
    let table = fs::read_to_string(dir.path().join("t/table.txt")).unwrap();
    assert!(table.contains("Test_FP%"), "{table}");

    let out = cli(
        dir.path(),
        &[
            "agreement",
            "--config",
            "config.json",
            "--benchmark",
            bench,
            "--suites-a",
            "t/suites.jsonl",
            "--suites-b",
            "t/suites.jsonl",
            "--out",
            "a",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("verdict-level agreement 100.00%"));
    assert!(dir.path().join("a/metrics.json").exists());
}
