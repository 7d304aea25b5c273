//! Parent side of the runner-shim protocol.
//!
//! Each invocation writes a JSON payload file into a fresh temporary working
//! directory and runs `<shim command...> <payload path>` there with stdin
//! closed. The shim answers with exactly one JSON line on stdout and exits 0;
//! exit status 2 signals a malformed payload. Wall-clock limits for `run`
//! payloads are enforced here by killing the process.

use std::collections::BTreeSet;
use std::io::Read;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ExecutionOutcome, OutcomeStatus};

/// Captured stdout/stderr beyond this many bytes is discarded.
pub const CAPTURE_LIMIT: usize = 8 * 1024;

/// Extra wall-clock time granted past the payload's limit before the kill.
pub const KILL_GRACE: Duration = Duration::from_millis(250);

const AUX_DEADLINE: Duration = Duration::from_secs(30);

#[derive(Debug, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Payload<'a> {
    Run {
        solution_source: &'a str,
        test_statement: &'a str,
        /// When present, the shim reports `setup_error` if the setup phase
        /// does not bind this name.
        #[serde(skip_serializing_if = "Option::is_none")]
        function_name: Option<&'a str>,
        time_limit_ms: u64,
        memory_limit_mb: u64,
    },
    Compile {
        solution_source: &'a str,
        function_name: &'a str,
    },
    LiteralCheck {
        a: &'a str,
    },
    LiteralCompare {
        a: &'a str,
        b: &'a str,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunReply {
    status: OutcomeStatus,
    #[serde(default)]
    error_kind: String,
    #[serde(default)]
    #[allow(dead_code)]
    message: String,
    duration_ms: u64,
    #[serde(default)]
    covered_lines: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileVerdict {
    pub ok: bool,
    pub defines_function: bool,
    #[serde(default)]
    pub error_kind: String,
}

#[derive(Debug, Deserialize)]
struct LiteralCheckReply {
    is_literal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiteralComparison {
    pub equal: bool,
    pub type_equal: bool,
}

impl LiteralComparison {
    /// Same value and same top-level type.
    pub fn value_equal(self) -> bool {
        self.equal && self.type_equal
    }
}

enum Finished {
    Exited {
        code: Option<i32>,
        stdout: String,
        stderr: String,
    },
    Killed,
}

/// Spawns shim processes and tracks how many have run.
pub struct ShimClient {
    command: Vec<String>,
    invocations: AtomicU64,
}

fn capture(mut pipe: impl Read + Send + 'static) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut buf = [0u8; 4096];
        while let Ok(n) = pipe.read(&mut buf) {
            if n == 0 {
                break;
            }
            let room = CAPTURE_LIMIT.saturating_sub(kept.len());
            kept.extend_from_slice(&buf[..n.min(room)]);
        }
        String::from_utf8_lossy(&kept).into_owned()
    })
}

fn wait_until(child: &mut Child, deadline: Instant) -> Result<Option<std::process::ExitStatus>> {
    let mut nap = Duration::from_micros(200);
    loop {
        if let Some(status) = child.try_wait().map_err(|e| Error::Shim(format!("wait failed: {e}")))? {
            return Ok(Some(status));
        }
        let now = Instant::now();
        if now >= deadline {
            return Ok(None);
        }
        thread::sleep(nap.min(deadline - now));
        nap = (nap * 2).min(Duration::from_millis(10));
    }
}

impl ShimClient {
    pub fn new(command: Vec<String>) -> Result<Self> {
        if command.is_empty() {
            return Err(Error::Config("shim command is empty".into()));
        }
        Ok(ShimClient {
            command,
            invocations: AtomicU64::new(0),
        })
    }

    pub fn invocations(&self) -> u64 {
        self.invocations.load(Ordering::SeqCst)
    }

    fn invoke(&self, payload: &Payload<'_>, budget: Duration) -> Result<Finished> {
        self.invocations.fetch_add(1, Ordering::SeqCst);
        let workdir = tempfile::tempdir().map_err(|e| Error::Shim(format!("temp dir: {e}")))?;
        let payload_path = workdir.path().join("payload.json");
        std::fs::write(&payload_path, serde_json::to_vec(payload)?).map_err(|e| Error::io(&payload_path, e))?;

        let mut cmd = Command::new(&self.command[0]);
        cmd.args(&self.command[1..])
            .arg(&payload_path)
            .current_dir(workdir.path())
            .env_clear()
            .env("HOME", workdir.path())
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        if let Ok(path) = std::env::var("PATH") {
            cmd.env("PATH", path);
        }
        let mut child = cmd
            .spawn()
            .map_err(|e| Error::Shim(format!("cannot start `{}`: {e}", self.command[0])))?;
        let out = capture(child.stdout.take().expect("piped stdout"));
        let err = capture(child.stderr.take().expect("piped stderr"));

        let status = wait_until(&mut child, Instant::now() + budget)?;
        let Some(status) = status else {
            let _ = child.kill();
            let _ = child.wait();
            return Ok(Finished::Killed);
        };
        Ok(Finished::Exited {
            code: status.code(),
            stdout: out.join().unwrap_or_default(),
            stderr: err.join().unwrap_or_default(),
        })
    }

    fn reply_line(&self, finished: Finished, what: &str) -> Result<String> {
        match finished {
            Finished::Killed => Err(Error::Shim(format!("{what} payload exceeded {AUX_DEADLINE:?}"))),
            Finished::Exited {
                code: Some(0), stdout, ..
            } => single_line(&stdout),
            Finished::Exited { code, stderr, .. } => Err(Error::Shim(format!(
                "shim exited with {code:?} on {what} payload: {}",
                stderr.trim()
            ))),
        }
    }

    /// Execute one assertion against one solution.
    pub fn run(
        &self,
        solution_source: &str,
        test_statement: &str,
        function_name: Option<&str>,
        time_limit_ms: u64,
        memory_limit_mb: u64,
    ) -> Result<ExecutionOutcome> {
        let payload = Payload::Run {
            solution_source,
            test_statement,
            function_name,
            time_limit_ms,
            memory_limit_mb,
        };
        let budget = Duration::from_millis(time_limit_ms) + KILL_GRACE;
        match self.invoke(&payload, budget)? {
            Finished::Killed => Ok(ExecutionOutcome {
                status: OutcomeStatus::Timeout,
                error_kind: "Timeout".into(),
                duration_ms: time_limit_ms,
                covered_lines: BTreeSet::new(),
            }),
            finished => {
                let line = self.reply_line(finished, "run")?;
                let reply: RunReply =
                    serde_json::from_str(&line).map_err(|e| Error::Shim(format!("bad run reply `{line}`: {e}")))?;
                outcome_from_reply(reply, solution_source)
            }
        }
    }

    pub fn compile(&self, solution_source: &str, function_name: &str) -> Result<CompileVerdict> {
        let finished = self.invoke(
            &Payload::Compile {
                solution_source,
                function_name,
            },
            AUX_DEADLINE,
        )?;
        let line = self.reply_line(finished, "compile")?;
        serde_json::from_str(&line).map_err(|e| Error::Shim(format!("bad compile reply `{line}`: {e}")))
    }

    pub fn literal_check(&self, text: &str) -> Result<bool> {
        let finished = self.invoke(&Payload::LiteralCheck { a: text }, AUX_DEADLINE)?;
        let line = self.reply_line(finished, "literal_check")?;
        let reply: LiteralCheckReply =
            serde_json::from_str(&line).map_err(|e| Error::Shim(format!("bad literal_check reply `{line}`: {e}")))?;
        Ok(reply.is_literal)
    }

    pub fn literal_compare(&self, a: &str, b: &str) -> Result<LiteralComparison> {
        let finished = self.invoke(&Payload::LiteralCompare { a, b }, AUX_DEADLINE)?;
        let line = self.reply_line(finished, "literal_compare")?;
        serde_json::from_str(&line).map_err(|e| Error::Shim(format!("bad literal_compare reply `{line}`: {e}")))
    }
}

fn single_line(stdout: &str) -> Result<String> {
    let body = stdout.strip_suffix('\n').unwrap_or(stdout);
    if body.is_empty() || body.contains('\n') {
        return Err(Error::Shim(format!(
            "expected exactly one reply line, got {:?}",
            stdout.chars().take(200).collect::<String>()
        )));
    }
    Ok(body.to_string())
}

fn outcome_from_reply(reply: RunReply, source: &str) -> Result<ExecutionOutcome> {
    if reply.status == OutcomeStatus::Pass && !reply.error_kind.is_empty() {
        return Err(Error::Shim(format!(
            "pass verdict carries error kind `{}`",
            reply.error_kind
        )));
    }
    let line_count = source.lines().count() as u32;
    if let Some(bad) = reply.covered_lines.iter().find(|&&l| l == 0 || l > line_count) {
        return Err(Error::Shim(format!(
            "covered line {bad} outside the {line_count}-line source"
        )));
    }
    Ok(ExecutionOutcome {
        status: reply.status,
        error_kind: reply.error_kind,
        duration_ms: reply.duration_ms,
        covered_lines: reply.covered_lines.into_iter().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_wire_format() {
        let p = Payload::Run {
            solution_source: "def f(x): return x",
            test_statement: "assert f(1) == 1",
            function_name: Some("f"),
            time_limit_ms: 100,
            memory_limit_mb: 64,
        };
        let v: serde_json::Value = serde_json::to_value(&p).unwrap();
        assert_eq!(v["mode"], "run");
        assert_eq!(v["time_limit_ms"], 100);
        let c = serde_json::to_value(Payload::LiteralCompare { a: "1", b: "2" }).unwrap();
        assert_eq!(c, serde_json::json!({"mode": "literal_compare", "a": "1", "b": "2"}));
    }

    #[test]
    fn reply_must_be_one_line() {
        assert_eq!(single_line("{}\n").unwrap(), "{}");
        assert!(single_line("").is_err());
        assert!(single_line("{}\n{}\n").is_err());
    }

    #[test]
    fn reply_validation() {
        let reply = |status, kind: &str, lines: Vec<u32>| RunReply {
            status,
            error_kind: kind.into(),
            message: String::new(),
            duration_ms: 1,
            covered_lines: lines,
        };
        let src = "def f(x):\n    return x\n";
        assert!(outcome_from_reply(reply(OutcomeStatus::Pass, "", vec![2]), src).is_ok());
        assert!(outcome_from_reply(reply(OutcomeStatus::Pass, "X", vec![]), src).is_err());
        assert!(outcome_from_reply(reply(OutcomeStatus::AssertionFail, "AssertionError", vec![3]), src).is_err());
    }
}
