use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::hash::canonical_hash;
use crate::error::{Error, Result};

/// Evaluation language of every generated problem.
pub const DEFAULT_LANGUAGE: &str = "python";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemOrigin {
    pub snippet_id: String,
    pub template_id: String,
}

/// A problem description before its function signature is known.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDraft {
    pub description: String,
    pub origin: ProblemOrigin,
}

/// One self-contained coding problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub problem_id: String,
    pub description: String,
    pub function_name: String,
    pub signature: String,
    pub origin: ProblemOrigin,
    pub language_tag: String,
}

#[derive(Serialize)]
struct ProblemKey<'a> {
    description: &'a str,
    signature: &'a str,
}

impl ProblemSpec {
    pub fn new(description: &str, signature: &str, origin: ProblemOrigin) -> Result<Self> {
        let description = description.trim();
        if description.is_empty() {
            return Err(Error::Precondition("problem description is empty".into()));
        }
        let signature = signature.trim();
        let function_name = parse_signature(signature)
            .ok_or_else(|| Error::Precondition(format!("malformed signature `{signature}`")))?
            .to_string();
        Ok(ProblemSpec {
            problem_id: Self::compute_id(description, signature),
            description: description.to_string(),
            function_name,
            signature: signature.to_string(),
            origin,
            language_tag: DEFAULT_LANGUAGE.to_string(),
        })
    }

    pub fn compute_id(description: &str, signature: &str) -> String {
        canonical_hash(&ProblemKey { description, signature })
    }

    pub fn validate(&self) -> Result<()> {
        if self.description.trim().is_empty() {
            return Err(Error::Precondition(format!(
                "problem {} has an empty description",
                self.problem_id
            )));
        }
        match parse_signature(&self.signature) {
            Some(name) if name == self.function_name => {}
            _ => {
                return Err(Error::Precondition(format!(
                    "problem {}: signature `{}` does not name function `{}`",
                    self.problem_id, self.signature, self.function_name
                )))
            }
        }
        let expected = Self::compute_id(&self.description, &self.signature);
        if expected != self.problem_id {
            return Err(Error::Precondition(format!(
                "problem_id {} does not match content hash {expected}",
                self.problem_id
            )));
        }
        Ok(())
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Leading identifier of `text`, if any.
pub(crate) fn leading_identifier(text: &str) -> Option<&str> {
    let first = text.chars().next()?;
    if !is_ident_start(first) {
        return None;
    }
    let end = text
        .char_indices()
        .find(|(_, c)| !is_ident_char(*c))
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    Some(&text[..end])
}

/// Shape check for `name(params)` or `name(params) -> return`, returning the
/// function name. The text must be a single line.
pub fn parse_signature(signature: &str) -> Option<&str> {
    let signature = signature.trim();
    if signature.contains('\n') {
        return None;
    }
    let name = leading_identifier(signature)?;
    let rest = signature[name.len()..].trim_start();
    let mut chars = rest.char_indices();
    if chars.next()?.1 != '(' {
        return None;
    }
    let mut depth = 1usize;
    let mut close = None;
    for (i, c) in chars {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => {
                depth -= 1;
                if depth == 0 {
                    close = Some(i);
                    break;
                }
            }
            _ => {}
        }
    }
    let tail = rest[close? + 1..].trim();
    if tail.is_empty() {
        return Some(name);
    }
    let annotation = tail.strip_prefix("->")?.trim();
    let annotation = annotation.strip_suffix(':').unwrap_or(annotation).trim();
    (!annotation.is_empty()).then_some(name)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Decoding {
    pub temperature: f64,
    pub top_p: f64,
    pub greedy: bool,
}

impl Decoding {
    pub fn greedy() -> Self {
        Decoding {
            temperature: 0.0,
            top_p: 1.0,
            greedy: true,
        }
    }

    pub fn sampled(temperature: f64, top_p: f64) -> Self {
        Decoding {
            temperature,
            top_p,
            greedy: false,
        }
    }
}

/// One sampled solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeCandidate {
    pub problem_id: String,
    pub source: String,
    pub sample_index: u32,
    pub decoding: Decoding,
    /// Set when the compile-only pre-check failed; the sandbox then records
    /// `setup_error` for every test without executing anything.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precheck_error: Option<String>,
}

impl CodeCandidate {
    pub fn candidate_id(&self) -> String {
        canonical_hash(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseLabel {
    General,
    Corner,
    Difficult,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestInput {
    pub call_expression: String,
    pub case_label: CaseLabel,
}

impl TestInput {
    /// Name of the function the call expression invokes.
    pub fn function_name(&self) -> &str {
        leading_identifier(self.call_expression.trim_start()).unwrap_or("")
    }
}

/// One sampled expected output for a test input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestCandidate {
    pub problem_id: String,
    pub input: TestInput,
    pub expected_literal: String,
    pub rationale: String,
    pub sample_index: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestCase {
    pub input: TestInput,
    pub expected_literal: String,
    pub vote_margin: f64,
    pub rationale: String,
}

pub fn render_assertion(call_expression: &str, expected_literal: &str) -> String {
    format!("assert {} == {}", call_expression.trim(), expected_literal.trim())
}

impl TestCase {
    pub fn assertion(&self) -> String {
        render_assertion(&self.input.call_expression, &self.expected_literal)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionTrace {
    pub strategies: Vec<String>,
    pub pool_size: usize,
    /// Anchor lines covered by the chosen cases.
    pub coverage: usize,
    /// Anchor lines covered by the whole pool.
    pub pool_coverage: usize,
    pub distinct_outputs: usize,
    pub diverse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSuite {
    pub problem_id: String,
    pub cases: Vec<TestCase>,
    pub selection_trace: SelectionTrace,
}

impl TestSuite {
    pub fn new(problem_id: String, cases: Vec<TestCase>, selection_trace: SelectionTrace) -> Result<Self> {
        let suite = TestSuite {
            problem_id,
            cases,
            selection_trace,
        };
        suite.validate()?;
        Ok(suite)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cases.is_empty() {
            return Err(Error::Precondition(format!(
                "suite for {} has no cases",
                self.problem_id
            )));
        }
        let mut seen = BTreeSet::new();
        for case in &self.cases {
            let key = (
                case.input.call_expression.trim().to_string(),
                case.expected_literal.trim().to_string(),
            );
            if !seen.insert(key) {
                return Err(Error::Precondition(format!(
                    "suite for {} repeats `{}`",
                    self.problem_id,
                    case.assertion()
                )));
            }
        }
        Ok(())
    }

    pub fn suite_id(&self) -> String {
        canonical_hash(self)
    }

    /// One assertion per line, in suite order.
    pub fn render(&self) -> String {
        self.cases
            .iter()
            .map(TestCase::assertion)
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStatus {
    Pass,
    AssertionFail,
    RuntimeError,
    Timeout,
    SetupError,
}

impl fmt::Display for OutcomeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OutcomeStatus::Pass => "pass",
            OutcomeStatus::AssertionFail => "assertion_fail",
            OutcomeStatus::RuntimeError => "runtime_error",
            OutcomeStatus::Timeout => "timeout",
            OutcomeStatus::SetupError => "setup_error",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionOutcome {
    pub status: OutcomeStatus,
    pub error_kind: String,
    pub duration_ms: u64,
    pub covered_lines: BTreeSet<u32>,
}

impl ExecutionOutcome {
    pub fn setup_error(kind: impl Into<String>) -> Self {
        ExecutionOutcome {
            status: OutcomeStatus::SetupError,
            error_kind: kind.into(),
            duration_ms: 0,
            covered_lines: BTreeSet::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == OutcomeStatus::Pass
    }
}

/// Exact fraction of passed tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Score {
    pub passed: u32,
    pub total: u32,
}

impl Score {
    pub fn new(passed: u32, total: u32) -> Self {
        assert!(total > 0 && passed <= total, "score {passed}/{total}");
        Score { passed, total }
    }

    pub fn value(self) -> f64 {
        f64::from(self.passed) / f64::from(self.total)
    }

    pub fn is_full(self) -> bool {
        self.passed == self.total
    }
}

impl PartialOrd for Score {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Score {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (u64::from(self.passed) * u64::from(other.total)).cmp(&(u64::from(other.passed) * u64::from(self.total)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreReport {
    pub problem_id: String,
    pub candidate_id: String,
    pub sample_index: u32,
    pub suite_id: String,
    pub per_case: Vec<ExecutionOutcome>,
    pub score: f64,
    pub label_y: u8,
}

impl ScoreReport {
    pub fn new(candidate: &CodeCandidate, suite: &TestSuite, per_case: Vec<ExecutionOutcome>) -> Result<Self> {
        if per_case.is_empty() {
            return Err(Error::Precondition("cannot score against an empty suite".into()));
        }
        let passed = per_case.iter().filter(|o| o.passed()).count() as u32;
        let exact = Score::new(passed, per_case.len() as u32);
        Ok(ScoreReport {
            problem_id: candidate.problem_id.clone(),
            candidate_id: candidate.candidate_id(),
            sample_index: candidate.sample_index,
            suite_id: suite.suite_id(),
            per_case,
            score: exact.value(),
            label_y: u8::from(exact.is_full()),
        })
    }

    pub fn exact(&self) -> Score {
        let passed = self.per_case.iter().filter(|o| o.passed()).count() as u32;
        Score::new(passed, self.per_case.len() as u32)
    }

    /// Checks the stored score and label against the per-case outcomes.
    pub fn validate(&self) -> Result<()> {
        if self.per_case.is_empty() {
            return Err(Error::Precondition(format!(
                "score report for {} has no cases",
                self.candidate_id
            )));
        }
        let exact = self.exact();
        if exact.value() != self.score || self.label_y != u8::from(exact.is_full()) {
            return Err(Error::Precondition(format!(
                "score report for {} is inconsistent with its outcomes",
                self.candidate_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Solver,
    Verifier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SftProvenance {
    pub problem_id: String,
    pub iteration: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SftExample {
    pub role: Role,
    pub prompt: String,
    pub target: String,
    pub provenance: SftProvenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpoProvenance {
    pub problem_id: String,
    pub iteration: u32,
    pub policy: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpoExample {
    pub role: Role,
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub provenance: DpoProvenance,
}
