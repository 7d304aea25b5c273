//! Executes candidate solutions against assertions and computes scores.

mod shim;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use dashmap::DashMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use shim::{CompileVerdict, LiteralComparison, Payload, ShimClient, CAPTURE_LIMIT, KILL_GRACE};

use crate::error::{Error, Result};
use crate::model::{
    append_jsonl, content_hash, read_jsonl, CodeCandidate, ExecutionOutcome, Limits, OutcomeStatus, ScoreReport,
    TestCase, TestSuite,
};

/// Identity of one execution: exact source bytes, exact assertion, limits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CacheKey {
    pub source_hash: String,
    pub test_hash: String,
    pub function_name: String,
    pub time_ms: u64,
    pub memory_mb: u64,
}

impl CacheKey {
    fn new(source: &str, test_statement: &str, function_name: &str, limits: Limits) -> Self {
        CacheKey {
            source_hash: content_hash(source.as_bytes()),
            test_hash: content_hash(test_statement.as_bytes()),
            function_name: function_name.to_string(),
            time_ms: limits.time_ms,
            memory_mb: limits.memory_mb,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheRecord {
    pub key: CacheKey,
    pub outcome: ExecutionOutcome,
}

type Slot<T> = Arc<Mutex<Option<T>>>;

/// Insert-once memo: concurrent requests for one key compute it once.
struct Memo<K, V> {
    slots: DashMap<K, Slot<V>>,
}

impl<K: Eq + std::hash::Hash + Clone, V: Clone> Memo<K, V> {
    fn new() -> Self {
        Memo { slots: DashMap::new() }
    }

    fn get_or_try(&self, key: &K, compute: impl FnOnce() -> Result<V>) -> Result<(V, bool)> {
        let slot = self.slots.entry(key.clone()).or_default().clone();
        let mut guard = slot.lock().unwrap();
        if let Some(v) = guard.as_ref() {
            return Ok((v.clone(), true));
        }
        let v = compute()?;
        *guard = Some(v.clone());
        Ok((v, false))
    }

    fn insert(&self, key: K, value: V) {
        self.slots.insert(key, Arc::new(Mutex::new(Some(value))));
    }

    fn len(&self) -> usize {
        self.slots
            .iter()
            .filter(|s| s.value().lock().unwrap().is_some())
            .count()
    }
}

pub struct Sandbox {
    shim: ShimClient,
    pool: rayon::ThreadPool,
    runs: Memo<CacheKey, ExecutionOutcome>,
    fresh: Mutex<Vec<CacheRecord>>,
    literal_checks: Memo<String, bool>,
    literal_compares: Memo<(String, String), LiteralComparison>,
    compiles: Memo<(String, String), CompileVerdict>,
}

impl Sandbox {
    pub fn new(shim_command: Vec<String>, workers: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .thread_name(|i| format!("sandbox-{i}"))
            .build()
            .map_err(|e| Error::Config(format!("cannot build sandbox pool: {e}")))?;
        Ok(Sandbox {
            shim: ShimClient::new(shim_command)?,
            pool,
            runs: Memo::new(),
            fresh: Mutex::new(Vec::new()),
            literal_checks: Memo::new(),
            literal_compares: Memo::new(),
            compiles: Memo::new(),
        })
    }

    /// Shim processes started so far (all modes).
    pub fn invocations(&self) -> u64 {
        self.shim.invocations()
    }

    pub fn cached_runs(&self) -> usize {
        self.runs.len()
    }

    /// Seed the run cache from a persisted cache file. Missing file is fine.
    pub fn load_cache(&self, path: &Path) -> Result<usize> {
        if !path.exists() {
            return Ok(0);
        }
        let records: Vec<CacheRecord> = read_jsonl(path)?;
        let n = records.len();
        for r in records {
            self.runs.insert(r.key, r.outcome);
        }
        Ok(n)
    }

    /// Append executions made since the last flush, sorted by key.
    pub fn flush_cache(&self, path: &Path) -> Result<usize> {
        let mut fresh = std::mem::take(&mut *self.fresh.lock().unwrap());
        fresh.sort_by(|a, b| a.key.cmp(&b.key));
        if !fresh.is_empty() {
            append_jsonl(path, &fresh)?;
        }
        Ok(fresh.len())
    }

    pub fn compile_check(&self, source: &str, function_name: &str) -> Result<CompileVerdict> {
        let key = (content_hash(source.as_bytes()), function_name.to_string());
        Ok(self
            .compiles
            .get_or_try(&key, || self.shim.compile(source, function_name))?
            .0)
    }

    pub fn literal_check(&self, text: &str) -> Result<bool> {
        let key = text.trim().to_string();
        Ok(self
            .literal_checks
            .get_or_try(&key, || self.shim.literal_check(&key))?
            .0)
    }

    pub fn literal_compare(&self, a: &str, b: &str) -> Result<LiteralComparison> {
        let (a, b) = (a.trim().to_string(), b.trim().to_string());
        if a == b {
            return Ok(LiteralComparison {
                equal: true,
                type_equal: true,
            });
        }
        let key = (a, b);
        Ok(self
            .literal_compares
            .get_or_try(&key, || self.shim.literal_compare(&key.0, &key.1))?
            .0)
    }

    /// Value equality of two literals: equal values of the same type.
    pub fn literal_equal(&self, a: &str, b: &str) -> Result<bool> {
        Ok(self.literal_compare(a, b)?.value_equal())
    }

    fn run_statement(
        &self,
        candidate: &CodeCandidate,
        statement: &str,
        function_name: &str,
        limits: Limits,
    ) -> Result<ExecutionOutcome> {
        if let Some(kind) = &candidate.precheck_error {
            return Ok(ExecutionOutcome::setup_error(kind.clone()));
        }
        let key = CacheKey::new(&candidate.source, statement, function_name, limits);
        let (outcome, hit) = self.runs.get_or_try(&key, || {
            let name = (!function_name.is_empty()).then_some(function_name);
            self.shim
                .run(&candidate.source, statement, name, limits.time_ms, limits.memory_mb)
        })?;
        if !hit {
            self.fresh.lock().unwrap().push(CacheRecord {
                key,
                outcome: outcome.clone(),
            });
        }
        Ok(outcome)
    }

    /// Run one test case against one candidate.
    pub fn run_test(&self, candidate: &CodeCandidate, test: &TestCase, limits: Limits) -> Result<ExecutionOutcome> {
        self.run_statement(candidate, &test.assertion(), test.input.function_name(), limits)
    }

    /// Outcomes of `cases` in order; a setup error marks the remaining
    /// cases without executing them.
    pub fn run_cases(
        &self,
        candidate: &CodeCandidate,
        cases: &[TestCase],
        limits: Limits,
    ) -> Result<Vec<ExecutionOutcome>> {
        let mut outcomes = Vec::with_capacity(cases.len());
        for case in cases {
            if let Some(prev) = outcomes
                .last()
                .filter(|o: &&ExecutionOutcome| o.status == OutcomeStatus::SetupError)
            {
                let marked = ExecutionOutcome::setup_error(prev.error_kind.clone());
                outcomes.push(marked);
                continue;
            }
            outcomes.push(self.run_test(candidate, case, limits)?);
        }
        Ok(outcomes)
    }

    pub fn score(&self, candidate: &CodeCandidate, suite: &TestSuite, limits: Limits) -> Result<ScoreReport> {
        if suite.cases.is_empty() {
            return Err(Error::Precondition(format!(
                "suite for {} is empty; refusing to score",
                suite.problem_id
            )));
        }
        let per_case = self.run_cases(candidate, &suite.cases, limits)?;
        ScoreReport::new(candidate, suite, per_case)
    }

    /// Score every candidate against every suite of its problem.
    ///
    /// Reports follow candidate order, then suite order. Results do not
    /// depend on the worker count.
    pub fn run_matrix(
        &self,
        candidates: &[CodeCandidate],
        suites: &[TestSuite],
        limits: Limits,
    ) -> Result<Vec<ScoreReport>> {
        let mut by_problem: BTreeMap<&str, Vec<&TestSuite>> = BTreeMap::new();
        for suite in suites {
            by_problem.entry(suite.problem_id.as_str()).or_default().push(suite);
        }
        let pairs: Vec<(&CodeCandidate, &TestSuite)> = candidates
            .iter()
            .flat_map(|c| {
                by_problem
                    .get(c.problem_id.as_str())
                    .into_iter()
                    .flatten()
                    .map(move |s| (c, *s))
            })
            .collect();
        self.pool
            .install(|| pairs.par_iter().map(|(c, s)| self.score(c, s, limits)).collect())
    }

    /// Per-candidate outcome rows over a shared case list, in parallel.
    pub fn run_case_matrix(
        &self,
        candidates: &[CodeCandidate],
        cases: &[TestCase],
        limits: Limits,
    ) -> Result<Vec<Vec<ExecutionOutcome>>> {
        self.pool.install(|| {
            candidates
                .par_iter()
                .map(|c| self.run_cases(c, cases, limits))
                .collect()
        })
    }

    /// Run `f` on the sandbox worker pool.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}
