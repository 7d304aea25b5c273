//! Benchmark metrics for both roles, plus the report they are written to.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    normalize_text, read_jsonl, CaseLabel, CodeCandidate, Decoding, Limits, ProblemOrigin, ProblemSpec, Sampling,
    Score, ScoreReport, SelectionTrace, TestCase, TestInput, TestSuite,
};
use crate::sandbox::Sandbox;
use crate::selection::{majority_vote, ValueEq};
use crate::synthesis::{parse::parse_assertion, Synthesizer};

/// Neutral on-disk form of one benchmark problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkRecord {
    pub id: String,
    pub description: String,
    pub signature: String,
    pub gold_solution: String,
    /// `assert f(x) == y` lines.
    pub gold_tests: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkItem {
    pub problem: ProblemSpec,
    pub gold_solution: String,
    pub gold_tests: Vec<TestCase>,
}

impl BenchmarkItem {
    pub fn from_record(record: &BenchmarkRecord) -> Result<Self> {
        let origin = ProblemOrigin {
            snippet_id: record.id.clone(),
            template_id: "benchmark".into(),
        };
        let problem = ProblemSpec::new(&record.description, &record.signature, origin)?;
        let gold_tests = record
            .gold_tests
            .iter()
            .map(|line| {
                let (call, literal) = parse_assertion(line).ok_or_else(|| {
                    Error::Precondition(format!(
                        "benchmark item {}: `{line}` is not an equality assertion",
                        record.id
                    ))
                })?;
                Ok(TestCase {
                    input: TestInput {
                        call_expression: call,
                        case_label: CaseLabel::General,
                    },
                    expected_literal: literal,
                    vote_margin: 1.0,
                    rationale: String::new(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if gold_tests.is_empty() {
            return Err(Error::Precondition(format!(
                "benchmark item {} has no gold tests",
                record.id
            )));
        }
        Ok(BenchmarkItem {
            problem,
            gold_solution: record.gold_solution.clone(),
            gold_tests,
        })
    }

    pub fn id(&self) -> &str {
        &self.problem.problem_id
    }

    pub fn gold_suite(&self) -> TestSuite {
        TestSuite {
            problem_id: self.problem.problem_id.clone(),
            cases: self.gold_tests.clone(),
            selection_trace: SelectionTrace::default(),
        }
    }

    pub fn gold_candidate(&self) -> CodeCandidate {
        CodeCandidate {
            problem_id: self.problem.problem_id.clone(),
            source: self.gold_solution.clone(),
            sample_index: 0,
            decoding: Decoding::greedy(),
            precheck_error: None,
        }
    }
}

/// Parse benchmark records and check every gold solution against its
/// gold tests.
pub fn load_items(records: &[BenchmarkRecord], sandbox: &Sandbox, limits: Limits) -> Result<Vec<BenchmarkItem>> {
    let items = records
        .iter()
        .map(BenchmarkItem::from_record)
        .collect::<Result<Vec<_>>>()?;
    let golds: Vec<CodeCandidate> = items.iter().map(BenchmarkItem::gold_candidate).collect();
    let suites: Vec<TestSuite> = items.iter().map(BenchmarkItem::gold_suite).collect();
    for report in sandbox.run_matrix(&golds, &suites, limits)? {
        if !report.exact().is_full() {
            let id = &items
                .iter()
                .find(|i| i.id() == report.problem_id)
                .expect("item")
                .problem
                .origin
                .snippet_id;
            return Err(Error::Precondition(format!(
                "benchmark item {id}: gold solution scores {} on its gold tests",
                report.score
            )));
        }
    }
    Ok(items)
}

pub fn load_benchmark(path: &Path, sandbox: &Sandbox, limits: Limits) -> Result<Vec<BenchmarkItem>> {
    load_items(&read_jsonl(path)?, sandbox, limits)
}

/// Two-decimal rounding used by every reported percentage.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn percent(num: usize, den: usize) -> f64 {
    round2(100.0 * num as f64 / den as f64)
}

fn nonempty(items: &[BenchmarkItem], metric: &str) -> Result<()> {
    if items.is_empty() {
        return Err(Error::Metric(format!("{metric} over zero items")));
    }
    Ok(())
}

/// Report of the lowest-sample_index candidate per problem.
fn first_report<'r>(reports: &'r [ScoreReport]) -> HashMap<&'r str, &'r ScoreReport> {
    let mut out: HashMap<&str, &ScoreReport> = HashMap::new();
    for r in reports {
        let slot = out.entry(r.problem_id.as_str()).or_insert(r);
        if r.sample_index < slot.sample_index {
            *slot = r;
        }
    }
    out
}

/// Score candidates against the gold tests of their item.
pub fn score_on_gold(
    sandbox: &Sandbox,
    items: &[BenchmarkItem],
    candidates: &[CodeCandidate],
    limits: Limits,
) -> Result<Vec<ScoreReport>> {
    let suites: Vec<TestSuite> = items.iter().map(BenchmarkItem::gold_suite).collect();
    sandbox.run_matrix(candidates, &suites, limits)
}

/// Percentage of items whose candidate passes every gold test. `reports`
/// hold one candidate per item scored on gold tests.
pub fn pass_at_1(items: &[BenchmarkItem], reports: &[ScoreReport]) -> Result<f64> {
    nonempty(items, "pass@1")?;
    let by_item = first_report(reports);
    let passed = items
        .iter()
        .filter(|i| match by_item.get(i.id()) {
            Some(r) => r.exact().is_full(),
            None => {
                log::warn!("no candidate for benchmark item {}; counted as a failure", i.id());
                false
            }
        })
        .count();
    Ok(percent(passed, items.len()))
}

/// Mean per-item fraction of gold tests passed.
pub fn case_pass_rate(items: &[BenchmarkItem], reports: &[ScoreReport]) -> Result<f64> {
    nonempty(items, "case pass rate")?;
    let by_item = first_report(reports);
    let total: f64 = items
        .iter()
        .filter_map(|i| by_item.get(i.id()))
        .map(|r| r.exact().value())
        .sum();
    Ok(round2(100.0 * total / items.len() as f64))
}

/// Predicted expected literals per item, aligned with its gold tests.
pub type Predictions = BTreeMap<String, Vec<Option<String>>>;

/// Percentage of gold test inputs whose predicted literal is value-equal to
/// the gold literal. Missing predictions count as wrong.
pub fn test_accuracy(items: &[BenchmarkItem], predictions: &Predictions, eq: &impl ValueEq) -> Result<f64> {
    let total: usize = items.iter().map(|i| i.gold_tests.len()).sum();
    if total == 0 {
        return Err(Error::Metric("test accuracy over zero gold tests".into()));
    }
    let mut correct = 0;
    for item in items {
        let preds = predictions.get(item.id());
        for (k, gold) in item.gold_tests.iter().enumerate() {
            if let Some(Some(p)) = preds.and_then(|v| v.get(k)) {
                if eq.value_eq(p, &gold.expected_literal)? {
                    correct += 1;
                }
            }
        }
    }
    Ok(percent(correct, total))
}

/// Suites built from predictions, one per item with at least one usable
/// prediction. Repeated (input, literal) pairs collapse to one case.
pub fn predicted_suites(items: &[BenchmarkItem], predictions: &Predictions) -> Result<Vec<TestSuite>> {
    let mut out = Vec::new();
    for item in items {
        let Some(preds) = predictions.get(item.id()) else {
            continue;
        };
        let mut seen = HashSet::new();
        let cases: Vec<TestCase> = item
            .gold_tests
            .iter()
            .zip(preds)
            .filter_map(|(gold, p)| {
                let literal = p.as_ref()?;
                seen.insert((normalize_text(&gold.input.call_expression), normalize_text(literal)))
                    .then(|| TestCase {
                        input: gold.input.clone(),
                        expected_literal: literal.clone(),
                        vote_margin: 1.0,
                        rationale: String::new(),
                    })
            })
            .collect();
        if !cases.is_empty() {
            out.push(TestSuite::new(item.id().to_string(), cases, SelectionTrace::default())?);
        }
    }
    Ok(out)
}

/// Percentage of negatives passing every test of their problem's suite.
/// `reports` score the negatives against the generated suites.
pub fn false_positive_rate(negatives: &[CodeCandidate], reports: &[ScoreReport]) -> Result<f64> {
    if negatives.is_empty() {
        return Err(Error::Metric(
            "false positive rate over an empty negative corpus".into(),
        ));
    }
    let by_id: HashMap<&str, &ScoreReport> = reports.iter().map(|r| (r.candidate_id.as_str(), r)).collect();
    let mut fp = 0;
    for n in negatives {
        let id = n.candidate_id();
        let r = by_id.get(id.as_str()).ok_or_else(|| {
            Error::Precondition(format!("no generated suite scored negative {id} of {}", n.problem_id))
        })?;
        if r.exact().is_full() {
            fp += 1;
        }
    }
    Ok(percent(fp, negatives.len()))
}

/// Mined flawed solutions, frozen so the metric is computed on fixed data.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NegativeSet {
    pub negatives: Vec<CodeCandidate>,
    /// Items whose samples all passed the gold tests.
    pub excluded: Vec<String>,
}

/// Keep sampled solutions that fail at least one gold test.
pub fn collect_negatives(
    items: &[BenchmarkItem],
    samples: &[CodeCandidate],
    gold_reports: &[ScoreReport],
) -> NegativeSet {
    let failing: HashSet<&str> = gold_reports
        .iter()
        .filter(|r| !r.exact().is_full())
        .map(|r| r.candidate_id.as_str())
        .collect();
    let negatives: Vec<CodeCandidate> = samples
        .iter()
        .filter(|c| failing.contains(c.candidate_id().as_str()))
        .cloned()
        .collect();
    let with: HashSet<&str> = negatives.iter().map(|c| c.problem_id.as_str()).collect();
    let excluded: Vec<String> = items
        .iter()
        .filter(|i| !with.contains(i.id()))
        .map(|i| i.id().to_string())
        .collect();
    for id in &excluded {
        log::info!("benchmark item {id} yielded no negatives; excluded from FP%");
    }
    NegativeSet { negatives, excluded }
}

/// Per item, the candidate scoring highest on its generated suite; ties
/// and unscored candidates resolve to the lowest sample_index.
pub fn rerank_by_tests(candidates: &[CodeCandidate], reports: &[ScoreReport]) -> Vec<CodeCandidate> {
    let by_id: HashMap<&str, Score> = reports.iter().map(|r| (r.candidate_id.as_str(), r.exact())).collect();
    let mut order: Vec<&str> = Vec::new();
    let mut best: HashMap<&str, (&CodeCandidate, Option<Score>)> = HashMap::new();
    for c in candidates {
        let id = c.candidate_id();
        let score = by_id.get(id.as_str()).copied();
        match best.get_mut(c.problem_id.as_str()) {
            None => {
                order.push(&c.problem_id);
                best.insert(&c.problem_id, (c, score));
            }
            Some(slot) => {
                let better = score > slot.1 || (score == slot.1 && c.sample_index < slot.0.sample_index);
                if better {
                    *slot = (c, score);
                }
            }
        }
    }
    order.into_iter().map(|p| best[p].0.clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub agreement_pct: f64,
    pub acc_a_pct: f64,
    pub acc_b_pct: f64,
}

/// Verdict-level agreement over (verdict_a, verdict_b) per item.
pub fn agreement_from_verdicts(verdicts: &[(bool, bool)]) -> Result<Agreement> {
    if verdicts.is_empty() {
        return Err(Error::Metric("agreement over zero items".into()));
    }
    let n = verdicts.len();
    Ok(Agreement {
        agreement_pct: percent(verdicts.iter().filter(|(a, b)| a == b).count(), n),
        acc_a_pct: percent(verdicts.iter().filter(|v| v.0).count(), n),
        acc_b_pct: percent(verdicts.iter().filter(|v| v.1).count(), n),
    })
}

/// Whether each item's gold solution fully passes its suite in `a` and in
/// `b`.
pub fn agreement(
    sandbox: &Sandbox,
    items: &[BenchmarkItem],
    suites_a: &[TestSuite],
    suites_b: &[TestSuite],
    limits: Limits,
) -> Result<Agreement> {
    let covered = |suites: &[TestSuite]| suites.iter().map(|s| s.problem_id.clone()).collect::<BTreeSet<_>>();
    let (ca, cb) = (covered(suites_a), covered(suites_b));
    let missing: Vec<&str> = items
        .iter()
        .map(BenchmarkItem::id)
        .filter(|id| !ca.contains(*id) || !cb.contains(*id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::Precondition(format!(
            "suites missing for {}",
            missing.join(", ")
        )));
    }
    let golds: Vec<CodeCandidate> = items.iter().map(BenchmarkItem::gold_candidate).collect();
    let verdicts = |suites: &[TestSuite]| -> Result<HashMap<String, bool>> {
        let mut out: HashMap<String, bool> = HashMap::new();
        for r in sandbox.run_matrix(&golds, suites, limits)? {
            let full = r.exact().is_full();
            *out.entry(r.problem_id.clone()).or_insert(true) &= full;
        }
        Ok(out)
    };
    let (va, vb) = (verdicts(suites_a)?, verdicts(suites_b)?);
    let pairs: Vec<(bool, bool)> = items.iter().map(|i| (va[i.id()], vb[i.id()])).collect();
    agreement_from_verdicts(&pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

/// Change from `baseline` to `final_value` as a percentage of the baseline,
/// positive when it moves in the preferred direction.
pub fn relative_change(baseline: f64, final_value: f64, direction: Direction) -> Result<f64> {
    if baseline <= 0.0 {
        return Err(Error::Metric(format!("relative change from a baseline of {baseline}")));
    }
    let gain = match direction {
        Direction::HigherBetter => final_value - baseline,
        Direction::LowerBetter => baseline - final_value,
    };
    Ok(round2(gain / baseline * 100.0))
}

/// Contents of metrics.json.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub pass_pct: Option<f64>,
    pub case_pass_pct: Option<f64>,
    pub acc_pct: Option<f64>,
    pub fp_pct: Option<f64>,
    /// Verdict-level agreement.
    pub agreement_pct: Option<f64>,
    /// Gold solutions against predicted tests.
    pub test_pass_pct: Option<f64>,
    pub test_case_pass_pct: Option<f64>,
    /// Gold-test results of the candidates chosen by predicted tests.
    pub rerank_pass_pct: Option<f64>,
    pub rerank_case_pass_pct: Option<f64>,
    pub deltas: BTreeMap<String, f64>,
}

/// Plain-text table: one row per metric, one column per model stage, and a
/// baseline-relative change column from the first to the last stage.
pub fn render_table(benchmark: &str, columns: &[(String, MetricsReport)]) -> String {
    let rows: [(&str, fn(&MetricsReport) -> Option<f64>, Direction); 3] = [
        ("Code_Pass%", |m| m.pass_pct, Direction::HigherBetter),
        ("Test_Acc%", |m| m.acc_pct, Direction::HigherBetter),
        ("Test_FP%", |m| m.fp_pct, Direction::LowerBetter),
    ];
    let mut out = String::new();
    let _ = write!(out, "{:<16}{:<12}", "", "");
    for (label, _) in columns {
        let _ = write!(out, "{label:>10}");
    }
    let _ = writeln!(out, "{:>10}", "Δ(%)");
    for (k, (name, get, dir)) in rows.iter().enumerate() {
        let _ = write!(out, "{:<16}{name:<12}", if k == 0 { benchmark } else { "" });
        let values: Vec<Option<f64>> = columns.iter().map(|(_, m)| get(m)).collect();
        for v in &values {
            match v {
                Some(v) => {
                    let _ = write!(out, "{v:>10.2}");
                }
                None => {
                    let _ = write!(out, "{:>10}", "-");
                }
            }
        }
        let delta = match (values.first().copied().flatten(), values.last().copied().flatten()) {
            (Some(b), Some(f)) if values.len() > 1 => relative_change(b, f, *dir).ok(),
            _ => None,
        };
        match delta {
            Some(d) => {
                let _ = writeln!(out, "{d:>10.2}");
            }
            None => {
                let _ = writeln!(out, "{:>10}", "-");
            }
        }
    }
    out
}

/// Generation-backed evaluation runs.
pub struct Evaluator<'a> {
    pub synth: Synthesizer<'a>,
    pub sandbox: &'a Sandbox,
    pub limits: Limits,
}

impl Evaluator<'_> {
    fn problems(items: &[BenchmarkItem]) -> Vec<ProblemSpec> {
        items.iter().map(|i| i.problem.clone()).collect()
    }

    /// One greedy solution per item.
    pub fn greedy_solutions(&self, items: &[BenchmarkItem]) -> Result<Vec<CodeCandidate>> {
        Ok(self
            .synth
            .gen_solutions(&Self::problems(items), 1, Sampling::GREEDY, self.sandbox)?
            .records)
    }

    pub fn sampled_solutions(
        &self,
        items: &[BenchmarkItem],
        n: usize,
        sampling: Sampling,
    ) -> Result<Vec<CodeCandidate>> {
        Ok(self
            .synth
            .gen_solutions(&Self::problems(items), n, sampling, self.sandbox)?
            .records)
    }

    /// pass@1 and case pass rate of greedy solutions on gold tests.
    pub fn code_metrics(&self, items: &[BenchmarkItem]) -> Result<(f64, f64)> {
        let candidates = self.greedy_solutions(items)?;
        let reports = score_on_gold(self.sandbox, items, &candidates, self.limits)?;
        Ok((pass_at_1(items, &reports)?, case_pass_rate(items, &reports)?))
    }

    /// Expected-output predictions for every gold test input. With
    /// `n_votes > 1` the prediction is the majority value over that many
    /// samples, otherwise a single greedy reply.
    pub fn predict_outputs(
        &self,
        items: &[BenchmarkItem],
        with_cot: bool,
        n_votes: usize,
        sampling: Sampling,
    ) -> Result<Predictions> {
        let jobs: Vec<(&ProblemSpec, &TestInput)> = items
            .iter()
            .flat_map(|i| i.gold_tests.iter().map(move |t| (&i.problem, &t.input)))
            .collect();
        let (n, sampling) = if n_votes > 1 {
            (n_votes, sampling)
        } else {
            (1, Sampling::GREEDY)
        };
        let batch = self
            .synth
            .gen_test_outputs(&jobs, n, sampling, with_cot, self.sandbox)?;
        let mut pools: HashMap<(String, String), Vec<crate::model::TestCandidate>> = HashMap::new();
        for t in batch.records {
            pools
                .entry((t.problem_id.clone(), normalize_text(&t.input.call_expression)))
                .or_default()
                .push(t);
        }
        let mut out = Predictions::new();
        for item in items {
            let mut preds = Vec::with_capacity(item.gold_tests.len());
            for gold in &item.gold_tests {
                let key = (item.id().to_string(), normalize_text(&gold.input.call_expression));
                preds.push(match pools.get(&key) {
                    Some(pool) => Some(majority_vote(pool, self.sandbox)?.case.expected_literal),
                    None => None,
                });
            }
            out.insert(item.id().to_string(), preds);
        }
        Ok(out)
    }

    /// Sample `n` solutions per item and keep those failing gold tests.
    pub fn mine_negatives(&self, items: &[BenchmarkItem], n: usize, sampling: Sampling) -> Result<NegativeSet> {
        let samples = self.sampled_solutions(items, n, sampling)?;
        let reports = score_on_gold(self.sandbox, items, &samples, self.limits)?;
        Ok(collect_negatives(items, &samples, &reports))
    }

    /// False-positive rate of `suites` on `negatives`. A negative whose item
    /// has no suite counts as a false positive, since nothing rejects it.
    pub fn fp_rate(&self, suites: &[TestSuite], negatives: &[CodeCandidate]) -> Result<f64> {
        if negatives.is_empty() {
            return Err(Error::Metric(
                "false positive rate over an empty negative corpus".into(),
            ));
        }
        let covered: HashSet<&str> = suites.iter().map(|s| s.problem_id.as_str()).collect();
        let (scored, unguarded): (Vec<CodeCandidate>, Vec<CodeCandidate>) = negatives
            .iter()
            .cloned()
            .partition(|n| covered.contains(n.problem_id.as_str()));
        for n in &unguarded {
            log::warn!(
                "no generated suite for {}; its negative counts as a false positive",
                n.problem_id
            );
        }
        let reports = self.sandbox.run_matrix(&scored, suites, self.limits)?;
        let fp = if scored.is_empty() {
            0.0
        } else {
            false_positive_rate(&scored, &reports)? * scored.len() as f64
        };
        Ok(round2((fp + 100.0 * unguarded.len() as f64) / negatives.len() as f64))
    }
}
