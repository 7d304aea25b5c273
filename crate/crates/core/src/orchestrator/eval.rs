//! Benchmark evaluation runs behind the `evaluate` command.

use std::collections::HashMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::Engine;
use crate::error::{Error, Result};
use crate::evaluation::{
    case_pass_rate, load_benchmark, pass_at_1, predicted_suites, render_table, rerank_by_tests, round2, score_on_gold,
    test_accuracy, BenchmarkItem, Evaluator, MetricsReport, NegativeSet, Predictions,
};
use crate::model::{read_jsonl, write_jsonl, CodeCandidate, TestSuite};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTask {
    Code,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRequest {
    pub benchmark: PathBuf,
    pub task: EvalTask,
    pub with_cot: bool,
    pub with_mv: bool,
    /// Also rerank sampled solutions with predicted tests (code task).
    pub rerank: bool,
    /// Frozen negative corpus; mined and written here when absent.
    pub negatives: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Engine {
    fn evaluator(&self, scope: &str) -> Evaluator<'_> {
        Evaluator {
            synth: self.synthesizer(scope),
            sandbox: &self.sandbox,
            limits: self.config.limits,
        }
    }

    fn predictions(&self, items: &[BenchmarkItem], req: &EvalRequest) -> Result<Predictions> {
        let n = if req.with_mv { self.config.samples.outputs } else { 1 };
        self.evaluator("eval/test")
            .predict_outputs(items, req.with_cot, n, self.config.sampling.test_output)
    }

    fn negatives(&self, items: &[BenchmarkItem], req: &EvalRequest) -> Result<Vec<CodeCandidate>> {
        let path = req
            .negatives
            .clone()
            .unwrap_or_else(|| req.out_dir.join("negatives.jsonl"));
        if path.exists() {
            return read_jsonl(&path);
        }
        let NegativeSet { negatives, excluded } = self.evaluator("eval/negatives").mine_negatives(
            items,
            self.config.samples.negatives,
            self.config.sampling.negatives,
        )?;
        log::info!("mined {} negatives; {} items had none", negatives.len(), excluded.len());
        write_jsonl(&path, &negatives)?;
        Ok(negatives)
    }

    /// Gold solutions scored on predicted suites: (pass%, case pass%), where
    /// a gold input without a usable prediction counts as a failed case.
    fn gold_on_predicted(&self, items: &[BenchmarkItem], suites: &[TestSuite]) -> Result<(f64, f64)> {
        let golds: Vec<CodeCandidate> = items.iter().map(BenchmarkItem::gold_candidate).collect();
        let reports = self.sandbox.run_matrix(&golds, suites, self.config.limits)?;
        let passed: HashMap<&str, usize> = reports
            .iter()
            .map(|r| (r.problem_id.as_str(), r.per_case.iter().filter(|o| o.passed()).count()))
            .collect();
        let mut full = 0;
        let mut rate = 0.0;
        for item in items {
            let p = passed.get(item.id()).copied().unwrap_or(0);
            let n = item.gold_tests.len();
            full += usize::from(p == n);
            rate += p as f64 / n as f64;
        }
        let n = items.len() as f64;
        Ok((round2(100.0 * full as f64 / n), round2(100.0 * rate / n)))
    }

    /// Run one evaluation and write metrics.json and table.txt to the
    /// output directory.
    pub fn evaluate(&self, req: &EvalRequest) -> Result<MetricsReport> {
        let items = load_benchmark(&req.benchmark, &self.sandbox, self.config.limits)?;
        if items.is_empty() {
            return Err(Error::Metric("benchmark has no items".into()));
        }
        let mut m = MetricsReport::default();
        match req.task {
            EvalTask::Code => {
                let (pass, case) = self.evaluator("eval/code").code_metrics(&items)?;
                m.pass_pct = Some(pass);
                m.case_pass_pct = Some(case);
                if req.rerank {
                    let samples = self.evaluator("eval/rerank").sampled_solutions(
                        &items,
                        self.config.samples.solutions,
                        self.config.sampling.solution,
                    )?;
                    let suites = predicted_suites(&items, &self.predictions(&items, req)?)?;
                    let reports = self.sandbox.run_matrix(&samples, &suites, self.config.limits)?;
                    let chosen = rerank_by_tests(&samples, &reports);
                    let gold = score_on_gold(&self.sandbox, &items, &chosen, self.config.limits)?;
                    m.rerank_pass_pct = Some(pass_at_1(&items, &gold)?);
                    m.rerank_case_pass_pct = Some(case_pass_rate(&items, &gold)?);
                }
            }
            EvalTask::Test => {
                let preds = self.predictions(&items, req)?;
                m.acc_pct = Some(test_accuracy(&items, &preds, &self.sandbox)?);
                let suites = predicted_suites(&items, &preds)?;
                let (pass, case) = self.gold_on_predicted(&items, &suites)?;
                m.test_pass_pct = Some(pass);
                m.test_case_pass_pct = Some(case);
                let negatives = self.negatives(&items, req)?;
                if negatives.is_empty() {
                    log::warn!("no negatives mined; FP% undefined");
                } else {
                    m.fp_pct = Some(self.evaluator("eval/fp").fp_rate(&suites, &negatives)?);
                }
                write_jsonl(&req.out_dir.join("suites.jsonl"), &suites)?;
            }
        }
        self.sandbox.flush_cache(&self.cache_path())?;
        let name = req
            .benchmark
            .file_stem()
            .map_or("benchmark".into(), |s| s.to_string_lossy());
        write_report(&req.out_dir, &name, &m)?;
        Ok(m)
    }
}

pub fn write_report(dir: &std::path::Path, name: &str, m: &MetricsReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join("metrics.json");
    std::fs::write(&json, serde_json::to_string_pretty(m)? + "\n").map_err(|e| Error::io(&json, e))?;
    let table = dir.join("table.txt");
    std::fs::write(&table, render_table(name, &[("Model".into(), m.clone())])).map_err(|e| Error::io(&table, e))
}
