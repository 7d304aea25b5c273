//! Iteration driver: stage files, resumption, run locking and manifests.

mod eval;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use eval::{write_report, EvalRequest, EvalTask};

use crate::error::{Error, Result};
use crate::gateway::{Backend, Gateway, HttpBackend, MockBackend, MockScript, RetryPolicy};
use crate::model::{
    normalize_text, read_jsonl, write_jsonl, BackendKind, CodeCandidate, ProblemSpec, RunConfig, ScoreReport,
    TestCandidate, TestSuite,
};
use crate::pairs::{build_problem, ensemble_filter, PairContext, PairPolicy};
use crate::sandbox::Sandbox;
use crate::selection::{assemble_suite, majority_vote, value_classes, Vote};
use crate::synthesis::{dedup, DescriptionTemplate, RejectionRecord, Snippet, Synthesizer, TemplateSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageName {
    Problems,
    Solutions,
    TestCandidates,
    Suites,
    Scores,
    Pairs,
}

impl StageName {
    pub const ALL: [StageName; 6] = [
        StageName::Problems,
        StageName::Solutions,
        StageName::TestCandidates,
        StageName::Suites,
        StageName::Scores,
        StageName::Pairs,
    ];

    /// The file whose presence marks the stage as done.
    pub fn file(self) -> &'static str {
        match self {
            StageName::Problems => "problems.jsonl",
            StageName::Solutions => "solutions.jsonl",
            StageName::TestCandidates => "test_candidates.jsonl",
            StageName::Suites => "suites.jsonl",
            StageName::Scores => "scores.jsonl",
            StageName::Pairs => "dpo.jsonl",
        }
    }
}

/// Voting record kept for verifier pair construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemVotes {
    pub problem_id: String,
    pub votes: Vec<Vote>,
}

/// Files written per iteration, in manifest order.
pub const ITERATION_FILES: [&str; 9] = [
    "problems.jsonl",
    "solutions.jsonl",
    "test_candidates.jsonl",
    "votes.jsonl",
    "suites.jsonl",
    "scores.jsonl",
    "sft.jsonl",
    "dpo.jsonl",
    "rejections.jsonl",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub iteration: u32,
    pub config_hash: String,
    pub seed: u64,
    pub backend_id: String,
    pub policy: String,
    pub ensemble: bool,
    pub anchors: usize,
    pub counts: BTreeMap<String, usize>,
    pub memory_limit: String,
    pub paused_for_training: bool,
}

/// Exclusive claim on a run directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(run_dir: &Path) -> Result<Self> {
        fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
        let path = run_dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(RunLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(run_dir.to_path_buf())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn build_backend(config: &RunConfig) -> Result<Arc<dyn Backend>> {
    let b = &config.backend;
    Ok(match b.kind {
        BackendKind::Mock => {
            let script = match &b.mock_script {
                Some(path) => MockScript::load(path)?,
                None => return Err(Error::Config("mock backend needs backend.mock_script".into())),
            };
            Arc::new(MockBackend::new(script))
        }
        BackendKind::Http => {
            let retry = RetryPolicy {
                max_attempts: b.max_attempts,
                base_delay: Duration::from_millis(b.backoff_ms),
            };
            let timeout = Duration::from_millis(b.request_timeout_ms);
            Arc::new(HttpBackend::from_env(b.base_url.as_deref(), &b.model, retry, timeout)?)
        }
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IterateOptions {
    /// Stop right after this stage of this iteration is written.
    pub stop_after: Option<(u32, StageName)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IterateOutcome {
    pub completed: Vec<u32>,
    pub paused_after: Option<u32>,
    pub stopped: bool,
}

fn read_required<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(Error::Precondition(format!("missing input file {}", path.display())));
    }
    read_jsonl(path)
}

fn group_by_problem<T: Clone>(records: &[T], key: impl Fn(&T) -> &str) -> HashMap<String, Vec<T>> {
    let mut out: HashMap<String, Vec<T>> = HashMap::new();
    for r in records {
        out.entry(key(r).to_string()).or_default().push(r.clone());
    }
    out
}

pub struct Engine {
    pub config: RunConfig,
    pub gateway: Gateway,
    pub sandbox: Sandbox,
    pub templates: TemplateSet,
}

impl Engine {
    pub fn new(config: RunConfig) -> Result<Self> {
        let backend = build_backend(&config)?;
        Self::with_backend(config, backend)
    }

    pub fn with_backend(config: RunConfig, backend: Arc<dyn Backend>) -> Result<Self> {
        config.validate()?;
        let gateway = Gateway::new(backend, config.backend.max_concurrency)?;
        let sandbox = Sandbox::new(config.sandbox.shim_command.clone(), config.sandbox.workers)?;
        let templates = TemplateSet::load(config.inputs.template_dir.as_deref())?;
        let engine = Engine {
            config,
            gateway,
            sandbox,
            templates,
        };
        engine.sandbox.load_cache(&engine.cache_path())?;
        Ok(engine)
    }

    pub fn run_dir(&self) -> &Path {
        &self.config.run_dir
    }

    pub fn iter_dir(&self, iteration: u32) -> PathBuf {
        self.run_dir().join(format!("iter_{iteration}"))
    }

    pub fn cache_path(&self) -> PathBuf {
        self.run_dir().join("cache").join("runs.jsonl")
    }

    fn file(&self, iteration: u32, name: &str) -> PathBuf {
        self.iter_dir(iteration).join(name)
    }

    pub fn synthesizer(&self, scope: impl Into<String>) -> Synthesizer<'_> {
        Synthesizer {
            gateway: &self.gateway,
            templates: &self.templates,
            sampling: &self.config.sampling,
            retries: self.config.synthesis_retries,
            scope: scope.into(),
        }
    }

    pub fn policy(&self) -> PairPolicy {
        PairPolicy {
            epsilon: self.config.epsilon,
            reject_pick: self.config.reject_pick,
            seed: self.config.seed,
        }
    }

    fn ensemble_applies(&self, iteration: u32) -> bool {
        iteration == 3 && self.config.ensemble_for_iter3
    }

    pub fn problems(&self) -> Result<Vec<ProblemSpec>> {
        read_required(&self.file(1, StageName::Problems.file()))
    }

    pub fn stage_done(&self, iteration: u32, stage: StageName) -> bool {
        self.file(iteration, stage.file()).exists()
    }

    /// Append rejections not already logged by an interrupted earlier run.
    fn log_rejections(&self, iteration: u32, rejections: &[RejectionRecord]) -> Result<()> {
        let path = self.file(iteration, "rejections.jsonl");
        let logged: Vec<RejectionRecord> = if path.exists() { read_jsonl(&path)? } else { Vec::new() };
        let fresh: Vec<&RejectionRecord> = rejections.iter().filter(|r| !logged.contains(r)).collect();
        if fresh.is_empty() {
            return Ok(());
        }
        crate::model::append_jsonl(&path, &fresh)
    }

    /// Run one stage unless its output already exists. Returns whether it ran.
    pub fn run_stage(&self, iteration: u32, stage: StageName) -> Result<bool> {
        if iteration == 0 {
            return Err(Error::Precondition("iterations are numbered from 1".into()));
        }
        if stage == StageName::Problems && iteration != 1 {
            return Ok(false);
        }
        if self.stage_done(iteration, stage) {
            log::info!("iter_{iteration}: {} present, skipping", stage.file());
            return Ok(false);
        }
        log::info!("iter_{iteration}: running {stage:?}");
        match stage {
            StageName::Problems => self.stage_problems(),
            StageName::Solutions => self.stage_solutions(iteration),
            StageName::TestCandidates => self.stage_test_candidates(iteration),
            StageName::Suites => self.stage_suites(iteration),
            StageName::Scores => self.stage_scores(iteration),
            StageName::Pairs => self.stage_pairs(iteration),
        }?;
        Ok(true)
    }

    fn stage_problems(&self) -> Result<()> {
        let inputs = &self.config.inputs;
        let (Some(snippets), Some(templates)) = (&inputs.snippets, &inputs.description_templates) else {
            return Err(Error::Config(
                "inputs.snippets and inputs.description_templates are required".into(),
            ));
        };
        let snippets: Vec<Snippet> = read_required(snippets)?;
        let templates: Vec<DescriptionTemplate> = read_required(templates)?;
        let synth = self.synthesizer("iter_1");
        let drafts = synth.gen_problems(&snippets, &templates, self.config.problem_count, self.config.seed)?;
        let specs = synth.gen_signatures(&drafts.records)?;
        self.log_rejections(1, &drafts.rejections)?;
        self.log_rejections(1, &specs.rejections)?;
        write_jsonl(&self.file(1, StageName::Problems.file()), &dedup(specs.records))
    }

    fn stage_solutions(&self, iteration: u32) -> Result<()> {
        let problems = self.problems()?;
        let batch = self.synthesizer(format!("iter_{iteration}")).gen_solutions(
            &problems,
            self.config.samples.solutions,
            self.config.sampling.solution,
            &self.sandbox,
        )?;
        self.log_rejections(iteration, &batch.rejections)?;
        write_jsonl(&self.file(iteration, StageName::Solutions.file()), &batch.records)
    }

    fn stage_test_candidates(&self, iteration: u32) -> Result<()> {
        let problems = self.problems()?;
        let synth = self.synthesizer(format!("iter_{iteration}"));
        let inputs = synth.gen_test_inputs(&problems, self.config.samples.inputs)?;
        let by_id: HashMap<&str, &ProblemSpec> = problems.iter().map(|p| (p.problem_id.as_str(), p)).collect();
        let jobs: Vec<_> = inputs
            .records
            .iter()
            .flat_map(|(pid, list)| {
                let p = by_id[pid.as_str()];
                list.iter().map(move |i| (p, i))
            })
            .collect();
        let outputs = synth.gen_test_outputs(
            &jobs,
            self.config.samples.outputs,
            self.config.sampling.test_output,
            true,
            &self.sandbox,
        )?;
        self.log_rejections(iteration, &inputs.rejections)?;
        self.log_rejections(iteration, &outputs.rejections)?;
        write_jsonl(
            &self.file(iteration, StageName::TestCandidates.file()),
            &outputs.records,
        )
    }

    /// Vote per input, measure coverage on the consensus solution, select.
    fn stage_suites(&self, iteration: u32) -> Result<()> {
        let problems = self.problems()?;
        let solutions: Vec<CodeCandidate> = read_required(&self.file(iteration, StageName::Solutions.file()))?;
        let samples: Vec<TestCandidate> = read_required(&self.file(iteration, StageName::TestCandidates.file()))?;
        let solutions = group_by_problem(&solutions, |c| &c.problem_id);
        let samples = group_by_problem(&samples, |t| &t.problem_id);
        let mut suites = Vec::new();
        let mut all_votes = Vec::new();
        for problem in &problems {
            let Some(pool) = samples.get(&problem.problem_id) else {
                log::info!("no test samples for {}; no suite", problem.problem_id);
                continue;
            };
            let mut order: Vec<String> = Vec::new();
            let mut by_input: HashMap<String, Vec<TestCandidate>> = HashMap::new();
            for t in pool {
                let key = normalize_text(&t.input.call_expression);
                if !by_input.contains_key(&key) {
                    order.push(key.clone());
                }
                by_input.entry(key).or_default().push(t.clone());
            }
            let votes = order
                .iter()
                .map(|k| majority_vote(&by_input[k], &self.sandbox))
                .collect::<Result<Vec<Vote>>>()?;
            let cases: Vec<_> = votes.iter().map(|v| v.case.clone()).collect();
            let candidates = solutions.get(&problem.problem_id).cloned().unwrap_or_default();
            let rows = self.sandbox.run_case_matrix(&candidates, &cases, self.config.limits)?;
            let consensus = rows
                .iter()
                .zip(&candidates)
                .map(|(row, c)| (row.iter().filter(|o| o.passed()).count(), c.sample_index, row))
                .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
            let coverage = match consensus {
                Some((_, _, row)) => row.iter().map(|o| o.covered_lines.clone()).collect(),
                None => vec![Default::default(); cases.len()],
            };
            let classes = value_classes(&cases, &self.sandbox)?;
            let suite = assemble_suite(
                &problem.problem_id,
                &cases,
                &coverage,
                &classes,
                self.config.suite_size,
                self.config.strategies.clone(),
            )?;
            suites.push(suite);
            all_votes.push(ProblemVotes {
                problem_id: problem.problem_id.clone(),
                votes,
            });
        }
        self.sandbox.flush_cache(&self.cache_path())?;
        write_jsonl(&self.file(iteration, "votes.jsonl"), &all_votes)?;
        write_jsonl(&self.file(iteration, StageName::Suites.file()), &suites)
    }

    fn stage_scores(&self, iteration: u32) -> Result<()> {
        let solutions: Vec<CodeCandidate> = read_required(&self.file(iteration, StageName::Solutions.file()))?;
        let suites: Vec<TestSuite> = read_required(&self.file(iteration, StageName::Suites.file()))?;
        let reports = self.sandbox.run_matrix(&solutions, &suites, self.config.limits)?;
        self.sandbox.flush_cache(&self.cache_path())?;
        write_jsonl(&self.file(iteration, StageName::Scores.file()), &reports)
    }

    fn stage_pairs(&self, iteration: u32) -> Result<()> {
        let problems = self.problems()?;
        let solutions: Vec<CodeCandidate> = read_required(&self.file(iteration, StageName::Solutions.file()))?;
        let suites: Vec<TestSuite> = read_required(&self.file(iteration, StageName::Suites.file()))?;
        let reports: Vec<ScoreReport> = read_required(&self.file(iteration, StageName::Scores.file()))?;
        let votes: Vec<ProblemVotes> = read_required(&self.file(iteration, "votes.jsonl"))?;
        let eligible: Option<HashMap<String, HashSet<String>>> = if self.ensemble_applies(iteration) {
            let a: Vec<TestSuite> = read_required(&self.file(1, StageName::Suites.file()))?;
            let b: Vec<TestSuite> = read_required(&self.file(2, StageName::Suites.file()))?;
            let survivors = ensemble_filter(&self.sandbox, &a, &b, &solutions, self.config.limits)?;
            self.sandbox.flush_cache(&self.cache_path())?;
            Some(
                survivors
                    .into_iter()
                    .map(|(p, s)| (p, s.into_iter().collect()))
                    .collect(),
            )
        } else {
            None
        };
        let ctx = PairContext {
            templates: &self.templates,
            policy: self.policy(),
            iteration,
            max_verifier_pairs: self.config.max_verifier_pairs_per_problem,
        };
        let (sft, dpo) = build_datasets(
            &ctx,
            &problems,
            &solutions,
            &suites,
            &reports,
            &votes,
            eligible.as_ref(),
        )?;
        write_jsonl(&self.file(iteration, "sft.jsonl"), &sft)?;
        write_jsonl(&self.file(iteration, StageName::Pairs.file()), &dpo)
    }

    fn write_manifest(&self, iteration: u32, paused: bool) -> Result<Manifest> {
        let mut counts = BTreeMap::new();
        for name in ITERATION_FILES {
            let path = self.file(iteration, name);
            if path.exists() {
                let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                counts.insert(name.to_string(), text.lines().count());
            }
        }
        let anchors = counts.get("sft.jsonl").copied().unwrap_or(0) / 2;
        let manifest = Manifest {
            iteration,
            config_hash: self.config.config_hash(),
            seed: self.config.seed,
            backend_id: self.gateway.backend_id(),
            policy: self.policy().label(),
            ensemble: self.ensemble_applies(iteration),
            anchors,
            counts,
            memory_limit: if cfg!(unix) {
                "soft limit in shim".into()
            } else {
                "advisory".into()
            },
            paused_for_training: paused,
        };
        let path = self.file(iteration, "manifest.json");
        let tmp = path.with_extension("json.partial");
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }

    /// Run iterations 1..=iteration_count, resuming from existing stage
    /// files. Holds the run lock throughout.
    pub fn iterate(&self, options: IterateOptions) -> Result<IterateOutcome> {
        let _lock = RunLock::acquire(self.run_dir())?;
        let mut outcome = IterateOutcome::default();
        for iteration in 1..=self.config.iteration_count {
            let mut ran = false;
            for stage in StageName::ALL {
                ran |= self.run_stage(iteration, stage)?;
                if options.stop_after == Some((iteration, stage)) {
                    outcome.stopped = true;
                    return Ok(outcome);
                }
            }
            let pause = ran && self.config.pause_for_training && iteration < self.config.iteration_count;
            self.write_manifest(iteration, pause)?;
            outcome.completed.push(iteration);
            if pause {
                log::info!("iteration {iteration} datasets written; paused for training");
                outcome.paused_after = Some(iteration);
                return Ok(outcome);
            }
        }
        Ok(outcome)
    }
}

/// SFT and DPO records for every problem with a suite, in problem order.
pub fn build_datasets(
    ctx: &PairContext<'_>,
    problems: &[ProblemSpec],
    solutions: &[CodeCandidate],
    suites: &[TestSuite],
    reports: &[ScoreReport],
    votes: &[ProblemVotes],
    eligible: Option<&HashMap<String, HashSet<String>>>,
) -> Result<(Vec<crate::model::SftExample>, Vec<crate::model::DpoExample>)> {
    let solutions = group_by_problem(solutions, |c| &c.problem_id);
    let reports = group_by_problem(reports, |r| &r.problem_id);
    let suites: HashMap<&str, &TestSuite> = suites.iter().map(|s| (s.problem_id.as_str(), s)).collect();
    let votes: HashMap<&str, &[Vote]> = votes
        .iter()
        .map(|v| (v.problem_id.as_str(), v.votes.as_slice()))
        .collect();
    let none = HashSet::new();
    let (mut sft, mut dpo) = (Vec::new(), Vec::new());
    for problem in problems {
        let pid = problem.problem_id.as_str();
        let Some(suite) = suites.get(pid) else { continue };
        let allowed = eligible.map(|e| e.get(pid).unwrap_or(&none));
        let out = build_problem(
            ctx,
            problem,
            solutions.get(pid).map_or(&[][..], Vec::as_slice),
            suite,
            reports.get(pid).map_or(&[][..], Vec::as_slice),
            votes.get(pid).copied().unwrap_or(&[]),
            allowed,
        )?;
        sft.extend(out.sft);
        dpo.extend(out.dpo);
    }
    Ok((sft, dpo))
}
