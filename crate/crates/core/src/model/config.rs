//! Run configuration. Every field has a default; unknown fields are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::hash::canonical_hash;
use super::types::Decoding;
use crate::error::{Error, Result};

/// Threshold a candidate's score must meet to anchor a problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Epsilon {
    /// Score must be exactly 1.
    #[default]
    Strict,
    Gt0,
    #[serde(rename = "gt0_5")]
    Gt0_5,
    #[serde(rename = "gt0_75")]
    Gt0_75,
}

impl Epsilon {
    pub const ALL: [Epsilon; 4] = [Epsilon::Strict, Epsilon::Gt0, Epsilon::Gt0_5, Epsilon::Gt0_75];

    /// Exact check of `passed / total` against the threshold.
    pub fn admits(self, passed: u32, total: u32) -> bool {
        let (p, t) = (u64::from(passed), u64::from(total));
        match self {
            Epsilon::Strict => p == t,
            Epsilon::Gt0 => p > 0,
            Epsilon::Gt0_5 => 2 * p > t,
            Epsilon::Gt0_75 => 4 * p > 3 * t,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Epsilon::Strict => "strict",
            Epsilon::Gt0 => "gt0",
            Epsilon::Gt0_5 => "gt0_5",
            Epsilon::Gt0_75 => "gt0_75",
        }
    }
}

/// How the rejected solution is drawn from the lower-scoring pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RejectPick {
    #[default]
    Random,
    Lowest,
    Median,
}

impl RejectPick {
    pub const ALL: [RejectPick; 3] = [RejectPick::Random, RejectPick::Lowest, RejectPick::Median];

    pub fn as_str(self) -> &'static str {
        match self {
            RejectPick::Random => "random",
            RejectPick::Lowest => "lowest",
            RejectPick::Median => "median",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    pub temperature: f64,
    pub top_p: f64,
}

impl Sampling {
    pub const GREEDY: Sampling = Sampling {
        temperature: 0.0,
        top_p: 1.0,
    };

    pub fn decoding(self, n_samples: usize) -> Decoding {
        if self.temperature == 0.0 && n_samples == 1 {
            Decoding::greedy()
        } else {
            Decoding::sampled(self.temperature, self.top_p)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageSampling {
    pub problem: Sampling,
    pub signature: Sampling,
    pub test_input: Sampling,
    pub test_output: Sampling,
    pub solution: Sampling,
    /// Negative mining for the false-positive metric.
    pub negatives: Sampling,
    pub max_tokens: u32,
}

impl Default for StageSampling {
    fn default() -> Self {
        let nucleus = Sampling {
            temperature: 0.6,
            top_p: 0.9,
        };
        StageSampling {
            problem: Sampling {
                temperature: 0.8,
                top_p: 0.95,
            },
            signature: Sampling::GREEDY,
            test_input: Sampling::GREEDY,
            test_output: nucleus,
            solution: nucleus,
            negatives: nucleus,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleCounts {
    /// Solutions sampled per problem.
    pub solutions: usize,
    /// Maximum test inputs kept per problem.
    pub inputs: usize,
    /// Expected-output samples per input.
    pub outputs: usize,
    /// Solutions sampled per benchmark item when mining negatives.
    pub negatives: usize,
}

impl Default for SampleCounts {
    fn default() -> Self {
        SampleCounts {
            solutions: 10,
            inputs: 4,
            outputs: 5,
            negatives: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Strategies {
    pub diversify: bool,
    pub coverage: bool,
}

impl Default for Strategies {
    fn default() -> Self {
        Strategies {
            diversify: true,
            coverage: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Limits {
    pub time_ms: u64,
    pub memory_mb: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            time_ms: 5000,
            memory_mb: 512,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    #[default]
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub model: String,
    pub max_concurrency: usize,
    /// Overrides the base-URL environment variable when set.
    pub base_url: Option<String>,
    pub max_attempts: u32,
    /// First retry delay; doubles on each further attempt.
    pub backoff_ms: u64,
    pub request_timeout_ms: u64,
    /// Mock script file, relative paths resolve against the config file.
    pub mock_script: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Mock,
            model: "mock".into(),
            max_concurrency: 8,
            base_url: None,
            max_attempts: 3,
            backoff_ms: 1000,
            request_timeout_ms: 120_000,
            mock_script: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SandboxConfig {
    /// Program and leading arguments; the payload path is appended.
    pub shim_command: Vec<String>,
    pub workers: usize,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig {
            shim_command: vec!["python3".into(), "py_runner.py".into()],
            workers: 4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputFiles {
    /// JSONL of `{id, code}` records.
    pub snippets: Option<PathBuf>,
    /// JSONL of `{id, text}` records.
    pub description_templates: Option<PathBuf>,
    /// Directory overriding the built-in prompt templates.
    pub template_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub iteration_count: u32,
    /// Problem-generation attempts in iteration 1.
    pub problem_count: usize,
    pub samples: SampleCounts,
    pub suite_size: usize,
    pub sampling: StageSampling,
    pub epsilon: Epsilon,
    pub reject_pick: RejectPick,
    pub strategies: Strategies,
    pub max_verifier_pairs_per_problem: usize,
    pub limits: Limits,
    pub seed: u64,
    pub backend: BackendConfig,
    pub sandbox: SandboxConfig,
    pub run_dir: PathBuf,
    pub inputs: InputFiles,
    pub ensemble_for_iter3: bool,
    pub pause_for_training: bool,
    /// Re-asks per rejected synthesis reply.
    pub synthesis_retries: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            iteration_count: 3,
            problem_count: 100,
            samples: SampleCounts::default(),
            suite_size: 3,
            sampling: StageSampling::default(),
            epsilon: Epsilon::Strict,
            reject_pick: RejectPick::Random,
            strategies: Strategies::default(),
            max_verifier_pairs_per_problem: 8,
            limits: Limits::default(),
            seed: 0,
            backend: BackendConfig::default(),
            sandbox: SandboxConfig::default(),
            run_dir: PathBuf::from("run"),
            inputs: InputFiles::default(),
            ensemble_for_iter3: true,
            pause_for_training: false,
            synthesis_retries: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(&mut de)
            .map_err(|e| Error::Config(format!("at `{}`: {}", e.path(), e.inner())))?;
        config.validate()?;
        Ok(config)
    }

    /// Load a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut config.run_dir);
        for p in [
            &mut config.backend.mock_script,
            &mut config.inputs.snippets,
            &mut config.inputs.description_templates,
            &mut config.inputs.template_dir,
        ]
        .into_iter()
        .flatten()
        {
            rebase(p);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("iteration_count", self.iteration_count as usize),
            ("problem_count", self.problem_count),
            ("samples.solutions", self.samples.solutions),
            ("samples.inputs", self.samples.inputs),
            ("samples.outputs", self.samples.outputs),
            ("samples.negatives", self.samples.negatives),
            ("suite_size", self.suite_size),
            ("backend.max_concurrency", self.backend.max_concurrency),
            ("backend.max_attempts", self.backend.max_attempts as usize),
            ("sandbox.workers", self.sandbox.workers),
            ("limits.time_ms", self.limits.time_ms as usize),
            ("limits.memory_mb", self.limits.memory_mb as usize),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        for (name, s) in [
            ("problem", self.sampling.problem),
            ("signature", self.sampling.signature),
            ("test_input", self.sampling.test_input),
            ("test_output", self.sampling.test_output),
            ("solution", self.sampling.solution),
            ("negatives", self.sampling.negatives),
        ] {
            if s.temperature < 0.0 || !(s.top_p > 0.0 && s.top_p <= 1.0) {
                return Err(Error::Config(format!(
                    "sampling.{name}: temperature must be >= 0 and top_p in (0, 1]"
                )));
            }
        }
        if self.sandbox.shim_command.is_empty() {
            return Err(Error::Config("sandbox.shim_command is empty".into()));
        }
        Ok(())
    }

    pub fn config_hash(&self) -> String {
        canonical_hash(self)
    }
}
