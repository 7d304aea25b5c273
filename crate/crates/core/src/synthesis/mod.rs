//! Prompt construction, reply parsing, and the generation stages that turn
//! snippets into problems, solutions, and candidate tests.

pub mod parse;
mod templates;

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use parse::Rejection;
pub use templates::{PromptTemplate, Stage, TemplateSet};

use crate::error::{Error, Result};
use crate::gateway::{Gateway, GenRequest};
use crate::model::{
    canonical_hash, render_assertion, CodeCandidate, ProblemDraft, ProblemOrigin, ProblemSpec, Sampling, StageSampling,
    TestCandidate, TestInput,
};
use crate::sandbox::Sandbox;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snippet {
    pub id: String,
    pub code: String,
}

/// Benchmark-style problem text used as a stylistic template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DescriptionTemplate {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionRecord {
    pub stage: Stage,
    /// Problem id, or the draft position for stages before ids exist.
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_index: Option<u32>,
    pub rejection: Rejection,
}

/// Records produced by a stage plus the replies it skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub records: Vec<T>,
    pub rejections: Vec<RejectionRecord>,
}

impl<T> Batch<T> {
    fn new() -> Self {
        Batch {
            records: Vec::new(),
            rejections: Vec::new(),
        }
    }

    fn reject(&mut self, stage: Stage, key: impl Into<String>, sample_index: Option<u32>, rejection: Rejection) {
        reject(&mut self.rejections, stage, key.into(), sample_index, rejection);
    }
}

fn reject(log: &mut Vec<RejectionRecord>, stage: Stage, key: String, sample_index: Option<u32>, rejection: Rejection) {
    log::info!("{stage} reply for {key} rejected: {rejection}");
    log.push(RejectionRecord {
        stage,
        key,
        sample_index,
        rejection,
    });
}

impl TemplateSet {
    pub fn problem_prompt(&self, snippet: &str, template: &str) -> Result<String> {
        self.render(
            Stage::Problem,
            &[("snippet", snippet.trim()), ("template", template.trim())],
        )
    }

    pub fn signature_prompt(&self, description: &str) -> Result<String> {
        self.render(Stage::Signature, &[("problem", description.trim())])
    }

    pub fn test_input_prompt(&self, problem: &ProblemSpec) -> Result<String> {
        self.render(Stage::TestInput, &problem_values(problem))
    }

    pub fn test_output_prompt(&self, problem: &ProblemSpec, call: &str, with_cot: bool) -> Result<String> {
        let stage = if with_cot {
            Stage::TestOutput
        } else {
            Stage::TestOutputDirect
        };
        let mut values = problem_values(problem).to_vec();
        values.push(("input", call.trim()));
        self.render(stage, &values)
    }

    pub fn solution_prompt(&self, problem: &ProblemSpec) -> Result<String> {
        self.render(Stage::Solution, &problem_values(problem))
    }

    pub fn test_suite_prompt(&self, problem: &ProblemSpec) -> Result<String> {
        self.render(Stage::TestSuite, &problem_values(problem))
    }
}

fn problem_values(problem: &ProblemSpec) -> [(&'static str, &str); 2] {
    [
        ("problem", problem.description.as_str()),
        ("signature", problem.signature.as_str()),
    ]
}

/// Completion text for the chain-of-thought output prompt: the analysis,
/// then the assertion in the output section.
pub fn render_test_output_target(rationale: &str, call: &str, literal: &str) -> String {
    format!(
        "\n\n{}\n\n</ANALYSIS4 >\n\n<OUTPUT4 >\n\n{}\n\n</OUTPUT4 >",
        rationale.trim(),
        render_assertion(call, literal)
    )
}

/// Keep the first problem per normalized description, in input order.
pub fn dedup(problems: Vec<ProblemSpec>) -> Vec<ProblemSpec> {
    let mut seen = HashSet::new();
    problems
        .into_iter()
        .filter(|p| seen.insert(canonical_hash(&p.description)))
        .collect()
}

pub struct Synthesizer<'a> {
    pub gateway: &'a Gateway,
    pub templates: &'a TemplateSet,
    pub sampling: &'a StageSampling,
    /// Re-asks per rejected single-sample reply.
    pub retries: u32,
    /// Prefix for request scopes, e.g. `iter_2`.
    pub scope: String,
}

impl Synthesizer<'_> {
    fn request(&self, stage: Stage, prompt: String, sampling: Sampling, n: usize) -> GenRequest {
        GenRequest::new(prompt, sampling, n, self.sampling.max_tokens)
            .with_stop(self.templates.get(stage).stop_sequences())
            .with_scope(format!("{}/{stage}", self.scope))
    }

    fn ask(&self, requests: &[GenRequest]) -> Result<Vec<Vec<String>>> {
        self.gateway
            .complete_many(requests)
            .into_iter()
            .map(|r| r.map(|resp| resp.samples))
            .collect()
    }

    /// Ask each prompt once and re-ask rejected ones up to `retries` times.
    fn ask_parsed<T>(
        &self,
        stage: Stage,
        requests: Vec<GenRequest>,
        keys: &[String],
        rejections: &mut Vec<RejectionRecord>,
        parse: impl Fn(usize, &str) -> std::result::Result<T, Rejection>,
    ) -> Result<Vec<Option<T>>> {
        let mut out: Vec<Option<T>> = (0..requests.len()).map(|_| None).collect();
        let mut pending: Vec<usize> = (0..requests.len()).collect();
        for attempt in 0..=self.retries {
            if pending.is_empty() {
                break;
            }
            let batch_requests: Vec<GenRequest> = pending.iter().map(|&i| requests[i].clone()).collect();
            let replies = self.ask(&batch_requests)?;
            let mut still = Vec::new();
            for (&i, samples) in pending.iter().zip(replies) {
                match parse(i, &samples[0]) {
                    Ok(record) => out[i] = Some(record),
                    Err(rejection) => {
                        if attempt == self.retries {
                            reject(rejections, stage, keys[i].clone(), None, rejection);
                        }
                        still.push(i);
                    }
                }
            }
            pending = still;
        }
        Ok(out)
    }

    /// Sample `count` problem descriptions from seeded (snippet, template)
    /// pairings.
    pub fn gen_problems(
        &self,
        snippets: &[Snippet],
        templates: &[DescriptionTemplate],
        count: usize,
        seed: u64,
    ) -> Result<Batch<ProblemDraft>> {
        if snippets.is_empty() || templates.is_empty() {
            return Err(Error::Precondition(
                "problem generation needs snippets and description templates".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut origins = Vec::with_capacity(count);
        let mut requests = Vec::with_capacity(count);
        for _ in 0..count {
            let s = &snippets[rng.random_range(0..snippets.len())];
            let t = &templates[rng.random_range(0..templates.len())];
            if s.code.trim().is_empty() || t.text.trim().is_empty() {
                return Err(Error::Precondition(format!(
                    "snippet {} or template {} is empty",
                    s.id, t.id
                )));
            }
            let prompt = self.templates.problem_prompt(&s.code, &t.text)?;
            requests.push(self.request(Stage::Problem, prompt, self.sampling.problem, 1));
            origins.push(ProblemOrigin {
                snippet_id: s.id.clone(),
                template_id: t.id.clone(),
            });
        }
        let keys: Vec<String> = (0..count).map(|i| format!("draft {i}")).collect();
        let mut batch = Batch::new();
        let parsed = self.ask_parsed(Stage::Problem, requests, &keys, &mut batch.rejections, |_, r| {
            parse::parse_problem(r)
        })?;
        batch.records = parsed
            .into_iter()
            .zip(origins)
            .filter_map(|(d, origin)| d.map(|description| ProblemDraft { description, origin }))
            .collect();
        Ok(batch)
    }

    pub fn gen_signatures(&self, drafts: &[ProblemDraft]) -> Result<Batch<ProblemSpec>> {
        let requests = drafts
            .iter()
            .map(|d| {
                let prompt = self.templates.signature_prompt(&d.description)?;
                Ok(self.request(Stage::Signature, prompt, self.sampling.signature, 1))
            })
            .collect::<Result<Vec<_>>>()?;
        let keys: Vec<String> = (0..drafts.len()).map(|i| format!("draft {i}")).collect();
        let mut batch = Batch::new();
        let parsed = self.ask_parsed(Stage::Signature, requests, &keys, &mut batch.rejections, |i, reply| {
            let signature = parse::parse_signature_reply(reply)?;
            ProblemSpec::new(&drafts[i].description, &signature, drafts[i].origin.clone())
                .map_err(|_| Rejection::BadSignature { text: signature })
        })?;
        batch.records = parsed.into_iter().flatten().collect();
        Ok(batch)
    }

    /// `n` sampled solutions per problem, syntax-checked by the shim.
    pub fn gen_solutions(
        &self,
        problems: &[ProblemSpec],
        n: usize,
        sampling: Sampling,
        sandbox: &Sandbox,
    ) -> Result<Batch<CodeCandidate>> {
        let requests = problems
            .iter()
            .map(|p| Ok(self.request(Stage::Solution, self.templates.solution_prompt(p)?, sampling, n)))
            .collect::<Result<Vec<_>>>()?;
        let replies = self.ask(&requests)?;
        let mut batch = Batch::new();
        for ((problem, request), samples) in problems.iter().zip(&requests).zip(replies) {
            for (k, reply) in samples.iter().enumerate() {
                match parse::extract_solution(reply) {
                    Ok(source) => batch.records.push(CodeCandidate {
                        problem_id: problem.problem_id.clone(),
                        source,
                        sample_index: k as u32,
                        decoding: request.decoding(),
                        precheck_error: None,
                    }),
                    Err(rejection) => batch.reject(Stage::Solution, &problem.problem_id, Some(k as u32), rejection),
                }
            }
        }
        let names: std::collections::HashMap<&str, &str> = problems
            .iter()
            .map(|p| (p.problem_id.as_str(), p.function_name.as_str()))
            .collect();
        let verdicts = sandbox.install(|| {
            batch
                .records
                .par_iter()
                .map(|c| sandbox.compile_check(&c.source, names[c.problem_id.as_str()]))
                .collect::<Result<Vec<_>>>()
        })?;
        for (c, v) in batch.records.iter_mut().zip(verdicts) {
            if !v.ok {
                let kind = if v.error_kind.is_empty() {
                    "SyntaxError".to_string()
                } else {
                    v.error_kind
                };
                c.precheck_error = Some(kind);
            }
        }
        Ok(batch)
    }

    /// At most `max_inputs` test inputs per problem. Problems without any
    /// parseable input are absent from the result.
    pub fn gen_test_inputs(
        &self,
        problems: &[ProblemSpec],
        max_inputs: usize,
    ) -> Result<Batch<(String, Vec<TestInput>)>> {
        let requests = problems
            .iter()
            .map(|p| {
                let prompt = self.templates.test_input_prompt(p)?;
                Ok(self.request(Stage::TestInput, prompt, self.sampling.test_input, 1))
            })
            .collect::<Result<Vec<_>>>()?;
        let keys: Vec<String> = problems.iter().map(|p| p.problem_id.clone()).collect();
        let mut batch = Batch::new();
        let parsed = self.ask_parsed(Stage::TestInput, requests, &keys, &mut batch.rejections, |i, reply| {
            parse::parse_test_inputs(reply, &problems[i].function_name)
        })?;
        batch.records = problems
            .iter()
            .zip(parsed)
            .filter_map(|(p, inputs)| {
                inputs.map(|mut v| {
                    v.truncate(max_inputs);
                    (p.problem_id.clone(), v)
                })
            })
            .collect();
        Ok(batch)
    }

    /// `n` expected-output samples for every (problem, input) pair. Samples
    /// without a matching assertion or with a non-literal output are dropped.
    pub fn gen_test_outputs(
        &self,
        jobs: &[(&ProblemSpec, &TestInput)],
        n: usize,
        sampling: Sampling,
        with_cot: bool,
        sandbox: &Sandbox,
    ) -> Result<Batch<TestCandidate>> {
        let stage = if with_cot {
            Stage::TestOutput
        } else {
            Stage::TestOutputDirect
        };
        let requests = jobs
            .iter()
            .map(|(p, input)| {
                let prompt = self.templates.test_output_prompt(p, &input.call_expression, with_cot)?;
                Ok(self.request(stage, prompt, sampling, n))
            })
            .collect::<Result<Vec<_>>>()?;
        let replies = self.ask(&requests)?;
        let mut batch = Batch::new();
        let mut parsed = Vec::new();
        for ((problem, input), samples) in jobs.iter().zip(replies) {
            for (k, reply) in samples.iter().enumerate() {
                match parse::parse_test_output(reply, &input.call_expression) {
                    Ok((rationale, literal)) => parsed.push(TestCandidate {
                        problem_id: problem.problem_id.clone(),
                        input: (*input).clone(),
                        expected_literal: literal,
                        rationale,
                        sample_index: k as u32,
                    }),
                    Err(rejection) => batch.reject(stage, &problem.problem_id, Some(k as u32), rejection),
                }
            }
        }
        let checks = sandbox.install(|| {
            parsed
                .par_iter()
                .map(|t| sandbox.literal_check(&t.expected_literal))
                .collect::<Result<Vec<_>>>()
        })?;
        for (t, is_literal) in parsed.into_iter().zip(checks) {
            if is_literal {
                batch.records.push(t);
            } else {
                let rejection = Rejection::NotLiteral {
                    literal: t.expected_literal.clone(),
                };
                batch.reject(stage, &t.problem_id, Some(t.sample_index), rejection);
            }
        }
        Ok(batch)
    }
}
