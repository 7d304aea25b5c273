//! Turns execution results into supervised and preference training records.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::model::{
    normalize_text, CodeCandidate, DpoExample, DpoProvenance, Epsilon, Limits, ProblemSpec, RejectPick, Role, Score,
    ScoreReport, SftExample, SftProvenance, TestSuite,
};
use crate::sandbox::Sandbox;
use crate::selection::Vote;
use crate::synthesis::{render_test_output_target, TemplateSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairPolicy {
    pub epsilon: Epsilon,
    pub reject_pick: RejectPick,
    pub seed: u64,
}

impl Default for PairPolicy {
    fn default() -> Self {
        PairPolicy {
            epsilon: Epsilon::Strict,
            reject_pick: RejectPick::Random,
            seed: 0,
        }
    }
}

impl PairPolicy {
    /// Recorded in every emitted preference record.
    pub fn label(&self) -> String {
        format!(
            "epsilon={};reject_pick={};seed={}",
            self.epsilon.as_str(),
            self.reject_pick.as_str(),
            self.seed
        )
    }
}

fn by_score_then_index(a: &ScoreReport, b: &ScoreReport) -> Ordering {
    a.exact().cmp(&b.exact()).then(b.sample_index.cmp(&a.sample_index))
}

/// Highest-scoring report (ties to the lowest sample_index), if its score
/// meets `epsilon`. `eligible` restricts the search to those candidate ids.
pub fn find_anchor<'r>(
    reports: &'r [ScoreReport],
    epsilon: Epsilon,
    eligible: Option<&HashSet<String>>,
) -> Option<&'r ScoreReport> {
    let best = reports
        .iter()
        .filter(|r| eligible.is_none_or(|e| e.contains(&r.candidate_id)))
        .max_by(|a, b| by_score_then_index(a, b))?;
    let s = best.exact();
    epsilon.admits(s.passed, s.total).then_some(best)
}

/// Index into a pool of `len` for the random policy: the first eight bytes
/// of SHA-256 over `"{seed}:{iteration}:{problem_id}"`, big-endian, mod len.
pub fn random_index(seed: u64, iteration: u32, problem_id: &str, len: usize) -> usize {
    let digest = Sha256::digest(format!("{seed}:{iteration}:{problem_id}").as_bytes());
    let head = u64::from_be_bytes(digest[..8].try_into().expect("eight bytes"));
    (head % len as u64) as usize
}

/// The rejected report for `anchor` under `policy`, if any candidate scores
/// strictly lower.
pub fn pick_rejected<'r>(
    anchor: &ScoreReport,
    reports: &'r [ScoreReport],
    policy: &PairPolicy,
    iteration: u32,
    sources: &HashMap<String, &CodeCandidate>,
) -> Option<&'r ScoreReport> {
    let chosen_source = sources.get(&anchor.candidate_id).map(|c| c.source.as_str());
    let top: Score = anchor.exact();
    let mut pool: Vec<&ScoreReport> = reports
        .iter()
        .filter(|r| r.suite_id == anchor.suite_id && r.exact() < top)
        .filter(|r| sources.get(&r.candidate_id).map(|c| c.source.as_str()) != chosen_source)
        .collect();
    if pool.is_empty() {
        log::info!("no rejected solution below the anchor for {}", anchor.problem_id);
        return None;
    }
    match policy.reject_pick {
        RejectPick::Random => {
            pool.sort_by_key(|r| r.sample_index);
            Some(pool[random_index(policy.seed, iteration, &anchor.problem_id, pool.len())])
        }
        RejectPick::Lowest => pool
            .into_iter()
            .min_by(|a, b| a.exact().cmp(&b.exact()).then(a.sample_index.cmp(&b.sample_index))),
        RejectPick::Median => {
            pool.sort_by(|a, b| a.exact().cmp(&b.exact()).then(a.sample_index.cmp(&b.sample_index)));
            Some(pool[pool.len() / 2])
        }
    }
}

pub struct PairContext<'a> {
    pub templates: &'a TemplateSet,
    pub policy: PairPolicy,
    pub iteration: u32,
    pub max_verifier_pairs: usize,
}

impl PairContext<'_> {
    fn dpo(&self, role: Role, problem: &ProblemSpec, prompt: String, chosen: String, rejected: String) -> DpoExample {
        DpoExample {
            role,
            prompt,
            chosen,
            rejected,
            provenance: DpoProvenance {
                problem_id: problem.problem_id.clone(),
                iteration: self.iteration,
                policy: self.policy.label(),
            },
        }
    }

    /// Preference pair (anchor source, lower-scoring source) for the solver.
    pub fn solver_pair(
        &self,
        problem: &ProblemSpec,
        anchor: &ScoreReport,
        reports: &[ScoreReport],
        sources: &HashMap<String, &CodeCandidate>,
    ) -> Result<Option<DpoExample>> {
        let Some(rejected) = pick_rejected(anchor, reports, &self.policy, self.iteration, sources) else {
            return Ok(None);
        };
        let (Some(c), Some(r)) = (sources.get(&anchor.candidate_id), sources.get(&rejected.candidate_id)) else {
            return Err(crate::Error::Precondition(format!(
                "score report without a matching candidate for {}",
                problem.problem_id
            )));
        };
        let prompt = self.templates.solution_prompt(problem)?;
        Ok(Some(self.dpo(
            Role::Solver,
            problem,
            prompt,
            c.source.clone(),
            r.source.clone(),
        )))
    }

    /// One pair per suite case and dissenting sampled value, most frequent
    /// dissent first.
    pub fn verifier_pairs(&self, problem: &ProblemSpec, suite: &TestSuite, votes: &[Vote]) -> Result<Vec<DpoExample>> {
        let by_call: HashMap<String, &Vote> = votes
            .iter()
            .map(|v| (normalize_text(&v.case.input.call_expression), v))
            .collect();
        let mut entries = Vec::new();
        for (order, case) in suite.cases.iter().enumerate() {
            let Some(vote) = by_call.get(&normalize_text(&case.input.call_expression)) else {
                log::warn!("no sample pool retained for `{}`", case.input.call_expression);
                continue;
            };
            let winner = &vote.groups[vote.winner];
            for (g, group) in vote.groups.iter().enumerate() {
                if g != vote.winner {
                    entries.push((group.count(), order, group.first_sample, case, winner, group));
                }
            }
        }
        entries.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        entries.truncate(self.max_verifier_pairs);
        entries
            .into_iter()
            .map(|(_, _, _, case, winner, dissent)| {
                let call = &case.input.call_expression;
                let prompt = self.templates.test_output_prompt(problem, call, true)?;
                let chosen = render_test_output_target(&winner.rationale, call, &case.expected_literal);
                let rejected = render_test_output_target(&dissent.rationale, call, &dissent.literal);
                Ok(self.dpo(Role::Verifier, problem, prompt, chosen, rejected))
            })
            .collect()
    }

    /// Solver then verifier supervised record for one anchor.
    pub fn sft_examples(
        &self,
        problem: &ProblemSpec,
        anchor: &CodeCandidate,
        suite: &TestSuite,
    ) -> Result<[SftExample; 2]> {
        let provenance = SftProvenance {
            problem_id: problem.problem_id.clone(),
            iteration: self.iteration,
        };
        Ok([
            SftExample {
                role: Role::Solver,
                prompt: self.templates.solution_prompt(problem)?,
                target: anchor.source.clone(),
                provenance: provenance.clone(),
            },
            SftExample {
                role: Role::Verifier,
                prompt: self.templates.test_suite_prompt(problem)?,
                target: suite.render(),
                provenance,
            },
        ])
    }
}

/// Training records contributed by one problem.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProblemPairs {
    pub anchor: Option<String>,
    pub sft: Vec<SftExample>,
    pub dpo: Vec<DpoExample>,
}

/// Anchor search plus all records for one problem.
pub fn build_problem(
    ctx: &PairContext<'_>,
    problem: &ProblemSpec,
    candidates: &[CodeCandidate],
    suite: &TestSuite,
    reports: &[ScoreReport],
    votes: &[Vote],
    eligible: Option<&HashSet<String>>,
) -> Result<ProblemPairs> {
    let suite_id = suite.suite_id();
    let reports: Vec<ScoreReport> = reports
        .iter()
        .filter(|r| r.problem_id == problem.problem_id && r.suite_id == suite_id)
        .cloned()
        .collect();
    let Some(anchor) = find_anchor(&reports, ctx.policy.epsilon, eligible) else {
        log::info!("no anchor for {}", problem.problem_id);
        return Ok(ProblemPairs::default());
    };
    let sources: HashMap<String, &CodeCandidate> = candidates.iter().map(|c| (c.candidate_id(), c)).collect();
    let chosen = sources[&anchor.candidate_id];
    let mut out = ProblemPairs {
        anchor: Some(anchor.candidate_id.clone()),
        sft: ctx.sft_examples(problem, chosen, suite)?.to_vec(),
        dpo: Vec::new(),
    };
    out.dpo.extend(ctx.solver_pair(problem, anchor, &reports, &sources)?);
    out.dpo.extend(ctx.verifier_pairs(problem, suite, votes)?);
    Ok(out)
}

/// Candidates that fully pass the suites of both iterations, per problem.
pub fn ensemble_survivors(reports_a: &[ScoreReport], reports_b: &[ScoreReport]) -> BTreeMap<String, BTreeSet<String>> {
    let full = |reports: &[ScoreReport]| {
        let mut problems: BTreeSet<String> = BTreeSet::new();
        let mut failed: HashSet<(String, String)> = HashSet::new();
        let mut seen: HashSet<(String, String)> = HashSet::new();
        for r in reports {
            problems.insert(r.problem_id.clone());
            let key = (r.problem_id.clone(), r.candidate_id.clone());
            if !r.exact().is_full() {
                failed.insert(key.clone());
            }
            seen.insert(key);
        }
        (problems, seen.difference(&failed).cloned().collect::<BTreeSet<_>>())
    };
    let (problems_a, pass_a) = full(reports_a);
    let (problems_b, pass_b) = full(reports_b);
    for p in problems_a.symmetric_difference(&problems_b) {
        log::warn!("problem {p} lacks a suite in one iteration; excluded from the ensemble");
    }
    let mut out: BTreeMap<String, BTreeSet<String>> = problems_a
        .intersection(&problems_b)
        .map(|p| (p.clone(), BTreeSet::new()))
        .collect();
    for (p, c) in pass_a.intersection(&pass_b) {
        out.entry(p.clone()).or_default().insert(c.clone());
    }
    out
}

/// Score `candidates` against both suite sets and keep the double passes.
pub fn ensemble_filter(
    sandbox: &Sandbox,
    suites_a: &[TestSuite],
    suites_b: &[TestSuite],
    candidates: &[CodeCandidate],
    limits: Limits,
) -> Result<BTreeMap<String, BTreeSet<String>>> {
    let a = sandbox.run_matrix(candidates, suites_a, limits)?;
    let b = sandbox.run_matrix(candidates, suites_b, limits)?;
    Ok(ensemble_survivors(&a, &b))
}
