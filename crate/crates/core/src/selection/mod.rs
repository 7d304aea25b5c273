//! From sampled expected outputs to a final suite: majority voting, output
//! diversification and greedy line-coverage selection.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{normalize_text, SelectionTrace, Strategies, TestCandidate, TestCase, TestSuite};
use crate::sandbox::Sandbox;

/// Value equality between two literal spellings.
pub trait ValueEq {
    fn value_eq(&self, a: &str, b: &str) -> Result<bool>;
}

impl ValueEq for Sandbox {
    fn value_eq(&self, a: &str, b: &str) -> Result<bool> {
        self.literal_equal(a, b)
    }
}

/// Samples sharing one value, in order of first appearance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoteGroup {
    /// Spelling of the earliest sample in the group.
    pub literal: String,
    pub rationale: String,
    pub first_sample: u32,
    pub samples: Vec<u32>,
}

impl VoteGroup {
    pub fn count(&self) -> usize {
        self.samples.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vote {
    pub case: TestCase,
    pub groups: Vec<VoteGroup>,
    /// Index of the modal group in `groups`.
    pub winner: usize,
}

/// Partition samples for one input into value classes, scanning in
/// sample_index order.
pub fn vote_groups(candidates: &[TestCandidate], eq: &impl ValueEq) -> Result<Vec<VoteGroup>> {
    let mut ordered: Vec<&TestCandidate> = candidates.iter().collect();
    ordered.sort_by_key(|c| c.sample_index);
    let mut groups: Vec<VoteGroup> = Vec::new();
    for c in ordered {
        let mut home = None;
        for (i, g) in groups.iter().enumerate() {
            if eq.value_eq(&g.literal, &c.expected_literal)? {
                home = Some(i);
                break;
            }
        }
        match home {
            Some(i) => groups[i].samples.push(c.sample_index),
            None => groups.push(VoteGroup {
                literal: c.expected_literal.trim().to_string(),
                rationale: c.rationale.clone(),
                first_sample: c.sample_index,
                samples: vec![c.sample_index],
            }),
        }
    }
    Ok(groups)
}

/// Most common value among the samples for one input. Ties go to the value
/// sampled first.
pub fn majority_vote(candidates: &[TestCandidate], eq: &impl ValueEq) -> Result<Vote> {
    let Some(first) = candidates.first() else {
        return Err(Error::Precondition("majority vote over an empty pool".into()));
    };
    let call = normalize_text(&first.input.call_expression);
    if candidates
        .iter()
        .any(|c| normalize_text(&c.input.call_expression) != call)
    {
        return Err(Error::Precondition(format!(
            "vote pool mixes inputs (first is `{call}`)"
        )));
    }
    let groups = vote_groups(candidates, eq)?;
    let mut winner = 0;
    for (i, g) in groups.iter().enumerate() {
        if g.count() > groups[winner].count() {
            winner = i;
        }
    }
    let input = candidates
        .iter()
        .min_by_key(|c| c.sample_index)
        .map(|c| c.input.clone())
        .expect("non-empty pool");
    let w = &groups[winner];
    let case = TestCase {
        input,
        expected_literal: w.literal.clone(),
        vote_margin: w.count() as f64 / candidates.len() as f64,
        rationale: w.rationale.clone(),
    };
    Ok(Vote { case, groups, winner })
}

fn margin_order(pool: &[TestCase], a: usize, b: usize) -> Ordering {
    pool[b]
        .vote_margin
        .partial_cmp(&pool[a].vote_margin)
        .unwrap_or(Ordering::Equal)
        .then(a.cmp(&b))
}

/// Pool indices by descending vote margin, then pool order.
fn by_margin(pool: &[TestCase], idx: impl IntoIterator<Item = usize>) -> Vec<usize> {
    let mut v: Vec<usize> = idx.into_iter().collect();
    v.sort_by(|&a, &b| margin_order(pool, a, b));
    v
}

/// Greedy maximum coverage over `coverage[i]`, the anchor lines executed by
/// `pool[i]`. Returns pool indices in pick order.
pub fn select_coverage(pool: &[TestCase], coverage: &[BTreeSet<u32>], k: usize) -> Result<Vec<usize>> {
    if pool.is_empty() {
        return Err(Error::Precondition("coverage selection over an empty pool".into()));
    }
    if pool.len() != coverage.len() {
        return Err(Error::Precondition(format!(
            "{} tests but {} coverage sets",
            pool.len(),
            coverage.len()
        )));
    }
    let mut covered: BTreeSet<u32> = BTreeSet::new();
    let mut picked: Vec<usize> = Vec::new();
    while picked.len() < k {
        let best = (0..pool.len())
            .filter(|i| !picked.contains(i))
            .map(|i| (i, coverage[i].difference(&covered).count()))
            .filter(|&(_, gain)| gain > 0)
            .min_by(|&(a, ga), &(b, gb)| gb.cmp(&ga).then_with(|| margin_order(pool, a, b)));
        let Some((i, _)) = best else { break };
        covered.extend(coverage[i].iter().copied());
        picked.push(i);
    }
    let rest = by_margin(pool, (0..pool.len()).filter(|i| !picked.contains(i)));
    picked.extend(rest.into_iter().take(k.saturating_sub(picked.len())));
    Ok(picked)
}

/// Class id per pool entry: entries with value-equal literals share an id.
pub fn value_classes(pool: &[TestCase], eq: &impl ValueEq) -> Result<Vec<usize>> {
    let mut reps: Vec<&str> = Vec::new();
    let mut out = Vec::with_capacity(pool.len());
    for case in pool {
        let mut class = None;
        for (c, rep) in reps.iter().enumerate() {
            if eq.value_eq(rep, &case.expected_literal)? {
                class = Some(c);
                break;
            }
        }
        out.push(class.unwrap_or_else(|| {
            reps.push(&case.expected_literal);
            reps.len() - 1
        }));
    }
    Ok(out)
}

/// Greedy pick of `k` tests maximizing distinct value classes; among tests
/// adding no new class, higher vote margin first.
pub fn diversify_outputs(pool: &[TestCase], classes: &[usize], k: usize) -> Result<Vec<usize>> {
    if pool.is_empty() {
        return Err(Error::Precondition("diversification over an empty pool".into()));
    }
    if pool.len() != classes.len() {
        return Err(Error::Precondition(format!(
            "{} tests but {} class ids",
            pool.len(),
            classes.len()
        )));
    }
    let mut seen: HashSet<usize> = HashSet::new();
    let mut picked: Vec<usize> = Vec::new();
    while picked.len() < k.min(pool.len()) {
        let best = (0..pool.len())
            .filter(|i| !picked.contains(i))
            .min_by(|&a, &b| {
                let (na, nb) = (!seen.contains(&classes[a]), !seen.contains(&classes[b]));
                nb.cmp(&na).then_with(|| margin_order(pool, a, b))
            })
            .expect("unpicked test remains");
        seen.insert(classes[best]);
        picked.push(best);
    }
    Ok(picked)
}

fn distinct(classes: &[usize], idx: &[usize]) -> usize {
    idx.iter().map(|&i| classes[i]).collect::<HashSet<_>>().len()
}

/// Build the final suite from voted cases.
///
/// With both strategies on, diversification keeps up to `2k` tests and
/// coverage selection picks `k` of them; if that collapses to one value
/// class while the pool has more, the last pick is swapped for the best
/// test of another class.
pub fn assemble_suite(
    problem_id: &str,
    pool: &[TestCase],
    coverage: &[BTreeSet<u32>],
    classes: &[usize],
    k: usize,
    strategies: Strategies,
) -> Result<TestSuite> {
    if k == 0 {
        return Err(Error::Precondition("suite size must be at least 1".into()));
    }
    if pool.len() != coverage.len() || pool.len() != classes.len() {
        return Err(Error::Precondition(
            "pool, coverage and classes differ in length".into(),
        ));
    }
    let mut seen = HashSet::new();
    let keep: Vec<usize> = (0..pool.len())
        .filter(|&i| {
            seen.insert((
                normalize_text(&pool[i].input.call_expression),
                normalize_text(&pool[i].expected_literal),
            ))
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::Precondition(format!("no voted cases left for {problem_id}")));
    }
    let pool: Vec<TestCase> = keep.iter().map(|&i| pool[i].clone()).collect();
    let coverage: Vec<BTreeSet<u32>> = keep.iter().map(|&i| coverage[i].clone()).collect();
    let classes: Vec<usize> = keep.iter().map(|&i| classes[i]).collect();

    let mut applied = Vec::new();
    let chosen: Vec<usize> = match (strategies.diversify, strategies.coverage) {
        (true, true) => {
            applied.extend(["diversify".to_string(), "coverage".to_string()]);
            let shortlist = diversify_outputs(&pool, &classes, (2 * k).min(pool.len()))?;
            let sub: Vec<TestCase> = shortlist.iter().map(|&i| pool[i].clone()).collect();
            let sub_cov: Vec<BTreeSet<u32>> = shortlist.iter().map(|&i| coverage[i].clone()).collect();
            let mut picked: Vec<usize> = select_coverage(&sub, &sub_cov, k)?
                .into_iter()
                .map(|j| shortlist[j])
                .collect();
            let pool_classes = distinct(&classes, &(0..pool.len()).collect::<Vec<_>>());
            if picked.len() >= 2 && distinct(&classes, &picked) == 1 && pool_classes >= 2 {
                let only = classes[picked[0]];
                let other = shortlist.iter().copied().find(|&i| classes[i] != only).or_else(|| {
                    by_margin(&pool, 0..pool.len())
                        .into_iter()
                        .find(|&i| classes[i] != only)
                });
                if let Some(o) = other {
                    *picked.last_mut().expect("non-empty") = o;
                }
            }
            picked
        }
        (true, false) => {
            applied.push("diversify".to_string());
            diversify_outputs(&pool, &classes, k)?
        }
        (false, true) => {
            applied.push("coverage".to_string());
            select_coverage(&pool, &coverage, k)?
        }
        (false, false) => by_margin(&pool, 0..pool.len()).into_iter().take(k).collect(),
    };

    let union = |idx: &mut dyn Iterator<Item = usize>| {
        idx.flat_map(|i| coverage[i].iter().copied())
            .collect::<BTreeSet<u32>>()
            .len()
    };
    let distinct_outputs = distinct(&classes, &chosen);
    let trace = SelectionTrace {
        strategies: applied,
        pool_size: pool.len(),
        coverage: union(&mut chosen.iter().copied()),
        pool_coverage: union(&mut (0..pool.len())),
        distinct_outputs,
        diverse: distinct_outputs >= 2,
    };
    let cases = chosen.iter().map(|&i| pool[i].clone()).collect();
    TestSuite::new(problem_id.to_string(), cases, trace)
}
