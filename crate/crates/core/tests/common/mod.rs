#![allow(dead_code)]

use solver_verifier::model::{CaseLabel, CodeCandidate, Decoding, SelectionTrace, TestCase, TestInput, TestSuite};
use solver_verifier::sandbox::Sandbox;

pub fn shim_command() -> Vec<String> {
    vec![env!("CARGO_BIN_EXE_fake-shim").to_string()]
}

pub fn sandbox(workers: usize) -> Sandbox {
    Sandbox::new(shim_command(), workers).unwrap()
}

pub fn candidate(problem_id: &str, source: &str, sample_index: u32) -> CodeCandidate {
    CodeCandidate {
        problem_id: problem_id.into(),
        source: source.into(),
        sample_index,
        decoding: Decoding::sampled(0.6, 0.9),
        precheck_error: None,
    }
}

pub fn case(call: &str, expected: &str) -> TestCase {
    TestCase {
        input: TestInput {
            call_expression: call.into(),
            case_label: CaseLabel::General,
        },
        expected_literal: expected.into(),
        vote_margin: 1.0,
        rationale: String::new(),
    }
}

pub fn suite(problem_id: &str, cases: &[(&str, &str)]) -> TestSuite {
    TestSuite::new(
        problem_id.into(),
        cases.iter().map(|(c, e)| case(c, e)).collect(),
        SelectionTrace::default(),
    )
    .unwrap()
}

pub mod bench;
pub mod e2e;
