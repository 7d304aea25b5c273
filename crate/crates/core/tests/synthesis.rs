mod common;

use std::sync::Arc;

use solver_verifier::gateway::{Gateway, MockBackend, MockRule, MockScript};
use solver_verifier::model::{
    CaseLabel, OutcomeStatus, ProblemOrigin, ProblemSpec, Sampling, StageSampling, TestInput,
};
use solver_verifier::synthesis::{DescriptionTemplate, Rejection, Snippet, Synthesizer, TemplateSet};

fn rule(contains: &str, scope: &str, replies: Vec<Vec<&str>>) -> MockRule {
    MockRule {
        contains: contains.into(),
        scope: Some(scope.into()),
        replies: replies
            .into_iter()
            .map(|r| r.into_iter().map(String::from).collect())
            .collect(),
    }
}

fn gateway(rules: Vec<MockRule>) -> Gateway {
    let script = MockScript {
        rules,
        ..MockScript::default()
    };
    Gateway::new(Arc::new(MockBackend::new(script)), 2).unwrap()
}

fn problem() -> ProblemSpec {
    let origin = ProblemOrigin {
        snippet_id: "s".into(),
        template_id: "t".into(),
    };
    ProblemSpec::new("Write a function that doubles x.", "double(x: int) -> int", origin).unwrap()
}

#[test]
fn problem_replies_are_filtered_and_retried() {
    let g = gateway(vec![
        rule(
            "helper_a",
            "t/problem",
            vec![
                vec!["Given the code snippet, write it again."],
                vec!["Write a function that triples x."],
            ],
        ),
        rule("helper_b", "t/problem", vec![vec!["```python\nx\n```"]]),
    ]);
    let templates = TemplateSet::load(None).unwrap();
    let sampling = StageSampling::default();
    let synth = Synthesizer {
        gateway: &g,
        templates: &templates,
        sampling: &sampling,
        retries: 1,
        scope: "t".into(),
    };
    let snippets = [
        Snippet {
            id: "a".into(),
            code: "def helper_a(v):\n    return v\n".into(),
        },
        Snippet {
            id: "b".into(),
            code: "def helper_b(v):\n    return v\n".into(),
        },
    ];
    let tmpl = [DescriptionTemplate {
        id: "t1".into(),
        text: "Write a function to sort a list.".into(),
    }];
    let batch = synth.gen_problems(&snippets, &tmpl, 6, 3).unwrap();
    assert!(batch
        .records
        .iter()
        .all(|d| d.description == "Write a function that triples x."));
    assert!(batch.records.iter().all(|d| d.origin.snippet_id == "a"));
    assert!(batch.rejections.iter().all(|r| r.rejection == Rejection::ContainsCode));
    assert_eq!(batch.records.len() + batch.rejections.len(), 6);
    // The same seed draws the same pairings.
    let again = synth.gen_problems(&snippets, &tmpl, 6, 3).unwrap();
    assert_eq!(again.records.len(), batch.records.len());
}

#[test]
fn solutions_are_extracted_and_prechecked() {
    let g = gateway(vec![rule(
        "doubles x",
        "t/solution",
        vec![vec![
            "```python\ndef double(x):\n    return 2 * x\n```",
            "```python\ndef double(x)\n    return 2 * x\n```",
            "```python\ndef twice(x):\n    return 2 * x\n```",
            "",
        ]],
    )]);
    let templates = TemplateSet::load(None).unwrap();
    let sampling = StageSampling::default();
    let synth = Synthesizer {
        gateway: &g,
        templates: &templates,
        sampling: &sampling,
        retries: 0,
        scope: "t".into(),
    };
    let sandbox = common::sandbox(2);
    let batch = synth
        .gen_solutions(
            &[problem()],
            4,
            Sampling {
                temperature: 0.6,
                top_p: 0.9,
            },
            &sandbox,
        )
        .unwrap();
    let by_index: Vec<(u32, Option<String>)> = batch
        .records
        .iter()
        .map(|c| (c.sample_index, c.precheck_error.clone()))
        .collect();
    assert_eq!(by_index[0], (0, None));
    assert_eq!(by_index[1], (1, Some("SyntaxError".into())));
    // Only syntax is pre-checked; the missing name surfaces when run.
    assert_eq!(by_index[2], (2, None));
    let case = common::case("double(1)", "2");
    let limits = solver_verifier::model::Limits::default();
    let outcome = sandbox.run_test(&batch.records[2], &case, limits).unwrap();
    assert_eq!(outcome.status, OutcomeStatus::SetupError);
    assert!(sandbox.run_test(&batch.records[0], &case, limits).unwrap().passed());
    assert_eq!(batch.rejections.len(), 1);
    assert_eq!(batch.rejections[0].sample_index, Some(3));
}

#[test]
fn test_outputs_keep_literal_assertions_only() {
    let out = |rationale: &str, assertion: &str| {
        format!("{rationale}\n\n</ANALYSIS4 >\n\n<OUTPUT4 >\n\n{assertion}\n\n</OUTPUT4 >")
    };
    let good = out("Two times three.", "assert double(3) == 6");
    let call = out("Defer to the function.", "assert double(3) == double(3)");
    let other = out("Wrong input.", "assert double(4) == 8");
    let g = gateway(vec![rule(
        "double(3)",
        "t/test_output",
        vec![vec![&good, &call, &other, "no idea"]],
    )]);
    let templates = TemplateSet::load(None).unwrap();
    let sampling = StageSampling::default();
    let synth = Synthesizer {
        gateway: &g,
        templates: &templates,
        sampling: &sampling,
        retries: 0,
        scope: "t".into(),
    };
    let sandbox = common::sandbox(2);
    let p = problem();
    let input = TestInput {
        call_expression: "double(3)".into(),
        case_label: CaseLabel::General,
    };
    let batch = synth
        .gen_test_outputs(&[(&p, &input)], 4, sampling.test_output, true, &sandbox)
        .unwrap();
    assert_eq!(batch.records.len(), 1);
    assert_eq!(batch.records[0].expected_literal, "6");
    assert_eq!(batch.records[0].rationale, "Two times three.");
    assert_eq!(batch.rejections.len(), 3);
    assert!(batch
        .rejections
        .iter()
        .any(|r| matches!(r.rejection, Rejection::NotLiteral { .. })));
}
