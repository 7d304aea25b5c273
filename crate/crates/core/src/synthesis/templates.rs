//! Prompt templates with named `{placeholder}` slots.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Problem,
    Signature,
    TestInput,
    TestOutput,
    /// Expected output without a preceding analysis.
    TestOutputDirect,
    Solution,
    /// Whole-suite prompt used for verifier SFT records.
    TestSuite,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Problem,
        Stage::Signature,
        Stage::TestInput,
        Stage::TestOutput,
        Stage::TestOutputDirect,
        Stage::Solution,
        Stage::TestSuite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Problem => "problem",
            Stage::Signature => "signature",
            Stage::TestInput => "test_input",
            Stage::TestOutput => "test_output",
            Stage::TestOutputDirect => "test_output_direct",
            Stage::Solution => "solution",
            Stage::TestSuite => "test_suite",
        }
    }

    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            Stage::Problem => &["snippet", "template"],
            Stage::Signature => &["problem"],
            Stage::TestInput | Stage::Solution | Stage::TestSuite => &["problem", "signature"],
            Stage::TestOutput | Stage::TestOutputDirect => &["problem", "signature", "input"],
        }
    }

    /// Section whose closing tag ends a reply for this stage.
    fn closing_section(self) -> Option<&'static str> {
        match self {
            Stage::Problem => None,
            Stage::Signature => Some("signature"),
            Stage::TestInput => Some("inputs"),
            Stage::TestOutput | Stage::TestOutputDirect => Some("output"),
            Stage::Solution => Some("solution"),
            Stage::TestSuite => Some("tests"),
        }
    }

    fn builtin_body(self) -> &'static str {
        match self {
            Stage::Problem => include_str!("../../templates/problem.txt"),
            Stage::Signature => include_str!("../../templates/signature.txt"),
            Stage::TestInput => include_str!("../../templates/test_input.txt"),
            Stage::TestOutput => include_str!("../../templates/test_output.txt"),
            Stage::TestOutputDirect => include_str!("../../templates/test_output_direct.txt"),
            Stage::Solution => include_str!("../../templates/solution.txt"),
            Stage::TestSuite => include_str!("../../templates/test_suite.txt"),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

const ALL_PLACEHOLDERS: [&str; 5] = ["snippet", "template", "problem", "signature", "input"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub template_id: String,
    pub body: String,
    pub stage: Stage,
}

impl PromptTemplate {
    pub fn new(template_id: impl Into<String>, body: impl Into<String>, stage: Stage) -> Result<Self> {
        let t = PromptTemplate {
            template_id: template_id.into(),
            body: body.into(),
            stage,
        };
        for name in stage.placeholders() {
            if !t.body.contains(&format!("{{{name}}}")) {
                return Err(Error::Template(format!(
                    "{} template `{}` lacks the {{{name}}} placeholder",
                    stage, t.template_id
                )));
            }
        }
        Ok(t)
    }

    pub fn builtin(stage: Stage) -> Self {
        PromptTemplate::new(format!("builtin:{stage}"), stage.builtin_body(), stage)
            .expect("built-in templates carry their placeholders")
    }

    /// Stop sequence closing the query's answer section, e.g. `</OUTPUT4`.
    /// The section name's spelling comes from the few-shot examples and the
    /// number from the last tag of the body.
    pub fn stop_sequences(&self) -> Vec<String> {
        let Some(section) = self.stage.closing_section() else {
            return Vec::new();
        };
        let tags = super::parse::tags(&self.body);
        let (Some(named), Some(last)) = (tags.iter().find(|t| t.name == section), tags.last()) else {
            return Vec::new();
        };
        if last.number.is_empty() {
            return Vec::new();
        }
        vec![format!("</{}{}", named.raw_name, last.number)]
    }

    /// Substitute placeholders in one pass; inserted text is never rescanned.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String> {
        for name in self.stage.placeholders() {
            if !values.iter().any(|(k, _)| k == name) {
                return Err(Error::Template(format!(
                    "no value for {{{name}}} in {} prompt",
                    self.stage
                )));
            }
        }
        let mut out = String::with_capacity(self.body.len());
        let mut rest = self.body.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let tail = &rest[open..];
            let hit = ALL_PLACEHOLDERS.iter().find_map(|name| {
                let token = format!("{{{name}}}");
                tail.starts_with(&token).then_some((*name, token.len()))
            });
            match hit.and_then(|(name, len)| values.iter().find(|(k, _)| *k == name).map(|(_, v)| (*v, len))) {
                Some((value, len)) => {
                    out.push_str(value);
                    rest = &tail[len..];
                }
                None => {
                    out.push('{');
                    rest = &tail[1..];
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// One template per stage.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<Stage, PromptTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            templates: Stage::ALL.iter().map(|&s| (s, PromptTemplate::builtin(s))).collect(),
        }
    }
}

impl TemplateSet {
    /// Built-in templates, overridden by `<dir>/<stage>.txt` where present.
    pub fn load(dir: Option<&Path>) -> Result<Self> {
        let mut set = TemplateSet::default();
        let Some(dir) = dir else { return Ok(set) };
        if !dir.is_dir() {
            return Err(Error::Template(format!(
                "template directory {} does not exist",
                dir.display()
            )));
        }
        for stage in Stage::ALL {
            let path = dir.join(format!("{stage}.txt"));
            if path.exists() {
                let body = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                set.insert(PromptTemplate::new(format!("file:{stage}"), body, stage)?);
            }
        }
        Ok(set)
    }

    pub fn insert(&mut self, template: PromptTemplate) {
        self.templates.insert(template.stage, template);
    }

    pub fn get(&self, stage: Stage) -> &PromptTemplate {
        &self.templates[&stage]
    }

    pub fn render(&self, stage: Stage, values: &[(&str, &str)]) -> Result<String> {
        self.get(stage).render(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_complete() {
        let set = TemplateSet::default();
        for stage in Stage::ALL {
            assert_eq!(set.get(stage).stage, stage);
        }
        assert!(set
            .get(Stage::Problem)
            .body
            .contains("Never mention the \"code snippet\"."));
    }

    #[test]
    fn stops_close_the_query_section() {
        let set = TemplateSet::default();
        assert_eq!(set.get(Stage::TestOutput).stop_sequences(), ["</OUTPUT4"]);
        assert_eq!(set.get(Stage::TestOutputDirect).stop_sequences(), ["</OUTPUT4"]);
        assert_eq!(set.get(Stage::TestInput).stop_sequences(), ["</INPUTS2"]);
        assert_eq!(set.get(Stage::Signature).stop_sequences(), ["</Signature2"]);
        assert_eq!(set.get(Stage::Solution).stop_sequences(), ["</SOLUTION4"]);
        assert_eq!(set.get(Stage::TestSuite).stop_sequences(), ["</TESTS2"]);
        assert!(set.get(Stage::Problem).stop_sequences().is_empty());
    }

    #[test]
    fn missing_placeholder_is_rejected() {
        assert!(PromptTemplate::new("t", "no slots", Stage::Signature).is_err());
        assert!(PromptTemplate::new("t", "{problem}", Stage::Signature).is_ok());
    }

    #[test]
    fn render_does_not_rescan_inserted_text() {
        let t = PromptTemplate::new("t", "P={problem} S={signature} {other}", Stage::Solution).unwrap();
        let out = t
            .render(&[("problem", "uses {signature}"), ("signature", "f(x)")])
            .unwrap();
        assert_eq!(out, "P=uses {signature} S=f(x) {other}");
        assert!(t.render(&[("problem", "x")]).is_err());
    }

    #[test]
    fn directory_overrides_one_stage() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("signature.txt"), "Q: {problem}\nA:").unwrap();
        let set = TemplateSet::load(Some(dir.path())).unwrap();
        assert_eq!(set.get(Stage::Signature).template_id, "file:signature");
        assert_eq!(set.get(Stage::Solution).template_id, "builtin:solution");
        std::fs::write(dir.path().join("solution.txt"), "no slots").unwrap();
        assert!(TemplateSet::load(Some(dir.path())).is_err());
    }
}
