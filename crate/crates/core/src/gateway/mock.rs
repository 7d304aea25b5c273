//! Deterministic scripted backend.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{prompt_fingerprint, Backend, GenRequest, GenResponse};
use crate::error::{Error, Result};

/// Exact reply for the `ordinal`-th call with a given prompt fingerprint.
///
/// Ordinals count calls per (request scope, fingerprint). An entry with a
/// `scope` only answers requests whose scope starts with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockEntry {
    pub fingerprint: String,
    #[serde(default)]
    pub ordinal: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
    pub samples: Vec<String>,
}

/// Reply for any prompt containing `contains`. `replies[k]` answers the
/// k-th call of a prompt; the last element repeats for later calls.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    pub contains: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
    pub replies: Vec<Vec<String>>,
}

fn scope_matches(filter: &Option<String>, scope: &str) -> bool {
    filter.as_deref().is_none_or(|f| scope.starts_with(f))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MockScript {
    pub entries: Vec<MockEntry>,
    pub rules: Vec<MockRule>,
    pub fallback: Option<String>,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut de = serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(&mut de)
            .map_err(|e| Error::Config(format!("mock script at `{}`: {}", e.path(), e.inner())))
    }
}

pub struct MockBackend {
    exact: HashMap<(String, u64), Vec<(Option<String>, Vec<String>)>>,
    rules: Vec<MockRule>,
    fallback: Option<String>,
    calls: Mutex<HashMap<(String, String), u64>>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        let mut exact: HashMap<_, Vec<_>> = HashMap::new();
        for e in script.entries {
            exact
                .entry((e.fingerprint, e.ordinal))
                .or_default()
                .push((e.scope, e.samples));
        }
        // Scoped entries win over unscoped ones for the same key.
        for options in exact.values_mut() {
            options.sort_by_key(|(scope, _)| std::cmp::Reverse(scope.as_ref().map_or(0, String::len)));
        }
        MockBackend {
            exact,
            rules: script.rules,
            fallback: script.fallback,
            calls: Mutex::new(HashMap::new()),
        }
    }

    /// Backend replaying `entries`, keyed by (prompt fingerprint, call ordinal).
    pub fn from_entries(entries: HashMap<(String, u64), Vec<String>>) -> Self {
        MockBackend {
            exact: entries.into_iter().map(|(k, v)| (k, vec![(None, v)])).collect(),
            rules: Vec::new(),
            fallback: None,
            calls: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_fallback(text: impl Into<String>) -> Self {
        MockBackend::new(MockScript {
            fallback: Some(text.into()),
            ..Default::default()
        })
    }

    fn resolve(&self, request: &GenRequest, fingerprint: &str, ordinal: u64) -> Result<Vec<String>> {
        let (prompt, scope, n) = (&request.prompt, &request.scope, request.n_samples);
        let scripted = self
            .exact
            .get(&(fingerprint.to_string(), ordinal))
            .and_then(|options| options.iter().find(|(f, _)| scope_matches(f, scope)).map(|(_, s)| s))
            .or_else(|| {
                self.rules
                    .iter()
                    .find(|r| prompt.contains(&r.contains) && scope_matches(&r.scope, scope) && !r.replies.is_empty())
                    .map(|r| &r.replies[(ordinal as usize).min(r.replies.len() - 1)])
            });
        match (scripted, &self.fallback) {
            (Some(samples), _) if samples.len() >= n => Ok(samples[..n].to_vec()),
            (Some(samples), _) => Err(Error::Protocol(format!(
                "mock entry for {fingerprint} has {} samples, {n} requested",
                samples.len()
            ))),
            (None, Some(text)) => Ok(vec![text.clone(); n]),
            (None, None) => Err(Error::Script {
                fingerprint: fingerprint.to_string(),
                ordinal,
            }),
        }
    }
}

impl Backend for MockBackend {
    fn id(&self) -> String {
        "mock".into()
    }

    fn complete(&self, request: &GenRequest) -> Result<GenResponse> {
        let fingerprint = prompt_fingerprint(&request.prompt);
        let ordinal = {
            let mut calls = self.calls.lock().unwrap();
            let slot = calls.entry((request.scope.clone(), fingerprint.clone())).or_insert(0);
            *slot += 1;
            *slot - 1
        };
        let samples = self.resolve(request, &fingerprint, ordinal)?;
        Ok(GenResponse {
            samples,
            backend_id: self.id(),
            request_fingerprint: request.fingerprint(),
            attempts: 1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Sampling;

    fn req(prompt: &str, n: usize) -> GenRequest {
        GenRequest::new(prompt, Sampling::GREEDY, n, 32)
    }

    #[test]
    fn scripted_samples_in_order() {
        let fp = prompt_fingerprint("question");
        let mut entries = HashMap::new();
        entries.insert((fp, 0), vec!["A".to_string(), "B".to_string()]);
        let backend = MockBackend::from_entries(entries);
        assert_eq!(backend.complete(&req("question", 2)).unwrap().samples, ["A", "B"]);
    }

    #[test]
    fn ordinals_select_distinct_replies() {
        let fp = prompt_fingerprint("q");
        let mut entries = HashMap::new();
        entries.insert((fp.clone(), 0), vec!["first".to_string()]);
        entries.insert((fp, 1), vec!["second".to_string()]);
        let backend = MockBackend::from_entries(entries);
        assert_eq!(backend.complete(&req("q", 1)).unwrap().samples, ["first"]);
        assert_eq!(backend.complete(&req("q", 1)).unwrap().samples, ["second"]);
    }

    #[test]
    fn greedy_repeat_is_deterministic() {
        let backend = MockBackend::new(MockScript {
            rules: vec![MockRule {
                contains: "q".into(),
                scope: None,
                replies: vec![vec!["same".into()]],
            }],
            ..Default::default()
        });
        let a = backend.complete(&req("q", 1)).unwrap();
        let b = backend.complete(&req("q", 1)).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.request_fingerprint, b.request_fingerprint);
    }

    #[test]
    fn unmatched_without_fallback_names_fingerprint() {
        let backend = MockBackend::from_entries(HashMap::new());
        let err = backend.complete(&req("nothing", 1)).unwrap_err();
        let fp = prompt_fingerprint("nothing");
        assert!(matches!(&err, Error::Script { fingerprint, .. } if *fingerprint == fp));
        assert!(err.to_string().contains(&fp));
    }

    #[test]
    fn fallback_answers_anything() {
        let backend = MockBackend::with_fallback("PASS");
        assert_eq!(backend.complete(&req("whatever", 3)).unwrap().samples, ["PASS"; 3]);
    }

    #[test]
    fn script_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.json");
        let script = MockScript {
            entries: vec![MockEntry {
                fingerprint: "abc".into(),
                ordinal: 2,
                scope: None,
                samples: vec!["x".into()],
            }],
            rules: vec![],
            fallback: Some("f".into()),
        };
        std::fs::write(&path, serde_json::to_string(&script).unwrap()).unwrap();
        assert_eq!(MockScript::load(&path).unwrap(), script);
        std::fs::write(&path, r#"{"entrys": []}"#).unwrap();
        assert!(MockScript::load(&path).is_err());
    }

    #[test]
    fn ordinals_are_counted_per_scope() {
        let fp = prompt_fingerprint("q");
        let backend = MockBackend::new(MockScript {
            entries: vec![
                MockEntry {
                    fingerprint: fp.clone(),
                    ordinal: 0,
                    scope: None,
                    samples: vec!["any".into()],
                },
                MockEntry {
                    fingerprint: fp,
                    ordinal: 0,
                    scope: Some("iter_2".into()),
                    samples: vec!["second iteration".into()],
                },
            ],
            ..Default::default()
        });
        let one = backend.complete(&req("q", 1).with_scope("iter_1/x")).unwrap();
        let two = backend.complete(&req("q", 1).with_scope("iter_2/x")).unwrap();
        assert_eq!(one.samples, ["any"]);
        assert_eq!(two.samples, ["second iteration"]);
        assert_eq!(one.request_fingerprint, two.request_fingerprint);
    }
}
