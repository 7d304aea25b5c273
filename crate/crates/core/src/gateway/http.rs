//! Chat-completion HTTP backend.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{Backend, GenRequest, GenResponse};
use crate::error::{Error, Result};

pub const BASE_URL_ENV: &str = "SOLVER_VERIFIER_BASE_URL";
pub const API_KEY_ENV: &str = "SOLVER_VERIFIER_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles afterwards.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    fn delay_before(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt.saturating_sub(2))
    }
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    index: Option<usize>,
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

enum Failure {
    Retryable(String),
    Fatal(Error),
}

pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
    model: String,
    retry: RetryPolicy,
}

impl HttpBackend {
    /// `base_url` is the API root, e.g. `http://localhost:8000/v1`.
    pub fn new(base_url: &str, api_key: Option<String>, model: &str, retry: RetryPolicy, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpBackend {
            agent,
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
            model: model.to_string(),
            retry,
        }
    }

    /// Base URL and key from the environment; `base_url` overrides the variable.
    pub fn from_env(base_url: Option<&str>, model: &str, retry: RetryPolicy, timeout: Duration) -> Result<Self> {
        let base = match base_url {
            Some(url) => url.to_string(),
            None => std::env::var(BASE_URL_ENV).map_err(|_| Error::Config(format!("{BASE_URL_ENV} is not set")))?,
        };
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Ok(Self::new(&base, key, model, retry, timeout))
    }

    fn attempt(&self, request: &GenRequest) -> std::result::Result<Vec<String>, Failure> {
        let mut body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "n": request.n_samples,
            "max_tokens": request.max_tokens,
        });
        if !request.stop_sequences.is_empty() {
            body["stop"] = json!(request.stop_sequences);
        }
        let mut call = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = call
            .send_json(&body)
            .map_err(|e| Failure::Retryable(format!("transport: {e}")))?;
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(Failure::Retryable(format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            let text = response.body_mut().read_to_string().unwrap_or_default();
            return Err(Failure::Fatal(Error::Backend {
                attempts: 0,
                message: format!("HTTP {status}: {}", truncate(&text, 512)),
            }));
        }
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Retryable(format!("reading body: {e}")))?;
        let reply: ChatReply = serde_json::from_str(&text)
            .map_err(|e| Failure::Fatal(Error::Protocol(format!("malformed reply: {e}"))))?;
        let mut choices: Vec<(usize, String)> = reply
            .choices
            .into_iter()
            .enumerate()
            .map(|(pos, c)| (c.index.unwrap_or(pos), c.message.content.unwrap_or_default()))
            .collect();
        choices.sort_by_key(|(i, _)| *i);
        if choices.len() != request.n_samples {
            return Err(Failure::Fatal(Error::Protocol(format!(
                "expected {} choices, got {}",
                request.n_samples,
                choices.len()
            ))));
        }
        Ok(choices.into_iter().map(|(_, c)| c).collect())
    }
}

fn truncate(text: &str, max: usize) -> &str {
    match text.char_indices().nth(max) {
        Some((i, _)) => &text[..i],
        None => text,
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}@{}", self.model, self.endpoint)
    }

    fn complete(&self, request: &GenRequest) -> Result<GenResponse> {
        let mut last = String::new();
        for attempt in 1..=self.retry.max_attempts.max(1) {
            if attempt > 1 {
                std::thread::sleep(self.retry.delay_before(attempt));
            }
            match self.attempt(request) {
                Ok(samples) => {
                    return Ok(GenResponse {
                        samples,
                        backend_id: self.id(),
                        request_fingerprint: request.fingerprint(),
                        attempts: attempt,
                    })
                }
                Err(Failure::Fatal(Error::Backend { message, .. })) => {
                    return Err(Error::Backend {
                        attempts: attempt,
                        message,
                    })
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(message)) => {
                    log::warn!("attempt {attempt} to {} failed: {message}", self.endpoint);
                    last = message;
                }
            }
        }
        Err(Error::Backend {
            attempts: self.retry.max_attempts.max(1),
            message: last,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Sampling;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};

    /// Serves one canned response per connection, recording request bodies.
    fn serve(responses: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let seen = bodies.clone();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut length = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        length = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0u8; length];
                reader.read_exact(&mut buf).unwrap();
                seen.lock().unwrap().push(String::from_utf8(buf).unwrap());
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        (format!("http://{addr}/v1"), bodies)
    }

    fn backend(url: &str) -> HttpBackend {
        let retry = RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_millis(5),
        };
        HttpBackend::new(url, Some("k".into()), "m", retry, Duration::from_secs(5))
    }

    const OK: &str = r#"{"choices":[{"index":1,"message":{"content":"B"}},{"index":0,"message":{"content":"A"}}]}"#;

    #[test]
    fn retries_429_then_succeeds() {
        let (url, bodies) = serve(vec![(429, "{}".into()), (429, "{}".into()), (200, OK.into())]);
        let req = GenRequest::new(
            "hi",
            Sampling {
                temperature: 0.6,
                top_p: 0.9,
            },
            2,
            64,
        )
        .with_stop(["</OUTPUT4>"]);
        let resp = backend(&url).complete(&req).unwrap();
        assert_eq!(resp.attempts, 3);
        assert_eq!(resp.samples, ["A", "B"]);
        let body: serde_json::Value = serde_json::from_str(&bodies.lock().unwrap()[2]).unwrap();
        assert_eq!(body["model"], "m");
        assert_eq!(body["n"], 2);
        assert_eq!(body["top_p"], 0.9);
        assert_eq!(body["max_tokens"], 64);
        assert_eq!(body["stop"][0], "</OUTPUT4>");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "hi");
    }

    #[test]
    fn gives_up_after_max_attempts() {
        let (url, _) = serve(vec![(503, "{}".into()), (500, "{}".into()), (502, "{}".into())]);
        let req = GenRequest::new("hi", Sampling::GREEDY, 1, 8);
        match backend(&url).complete(&req) {
            Err(Error::Backend { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, bodies) = serve(vec![(400, "bad".into())]);
        let req = GenRequest::new("hi", Sampling::GREEDY, 1, 8);
        match backend(&url).complete(&req) {
            Err(Error::Backend { attempts, message }) => {
                assert_eq!(attempts, 1);
                assert!(message.contains("400"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(bodies.lock().unwrap().len(), 1);
    }

    #[test]
    fn malformed_reply_is_protocol_error() {
        let (url, _) = serve(vec![(200, r#"{"nope":1}"#.into())]);
        let req = GenRequest::new("hi", Sampling::GREEDY, 1, 8);
        assert!(matches!(backend(&url).complete(&req), Err(Error::Protocol(_))));
    }
}
