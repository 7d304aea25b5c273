//! Text-generation backends behind one request/response shape.

mod http;
mod mock;

use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};

pub use http::{HttpBackend, RetryPolicy, API_KEY_ENV, BASE_URL_ENV};
pub use mock::{MockBackend, MockEntry, MockRule, MockScript};

use crate::error::{Error, Result};
use crate::model::{canonical_hash, Decoding, Sampling};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRequest {
    pub prompt: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub n_samples: usize,
    pub stop_sequences: Vec<String>,
    /// Caller-chosen label such as `iter_2/solutions`. Not sent over the
    /// wire and not part of the fingerprint; the mock backend counts call
    /// ordinals per scope.
    #[serde(skip)]
    pub scope: String,
}

impl GenRequest {
    pub fn new(prompt: impl Into<String>, sampling: Sampling, n_samples: usize, max_tokens: u32) -> Self {
        GenRequest {
            prompt: prompt.into(),
            temperature: sampling.temperature,
            top_p: sampling.top_p,
            max_tokens,
            n_samples,
            stop_sequences: Vec::new(),
            scope: String::new(),
        }
    }

    pub fn with_scope(mut self, scope: impl Into<String>) -> Self {
        self.scope = scope.into();
        self
    }

    pub fn with_stop(mut self, stop: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.stop_sequences = stop.into_iter().map(Into::into).collect();
        self
    }

    pub fn is_greedy(&self) -> bool {
        self.temperature == 0.0 && self.n_samples == 1
    }

    pub fn decoding(&self) -> Decoding {
        Sampling {
            temperature: self.temperature,
            top_p: self.top_p,
        }
        .decoding(self.n_samples)
    }

    pub fn fingerprint(&self) -> String {
        canonical_hash(self)
    }

    pub fn prompt_fingerprint(&self) -> String {
        prompt_fingerprint(&self.prompt)
    }
}

pub fn prompt_fingerprint(prompt: &str) -> String {
    canonical_hash(prompt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenResponse {
    pub samples: Vec<String>,
    pub backend_id: String,
    pub request_fingerprint: String,
    /// Transport attempts spent on this request.
    pub attempts: u32,
}

pub trait Backend: Send + Sync {
    fn id(&self) -> String;

    /// Return `request.n_samples` completions in generation order.
    fn complete(&self, request: &GenRequest) -> Result<GenResponse>;
}

struct Gate {
    limit: usize,
    in_use: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn acquire(&self) -> GatePermit<'_> {
        let mut in_use = self.in_use.lock().unwrap();
        while *in_use >= self.limit {
            in_use = self.freed.wait(in_use).unwrap();
        }
        *in_use += 1;
        GatePermit(self)
    }
}

struct GatePermit<'a>(&'a Gate);

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        *self.0.in_use.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

/// Bounded-concurrency front end over a [`Backend`].
pub struct Gateway {
    backend: Arc<dyn Backend>,
    pool: rayon::ThreadPool,
    gate: Gate,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, max_concurrency: usize) -> Result<Self> {
        let limit = max_concurrency.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(limit)
            .thread_name(|i| format!("gen-{i}"))
            .build()
            .map_err(|e| Error::Config(format!("cannot build request pool: {e}")))?;
        Ok(Gateway {
            backend,
            pool,
            gate: Gate {
                limit,
                in_use: Mutex::new(0),
                freed: Condvar::new(),
            },
        })
    }

    pub fn backend_id(&self) -> String {
        self.backend.id()
    }

    pub fn complete(&self, request: &GenRequest) -> Result<GenResponse> {
        if request.prompt.trim().is_empty() {
            return Err(Error::Precondition("prompt is empty".into()));
        }
        if request.n_samples == 0 {
            return Err(Error::Precondition("n_samples must be at least 1".into()));
        }
        let _permit = self.gate.acquire();
        let response = self.backend.complete(request)?;
        if response.samples.len() != request.n_samples {
            return Err(Error::Protocol(format!(
                "backend returned {} samples, {} requested",
                response.samples.len(),
                request.n_samples
            )));
        }
        Ok(response)
    }

    /// Issue many requests concurrently; results keep input order.
    ///
    /// Requests sharing a prompt are issued in waves (first occurrences,
    /// then second occurrences, ...) so per-prompt call ordinals follow input
    /// order regardless of scheduling.
    pub fn complete_many(&self, requests: &[GenRequest]) -> Vec<Result<GenResponse>> {
        use rayon::prelude::*;
        use std::collections::HashMap;

        let mut seen: HashMap<String, usize> = HashMap::new();
        let ranks: Vec<usize> = requests
            .iter()
            .map(|r| {
                let n = seen.entry(r.prompt_fingerprint()).or_insert(0);
                *n += 1;
                *n - 1
            })
            .collect();
        let waves = ranks.iter().copied().max().map_or(0, |m| m + 1);
        let mut results: Vec<Option<Result<GenResponse>>> = (0..requests.len()).map(|_| None).collect();
        for wave in 0..waves {
            let idx: Vec<usize> = (0..requests.len()).filter(|&i| ranks[i] == wave).collect();
            let done: Vec<(usize, Result<GenResponse>)> = self
                .pool
                .install(|| idx.par_iter().map(|&i| (i, self.complete(&requests[i]))).collect());
            for (i, r) in done {
                results[i] = Some(r);
            }
        }
        results.into_iter().map(|r| r.expect("every request ran")).collect()
    }
}
