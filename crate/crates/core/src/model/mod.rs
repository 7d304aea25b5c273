//! Domain records, canonical hashing and JSONL persistence.

mod config;
mod hash;
mod jsonl;
mod types;

pub use config::{
    BackendConfig, BackendKind, Epsilon, InputFiles, Limits, RejectPick, RunConfig, SampleCounts, Sampling,
    SandboxConfig, StageSampling, Strategies,
};
pub use hash::{canonical_hash, canonical_json, content_hash, normalize_text};
pub use jsonl::{append_jsonl, parse_line, read_jsonl, to_line, write_jsonl};
pub use types::*;
