//! Canonical serialization and content hashing.
//!
//! Records are hashed over a canonical JSON form: object keys sorted, every
//! string value normalized with [`normalize_text`]. Cache keys for executed
//! code use [`content_hash`] instead, which hashes exact bytes, because
//! whitespace inside a program or a string literal can change its meaning.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Trim, collapse runs of spaces and tabs to one space, and normalize line
/// endings to LF. Case is preserved.
pub fn normalize_text(text: &str) -> String {
    let unified = text.replace("\r\n", "\n").replace('\r', "\n");
    let mut out = String::with_capacity(unified.len());
    let mut in_run = false;
    for ch in unified.chars() {
        if ch == ' ' || ch == '\t' {
            if !in_run {
                out.push(' ');
            }
            in_run = true;
        } else {
            out.push(ch);
            in_run = false;
        }
    }
    out.trim().to_string()
}

fn normalize_value(value: &mut Value) {
    match value {
        Value::String(s) => *s = normalize_text(s),
        Value::Array(items) => items.iter_mut().for_each(normalize_value),
        Value::Object(map) => map.values_mut().for_each(normalize_value),
        _ => {}
    }
}

/// Canonical JSON text of a record: sorted keys, normalized strings, compact.
pub fn canonical_json<T: Serialize + ?Sized>(record: &T) -> String {
    let mut value = serde_json::to_value(record).expect("domain records always serialize");
    normalize_value(&mut value);
    // serde_json's default map is ordered by key, so this is already sorted.
    value.to_string()
}

/// Hex SHA-256 of the canonical form of `record`.
pub fn canonical_hash<T: Serialize + ?Sized>(record: &T) -> String {
    content_hash(canonical_json(record).as_bytes())
}

/// Hex SHA-256 of exact bytes.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
