//! Pure parsers from model replies to records. Every parser either returns
//! a record or a typed [`Rejection`]; none of them can fail otherwise.

use std::collections::HashSet;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::model::{normalize_text, parse_signature, CaseLabel, TestInput};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Rejection {
    EmptyReply,
    MentionsSnippet,
    ContainsCode,
    BadSignature { text: String },
    NoInputs,
    NoAssertion,
    NotLiteral { literal: String },
    EmptySource,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::EmptyReply => f.write_str("empty reply"),
            Rejection::MentionsSnippet => f.write_str("reply mentions the code snippet"),
            Rejection::ContainsCode => f.write_str("reply contains a fenced code block"),
            Rejection::BadSignature { text } => write!(f, "unparseable signature `{text}`"),
            Rejection::NoInputs => f.write_str("no parseable test inputs"),
            Rejection::NoAssertion => f.write_str("no assertion for the requested input"),
            Rejection::NotLiteral { literal } => write!(f, "expected output `{literal}` is not a literal"),
            Rejection::EmptySource => f.write_str("no code in reply"),
        }
    }
}

static TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"<\s*(/?)\s*([A-Za-z_]+?)\s*(\d*)\s*>").expect("valid tag pattern"));

pub(crate) struct Tag {
    pub(crate) start: usize,
    pub(crate) end: usize,
    pub(crate) closing: bool,
    pub(crate) name: String,
    pub(crate) raw_name: String,
    pub(crate) number: String,
}

pub(crate) fn tags(text: &str) -> Vec<Tag> {
    TAG.captures_iter(text)
        .map(|c| {
            let m = c.get(0).unwrap();
            Tag {
                start: m.start(),
                end: m.end(),
                closing: !c[1].is_empty(),
                name: c[2].to_ascii_lowercase(),
                raw_name: c[2].to_string(),
                number: c[3].to_string(),
            }
        })
        .collect()
}

/// Body of the first `<NAME…>` section. A reply that starts inside the
/// section (the prompt ended with the opening tag) is handled by taking
/// everything before the first closing tag.
pub fn section<'a>(text: &'a str, name: &str) -> Option<&'a str> {
    let name = name.to_ascii_lowercase();
    let all = tags(text);
    let open = all.iter().find(|t| !t.closing && t.name == name);
    let start = match open {
        Some(t) => t.end,
        None => {
            let close = all.iter().find(|t| t.closing && t.name == name)?;
            return Some(&text[..close.start]);
        }
    };
    let end = all
        .iter()
        .find(|t| t.start >= start && t.closing && t.name == name)
        .map_or(text.len(), |t| t.start);
    Some(&text[start..end])
}

fn strip_tags(text: &str) -> String {
    TAG.replace_all(text, "").into_owned()
}

fn strip_backticks(line: &str) -> &str {
    line.trim().trim_matches('`').trim()
}

/// Index of the first `#` outside string quotes.
fn comment_start(line: &str) -> Option<usize> {
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match quote {
            Some(q) => {
                if escaped {
                    escaped = false;
                } else if c == '\\' {
                    escaped = true;
                } else if c == q {
                    quote = None;
                }
            }
            None => match c {
                '\'' | '"' => quote = Some(c),
                '#' => return Some(i),
                _ => {}
            },
        }
    }
    None
}

fn split_comment(line: &str) -> (&str, &str) {
    match comment_start(line) {
        Some(i) => (line[..i].trim_end(), line[i + 1..].trim()),
        None => (line, ""),
    }
}

/// Brackets balance outside string literals and every string is closed.
fn balanced(code: &str) -> bool {
    let mut depth = 0i64;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for c in code.chars() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '\'' | '"' => quote = Some(c),
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => {
                depth -= 1;
                if depth < 0 {
                    return false;
                }
            }
            _ => {}
        }
    }
    depth == 0 && quote.is_none()
}

/// Position of the first `==` at bracket depth zero outside strings.
fn top_level_eq(code: &str) -> Option<usize> {
    let bytes = code.as_bytes();
    let mut depth = 0i64;
    let mut quote: Option<u8> = None;
    let mut escaped = false;
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == b'\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
        } else {
            match c {
                b'\'' | b'"' => quote = Some(c),
                b'(' | b'[' | b'{' => depth += 1,
                b')' | b']' | b'}' => depth -= 1,
                b'=' if depth == 0 && bytes.get(i + 1) == Some(&b'=') => {
                    let prev = if i == 0 { b' ' } else { bytes[i - 1] };
                    if !matches!(prev, b'!' | b'<' | b'>' | b'=') {
                        return Some(i);
                    }
                }
                _ => {}
            }
        }
        i += 1;
    }
    None
}

pub fn parse_problem(reply: &str) -> Result<String, Rejection> {
    let text = reply.trim();
    if text.is_empty() {
        return Err(Rejection::EmptyReply);
    }
    if text.to_lowercase().contains("code snippet") {
        return Err(Rejection::MentionsSnippet);
    }
    if text.contains("```") {
        return Err(Rejection::ContainsCode);
    }
    Ok(text.to_string())
}

/// First non-empty line of the reply's signature section, tags stripped.
pub fn parse_signature_reply(reply: &str) -> Result<String, Rejection> {
    let body = strip_tags(section(reply, "signature").unwrap_or(reply));
    let Some(line) = body.lines().map(strip_backticks).find(|l| !l.is_empty()) else {
        return Err(Rejection::EmptyReply);
    };
    let line = line.strip_prefix("def ").unwrap_or(line).trim();
    let line = line.strip_suffix(':').unwrap_or(line).trim_end();
    match parse_signature(line) {
        Some(_) => Ok(line.to_string()),
        None => Err(Rejection::BadSignature { text: line.to_string() }),
    }
}

static CASE_REF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bcase\s*(\d+)").expect("valid pattern"));

/// Heuristic label from an input's trailing comment, following a
/// `case N` reference into the analysis text when there is one.
pub fn case_label(comment: &str, analysis: &str) -> CaseLabel {
    let mut text = comment.to_lowercase();
    if let Some(n) = CASE_REF.captures(comment).map(|c| c[1].to_string()) {
        let referenced = analysis.lines().find(|l| {
            CASE_REF
                .captures(l)
                .is_some_and(|c| c[1] == n && l.to_lowercase().trim_start_matches(['-', '*', ' ']).starts_with("case"))
        });
        if let Some(line) = referenced {
            text.push(' ');
            text.push_str(&line.to_lowercase());
        }
    }
    if ["corner", "empty", "edge"].iter().any(|k| text.contains(k)) {
        CaseLabel::Corner
    } else if text.contains("difficult") {
        CaseLabel::Difficult
    } else {
        CaseLabel::General
    }
}

/// Call expressions from the reply's INPUTS section, one per line.
pub fn parse_test_inputs(reply: &str, function_name: &str) -> Result<Vec<TestInput>, Rejection> {
    let analysis = section(reply, "analysis").unwrap_or("");
    let body = section(reply, "inputs").unwrap_or(reply);
    let prefix = format!("{function_name}(");
    let mut seen = HashSet::new();
    let mut inputs = Vec::new();
    for raw in body.lines() {
        let line = raw.trim();
        let line = line
            .strip_prefix("- ")
            .or_else(|| line.strip_prefix("* "))
            .unwrap_or(line);
        let (code, comment) = split_comment(strip_backticks(line));
        let code = strip_backticks(code);
        if !code.starts_with(&prefix) || !code.ends_with(')') || !balanced(code) {
            continue;
        }
        if !seen.insert(normalize_text(code)) {
            continue;
        }
        inputs.push(TestInput {
            call_expression: code.to_string(),
            case_label: case_label(comment, analysis),
        });
    }
    if inputs.is_empty() {
        return Err(Rejection::NoInputs);
    }
    Ok(inputs)
}

/// Remainder of `text` after `call`, comparing non-whitespace characters.
fn strip_call_prefix<'a>(text: &'a str, call: &str) -> Option<&'a str> {
    let mut want = call.chars().filter(|c| !c.is_whitespace()).peekable();
    let mut end = 0;
    for (i, c) in text.char_indices() {
        if want.peek().is_none() {
            return Some(&text[i..]);
        }
        if c.is_whitespace() {
            continue;
        }
        if want.next() != Some(c) {
            return None;
        }
        end = i + c.len_utf8();
    }
    want.peek().is_none().then(|| &text[end..])
}

/// Expected literal of `assert <call> == <literal>` when the left side is
/// `call` up to whitespace.
pub fn match_assertion(line: &str, call: &str) -> Option<String> {
    let rest = strip_backticks(line).strip_prefix("assert")?;
    if !rest.starts_with(char::is_whitespace) {
        return None;
    }
    let rest = strip_call_prefix(rest.trim_start(), call)?;
    let literal = rest.trim_start().strip_prefix("==")?;
    if literal.starts_with('=') {
        return None;
    }
    let (literal, _) = split_comment(literal);
    let literal = literal.trim();
    (!literal.is_empty() && balanced(literal)).then(|| literal.to_string())
}

/// Split any `assert <call> == <literal>` line.
pub fn parse_assertion(line: &str) -> Option<(String, String)> {
    let rest = line.trim().strip_prefix("assert")?;
    if !rest.starts_with(char::is_whitespace) {
        return None;
    }
    let (code, _) = split_comment(rest.trim());
    let eq = top_level_eq(code)?;
    let call = code[..eq].trim();
    let literal = code[eq + 2..].trim();
    (!call.is_empty() && !literal.is_empty() && balanced(call) && balanced(literal))
        .then(|| (call.to_string(), literal.to_string()))
}

/// Rationale and expected literal from one output sample. The literal comes
/// from the last matching assertion.
pub fn parse_test_output(reply: &str, call: &str) -> Result<(String, String), Rejection> {
    let rationale = match section(reply, "analysis") {
        Some(text) => text.trim().to_string(),
        None => {
            let before = tags(reply)
                .iter()
                .find(|t| !t.closing && t.name == "output")
                .map_or("", |t| &reply[..t.start]);
            strip_tags(before).trim().to_string()
        }
    };
    let region = section(reply, "output").unwrap_or(reply);
    region
        .lines()
        .rev()
        .find_map(|l| match_assertion(l, call))
        .map(|literal| (rationale, literal))
        .ok_or(Rejection::NoAssertion)
}

/// Program text of a solution reply: the first fenced block if there is
/// one, else the whole reply, cut at the closing solution tag.
pub fn extract_solution(reply: &str) -> Result<String, Rejection> {
    let cut = tags(reply)
        .iter()
        .find(|t| t.closing && t.name == "solution")
        .map_or(reply, |t| &reply[..t.start]);
    let cut = match tags(cut).iter().find(|t| !t.closing && t.name == "solution") {
        Some(t) => &cut[t.end..],
        None => cut,
    };
    let code = match cut.find("```") {
        Some(open) => {
            let after = &cut[open + 3..];
            let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
            let body = &after[body_start..];
            match body.find("```") {
                Some(close) => &body[..close],
                None => body,
            }
        }
        None => cut,
    };
    let code = code.trim_matches('\n').trim_end();
    if code.trim().is_empty() {
        return Err(Rejection::EmptySource);
    }
    Ok(format!("{code}\n"))
}
