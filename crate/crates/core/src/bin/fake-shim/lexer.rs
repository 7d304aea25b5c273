//! Tokenizer for the Python subset understood by the fake shim.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Name(String),
    Int(i64),
    Float(f64),
    Str(String),
    Op(&'static str),
    Newline,
    Indent,
    Dedent,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Name(n) => write!(f, "{n}"),
            Tok::Int(i) => write!(f, "{i}"),
            Tok::Float(x) => write!(f, "{x}"),
            Tok::Str(s) => write!(f, "{s:?}"),
            Tok::Op(o) => write!(f, "{o}"),
            Tok::Newline => f.write_str("NEWLINE"),
            Tok::Indent => f.write_str("INDENT"),
            Tok::Dedent => f.write_str("DEDENT"),
            Tok::Eof => f.write_str("EOF"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
}

const OPS: &[&str] = &[
    "**=", "//=", "...", "**", "//", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "%=", "->", "(", ")", "[", "]",
    "{", "}", ",", ":", "+", "-", "*", "/", "%", "<", ">", "=", ".", "|", "&", "^", "~", ";",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, String> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let mut indents = vec![0usize];
    let mut i = 0;
    let mut line = 1u32;
    let mut depth = 0usize;
    let mut at_line_start = true;

    while i < chars.len() {
        if at_line_start && depth == 0 {
            let mut col = 0;
            let mut j = i;
            while j < chars.len() && (chars[j] == ' ' || chars[j] == '\t') {
                col += if chars[j] == '\t' { 8 - col % 8 } else { 1 };
                j += 1;
            }
            if j >= chars.len() {
                break;
            }
            if chars[j] == '\n' || chars[j] == '#' || chars[j] == '\r' {
                while j < chars.len() && chars[j] != '\n' {
                    j += 1;
                }
                i = j + 1;
                line += 1;
                continue;
            }
            let top = *indents.last().unwrap();
            if col > top {
                indents.push(col);
                toks.push(Token { tok: Tok::Indent, line });
            } else {
                while col < *indents.last().unwrap() {
                    indents.pop();
                    toks.push(Token { tok: Tok::Dedent, line });
                }
                if col != *indents.last().unwrap() {
                    return Err(format!("line {line}: inconsistent dedent"));
                }
            }
            i = j;
            at_line_start = false;
        }
        let c = chars[i];
        match c {
            '\n' => {
                if depth == 0 && !matches!(toks.last(), Some(Token { tok: Tok::Newline, .. }) | None) {
                    toks.push(Token {
                        tok: Tok::Newline,
                        line,
                    });
                }
                line += 1;
                i += 1;
                at_line_start = depth == 0;
            }
            ' ' | '\t' | '\r' => i += 1,
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '\\' if chars.get(i + 1) == Some(&'\n') => {
                i += 2;
                line += 1;
            }
            '\'' | '"' => {
                let start_line = line;
                let (s, next, lines) = lex_string(&chars, i).map_err(|e| format!("line {line}: {e}"))?;
                line += lines;
                toks.push(Token {
                    tok: Tok::Str(s),
                    line: start_line,
                });
                i = next;
            }
            c if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '.' || chars[i] == '_') {
                    if (chars[i] == 'e' || chars[i] == 'E') && matches!(chars.get(i + 1), Some('+') | Some('-')) {
                        i += 1;
                    }
                    i += 1;
                }
                let text: String = chars[start..i].iter().filter(|&&c| c != '_').collect();
                let tok = if text.contains(['.', 'e', 'E']) && !text.starts_with("0x") {
                    Tok::Float(text.parse().map_err(|_| format!("line {line}: bad number {text}"))?)
                } else if let Some(hex) = text.strip_prefix("0x") {
                    Tok::Int(i64::from_str_radix(hex, 16).map_err(|_| format!("line {line}: bad number {text}"))?)
                } else {
                    Tok::Int(text.parse().map_err(|_| format!("line {line}: bad number {text}"))?)
                };
                toks.push(Token { tok, line });
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                // string prefixes such as r'' or f'' are not supported
                if matches!(chars.get(i), Some('\'') | Some('"')) && word.len() <= 2 {
                    return Err(format!("line {line}: string prefix `{word}` unsupported"));
                }
                toks.push(Token {
                    tok: Tok::Name(word),
                    line,
                });
            }
            _ => {
                let rest: String = chars[i..chars.len().min(i + 3)].iter().collect();
                let op = OPS
                    .iter()
                    .find(|op| rest.starts_with(**op))
                    .ok_or_else(|| format!("line {line}: unexpected character {c:?}"))?;
                match *op {
                    "(" | "[" | "{" => depth += 1,
                    ")" | "]" | "}" => {
                        depth = depth
                            .checked_sub(1)
                            .ok_or_else(|| format!("line {line}: unmatched {op}"))?
                    }
                    _ => {}
                }
                toks.push(Token { tok: Tok::Op(op), line });
                i += op.len();
            }
        }
    }
    if depth != 0 {
        return Err("unexpected EOF inside brackets".into());
    }
    if !matches!(toks.last(), Some(Token { tok: Tok::Newline, .. }) | None) {
        toks.push(Token {
            tok: Tok::Newline,
            line,
        });
    }
    while indents.len() > 1 {
        indents.pop();
        toks.push(Token { tok: Tok::Dedent, line });
    }
    toks.push(Token { tok: Tok::Eof, line });
    Ok(toks)
}

/// Returns (value, index after the literal, newlines consumed).
fn lex_string(chars: &[char], start: usize) -> Result<(String, usize, u32), String> {
    let quote = chars[start];
    let triple = chars.get(start + 1) == Some(&quote) && chars.get(start + 2) == Some(&quote);
    let mut i = start + if triple { 3 } else { 1 };
    let mut out = String::new();
    let mut lines = 0;
    loop {
        let Some(&c) = chars.get(i) else {
            return Err("unterminated string".into());
        };
        if triple {
            if c == quote && chars.get(i + 1) == Some(&quote) && chars.get(i + 2) == Some(&quote) {
                return Ok((out, i + 3, lines));
            }
        } else if c == quote {
            return Ok((out, i + 1, lines));
        } else if c == '\n' {
            return Err("newline in string".into());
        }
        if c == '\n' {
            lines += 1;
        }
        if c == '\\' {
            let esc = *chars.get(i + 1).ok_or("unterminated string")?;
            match esc {
                'n' => out.push('\n'),
                't' => out.push('\t'),
                'r' => out.push('\r'),
                '0' => out.push('\0'),
                '\\' | '\'' | '"' => out.push(esc),
                '\n' => lines += 1,
                other => {
                    out.push('\\');
                    out.push(other);
                }
            }
            i += 2;
            continue;
        }
        out.push(c);
        i += 1;
    }
}
