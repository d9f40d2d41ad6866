//! Query text normalization.
//!
//! The rewrite is applied in a fixed order:
//!
//! 1. Invalid UTF-8 byte sequences are dropped (only for [`normalize_bytes`]).
//! 2. Typographic apostrophes (`’`, `‘`, `´`) become `'`.
//! 3. Byte-order marks and non-whitespace control characters are dropped.
//! 4. Comments are removed: `--` up to the end of the line and `/* ... */`
//!    (nesting allowed, unterminated runs to end of input). Each comment is
//!    replaced by a single space. Comment markers inside `'...'`, `"..."` and
//!    `[...]` are left alone.
//! 5. Every whitespace run (including `\r\n`, `\r`, `\n`, tabs) becomes one
//!    space, and the result is trimmed.

/// SQL dialect of a query. Only one is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Dialect {
    #[default]
    TSqlSubset,
}

/// Query text as stored, next to its normalized form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryText {
    pub raw: String,
    pub normalized: String,
    pub dialect: Dialect,
}

impl QueryText {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let normalized = normalize_text(&raw);
        QueryText {
            raw,
            normalized,
            dialect: Dialect::TSqlSubset,
        }
    }
}

/// Normalizes raw query text. Total and idempotent.
pub fn normalize_text(raw: &str) -> String {
    let cleaned: String = raw
        .chars()
        .filter(|c| *c != '\u{FEFF}' && (c.is_whitespace() || !c.is_control()))
        .map(|c| match c {
            '\u{2019}' | '\u{2018}' | '\u{00B4}' => '\'',
            other => other,
        })
        .collect();
    let uncommented = strip_comments(&cleaned);
    collapse_whitespace(&uncommented)
}

/// Like [`normalize_text`], but starts from raw bytes and drops any sequence
/// that is not valid UTF-8.
pub fn normalize_bytes(raw: &[u8]) -> String {
    let mut valid = String::with_capacity(raw.len());
    for chunk in raw.utf8_chunks() {
        valid.push_str(chunk.valid());
    }
    normalize_text(&valid)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Quote {
    Single,
    Double,
    Bracket,
}

fn strip_comments(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut quote: Option<Quote> = None;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        match quote {
            Some(q) => {
                out.push(c);
                let closer = match q {
                    Quote::Single => '\'',
                    Quote::Double => '"',
                    Quote::Bracket => ']',
                };
                if c == closer {
                    // doubled closer is an escape
                    if next == Some(closer) {
                        out.push(closer);
                        i += 2;
                        continue;
                    }
                    quote = None;
                }
                i += 1;
            }
            None => {
                if c == '-' && next == Some('-') {
                    while i < chars.len() && chars[i] != '\n' && chars[i] != '\r' {
                        i += 1;
                    }
                    out.push(' ');
                    continue;
                }
                if c == '/' && next == Some('*') {
                    let mut depth = 0usize;
                    while i < chars.len() {
                        if chars[i] == '/' && chars.get(i + 1) == Some(&'*') {
                            depth += 1;
                            i += 2;
                        } else if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                            depth -= 1;
                            i += 2;
                            if depth == 0 {
                                break;
                            }
                        } else {
                            i += 1;
                        }
                    }
                    out.push(' ');
                    continue;
                }
                quote = match c {
                    '\'' => Some(Quote::Single),
                    '"' => Some(Quote::Double),
                    '[' => Some(Quote::Bracket),
                    _ => None,
                };
                out.push(c);
                i += 1;
            }
        }
    }
    out
}

fn collapse_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars() {
        if c.is_whitespace() {
            pending_space = true;
        } else {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        }
    }
    out
}

/// Reports whether `text` contains a comment marker outside of quoted
/// regions. Used to check the normalization invariant.
pub fn has_comment(text: &str) -> bool {
    strip_comments(text) != text
}
