//! Tokenizer for the supported T-SQL subset.

use crate::parser::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    /// Bare word: keyword or unquoted identifier.
    Word,
    /// `[...]` or `"..."` identifier.
    QuotedIdent,
    /// `'...'` or `N'...'`.
    String,
    Number,
    /// Data-Explorer parameter `##Name##`, `##Name:type##`, `##Name:type?default##`.
    Parameter,
    /// `@name` or `@@name`.
    Variable,
    /// `#temp` table name.
    TempName,
    Symbol,
    Eof,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub kind: TokenKind,
    pub text: &'a str,
    pub offset: usize,
}

impl Token<'_> {
    /// Case-insensitive keyword check for bare words.
    pub fn is_word(&self, word: &str) -> bool {
        self.kind == TokenKind::Word && self.text.eq_ignore_ascii_case(word)
    }

    pub fn is_symbol(&self, symbol: &str) -> bool {
        self.kind == TokenKind::Symbol && self.text == symbol
    }
}

const SYMBOLS: [&str; 27] = [
    "<>", "!=", "<=", ">=", "!<", "!>", "+=", "-=", "*=", "/=", "=", "<", ">", "+", "-", "*", "/",
    "%", "&", "|", "^", "~", "(", ")", ",", ".", ";",
];

fn is_word_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '$' || c == '@' || c == '#'
}

pub fn tokenize(text: &str) -> Result<Vec<Token<'_>>, ParseError> {
    let mut tokens = Vec::new();
    let bytes = text.as_bytes();
    let mut pos = 0;
    while pos < text.len() {
        let rest = &text[pos..];
        let c = rest.chars().next().unwrap_or(' ');
        let start = pos;
        if c.is_whitespace() {
            pos += c.len_utf8();
            continue;
        }
        // comments are normally gone after normalization, but be lenient
        if rest.starts_with("--") {
            pos += rest.find('\n').unwrap_or(rest.len());
            continue;
        }
        if let Some(body) = rest.strip_prefix("/*") {
            pos += body.find("*/").map(|i| i + 4).unwrap_or(rest.len());
            continue;
        }
        let (kind, len) = if (c == 'N' || c == 'n') && rest[1..].starts_with('\'') {
            (
                TokenKind::String,
                1 + quoted_len(&rest[1..], '\'', start + 1)?,
            )
        } else if c == '\'' {
            (TokenKind::String, quoted_len(rest, '\'', start)?)
        } else if c == '[' {
            (TokenKind::QuotedIdent, quoted_len(rest, ']', start)?)
        } else if c == '"' {
            (TokenKind::QuotedIdent, quoted_len(rest, '"', start)?)
        } else if rest.starts_with("##") {
            match parameter_len(rest) {
                Some(len) => (TokenKind::Parameter, len),
                None => (TokenKind::TempName, word_len(rest, 2)),
            }
        } else if c == '#' {
            (TokenKind::TempName, word_len(rest, 1))
        } else if c == '@' {
            let skip = if rest.starts_with("@@") { 2 } else { 1 };
            let len = word_len(rest, skip);
            if len == skip {
                return Err(ParseError::new(start, "variable name", "@"));
            }
            (TokenKind::Variable, len)
        } else if c.is_ascii_digit()
            || (c == '.'
                && bytes.get(pos + 1).is_some_and(u8::is_ascii_digit)
                && !previous_is_operand(&tokens))
        {
            (TokenKind::Number, number_len(rest))
        } else if is_word_start(c) {
            (TokenKind::Word, word_len(rest, 0))
        } else if let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            (TokenKind::Symbol, sym.len())
        } else {
            return Err(ParseError::new(start, "token", &c.to_string()));
        };
        tokens.push(Token {
            kind,
            text: &text[start..start + len],
            offset: start,
        });
        pos += len;
    }
    tokens.push(Token {
        kind: TokenKind::Eof,
        text: "",
        offset: text.len(),
    });
    Ok(tokens)
}

fn previous_is_operand(tokens: &[Token<'_>]) -> bool {
    tokens.last().is_some_and(|t| {
        matches!(
            t.kind,
            TokenKind::Word | TokenKind::QuotedIdent | TokenKind::Variable | TokenKind::TempName
        ) || t.is_symbol(")")
    })
}

fn quoted_len(rest: &str, closer: char, offset: usize) -> Result<usize, ParseError> {
    let mut chars = rest.char_indices().skip(1).peekable();
    while let Some((i, c)) = chars.next() {
        if c == closer {
            if chars.peek().is_some_and(|(_, n)| *n == closer) {
                chars.next();
                continue;
            }
            return Ok(i + c.len_utf8());
        }
    }
    Err(ParseError::new(
        offset,
        &format!("closing {closer}"),
        "end of input",
    ))
}

fn word_len(rest: &str, skip: usize) -> usize {
    skip + rest[skip..]
        .char_indices()
        .find(|(_, c)| !is_word_char(*c))
        .map(|(i, _)| i)
        .unwrap_or(rest.len() - skip)
}

// `##` name [`:` type] [`?` default] `##`. The name must be a plain word so
// that a global temp table like `##tmp` is not mistaken for a parameter.
fn parameter_len(rest: &str) -> Option<usize> {
    let body = &rest[2..];
    let close = body.find("##")?;
    let inner = &body[..close];
    let name_end = inner.find([':', '?']).unwrap_or(inner.len());
    let name = &inner[..name_end];
    if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
        return None;
    }
    Some(2 + close + 2)
}

fn number_len(rest: &str) -> usize {
    let b = rest.as_bytes();
    if b.len() > 2 && b[0] == b'0' && (b[1] == b'x' || b[1] == b'X') {
        let hex = b[2..].iter().take_while(|c| c.is_ascii_hexdigit()).count();
        return 2 + hex;
    }
    let mut i = b.iter().take_while(|c| c.is_ascii_digit()).count();
    if b.get(i) == Some(&b'.') {
        i += 1;
        i += b[i..].iter().take_while(|c| c.is_ascii_digit()).count();
    }
    if matches!(b.get(i), Some(b'e') | Some(b'E')) {
        let mut j = i + 1;
        if matches!(b.get(j), Some(b'+') | Some(b'-')) {
            j += 1;
        }
        let digits = b[j.min(b.len())..]
            .iter()
            .take_while(|c| c.is_ascii_digit())
            .count();
        if digits > 0 {
            i = j + digits;
        }
    }
    i
}
