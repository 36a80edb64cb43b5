use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::text::{fold, stem};

use super::IntentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Word,
    Number,
    Symbol,
    /// A quoted phrase; `surface` holds the unescaped content.
    Quoted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub normalized: String,
    pub kind: TokenKind,
    /// Byte range in the raw text, quotes included.
    pub span: (usize, usize),
}

impl Token {
    /// Matching keys. Words are stemmed; a quoted phrase yields one key per
    /// inner word.
    pub fn keys(&self) -> Vec<String> {
        match self.kind {
            TokenKind::Word => alloc::vec![stem(&self.normalized)],
            TokenKind::Number | TokenKind::Symbol => alloc::vec![self.normalized.clone()],
            TokenKind::Quoted => scan(&self.surface, false)
                .iter()
                .flat_map(|t| t.keys())
                .collect(),
        }
    }

    pub fn starts_upper(&self) -> bool {
        self.surface.chars().next().is_some_and(char::is_uppercase)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub raw_text: String,
    pub locale: String,
    pub tokens: Vec<Token>,
}

const SYMBOLS: [&str; 11] = [">=", "<=", "!=", "<>", "==", "≥", "≤", "≠", ">", "<", "="];

fn symbol_norm(s: &str) -> &str {
    match s {
        "≥" => ">=",
        "≤" => "<=",
        "≠" => "!=",
        other => other,
    }
}

fn closing_quote(c: char) -> Option<char> {
    match c {
        '\'' => Some('\''),
        '"' => Some('"'),
        '‘' => Some('’'),
        '“' => Some('”'),
        _ => None,
    }
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '’'
}

fn normalize_word(s: &str) -> String {
    fold(&s.replace('’', "'"))
}

/// Splits `raw` into tokens. Fails on text without any token.
pub fn tokenize(raw: &str, locale: &str) -> Result<Utterance, IntentError> {
    let tokens = scan(raw, true);
    if tokens.is_empty() {
        return Err(IntentError::EmptyUtterance);
    }
    Ok(Utterance {
        raw_text: raw.to_string(),
        locale: locale.to_string(),
        tokens,
    })
}

/// Tokens of a lexicon surface or training sentence.
pub(crate) fn scan_surface(s: &str) -> Vec<Token> {
    scan(s, true)
}

fn scan(raw: &str, quotes: bool) -> Vec<Token> {
    let cs: Vec<(usize, char)> = raw.char_indices().collect();
    let n = cs.len();
    let byte = |i: usize| if i < n { cs[i].0 } else { raw.len() };
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let c = cs[i].1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if let Some(close) = closing_quote(c).filter(|_| quotes) {
            if i == 0 || !cs[i - 1].1.is_alphanumeric() {
                let mut content = String::new();
                let mut j = i + 1;
                let mut end = None;
                while j < n {
                    let ch = cs[j].1;
                    if ch == close {
                        let next = cs.get(j + 1).map(|x| x.1);
                        if close == '\'' && next == Some('\'') {
                            content.push('\'');
                            j += 2;
                            continue;
                        }
                        if close == '\'' && next.is_some_and(char::is_alphanumeric) {
                            content.push(ch);
                            j += 1;
                            continue;
                        }
                        end = Some(j);
                        break;
                    }
                    content.push(ch);
                    j += 1;
                }
                if let Some(j) = end {
                    if !content.trim().is_empty() {
                        out.push(Token {
                            normalized: normalize_word(content.trim()),
                            surface: content.trim().to_string(),
                            kind: TokenKind::Quoted,
                            span: (byte(i), byte(j + 1)),
                        });
                    }
                    i = j + 1;
                    continue;
                }
                i += 1;
                continue;
            }
        }
        let signed = (c == '-' || c == '+')
            && cs.get(i + 1).is_some_and(|x| x.1.is_ascii_digit())
            && (i == 0 || cs[i - 1].1.is_whitespace() || cs[i - 1].1 == '(');
        if c.is_ascii_digit() || signed {
            let mut j = i + 1;
            while j < n && (cs[j].1.is_ascii_alphanumeric() || ".,/:-".contains(cs[j].1)) {
                j += 1;
            }
            while j > i + 1 && ".,/:-".contains(cs[j - 1].1) {
                j -= 1;
            }
            let surface = &raw[byte(i)..byte(j)];
            out.push(Token {
                surface: surface.to_string(),
                normalized: surface.to_ascii_lowercase(),
                kind: TokenKind::Number,
                span: (byte(i), byte(j)),
            });
            i = j;
            continue;
        }
        if let Some(sym) = SYMBOLS.iter().find(|s| raw[byte(i)..].starts_with(**s)) {
            let len = sym.chars().count();
            out.push(Token {
                surface: sym.to_string(),
                normalized: symbol_norm(sym).to_string(),
                kind: TokenKind::Symbol,
                span: (byte(i), byte(i + len)),
            });
            i += len;
            continue;
        }
        if c.is_alphanumeric() || c == '_' {
            let mut j = i + 1;
            while j < n {
                let ch = cs[j].1;
                let inner_apostrophe = is_apostrophe(ch) && cs.get(j + 1).is_some_and(|x| x.1.is_alphanumeric());
                if ch.is_alphanumeric() || ch == '_' || inner_apostrophe {
                    j += 1;
                } else {
                    break;
                }
            }
            let surface = &raw[byte(i)..byte(j)];
            out.push(Token {
                surface: surface.to_string(),
                normalized: normalize_word(surface),
                kind: TokenKind::Word,
                span: (byte(i), byte(j)),
            });
            i = j;
            continue;
        }
        i += 1;
    }
    out
}
