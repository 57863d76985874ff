//! SQL lexer: enough of the lexical grammar to split statements into
//! keywords, identifiers, literals and punctuation. No parsing.

use serde::{Deserialize, Serialize};

use super::LITERAL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenKind {
    Keyword,
    Identifier,
    QuotedIdentifier,
    StringLiteral,
    NumberLiteral,
    Punctuation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LexWarning {
    UnterminatedString { offset: usize },
    UnterminatedQuotedIdentifier { offset: usize },
    UnterminatedComment { offset: usize },
    UnexpectedChar { offset: usize, ch: char },
}

#[derive(Debug, Clone, Default)]
pub struct Lexed {
    pub tokens: Vec<Token>,
    pub warnings: Vec<LexWarning>,
}

const KEYWORDS: &[&str] = &[
    "ADD", "ALL", "ALTER", "AND", "ANY", "AS", "ASC", "BETWEEN", "BY", "CASE", "CAST", "CREATE",
    "CROSS", "CURRENT", "DATE", "DAY", "DELETE", "DESC", "DISTINCT", "DROP", "ELSE", "END",
    "EXCEPT", "EXISTS", "EXTRACT", "FALSE", "FETCH", "FIRST", "FOLLOWING", "FOR", "FROM", "FULL",
    "GROUP", "HAVING", "HOUR", "ILIKE", "IN", "INNER", "INSERT", "INTERSECT", "INTERVAL", "INTO",
    "IS", "JOIN", "LATERAL", "LEFT", "LIKE", "LIMIT", "MINUTE", "MONTH", "NATURAL", "NEXT", "NOT",
    "NULL", "NULLS", "OFFSET", "ON", "ONLY", "OR", "ORDER", "OUTER", "OVER", "PARTITION",
    "PRECEDING", "QUALIFY", "RANGE", "RECURSIVE", "RIGHT", "ROW", "ROWS", "SECOND", "SELECT",
    "SET", "SOME", "TABLE", "TABLESAMPLE", "THEN", "TIMESTAMP", "TOP", "TRUE", "UNBOUNDED",
    "UNION", "UPDATE", "USING", "VALUES", "VIEW", "WHEN", "WHERE", "WINDOW", "WITH", "YEAR",
];

fn is_keyword(upper: &str) -> bool {
    KEYWORDS.binary_search(&upper).is_ok()
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '$' || c == '#'
}

const TWO_CHAR_OPS: &[&str] = &["<=", ">=", "<>", "!=", "||", "::", "=>", "->"];

/// Splits `sql` into classified tokens. Keywords are upper-cased;
/// everything else keeps its original spelling.
pub fn lex(sql: &str) -> Lexed {
    let chars: Vec<(usize, char)> = sql.char_indices().collect();
    let mut out = Lexed::default();
    let text_of = |from: usize, to: usize| -> String {
        let start = chars[from].0;
        let end = chars.get(to).map_or(sql.len(), |c| c.0);
        sql[start..end].to_string()
    };
    let mut i = 0;
    while i < chars.len() {
        let (offset, c) = chars[i];
        let next = chars.get(i + 1).map(|&(_, c)| c);
        if c.is_whitespace() {
            i += 1;
        } else if c == '-' && next == Some('-') {
            while i < chars.len() && chars[i].1 != '\n' {
                i += 1;
            }
        } else if c == '/' && next == Some('*') {
            let mut j = i + 2;
            loop {
                if j + 1 >= chars.len() {
                    out.warnings.push(LexWarning::UnterminatedComment { offset });
                    j = chars.len();
                    break;
                }
                if chars[j].1 == '*' && chars[j + 1].1 == '/' {
                    j += 2;
                    break;
                }
                j += 1;
            }
            i = j;
        } else if c == '\'' {
            // '' inside a string is an escaped quote
            let mut j = i + 1;
            let mut closed = false;
            while j < chars.len() {
                if chars[j].1 == '\'' {
                    if chars.get(j + 1).map(|c| c.1) == Some('\'') {
                        j += 2;
                        continue;
                    }
                    j += 1;
                    closed = true;
                    break;
                }
                j += 1;
            }
            if !closed {
                out.warnings.push(LexWarning::UnterminatedString { offset });
            }
            out.tokens.push(Token {
                kind: TokenKind::StringLiteral,
                text: text_of(i, j),
            });
            i = j;
        } else if c == '"' || c == '`' || c == '[' {
            let close = if c == '[' { ']' } else { c };
            let mut j = i + 1;
            while j < chars.len() && chars[j].1 != close {
                j += 1;
            }
            if j < chars.len() {
                j += 1;
            } else {
                out.warnings.push(LexWarning::UnterminatedQuotedIdentifier { offset });
            }
            out.tokens.push(Token {
                kind: TokenKind::QuotedIdentifier,
                text: text_of(i, j),
            });
            i = j;
        } else if c.is_ascii_digit() || (c == '.' && next.is_some_and(|n| n.is_ascii_digit())) {
            let mut j = i;
            while j < chars.len() && chars[j].1.is_ascii_digit() {
                j += 1;
            }
            if j < chars.len() && chars[j].1 == '.' {
                j += 1;
                while j < chars.len() && chars[j].1.is_ascii_digit() {
                    j += 1;
                }
            }
            if j < chars.len() && matches!(chars[j].1, 'e' | 'E') {
                let mut k = j + 1;
                if k < chars.len() && matches!(chars[k].1, '+' | '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].1.is_ascii_digit() {
                    while k < chars.len() && chars[k].1.is_ascii_digit() {
                        k += 1;
                    }
                    j = k;
                }
            }
            out.tokens.push(Token {
                kind: TokenKind::NumberLiteral,
                text: text_of(i, j),
            });
            i = j;
        } else if is_ident_start(c) {
            let mut j = i + 1;
            while j < chars.len() && is_ident_continue(chars[j].1) {
                j += 1;
            }
            let word = text_of(i, j);
            let upper = word.to_ascii_uppercase();
            if is_keyword(&upper) {
                out.tokens.push(Token {
                    kind: TokenKind::Keyword,
                    text: upper,
                });
            } else {
                out.tokens.push(Token {
                    kind: TokenKind::Identifier,
                    text: word,
                });
            }
            i = j;
        } else {
            let pair: String = [Some(c), next].iter().flatten().collect();
            if TWO_CHAR_OPS.contains(&pair.as_str()) {
                out.tokens.push(Token {
                    kind: TokenKind::Punctuation,
                    text: pair,
                });
                i += 2;
            } else {
                if !"(),;*+-/%=<>.!|:&^~?@{}".contains(c) {
                    out.warnings.push(LexWarning::UnexpectedChar { offset, ch: c });
                }
                out.tokens.push(Token {
                    kind: TokenKind::Punctuation,
                    text: c.to_string(),
                });
                i += 1;
            }
        }
    }
    out
}

/// Token strings of `sql`; see [`lex`] for warnings.
pub fn tokenize(sql: &str) -> Vec<String> {
    let lexed = lex(sql);
    for w in &lexed.warnings {
        log::warn!("tokenize: {w:?}");
    }
    lexed.tokens.into_iter().map(|t| t.text).collect()
}

/// Classifies an already-emitted token string as a literal constant.
pub fn is_literal(token: &str) -> bool {
    if token.starts_with('\'') {
        return true;
    }
    let lexed = lex(token);
    lexed.tokens.len() == 1 && lexed.tokens[0].kind == TokenKind::NumberLiteral
}

/// Replaces every string or number literal by the shared `LITERAL` token.
pub fn strip_literals<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens
        .iter()
        .map(|t| {
            let t = t.as_ref();
            if is_literal(t) {
                LITERAL.to_string()
            } else {
                t.to_string()
            }
        })
        .collect()
}
