//! Textual query syntax:
//!
//! ```text
//! query  := ε | clause (conj clause)*
//! conj   := AND | OR | AND NOT            (case-insensitive)
//! clause := field '~' pattern
//! pattern:= single-quoted string, '' inside for a literal quote
//! ```

use std::fmt;

use super::{Conjunction, Field, SearchClause, SearchQuery};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnknownField(String),
    ExpectedField,
    ExpectedTilde,
    MissingPattern,
    UnterminatedPattern,
    ExpectedConjunction,
    DanglingConjunction,
}

/// Query syntax error. `position` counts characters from the start of the
/// query text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub position: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match &self.kind {
            ParseErrorKind::UnknownField(name) => format!("unknown field '{name}'"),
            ParseErrorKind::ExpectedField => "expected a field name".to_string(),
            ParseErrorKind::ExpectedTilde => "expected '~' after field".to_string(),
            ParseErrorKind::MissingPattern => "missing quoted pattern".to_string(),
            ParseErrorKind::UnterminatedPattern => "unterminated pattern".to_string(),
            ParseErrorKind::ExpectedConjunction => "expected AND, OR or AND NOT".to_string(),
            ParseErrorKind::DanglingConjunction => "conjunction is not followed by a clause".to_string(),
        };
        write!(f, "parse error at position {}: {what}", self.position)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    Tilde,
    Pattern(String),
    Other(char),
}

struct Lexer {
    chars: Vec<char>,
    pos: usize,
}

impl Lexer {
    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    /// Next token and the position it starts at; `None` at end of input.
    fn next(&mut self) -> Result<Option<(usize, Tok)>, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let Some(&c) = self.chars.get(self.pos) else {
            return Ok(None);
        };
        let tok = if c == '~' {
            self.pos += 1;
            Tok::Tilde
        } else if c == '\'' {
            self.pos += 1;
            let mut text = String::new();
            loop {
                match self.chars.get(self.pos) {
                    None => {
                        return Err(ParseError {
                            position: start,
                            kind: ParseErrorKind::UnterminatedPattern,
                        })
                    }
                    Some('\'') if self.chars.get(self.pos + 1) == Some(&'\'') => {
                        text.push('\'');
                        self.pos += 2;
                    }
                    Some('\'') => {
                        self.pos += 1;
                        break;
                    }
                    Some(&ch) => {
                        text.push(ch);
                        self.pos += 1;
                    }
                }
            }
            Tok::Pattern(text)
        } else if is_word_char(c) {
            while self.chars.get(self.pos).is_some_and(|&c| is_word_char(c)) {
                self.pos += 1;
            }
            Tok::Word(self.chars[start..self.pos].iter().collect())
        } else {
            self.pos += 1;
            Tok::Other(c)
        };
        Ok(Some((start, tok)))
    }

    fn peek(&mut self) -> Result<Option<(usize, Tok)>, ParseError> {
        let saved = self.pos;
        let tok = self.next();
        self.pos = saved;
        tok
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '.' || c == '_'
}

pub fn parse_query(text: &str) -> Result<SearchQuery, ParseError> {
    let mut lex = Lexer {
        chars: text.chars().collect(),
        pos: 0,
    };
    let mut clauses = Vec::new();
    if lex.peek()?.is_none() {
        return Ok(SearchQuery { clauses });
    }

    let mut conjunction = Conjunction::And;
    loop {
        let clause = parse_clause(&mut lex, conjunction)?;
        clauses.push(clause);

        let Some((pos, tok)) = lex.next()? else { break };
        conjunction = match tok {
            Tok::Word(w) if w.eq_ignore_ascii_case("or") => Conjunction::Or,
            Tok::Word(w) if w.eq_ignore_ascii_case("and") => match lex.peek()? {
                Some((_, Tok::Word(n))) if n.eq_ignore_ascii_case("not") => {
                    lex.next()?;
                    Conjunction::AndNot
                }
                _ => Conjunction::And,
            },
            _ => {
                return Err(ParseError {
                    position: pos,
                    kind: ParseErrorKind::ExpectedConjunction,
                })
            }
        };
        if lex.peek()?.is_none() {
            return Err(ParseError {
                position: pos,
                kind: ParseErrorKind::DanglingConjunction,
            });
        }
    }
    Ok(SearchQuery { clauses })
}

fn parse_clause(lex: &mut Lexer, conjunction: Conjunction) -> Result<SearchClause, ParseError> {
    let end = lex.chars.len();
    let field = match lex.next()? {
        Some((pos, Tok::Word(name))) => {
            Field::from_name(&name).ok_or(ParseError {
                position: pos,
                kind: ParseErrorKind::UnknownField(name),
            })?
        }
        Some((pos, _)) => {
            return Err(ParseError {
                position: pos,
                kind: ParseErrorKind::ExpectedField,
            })
        }
        None => {
            return Err(ParseError {
                position: end,
                kind: ParseErrorKind::ExpectedField,
            })
        }
    };
    match lex.next()? {
        Some((_, Tok::Tilde)) => {}
        other => {
            return Err(ParseError {
                position: other.map_or(end, |(p, _)| p),
                kind: ParseErrorKind::ExpectedTilde,
            })
        }
    }
    match lex.next()? {
        Some((_, Tok::Pattern(pattern))) => Ok(SearchClause {
            conjunction,
            field,
            pattern,
        }),
        other => Err(ParseError {
            position: other.map_or(end, |(p, _)| p),
            kind: ParseErrorKind::MissingPattern,
        }),
    }
}
