//! Recursive-descent parser for selector text.
//!
//! ```text
//! selector := term ( ('&' | '|') term | '/' PRED ('->' | '<-') ['+'] )*
//! term     := '*' | 'kind:' KIND | 'statement~' STRING | 'published<' TIMESTAMP
//!           | 'flag:' NAME | 'in:' ID ['+'] | 'leaf:' ID
//!           | '!' term | '(' selector ')'
//! ```
//!
//! Binary operators and traversals share one precedence level and fold to
//! the left, so `a & b / challenges->` traverses from `a & b`.

use thiserror::Error;

use super::{Direction, KindName, Selector};
use crate::caseio::parse_timestamp;
use crate::model::{Flag, Predicate};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at {position}: {message}")]
pub struct SyntaxError {
    /// Byte offset into the selector text.
    pub position: usize,
    pub message: String,
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError {
            position: self.pos,
            message: message.into(),
        })
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.text.len() - trimmed.len();
    }

    fn eat(&mut self, token: &str) -> bool {
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn word(&mut self, extra: &[char]) -> &'a str {
        let rest = self.rest();
        let end = rest
            .find(|c: char| !(c.is_ascii_alphanumeric() || extra.contains(&c)))
            .unwrap_or(rest.len());
        self.pos += end;
        &rest[..end]
    }

    fn string(&mut self) -> Result<String, SyntaxError> {
        if !self.eat("\"") {
            return self.err("expected '\"'");
        }
        let mut out = String::new();
        let mut chars = self.rest().char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '"' => {
                    self.pos += i + 1;
                    return Ok(out);
                }
                '\\' => match chars.next() {
                    Some((_, e @ ('"' | '\\'))) => out.push(e),
                    _ => {
                        self.pos += i;
                        return self.err("bad escape");
                    }
                },
                c => out.push(c),
            }
        }
        self.pos = self.text.len();
        self.err("unterminated string")
    }

    fn id(&mut self) -> Result<String, SyntaxError> {
        if self.rest().starts_with('"') {
            return self.string();
        }
        let w = self.word(&['_', '-', '.']);
        if w.is_empty() {
            return self.err("expected identifier");
        }
        Ok(w.to_string())
    }

    fn selector(&mut self) -> Result<Selector, SyntaxError> {
        let mut acc = self.term()?;
        loop {
            self.skip_ws();
            if self.eat("&") {
                acc = Selector::and(acc, self.term()?);
            } else if self.eat("|") {
                acc = Selector::or(acc, self.term()?);
            } else if self.eat("/") {
                self.skip_ws();
                let start = self.pos;
                let name = self.word(&[]);
                let Ok(predicate) = name.parse::<Predicate>() else {
                    self.pos = start;
                    return self.err(format!("unknown predicate `{name}`"));
                };
                let direction = if self.eat("->") {
                    Direction::Out
                } else if self.eat("<-") {
                    Direction::In
                } else {
                    return self.err("expected '->' or '<-'");
                };
                let transitive = self.eat("+");
                acc = Selector::traverse(acc, predicate, direction, transitive);
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Selector, SyntaxError> {
        self.skip_ws();
        if self.eat("*") {
            return Ok(Selector::All);
        }
        if self.eat("!") {
            return Ok(Selector::negate(self.term()?));
        }
        if self.eat("(") {
            let inner = self.selector()?;
            self.skip_ws();
            if !self.eat(")") {
                return self.err("expected ')'");
            }
            return Ok(inner);
        }
        if self.eat("kind:") {
            let start = self.pos;
            let name = self.word(&[]);
            if name.is_empty() {
                return self.err("expected kind name");
            }
            return match KindName::parse(name) {
                Some(k) => Ok(Selector::ByKind(k)),
                None => {
                    self.pos = start;
                    self.err(format!("unknown kind `{name}`"))
                }
            };
        }
        if self.eat("statement~") {
            return Ok(Selector::StatementContains(self.string()?));
        }
        if self.eat("published<") {
            let start = self.pos;
            let raw = self.word(&[':', '-', '+', '.']);
            return match parse_timestamp(raw) {
                Some(ts) => Ok(Selector::PublishedBefore(ts)),
                None => {
                    self.pos = start;
                    self.err(format!("bad timestamp `{raw}`"))
                }
            };
        }
        if self.eat("flag:") {
            let start = self.pos;
            let name = self.word(&[]);
            return match name.parse::<Flag>() {
                Ok(flag) => Ok(Selector::HasFlag(flag)),
                Err(_) => {
                    self.pos = start;
                    self.err(format!("unknown flag `{name}`"))
                }
            };
        }
        if self.eat("in:") {
            let container = self.id()?;
            let transitive = self.eat("+");
            return Ok(Selector::InContainer {
                container,
                transitive,
            });
        }
        if self.eat("leaf:") {
            return Ok(Selector::LeafOf(self.id()?));
        }
        if self.pos == self.text.len() {
            self.err("unexpected end of input")
        } else {
            self.err("expected a term")
        }
    }
}

/// Parses selector text into a [`Selector`].
pub fn parse_selector(text: &str) -> Result<Selector, SyntaxError> {
    let mut p = Parser { text, pos: 0 };
    let sel = p.selector()?;
    p.skip_ws();
    if p.pos != text.len() {
        return p.err("trailing input");
    }
    Ok(sel)
}
