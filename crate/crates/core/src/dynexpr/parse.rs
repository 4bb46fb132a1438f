//! Recursive-descent parser.
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | ident | ident '(' expr (',' expr)? ')' | '(' expr ')'
//! ```

use super::ast::{BinOp, Expr, Func};
use crate::error::{Error, Result};
use std::collections::BTreeSet;

/// Names visible to the parser.
#[derive(Clone, Debug, Default)]
pub struct Symbols {
    pub n_states: usize,
    pub n_inputs: usize,
    pub constants: BTreeSet<String>,
    pub tables: BTreeSet<String>,
}

impl Symbols {
    pub fn new(n_states: usize, n_inputs: usize) -> Self {
        Self {
            n_states,
            n_inputs,
            ..Default::default()
        }
    }

    pub fn with_constants<I: IntoIterator<Item = S>, S: Into<String>>(mut self, names: I) -> Self {
        self.constants.extend(names.into_iter().map(Into::into));
        self
    }

    pub fn with_tables<I: IntoIterator<Item = S>, S: Into<String>>(mut self, names: I) -> Self {
        self.tables.extend(names.into_iter().map(Into::into));
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn next(&mut self) -> Result<(Tok, usize)> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && (bytes[self.pos] as char).is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        if self.pos >= bytes.len() {
            return Ok((Tok::End, start));
        }
        let c = bytes[self.pos] as char;
        if c.is_ascii_digit() || c == '.' {
            let mut end = self.pos;
            while end < bytes.len() && ((bytes[end] as char).is_ascii_digit() || bytes[end] == b'.') {
                end += 1;
            }
            if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                let mut k = end + 1;
                if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                    k += 1;
                }
                if k < bytes.len() && bytes[k].is_ascii_digit() {
                    while k < bytes.len() && bytes[k].is_ascii_digit() {
                        k += 1;
                    }
                    end = k;
                }
            }
            let text = &self.src[start..end];
            let v: f64 = text.parse().map_err(|_| Error::Syntax {
                offset: start,
                message: format!("malformed number '{text}'"),
            })?;
            self.pos = end;
            return Ok((Tok::Num(v), start));
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut end = self.pos;
            while end < bytes.len() && ((bytes[end] as char).is_ascii_alphanumeric() || bytes[end] == b'_') {
                end += 1;
            }
            self.pos = end;
            return Ok((Tok::Ident(self.src[start..end].to_string()), start));
        }
        if "+-*/^(),".contains(c) {
            self.pos += 1;
            return Ok((Tok::Op(c), start));
        }
        let ch = self.src[start..].chars().next().unwrap_or('?');
        Err(Error::Syntax {
            offset: start,
            message: format!("unexpected character '{ch}'"),
        })
    }
}

struct Parser<'a> {
    lex: Lexer<'a>,
    tok: Tok,
    at: usize,
    sym: &'a Symbols,
}

impl<'a> Parser<'a> {
    fn bump(&mut self) -> Result<()> {
        let (t, at) = self.lex.next()?;
        self.tok = t;
        self.at = at;
        Ok(())
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            offset: self.at,
            message: message.into(),
        })
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.tok == Tok::Op(c) {
            self.bump()
        } else {
            self.err(format!("expected '{c}'"))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.term()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.tok {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump()?;
            let rhs = self.unary()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.tok == Tok::Op('-') {
            self.bump()?;
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.tok != Tok::Op('^') {
            return Ok(base);
        }
        self.bump()?;
        let at = self.at;
        let exponent = self.unary()?;
        if !exponent.is_variable_free() {
            return Err(Error::VariableExponent { offset: at });
        }
        Ok(Expr::bin(BinOp::Pow, base, exponent))
    }

    fn index(name: &str, prefix: char) -> Option<usize> {
        let rest = name.strip_prefix(prefix)?;
        if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) || rest.starts_with('0') {
            return None;
        }
        rest.parse().ok()
    }

    fn atom(&mut self) -> Result<Expr> {
        let at = self.at;
        match self.tok.clone() {
            Tok::Num(v) => {
                self.bump()?;
                Ok(Expr::Const(v))
            }
            Tok::Op('(') => {
                self.bump()?;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump()?;
                if self.tok == Tok::Op('(') {
                    self.bump()?;
                    let a = self.expr()?;
                    if self.tok == Tok::Op(',') {
                        self.bump()?;
                        let b = self.expr()?;
                        self.expect(')')?;
                        if !self.sym.tables.contains(&name) {
                            return Err(Error::UnknownIdentifier { name, offset: at });
                        }
                        return Ok(Expr::Table {
                            name,
                            table: None,
                            args: Box::new([a, b]),
                        });
                    }
                    self.expect(')')?;
                    return match Func::from_name(&name) {
                        Some(f) => Ok(Expr::Call(f, Box::new(a))),
                        None => Err(Error::UnknownIdentifier { name, offset: at }),
                    };
                }
                if self.sym.constants.contains(&name) {
                    return Ok(Expr::Named(name));
                }
                if name == "pi" {
                    return Ok(Expr::Const(std::f64::consts::PI));
                }
                if let Some(i) = Self::index(&name, 'x') {
                    if i <= self.sym.n_states {
                        return Ok(Expr::State(i - 1));
                    }
                }
                if let Some(j) = Self::index(&name, 'u') {
                    if j <= self.sym.n_inputs {
                        return Ok(Expr::Input(j - 1));
                    }
                }
                Err(Error::UnknownIdentifier { name, offset: at })
            }
            Tok::End => self.err("unexpected end of expression"),
            Tok::Op(c) => self.err(format!("unexpected '{c}'")),
        }
    }
}

pub fn parse_expr(text: &str, sym: &Symbols) -> Result<Expr> {
    let mut p = Parser {
        lex: Lexer { src: text, pos: 0 },
        tok: Tok::End,
        at: 0,
        sym,
    };
    p.bump()?;
    let e = p.expr()?;
    if p.tok != Tok::End {
        return p.err("unexpected trailing input");
    }
    Ok(e)
}
