//! Pratt parser for the expression grammar.
//!
//! Precedence, loosest first: `+ -`, `* /`, unary `-`, `^` (right associative).
//! Exponents must reduce to integer constants. `name(arg)` applies a declared
//! atom to a single declared symbol.

use thiserror::Error;

use super::{rational_from_decimal, AtomRef, PhaseExpr, Registry};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{message} at offset {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

impl ParseError {
    fn new(offset: usize, message: impl Into<String>) -> Self {
        Self {
            offset,
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(String),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || (c == '.' && bytes.get(i + 1).is_some_and(|b| b.is_ascii_digit()))
        {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            out.push((Tok::Num(text[start..i].to_string()), start));
        } else if c.is_ascii_alphabetic() {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_string()), start));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                _ => {
                    return Err(ParseError::new(
                        start,
                        format!("unexpected character `{c}`"),
                    ))
                }
            };
            out.push((tok, start));
            i += 1;
        }
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    reg: &'a Registry,
}

const PREFIX_BP: u8 = 25;

fn infix_bp(op: char) -> Option<(u8, u8)> {
    match op {
        '+' | '-' => Some((10, 11)),
        '*' | '/' => Some((20, 21)),
        '^' => Some((31, 30)),
        _ => None,
    }
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expr(&mut self, min_bp: u8) -> Result<PhaseExpr, ParseError> {
        let mut lhs = self.prefix()?;
        loop {
            let op = match self.peek() {
                Tok::Op(op) => *op,
                Tok::End | Tok::RParen => break,
                _ => return Err(ParseError::new(self.offset(), "expected operator")),
            };
            let (l_bp, r_bp) = infix_bp(op).expect("lexer only emits known operators");
            if l_bp < min_bp {
                break;
            }
            let (_, op_offset) = self.bump();
            let rhs_offset = self.offset();
            let rhs = self.expr(r_bp)?;
            lhs = match op {
                '+' => lhs.add_expr(&rhs),
                '-' => lhs.sub_expr(&rhs),
                '*' => lhs.mul_expr(&rhs),
                '/' => lhs
                    .checked_div(&rhs)
                    .map_err(|_| ParseError::new(op_offset, "division by zero"))?,
                '^' => {
                    let n = integer_exponent(&rhs).ok_or_else(|| {
                        ParseError::new(rhs_offset, "exponent must be an integer constant")
                    })?;
                    lhs.pow(n).map_err(|_| {
                        ParseError::new(op_offset, "zero raised to a negative power")
                    })?
                }
                _ => unreachable!(),
            };
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<PhaseExpr, ParseError> {
        let (tok, offset) = self.bump();
        match tok {
            Tok::Num(text) => rational_from_decimal(&text)
                .map(PhaseExpr::constant)
                .ok_or_else(|| ParseError::new(offset, format!("malformed number `{text}`"))),
            Tok::Op('-') => Ok(self.expr(PREFIX_BP)?.neg_expr()),
            Tok::LParen => {
                let inner = self.expr(0)?;
                match self.bump() {
                    (Tok::RParen, _) => Ok(inner),
                    (_, off) => Err(ParseError::new(off, "expected `)`")),
                }
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::LParen {
                    self.application(&name, offset)
                } else if self.reg.kind(&name).is_some() {
                    Ok(PhaseExpr::symbol(&name))
                } else if self.reg.resolve_atom(&name).is_some() {
                    Err(ParseError::new(
                        offset,
                        format!("atom `{name}` needs an argument"),
                    ))
                } else {
                    Err(ParseError::new(
                        offset,
                        format!("unknown identifier `{name}`"),
                    ))
                }
            }
            Tok::End => Err(ParseError::new(offset, "unexpected end of input")),
            Tok::RParen => Err(ParseError::new(offset, "unexpected `)`")),
            Tok::Op(c) => Err(ParseError::new(offset, format!("unexpected `{c}`"))),
        }
    }

    fn application(&mut self, name: &str, offset: usize) -> Result<PhaseExpr, ParseError> {
        let (base, order) = self
            .reg
            .resolve_atom(name)
            .ok_or_else(|| ParseError::new(offset, format!("unknown atom `{name}`")))?;
        let base = base.to_string();
        self.bump();
        let (arg, arg_offset) = match self.bump() {
            (Tok::Ident(arg), off) => (arg, off),
            (_, off) => return Err(ParseError::new(off, "atom argument must be a symbol")),
        };
        if self.reg.kind(&arg).is_none() {
            return Err(ParseError::new(
                arg_offset,
                format!("unknown identifier `{arg}`"),
            ));
        }
        match self.bump() {
            (Tok::RParen, _) => Ok(PhaseExpr::atom(AtomRef::new(&base, order, &arg))),
            (_, off) => Err(ParseError::new(off, "expected `)`")),
        }
    }
}

fn integer_exponent(e: &PhaseExpr) -> Option<i32> {
    let c = e.as_constant()?;
    if !c.is_integer() {
        return None;
    }
    i32::try_from(c.to_integer()).ok()
}

pub(super) fn parse(text: &str, reg: &Registry) -> Result<PhaseExpr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, reg };
    let e = p.expr(0)?;
    match p.peek() {
        Tok::End => Ok(e),
        _ => Err(ParseError::new(p.offset(), "unexpected input")),
    }
}
