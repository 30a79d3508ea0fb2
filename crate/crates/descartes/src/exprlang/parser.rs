//! Recursive-descent parser for the expression language.
//!
//! Grammar (see `docs/exprlang.md` for the user-facing description):
//!
//! ```text
//! expr   := term (("+" | "-") term)*
//! term   := factor (("*" | "/") factor)*
//! factor := "-" factor | power
//! power  := atom ("^" factor)?          -- exponent must fold to a constant
//! atom   := NUMBER | IDENT | IDENT "(" expr ")" | "(" expr ")"
//! ```
//!
//! Identifiers `x1, x2, …` are coordinates, `v1, v2, …` velocities, the names
//! `sin cos tan exp log sqrt abs` are functions (and must be applied), and any
//! other identifier is a named parameter. All errors carry the byte offset of
//! the offending token.

use super::{Expr, Func};
use crate::error::{DescartesError, Result};

pub fn parse(src: &str) -> Result<Expr> {
    let mut p = Parser {
        src,
        bytes: src.as_bytes(),
        pos: 0,
    };
    p.skip_ws();
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, message: &str) -> DescartesError {
        DescartesError::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn error_at(&self, offset: usize, message: String) -> DescartesError {
        DescartesError::Syntax { offset, message }
    }

    fn skip_ws(&mut self) {
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| b.is_ascii_whitespace())
        {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    /// Consume `c` if it is next (after whitespace was already skipped).
    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            self.skip_ws();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8, what: &str) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(what))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                let rhs = self.term()?;
                lhs = Expr::add(lhs, rhs);
            } else if self.eat(b'-') {
                let rhs = self.term()?;
                lhs = Expr::sub(lhs, rhs);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        loop {
            if self.eat(b'*') {
                let rhs = self.factor()?;
                lhs = Expr::mul(lhs, rhs);
            } else if self.eat(b'/') {
                let rhs = self.factor()?;
                lhs = Expr::div(lhs, rhs);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn factor(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            let inner = self.factor()?;
            return Ok(Expr::neg(inner));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let exp_offset = self.pos;
            let exponent = self.factor()?;
            let value = match exponent {
                Expr::Num(v) => v,
                other => {
                    return Err(self.error_at(
                        exp_offset,
                        format!("exponent must be a constant, found `{other}`"),
                    ))
                }
            };
            return Ok(Expr::powc(base, value));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                self.skip_ws();
                let inner = self.expr()?;
                self.expect(b')', "expected `)`")?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(_) => Err(self.error("expected a number, identifier or `(`")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.peek() == Some(b'.') {
            self.pos += 1;
            while self.peek().is_some_and(|b| b.is_ascii_digit()) {
                self.pos += 1;
            }
        }
        if matches!(self.peek(), Some(b'e') | Some(b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if self.peek().is_some_and(|b| b.is_ascii_digit()) {
                while self.peek().is_some_and(|b| b.is_ascii_digit()) {
                    self.pos += 1;
                }
            } else {
                // Not an exponent after all ("2e" could start "2*exp(..)"-like
                // typos); rewind and let the literal end before the letter.
                self.pos = mark;
            }
        }
        let text = &self.src[start..self.pos];
        let value: f64 = text.parse().map_err(|_| {
            self.error_at(start, format!("invalid numeric literal `{text}`"))
        })?;
        self.skip_ws();
        Ok(Expr::Num(value))
    }

    fn ident(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|b| b.is_ascii_alphanumeric() || b == b'_')
        {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        self.skip_ws();

        if let Some(index) = indexed_var(name) {
            let (kind, n) = index;
            if n == 0 {
                return Err(self.error_at(
                    start,
                    format!("`{name}` is invalid: indices start at 1"),
                ));
            }
            return Ok(match kind {
                b'x' => Expr::Coord(n - 1),
                _ => Expr::Vel(n - 1),
            });
        }

        if self.peek() == Some(b'(') {
            let func = Func::from_name(name).ok_or_else(|| {
                self.error_at(start, format!("unknown function `{name}`"))
            })?;
            self.pos += 1; // consume '('
            self.skip_ws();
            let arg = self.expr()?;
            if self.peek() == Some(b',') {
                return Err(self.error(&format!(
                    "`{name}` takes exactly one argument"
                )));
            }
            self.expect(b')', "expected `)` closing the argument list")?;
            return Ok(Expr::call(func, arg));
        }

        if Func::from_name(name).is_some() {
            return Err(self.error_at(
                start,
                format!("function `{name}` must be applied to an argument"),
            ));
        }

        Ok(Expr::param(name))
    }
}

/// `x<digits>` / `v<digits>` recognition. Returns the marker byte and the
/// numeric index, or `None` if the name is not of that shape.
fn indexed_var(name: &str) -> Option<(u8, usize)> {
    let bytes = name.as_bytes();
    if bytes.len() < 2 || !(bytes[0] == b'x' || bytes[0] == b'v') {
        return None;
    }
    let digits = &name[1..];
    if !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if digits.starts_with('0') {
        // x0, x01, … are rejected later with a pointed message only for the
        // exact-zero case; x01 is treated as a parameter-shaped name error.
        return Some((bytes[0], 0));
    }
    digits.parse().ok().map(|n| (bytes[0], n))
}
