//! Arithmetic expressions over point coordinates.
//!
//! Grammar: `+ - *`, unary minus, parentheses, decimal constants, the
//! variables `x y z` (or `x0 x1 …`), and the functions `min`, `max`, `abs`.

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::levelling::Field;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Min(Vec<Expr>),
    Max(Vec<Expr>),
    Abs(Box<Expr>),
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::Expression {
            pos: self.pos,
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while self.eat(b'*') {
            lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return self.err("expected `)`");
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(c) => self.err(format!("unexpected `{}`", c as char)),
            None => self.err("unexpected end of expression"),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
        {
            self.pos += 1;
        }
        // exponent part
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            if self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        match text.parse::<f64>() {
            Ok(v) => Ok(Expr::Const(v)),
            Err(_) => {
                self.pos = start;
                self.err(format!("bad number `{text}`"))
            }
        }
    }

    fn ident(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        match name {
            "x" => return Ok(Expr::Var(0)),
            "y" => return Ok(Expr::Var(1)),
            "z" => return Ok(Expr::Var(2)),
            "min" | "max" | "abs" => {}
            _ => {
                if let Some(k) = name.strip_prefix('x').and_then(|k| k.parse().ok()) {
                    return Ok(Expr::Var(k));
                }
                self.pos = start;
                return self.err(format!("unknown identifier `{name}`"));
            }
        }
        if !self.eat(b'(') {
            return self.err(format!("expected `(` after `{name}`"));
        }
        let mut args = vec![self.expr()?];
        while self.eat(b',') {
            args.push(self.expr()?);
        }
        if !self.eat(b')') {
            return self.err("expected `)`");
        }
        match name {
            "abs" if args.len() == 1 => Ok(Expr::Abs(Box::new(args.pop().unwrap()))),
            "abs" => self.err("abs takes one argument"),
            "min" => Ok(Expr::Min(args)),
            _ => Ok(Expr::Max(args)),
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let mut p = Parser {
            src: src.as_bytes(),
            pos: 0,
        };
        let e = p.expr()?;
        if p.peek().is_some() {
            return p.err("trailing input");
        }
        Ok(e)
    }

    /// Highest variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(k) => Some(*k),
            Expr::Neg(a) | Expr::Abs(a) => a.max_var(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => a.max_var().max(b.max_var()),
            Expr::Min(v) | Expr::Max(v) => v.iter().filter_map(Expr::max_var).max(),
        }
    }

    pub fn eval(&self, c: &[f64]) -> f64 {
        match self {
            Expr::Const(v) => *v,
            Expr::Var(k) => c[*k],
            Expr::Neg(a) => -a.eval(c),
            Expr::Add(a, b) => a.eval(c) + b.eval(c),
            Expr::Sub(a, b) => a.eval(c) - b.eval(c),
            Expr::Mul(a, b) => a.eval(c) * b.eval(c),
            Expr::Min(v) => v.iter().map(|e| e.eval(c)).fold(f64::INFINITY, f64::min),
            Expr::Max(v) => v.iter().map(|e| e.eval(c)).fold(f64::NEG_INFINITY, f64::max),
            Expr::Abs(a) => a.eval(c).abs(),
        }
    }

    /// Evaluate at every point of a domain with coordinates.
    pub fn field(&self, d: &Domain) -> Result<Field> {
        let mut out = Vec::with_capacity(d.num_points());
        for j in 0..d.num_points() {
            let c = d.coords(j).ok_or(Error::MissingCoordinates)?;
            if let Some(k) = self.max_var() {
                if k >= c.len() {
                    return Err(Error::Expression {
                        pos: 0,
                        msg: format!("variable {k} exceeds point dimension {}", c.len()),
                    });
                }
            }
            out.push(self.eval(c));
        }
        Field::new(d, out)
    }
}
