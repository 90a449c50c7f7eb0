//! A deliberately small arithmetic language for config-declared mass and
//! damping entries.
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary ('*' unary)*
//! unary := '-' unary | power
//! power := atom ('^' integer)?
//! atom  := number | 'pi' | variable | ('sin' | 'cos') '(' expr ')' | '(' expr ')'
//! ```
//!
//! Variables are `x1..xr` (cyclic), `y1..y(n-r)` (shape) and `s`, the scalar
//! argument of a diagonal damping function. Indices are 1-based.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Var {
    Cyclic(usize),
    Shape(usize),
    Scalar,
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Cyclic(i) => write!(f, "x{}", i + 1),
            Var::Shape(i) => write!(f, "y{}", i + 1),
            Var::Scalar => write!(f, "s"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

/// Values bound to the variables during evaluation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Bindings<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub s: f64,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens: &tokens, pos: 0, src };
        let e = p.expr()?;
        if p.pos != tokens.len() {
            return Err(Error::Expression(format!(
                "unexpected trailing input in '{src}'"
            )));
        }
        Ok(e)
    }

    pub fn eval(&self, b: &Bindings<'_>) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(Var::Cyclic(i)) => b.x[*i],
            Expr::Var(Var::Shape(i)) => b.y[*i],
            Expr::Var(Var::Scalar) => b.s,
            Expr::Neg(a) => -a.eval(b),
            Expr::Add(l, r) => l.eval(b) + r.eval(b),
            Expr::Sub(l, r) => l.eval(b) - r.eval(b),
            Expr::Mul(l, r) => l.eval(b) * r.eval(b),
            Expr::Pow(a, k) => a.eval(b).powi(*k as i32),
            Expr::Sin(a) => a.eval(b).sin(),
            Expr::Cos(a) => a.eval(b).cos(),
        }
    }

    pub fn variables(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Sin(a) | Expr::Cos(a) => a.collect_vars(out),
            Expr::Add(l, r) | Expr::Sub(l, r) | Expr::Mul(l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    /// Rejects any variable not accepted by `allowed`, naming `context` in the
    /// error.
    pub fn require_vars(&self, context: &str, allowed: impl Fn(Var) -> bool) -> Result<()> {
        match self.variables().into_iter().find(|v| !allowed(*v)) {
            None => Ok(()),
            Some(v) => Err(Error::validation(format!(
                "{context}: variable '{v}' is not allowed here"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' => i += 1,
            '+' => {
                out.push(Tok::Plus);
                i += 1;
            }
            '-' => {
                out.push(Tok::Minus);
                i += 1;
            }
            '*' => {
                out.push(Tok::Star);
                i += 1;
            }
            '^' => {
                out.push(Tok::Caret);
                i += 1;
            }
            '(' => {
                out.push(Tok::LParen);
                i += 1;
            }
            ')' => {
                out.push(Tok::RParen);
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                // exponent part, e.g. 1e-3
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        while j < chars.len() && chars[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v = text
                    .parse::<f64>()
                    .map_err(|_| Error::Expression(format!("bad number '{text}' in '{src}'")))?;
                out.push(Tok::Num(v));
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                out.push(Tok::Ident(chars[start..i].iter().collect()));
            }
            other => {
                return Err(Error::Expression(format!(
                    "unexpected character '{other}' in '{src}'"
                )))
            }
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Tok],
    pos: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn err(&self, what: &str) -> Error {
        Error::Expression(format!("{what} in '{}'", self.src))
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Star) = self.peek() {
            self.pos += 1;
            lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if let Some(Tok::Minus) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Tok::Caret) = self.peek() {
            self.pos += 1;
            match self.next() {
                Some(Tok::Num(k)) if k >= 0.0 && k.fract() == 0.0 && k <= 64.0 => {
                    return Ok(Expr::Pow(Box::new(base), k as u32));
                }
                _ => return Err(self.err("exponent must be a non-negative integer literal")),
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Tok::Num(v)) => Ok(Expr::Const(v)),
            Some(Tok::LParen) => {
                let e = self.expr()?;
                match self.next() {
                    Some(Tok::RParen) => Ok(e),
                    _ => Err(self.err("missing ')'")),
                }
            }
            Some(Tok::Ident(name)) => self.ident(&name),
            _ => Err(self.err("expected a number, variable or '('")),
        }
    }

    fn ident(&mut self, name: &str) -> Result<Expr> {
        match name {
            "pi" => return Ok(Expr::Const(std::f64::consts::PI)),
            "s" => return Ok(Expr::Var(Var::Scalar)),
            "sin" | "cos" => {
                if self.next() != Some(Tok::LParen) {
                    return Err(self.err(&format!("expected '(' after {name}")));
                }
                let arg = self.expr()?;
                if self.next() != Some(Tok::RParen) {
                    return Err(self.err("missing ')'"));
                }
                return Ok(if name == "sin" {
                    Expr::Sin(Box::new(arg))
                } else {
                    Expr::Cos(Box::new(arg))
                });
            }
            _ => {}
        }
        let (kind, digits) = name.split_at(1);
        let index: usize = digits
            .parse()
            .ok()
            .filter(|i| *i >= 1)
            .ok_or_else(|| self.err(&format!("unknown identifier '{name}'")))?;
        match kind {
            "x" => Ok(Expr::Var(Var::Cyclic(index - 1))),
            "y" => Ok(Expr::Var(Var::Shape(index - 1))),
            _ => Err(self.err(&format!("unknown identifier '{name}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str, x: &[f64], y: &[f64]) -> f64 {
        Expr::parse(src).unwrap().eval(&Bindings { x, y, s: 0.0 })
    }

    #[test]
    fn precedence_and_unary_minus() {
        assert_eq!(eval("1 + 2 * 3", &[], &[]), 7.0);
        assert_eq!(eval("-2^2", &[], &[]), -4.0);
        assert_eq!(eval("(1 + 2) * 3 - 4", &[], &[]), 5.0);
        assert_eq!(eval("2 - 3 - 4", &[], &[]), -5.0);
        assert_eq!(eval("1.5e1 * 2", &[], &[]), 30.0);
    }

    #[test]
    fn variables_and_functions() {
        let v = eval("5 + 2*cos(x1) + y2^2", &[0.0], &[0.0, 3.0]);
        assert_eq!(v, 16.0);
        let v = eval("sin(pi * 0.5)", &[], &[]);
        assert!((v - 1.0).abs() < 1e-15);
        let e = Expr::parse("1 + s*s").unwrap();
        assert_eq!(e.eval(&Bindings { s: 2.0, ..Default::default() }), 5.0);
    }

    #[test]
    fn reports_variables() {
        let e = Expr::parse("x1 * y3 + cos(x2)").unwrap();
        let vars: Vec<Var> = e.variables().into_iter().collect();
        assert_eq!(vars, vec![Var::Cyclic(0), Var::Cyclic(1), Var::Shape(2)]);
        assert!(e
            .require_vars("mass", |v| matches!(v, Var::Shape(_)))
            .is_err());
    }

    #[test]
    fn rejects_bad_input() {
        for bad in ["1 +", "x0", "z1", "sin 1", "2 / 3", "x1^1.5", "(1", "tan(1)", "1 2"] {
            assert!(Expr::parse(bad).is_err(), "accepted '{bad}'");
        }
    }
}
