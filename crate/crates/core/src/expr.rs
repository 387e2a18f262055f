//! Closed-form scalar expressions in `x1`, `x2` with exact symbolic derivatives.
//!
//! Grammar: numbers, `x1`, `x2`, `pi`, `+ - * /`, integer powers `^n`,
//! `sin`, `cos`, `exp` and parentheses. The unicode symbols `·` and `−` are
//! accepted as aliases of `*` and `-`.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Var {
    X1,
    X2,
}

#[derive(Debug, PartialEq)]
enum Node {
    Const(f64),
    Var(Var),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Neg(Expr),
    Pow(Expr, i32),
    Sin(Expr),
    Cos(Expr),
    Exp(Expr),
}

/// Immutable, cheaply clonable expression tree.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr(Arc<Node>);

impl Expr {
    fn node(n: Node) -> Self {
        Expr(Arc::new(n))
    }

    pub fn constant(c: f64) -> Self {
        Self::node(Node::Const(c))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn x1() -> Self {
        Self::node(Node::Var(Var::X1))
    }

    pub fn x2() -> Self {
        Self::node(Node::Var(Var::X2))
    }

    pub fn var(v: Var) -> Self {
        Self::node(Node::Var(v))
    }

    /// `Some(c)` if the expression is the literal constant `c`.
    pub fn as_const(&self) -> Option<f64> {
        match *self.0 {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    /// True when the expression does not depend on `x1` or `x2`.
    pub fn is_constant(&self) -> bool {
        match &*self.0 {
            Node::Const(_) => true,
            Node::Var(_) => false,
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => a.is_constant() && b.is_constant(),
            Node::Neg(a) | Node::Pow(a, _) | Node::Sin(a) | Node::Cos(a) | Node::Exp(a) => a.is_constant(),
        }
    }

    pub fn powi(&self, n: i32) -> Self {
        if n == 0 {
            return Self::one();
        }
        if n == 1 {
            return self.clone();
        }
        if let Some(c) = self.as_const() {
            return Self::constant(c.powi(n));
        }
        if let Node::Pow(base, m) = &*self.0 {
            return base.powi(m * n);
        }
        Self::node(Node::Pow(self.clone(), n))
    }

    pub fn sin(&self) -> Self {
        match self.as_const() {
            Some(c) => Self::constant(c.sin()),
            None => Self::node(Node::Sin(self.clone())),
        }
    }

    pub fn cos(&self) -> Self {
        match self.as_const() {
            Some(c) => Self::constant(c.cos()),
            None => Self::node(Node::Cos(self.clone())),
        }
    }

    pub fn exp(&self) -> Self {
        match self.as_const() {
            Some(c) => Self::constant(c.exp()),
            None => Self::node(Node::Exp(self.clone())),
        }
    }

    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        match &*self.0 {
            Node::Const(c) => *c,
            Node::Var(Var::X1) => x1,
            Node::Var(Var::X2) => x2,
            Node::Add(a, b) => a.eval(x1, x2) + b.eval(x1, x2),
            Node::Sub(a, b) => a.eval(x1, x2) - b.eval(x1, x2),
            Node::Mul(a, b) => a.eval(x1, x2) * b.eval(x1, x2),
            Node::Div(a, b) => a.eval(x1, x2) / b.eval(x1, x2),
            Node::Neg(a) => -a.eval(x1, x2),
            Node::Pow(a, n) => a.eval(x1, x2).powi(*n),
            Node::Sin(a) => a.eval(x1, x2).sin(),
            Node::Cos(a) => a.eval(x1, x2).cos(),
            Node::Exp(a) => a.eval(x1, x2).exp(),
        }
    }

    /// Exact partial derivative.
    pub fn diff(&self, v: Var) -> Self {
        match &*self.0 {
            Node::Const(_) => Self::zero(),
            Node::Var(u) => Self::constant(if *u == v { 1.0 } else { 0.0 }),
            Node::Add(a, b) => a.diff(v) + b.diff(v),
            Node::Sub(a, b) => a.diff(v) - b.diff(v),
            Node::Mul(a, b) => a.diff(v) * b.clone() + a.clone() * b.diff(v),
            Node::Div(a, b) => (a.diff(v) * b.clone() - a.clone() * b.diff(v)) / b.powi(2),
            Node::Neg(a) => -a.diff(v),
            Node::Pow(a, n) => Self::constant(*n as f64) * a.powi(n - 1) * a.diff(v),
            Node::Sin(a) => a.cos() * a.diff(v),
            Node::Cos(a) => -(a.sin() * a.diff(v)),
            Node::Exp(a) => self.clone() * a.diff(v),
        }
    }

    pub fn d1(&self) -> Self {
        self.diff(Var::X1)
    }

    pub fn d2(&self) -> Self {
        self.diff(Var::X2)
    }

    /// Derivative along the axis with index `axis` (0 → x1, 1 → x2).
    pub fn d(&self, axis: usize) -> Self {
        match axis {
            0 => self.d1(),
            1 => self.d2(),
            _ => panic!("axis {axis} out of range"),
        }
    }

    /// Exact gradient.
    pub fn grad(&self) -> [Expr; 2] {
        [self.d1(), self.d2()]
    }

    /// Exact Hessian.
    pub fn hessian(&self) -> [[Expr; 2]; 2] {
        let [a, b] = self.grad();
        let off = a.d2();
        [[a.d1(), off.clone()], [off, b.d2()]]
    }

    pub fn parse(text: &str) -> Result<Self> {
        Parser::new(text).parse()
    }

    fn precedence(&self) -> u8 {
        match &*self.0 {
            Node::Add(..) | Node::Sub(..) => 1,
            Node::Mul(..) | Node::Div(..) => 2,
            Node::Neg(_) => 3,
            Node::Const(c) if *c < 0.0 => 3,
            Node::Pow(..) => 4,
            _ => 5,
        }
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Self {
        Expr::constant(c)
    }
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a + b),
            (Some(0.0), _) => rhs,
            (_, Some(0.0)) => self,
            _ => Expr::node(Node::Add(self, rhs)),
        }
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a - b),
            (Some(0.0), _) => -rhs,
            (_, Some(0.0)) => self,
            _ => Expr::node(Node::Sub(self, rhs)),
        }
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a * b),
            (Some(0.0), _) | (_, Some(0.0)) => Expr::zero(),
            (Some(1.0), _) => rhs,
            (_, Some(1.0)) => self,
            (Some(-1.0), _) => -rhs,
            (_, Some(-1.0)) => -self,
            (None, Some(_)) => Expr::node(Node::Mul(rhs, self)),
            _ => Expr::node(Node::Mul(self, rhs)),
        }
    }
}

impl Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        match (self.as_const(), rhs.as_const()) {
            (Some(a), Some(b)) => Expr::constant(a / b),
            (Some(0.0), _) => Expr::zero(),
            (_, Some(1.0)) => self,
            _ => Expr::node(Node::Div(self, rhs)),
        }
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match &*self.0 {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(a) => a.clone(),
            _ => Expr::node(Node::Neg(self)),
        }
    }
}

macro_rules! ref_ops {
    ($($tr:ident $m:ident),*) => {$(
        impl $tr<&Expr> for &Expr {
            type Output = Expr;
            fn $m(self, rhs: &Expr) -> Expr {
                $tr::$m(self.clone(), rhs.clone())
            }
        }
        impl $tr<f64> for Expr {
            type Output = Expr;
            fn $m(self, rhs: f64) -> Expr {
                $tr::$m(self, Expr::constant(rhs))
            }
        }
        impl $tr<Expr> for f64 {
            type Output = Expr;
            fn $m(self, rhs: Expr) -> Expr {
                $tr::$m(Expr::constant(self), rhs)
            }
        }
    )*};
}

ref_ops!(Add add, Sub sub, Mul mul, Div div);

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -self.clone()
    }
}

impl std::iter::Sum for Expr {
    fn sum<I: Iterator<Item = Expr>>(iter: I) -> Expr {
        iter.fold(Expr::zero(), |acc, e| acc + e)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, e: &Expr, min: u8| -> fmt::Result {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match &*self.0 {
            Node::Const(c) => write!(f, "{c}"),
            Node::Var(Var::X1) => write!(f, "x1"),
            Node::Var(Var::X2) => write!(f, "x2"),
            Node::Add(a, b) => {
                wrap(f, a, 1)?;
                write!(f, " + ")?;
                wrap(f, b, 2)
            }
            Node::Sub(a, b) => {
                wrap(f, a, 1)?;
                write!(f, " - ")?;
                wrap(f, b, 2)
            }
            Node::Mul(a, b) => {
                wrap(f, a, 2)?;
                write!(f, "*")?;
                wrap(f, b, 3)
            }
            Node::Div(a, b) => {
                wrap(f, a, 2)?;
                write!(f, "/")?;
                wrap(f, b, 4)
            }
            Node::Neg(a) => {
                write!(f, "-")?;
                wrap(f, a, 4)
            }
            Node::Pow(a, n) => {
                wrap(f, a, 5)?;
                if *n < 0 {
                    write!(f, "^({n})")
                } else {
                    write!(f, "^{n}")
                }
            }
            Node::Sin(a) => write!(f, "sin({a})"),
            Node::Cos(a) => write!(f, "cos({a})"),
            Node::Exp(a) => write!(f, "exp({a})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(usize, usize),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    peeked: Option<(usize, Token)>,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            src,
            pos: 0,
            peeked: None,
        }
    }

    fn err<T>(&self, pos: usize, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse { pos, msg: msg.into() })
    }

    fn lex(&mut self) -> Result<(usize, Token)> {
        let rest = &self.src[self.pos..];
        let trimmed = rest.trim_start();
        self.pos += rest.len() - trimmed.len();
        let start = self.pos;
        let Some(ch) = trimmed.chars().next() else {
            return Ok((start, Token::End));
        };
        let single = match ch {
            '+' => Some(Token::Plus),
            '-' | '−' => Some(Token::Minus),
            '*' | '·' => Some(Token::Star),
            '/' => Some(Token::Slash),
            '^' => Some(Token::Caret),
            '(' => Some(Token::LParen),
            ')' => Some(Token::RParen),
            _ => None,
        };
        if let Some(tok) = single {
            self.pos += ch.len_utf8();
            return Ok((start, tok));
        }
        if ch.is_ascii_digit() || ch == '.' {
            let bytes = trimmed.as_bytes();
            let mut end = 0;
            while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
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
            let text = &trimmed[..end];
            self.pos += end;
            return match text.parse::<f64>() {
                Ok(v) => Ok((start, Token::Num(v))),
                Err(_) => self.err(start, format!("invalid number '{text}'")),
            };
        }
        if ch.is_ascii_alphabetic() {
            let end = trimmed
                .find(|c: char| !c.is_ascii_alphanumeric() && c != '_')
                .unwrap_or(trimmed.len());
            self.pos += end;
            return Ok((start, Token::Ident(start, start + end)));
        }
        self.err(start, format!("unexpected character '{ch}'"))
    }

    fn peek(&mut self) -> Result<(usize, Token)> {
        if self.peeked.is_none() {
            self.peeked = Some(self.lex()?);
        }
        Ok(self.peeked.unwrap())
    }

    fn next(&mut self) -> Result<(usize, Token)> {
        let t = self.peek()?;
        self.peeked = None;
        Ok(t)
    }

    fn parse(mut self) -> Result<Expr> {
        let e = self.expr()?;
        match self.next()? {
            (_, Token::End) => Ok(e),
            (pos, _) => self.err(pos, "unexpected trailing input"),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek()?.1 {
                Token::Plus => {
                    self.next()?;
                    lhs = lhs + self.term()?;
                }
                Token::Minus => {
                    self.next()?;
                    lhs = lhs - self.term()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek()?.1 {
                Token::Star => {
                    self.next()?;
                    lhs = lhs * self.unary()?;
                }
                Token::Slash => {
                    self.next()?;
                    lhs = lhs / self.unary()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek()?.1 {
            Token::Minus => {
                self.next()?;
                Ok(-self.unary()?)
            }
            Token::Plus => {
                self.next()?;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek()?.1 != Token::Caret {
            return Ok(base);
        }
        self.next()?;
        let (pos, tok) = self.next()?;
        let (n, paren) = match tok {
            Token::LParen => (self.signed_int()?, true),
            Token::Num(_) | Token::Minus | Token::Plus => {
                self.peeked = Some((pos, tok));
                (self.signed_int()?, false)
            }
            _ => return self.err(pos, "expected an integer exponent"),
        };
        if paren {
            match self.next()? {
                (_, Token::RParen) => {}
                (p, _) => return self.err(p, "expected ')' after exponent"),
            }
        }
        Ok(base.powi(n))
    }

    fn signed_int(&mut self) -> Result<i32> {
        let (pos, mut tok) = self.next()?;
        let mut sign = 1;
        if tok == Token::Minus || tok == Token::Plus {
            if tok == Token::Minus {
                sign = -1;
            }
            tok = self.next()?.1;
        }
        match tok {
            Token::Num(v) if v.fract() == 0.0 && v.abs() <= i32::MAX as f64 => Ok(sign * v as i32),
            _ => self.err(pos, "exponent must be an integer"),
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        let (pos, tok) = self.next()?;
        match tok {
            Token::Num(v) => Ok(Expr::constant(v)),
            Token::LParen => {
                let e = self.expr()?;
                match self.next()? {
                    (_, Token::RParen) => Ok(e),
                    (p, _) => self.err(p, "expected ')'"),
                }
            }
            Token::Ident(a, b) => {
                let name = &self.src[a..b];
                match name {
                    "x1" => Ok(Expr::x1()),
                    "x2" => Ok(Expr::x2()),
                    "pi" => Ok(Expr::constant(std::f64::consts::PI)),
                    "sin" | "cos" | "exp" => {
                        match self.next()? {
                            (_, Token::LParen) => {}
                            (p, _) => return self.err(p, format!("expected '(' after {name}")),
                        }
                        let arg = self.expr()?;
                        match self.next()? {
                            (_, Token::RParen) => {}
                            (p, _) => return self.err(p, "expected ')'"),
                        }
                        Ok(match name {
                            "sin" => arg.sin(),
                            "cos" => arg.cos(),
                            _ => arg.exp(),
                        })
                    }
                    _ => self.err(pos, format!("unknown identifier '{name}'")),
                }
            }
            Token::End => self.err(pos, "unexpected end of expression"),
            _ => self.err(pos, "expected a number, variable, function or '('"),
        }
    }
}
