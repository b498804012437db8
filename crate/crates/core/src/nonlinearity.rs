//! Right-hand sides `f(z, u)` from a closed catalog, with exact
//! antiderivative `F(z, u) = int_0^u f(z, s) ds` and its explicit-`z`
//! gradient.
//!
//! Every catalog member is a sum of terms `a(z) * g(u)` where `a` is a
//! polynomial of total degree at most 4 in `x1..xN, y1..yl` and `g` is one of
//! `1`, `u` or `abspow(u, q) = |u|^(q-1) u`.
//!
//! Accepted text: sums and products of numbers, coordinate names, `u`,
//! `abspow(u, q)` and parenthesised sub-expressions, with unary minus and
//! small integer powers `^k` of polynomial factors. Products that would be
//! nonlinear in `u` beyond the catalog (e.g. `u*u`) are rejected.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::MAX_DIM;

/// Largest total degree of a coefficient polynomial.
pub const MAX_DEGREE: u32 = 4;

/// Anything that can play the role of the right-hand side in the identities.
pub trait Source: Sync + Send {
    /// Number of coordinates `N + l`.
    fn dim(&self) -> usize;
    /// `f(z, u)`.
    fn f(&self, z: &[f64], u: f64) -> f64;
    /// `F(z, u)`.
    fn antiderivative(&self, z: &[f64], u: f64) -> f64;
    /// `grad_z F(z, u)` with `u` held fixed.
    fn grad_z_antiderivative(&self, z: &[f64], u: f64, out: &mut [f64]);
    /// Whether `f` depends on `u` at all.
    fn depends_on_u(&self) -> bool;
}

/// Multivariate polynomial as exponent vector -> coefficient.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Poly {
    dim: usize,
    terms: BTreeMap<Vec<u8>, f64>,
}

impl Poly {
    fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: BTreeMap::new(),
        }
    }

    fn constant(dim: usize, c: f64) -> Self {
        let mut p = Self::zero(dim);
        if c != 0.0 {
            p.terms.insert(vec![0; dim], c);
        }
        p
    }

    fn coordinate(dim: usize, axis: usize) -> Self {
        let mut e = vec![0; dim];
        e[axis] = 1;
        let mut p = Self::zero(dim);
        p.terms.insert(e, 1.0);
        p
    }

    fn prune(mut self) -> Self {
        self.terms.retain(|_, c| *c != 0.0);
        self
    }

    fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            *out.terms.entry(e.clone()).or_insert(0.0) += c;
        }
        out.prune()
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero(self.dim);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Vec<u8> = ea
                    .iter()
                    .zip(eb)
                    .map(|(a, b)| a.saturating_add(*b))
                    .collect();
                *out.terms.entry(e).or_insert(0.0) += ca * cb;
            }
        }
        out.prune()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().map(|&v| v as u32).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                c * e
                    .iter()
                    .zip(z)
                    .map(|(&k, &v)| v.powi(k as i32))
                    .product::<f64>()
            })
            .sum()
    }

    /// Adds `scale * grad(self)(z)` into `out`.
    pub fn add_gradient(&self, z: &[f64], scale: f64, out: &mut [f64]) {
        for (e, c) in &self.terms {
            for axis in 0..self.dim {
                if e[axis] == 0 {
                    continue;
                }
                let mut term = c * e[axis] as f64;
                for (k, (&ek, &v)) in e.iter().zip(z).enumerate() {
                    let pow = if k == axis { ek - 1 } else { ek };
                    term *= v.powi(pow as i32);
                }
                out[axis] += scale * term;
            }
        }
    }

    fn depends_on(&self, axis: usize) -> bool {
        self.terms.keys().any(|e| e[axis] > 0)
    }
}

/// The `u`-factor of a catalog term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UFactor {
    One,
    Linear,
    /// `|u|^(q-1) u` with `q > 0`, `q != 1`.
    AbsPow(f64),
}

impl UFactor {
    fn same(&self, other: &UFactor) -> bool {
        match (self, other) {
            (UFactor::AbsPow(a), UFactor::AbsPow(b)) => a.to_bits() == b.to_bits(),
            (a, b) => std::mem::discriminant(a) == std::mem::discriminant(b),
        }
    }

    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        match *self {
            UFactor::One => 1.0,
            UFactor::Linear => u,
            UFactor::AbsPow(q) => {
                if u == 0.0 {
                    0.0
                } else {
                    u.abs().powf(q - 1.0) * u
                }
            }
        }
    }

    /// `int_0^u g(s) ds`.
    #[inline]
    pub fn antiderivative(&self, u: f64) -> f64 {
        match *self {
            UFactor::One => u,
            UFactor::Linear => 0.5 * u * u,
            UFactor::AbsPow(q) => u.abs().powf(q + 1.0) / (q + 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coefficient: Poly,
    pub factor: UFactor,
}

/// Parsed right-hand side: a sum of [`Term`]s with distinct `u`-factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinearity {
    n_x: usize,
    n_y: usize,
    terms: Vec<Term>,
}

impl Nonlinearity {
    pub fn parse(text: &str, n_x: usize, n_y: usize) -> Result<Self> {
        if n_x + n_y > MAX_DIM || n_x + n_y == 0 {
            return Err(Error::Parse {
                position: 0,
                message: format!("unsupported dimension N + l = {}", n_x + n_y),
            });
        }
        let tokens = lex(text)?;
        let mut parser = Parser {
            tokens,
            pos: 0,
            n_x,
            n_y,
        };
        let sum = parser.expr()?;
        if let Some(t) = parser.peek() {
            return Err(Error::Parse {
                position: t.position,
                message: format!("unexpected token '{}'", t.text),
            });
        }
        for term in &sum {
            if term.coefficient.degree() > MAX_DEGREE {
                return Err(Error::Parse {
                    position: 0,
                    message: format!(
                        "polynomial coefficient of degree {} exceeds the maximum {MAX_DEGREE}",
                        term.coefficient.degree()
                    ),
                });
            }
        }
        Ok(Self {
            n_x,
            n_y,
            terms: sum,
        })
    }

    /// The zero right-hand side.
    pub fn zero(n_x: usize, n_y: usize) -> Self {
        Self {
            n_x,
            n_y,
            terms: Vec::new(),
        }
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Whether `F` depends explicitly on the coordinate `axis`.
    pub fn depends_on_coordinate(&self, axis: usize) -> bool {
        self.terms.iter().any(|t| t.coefficient.depends_on(axis))
    }

    fn coordinate_name(&self, axis: usize) -> String {
        if axis < self.n_x {
            format!("x{}", axis + 1)
        } else {
            format!("y{}", axis - self.n_x + 1)
        }
    }
}

impl Source for Nonlinearity {
    fn dim(&self) -> usize {
        self.n_x + self.n_y
    }

    fn f(&self, z: &[f64], u: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coefficient.eval(z) * t.factor.value(u))
            .sum()
    }

    fn antiderivative(&self, z: &[f64], u: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coefficient.eval(z) * t.factor.antiderivative(u))
            .sum()
    }

    fn grad_z_antiderivative(&self, z: &[f64], u: f64, out: &mut [f64]) {
        out[..self.dim()].iter_mut().for_each(|v| *v = 0.0);
        for t in &self.terms {
            let g = t.factor.antiderivative(u);
            if g != 0.0 {
                t.coefficient.add_gradient(z, g, out);
            }
        }
    }

    fn depends_on_u(&self) -> bool {
        self.terms.iter().any(|t| t.factor != UFactor::One)
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first_term = true;
        for t in &self.terms {
            if !first_term {
                write!(f, " + ")?;
            }
            first_term = false;
            let monomials: Vec<String> = t
                .coefficient
                .terms
                .iter()
                .map(|(e, c)| {
                    let mut s = format!("{c}");
                    for (axis, &k) in e.iter().enumerate() {
                        match k {
                            0 => {}
                            1 => s.push_str(&format!("*{}", self.coordinate_name(axis))),
                            _ => s.push_str(&format!("*{}^{k}", self.coordinate_name(axis))),
                        }
                    }
                    s
                })
                .collect();
            let coef = if monomials.len() == 1 {
                monomials[0].clone()
            } else {
                format!("({})", monomials.join(" + "))
            };
            match t.factor {
                UFactor::One => write!(f, "{coef}")?,
                UFactor::Linear => write!(f, "{coef}*u")?,
                UFactor::AbsPow(q) => write!(f, "{coef}*abspow(u,{q})")?,
            }
        }
        Ok(())
    }
}

/// `inner` multiplied by the C^1 bump `prod_k (1 - s_k^2)^2`, where
/// `s_k = (z_k - center_k) / half_width_k`, and zero outside the support box.
#[derive(Debug, Clone)]
pub struct CompactForcing<S> {
    pub inner: S,
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
}

impl<S: Source> CompactForcing<S> {
    pub fn new(inner: S, center: Vec<f64>, half_width: Vec<f64>) -> Result<Self> {
        if center.len() != inner.dim() || half_width.len() != inner.dim() {
            return Err(Error::Dimension {
                expected: inner.dim(),
                found: center.len().min(half_width.len()),
            });
        }
        if half_width.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::Config("support half-widths must be positive".into()));
        }
        Ok(Self {
            inner,
            center,
            half_width,
        })
    }

    /// Bump value and its gradient (written into `grad`).
    pub fn bump(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.inner.dim();
        let mut b = [0.0; MAX_DIM];
        let mut db = [0.0; MAX_DIM];
        for k in 0..d {
            let s = (z[k] - self.center[k]) / self.half_width[k];
            if s.abs() >= 1.0 {
                grad[..d].iter_mut().for_each(|v| *v = 0.0);
                return 0.0;
            }
            let t = 1.0 - s * s;
            b[k] = t * t;
            db[k] = -4.0 * s * t / self.half_width[k];
        }
        let value: f64 = b[..d].iter().product();
        for k in 0..d {
            grad[k] = db[k] * (0..d).filter(|&m| m != k).map(|m| b[m]).product::<f64>();
        }
        value
    }
}

impl<S: Source> Source for CompactForcing<S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn f(&self, z: &[f64], u: f64) -> f64 {
        let mut g = [0.0; MAX_DIM];
        let b = self.bump(z, &mut g);
        if b == 0.0 {
            0.0
        } else {
            b * self.inner.f(z, u)
        }
    }

    fn antiderivative(&self, z: &[f64], u: f64) -> f64 {
        let mut g = [0.0; MAX_DIM];
        let b = self.bump(z, &mut g);
        if b == 0.0 {
            0.0
        } else {
            b * self.inner.antiderivative(z, u)
        }
    }

    fn grad_z_antiderivative(&self, z: &[f64], u: f64, out: &mut [f64]) {
        let d = self.dim();
        let mut gb = [0.0; MAX_DIM];
        let b = self.bump(z, &mut gb);
        if b == 0.0 {
            out[..d].iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        self.inner.grad_z_antiderivative(z, u, out);
        let big_f = self.inner.antiderivative(z, u);
        for k in 0..d {
            out[k] = b * out[k] + big_f * gb[k];
        }
    }

    fn depends_on_u(&self) -> bool {
        self.inner.depends_on_u()
    }
}

// ---------------------------------------------------------------------------
// parsing

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
    Comma,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    position: usize,
    text: String,
}

fn lex(text: &str) -> Result<Vec<Token>> {
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
        let single = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Token {
                tok,
                position: start,
                text: c.to_string(),
            });
            i += 1;
            continue;
        }
        if c.is_ascii_digit() || c == '.' {
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
            let s = &text[start..i];
            let v: f64 = s.parse().map_err(|_| Error::Parse {
                position: start,
                message: format!("malformed number '{s}'"),
            })?;
            out.push(Token {
                tok: Tok::Num(v),
                position: start,
                text: s.to_string(),
            });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let s = &text[start..i];
            out.push(Token {
                tok: Tok::Ident(s.to_string()),
                position: start,
                text: s.to_string(),
            });
            continue;
        }
        return Err(Error::Parse {
            position: start,
            message: format!("unexpected character '{c}'"),
        });
    }
    Ok(out)
}

type Sum = Vec<Term>;

fn normalize(terms: Sum) -> Sum {
    let mut out: Sum = Vec::new();
    for t in terms {
        if let Some(existing) = out.iter_mut().find(|e| e.factor.same(&t.factor)) {
            existing.coefficient = existing.coefficient.add(&t.coefficient);
        } else {
            out.push(t);
        }
    }
    out.retain(|t| !t.coefficient.is_zero());
    out
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    n_x: usize,
    n_y: usize,
}

impl Parser {
    fn dim(&self) -> usize {
        self.n_x + self.n_y
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn end_position(&self) -> usize {
        self.tokens
            .last()
            .map(|t| t.position + t.text.len())
            .unwrap_or(0)
    }

    fn error_here(&self, message: impl Into<String>) -> Error {
        let position = self
            .peek()
            .map(|t| t.position)
            .unwrap_or_else(|| self.end_position());
        Error::Parse {
            position,
            message: message.into(),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Token> {
        match self.peek() {
            Some(t) if t.tok == tok => {
                let t = t.clone();
                self.pos += 1;
                Ok(t)
            }
            Some(t) => Err(Error::Parse {
                position: t.position,
                message: format!("expected {what}, found '{}'", t.text),
            }),
            None => Err(self.error_here(format!("expected {what}, found end of input"))),
        }
    }

    fn expr(&mut self) -> Result<Sum> {
        let mut acc = self.term()?;
        loop {
            match self.peek().map(|t| t.tok.clone()) {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    acc.extend(self.term()?);
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    acc.extend(negate(self.dim(), self.term()?));
                }
                _ => break,
            }
        }
        Ok(normalize(acc))
    }

    fn term(&mut self) -> Result<Sum> {
        let mut acc = self.unary()?;
        while let Some(Tok::Star) = self.peek().map(|t| t.tok.clone()) {
            let star = self.pos;
            self.pos += 1;
            let rhs = self.unary()?;
            acc = multiply(&acc, &rhs).map_err(|m| Error::Parse {
                position: self.tokens[star].position,
                message: m,
            })?;
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Sum> {
        match self.peek().map(|t| t.tok.clone()) {
            Some(Tok::Minus) => {
                self.pos += 1;
                Ok(negate(self.dim(), self.unary()?))
            }
            Some(Tok::Plus) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Sum> {
        let base = self.atom()?;
        if let Some(Tok::Caret) = self.peek().map(|t| t.tok.clone()) {
            let caret = self.tokens[self.pos].position;
            self.pos += 1;
            let tok = self.expect_number("an integer exponent")?;
            let k = match tok.tok {
                Tok::Num(v) if v.fract() == 0.0 && (0.0..=MAX_DEGREE as f64).contains(&v) => {
                    v as u32
                }
                _ => {
                    return Err(Error::Parse {
                        position: tok.position,
                        message: format!(
                            "exponent must be an integer in 0..={MAX_DEGREE}, found '{}'",
                            tok.text
                        ),
                    })
                }
            };
            if base.iter().any(|t| t.factor != UFactor::One) {
                return Err(Error::Parse {
                    position: caret,
                    message: "powers of u are only available through abspow(u, q)".into(),
                });
            }
            let mut acc = vec![Term {
                coefficient: Poly::constant(self.dim(), 1.0),
                factor: UFactor::One,
            }];
            for _ in 0..k {
                acc = multiply(&acc, &base).map_err(|m| Error::Parse {
                    position: caret,
                    message: m,
                })?;
            }
            return Ok(acc);
        }
        Ok(base)
    }

    fn expect_number(&mut self, what: &str) -> Result<Token> {
        match self.peek() {
            Some(t) if matches!(t.tok, Tok::Num(_)) => {
                let t = t.clone();
                self.pos += 1;
                Ok(t)
            }
            Some(t) => Err(Error::Parse {
                position: t.position,
                message: format!("expected {what}, found '{}'", t.text),
            }),
            None => Err(self.error_here(format!("expected {what}, found end of input"))),
        }
    }

    fn atom(&mut self) -> Result<Sum> {
        let dim = self.dim();
        let Some(t) = self.peek().cloned() else {
            return Err(self.error_here("unexpected end of input"));
        };
        self.pos += 1;
        match t.tok {
            Tok::Num(v) => Ok(normalize(vec![Term {
                coefficient: Poly::constant(dim, v),
                factor: UFactor::One,
            }])),
            Tok::LParen => {
                let inner = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Tok::Ident(name) => self.identifier(&name, t.position),
            _ => Err(Error::Parse {
                position: t.position,
                message: format!("unexpected token '{}'", t.text),
            }),
        }
    }

    fn identifier(&mut self, name: &str, position: usize) -> Result<Sum> {
        let dim = self.dim();
        if name == "u" {
            return Ok(vec![Term {
                coefficient: Poly::constant(dim, 1.0),
                factor: UFactor::Linear,
            }]);
        }
        if name == "abspow" {
            self.expect(Tok::LParen, "'(' after abspow")?;
            match self.peek() {
                Some(Token {
                    tok: Tok::Ident(s), ..
                }) if s == "u" => self.pos += 1,
                _ => return Err(self.error_here("abspow takes 'u' as its first argument")),
            }
            self.expect(Tok::Comma, "','")?;
            let negative = matches!(self.peek().map(|t| &t.tok), Some(Tok::Minus));
            if negative {
                self.pos += 1;
            }
            let q_tok = self.expect_number("the exponent q")?;
            let Tok::Num(mut q) = q_tok.tok else {
                unreachable!()
            };
            if negative {
                q = -q;
            }
            if !(q > 0.0) || !q.is_finite() {
                return Err(Error::Parse {
                    position: q_tok.position,
                    message: format!("abspow exponent must be positive, found {q}"),
                });
            }
            self.expect(Tok::RParen, "')'")?;
            let factor = if q == 1.0 {
                UFactor::Linear
            } else {
                UFactor::AbsPow(q)
            };
            return Ok(vec![Term {
                coefficient: Poly::constant(dim, 1.0),
                factor,
            }]);
        }
        let axis = parse_coordinate(name, self.n_x, self.n_y).ok_or_else(|| Error::Parse {
            position,
            message: format!(
                "unknown name '{name}' (expected u, abspow, x1..x{}, y1..y{})",
                self.n_x, self.n_y
            ),
        })?;
        Ok(vec![Term {
            coefficient: Poly::coordinate(dim, axis),
            factor: UFactor::One,
        }])
    }
}

fn parse_coordinate(name: &str, n_x: usize, n_y: usize) -> Option<usize> {
    let (head, rest) = name.split_at(1);
    let k: usize = rest.parse().ok()?;
    if k == 0 || rest.starts_with('0') {
        return None;
    }
    match head {
        "x" if k <= n_x => Some(k - 1),
        "y" if k <= n_y => Some(n_x + k - 1),
        _ => None,
    }
}

fn negate(dim: usize, s: Sum) -> Sum {
    let minus = Poly::constant(dim, -1.0);
    s.into_iter()
        .map(|t| Term {
            coefficient: t.coefficient.mul(&minus),
            factor: t.factor,
        })
        .collect()
}

fn multiply(a: &Sum, b: &Sum) -> std::result::Result<Sum, String> {
    let mut out = Vec::new();
    for ta in a {
        for tb in b {
            let factor = match (ta.factor, tb.factor) {
                (UFactor::One, f) | (f, UFactor::One) => f,
                _ => {
                    return Err(
                        "product of two u-dependent factors is outside the supported catalog"
                            .into(),
                    )
                }
            };
            out.push(Term {
                coefficient: ta.coefficient.mul(&tb.coefficient),
                factor,
            });
        }
    }
    Ok(normalize(out))
}
