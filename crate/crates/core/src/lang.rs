//! A small expression language for coefficient fields.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' unary)?
//! primary := number | constant | variable | call | '(' expr ')'
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-x1^2`
//! is `-(x1^2)` while `x1^-2` is accepted. Variables are `x1..xm` and
//! `y1..yr`; constants are `pi` and `e`.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{Dims, Field, Point, ScalarField, Var};
use crate::jet::Jet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Pow,
}

impl Func {
    const ALL: [Func; 8] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Ln,
        Func::Sqrt,
        Func::Abs,
        Func::Pow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Pow => "pow",
        }
    }

    pub fn arity(self) -> usize {
        if self == Func::Pow {
            2
        } else {
            1
        }
    }

    fn lookup(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Constant {
    Pi,
    E,
}

impl Constant {
    pub fn value(self) -> f64 {
        match self {
            Constant::Pi => std::f64::consts::PI,
            Constant::E => std::f64::consts::E,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Const(Constant),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl fmt::Display for Expr {
    /// Fully parenthesised; re-parsing the output yields the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => {
                write!(f, "(-{:?})", -v)
            }
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Const(Constant::Pi) => f.write_str("pi"),
            Expr::Const(Constant::E) => f.write_str("e"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Value-level arithmetic shared by the real and jet evaluators, so both
/// produce bit-identical values.
trait Num: Sized {
    fn lit(&self, v: f64) -> Self;
    fn val(&self) -> f64;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Result<Self>;
    fn neg(&self) -> Self;
    fn powi(&self, n: i32) -> Result<Self>;
    fn exp(&self) -> Self;
    fn ln(&self) -> Result<Self>;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn tan(&self) -> Result<Self>;
    fn sqrt(&self) -> Result<Self>;
    fn abs(&self) -> Result<Self>;
}

impl Num for f64 {
    fn lit(&self, v: f64) -> Self {
        v
    }
    fn val(&self) -> f64 {
        *self
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Result<Self> {
        if *o == 0.0 {
            return Err(Error::NonSmoothPoint("division by zero".to_string()));
        }
        Ok(self / o)
    }
    fn neg(&self) -> Self {
        -self
    }
    fn powi(&self, n: i32) -> Result<Self> {
        if n < 0 && *self == 0.0 {
            return Err(Error::NonSmoothPoint(format!("0^{n}")));
        }
        Ok(f64::powi(*self, n))
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Result<Self> {
        if *self <= 0.0 {
            return Err(Error::NonSmoothPoint(format!(
                "ln at non-positive argument {self}"
            )));
        }
        Ok(f64::ln(*self))
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn tan(&self) -> Result<Self> {
        if f64::cos(*self) == 0.0 {
            return Err(Error::NonSmoothPoint(format!("tan pole at {self}")));
        }
        Ok(f64::tan(*self))
    }
    fn sqrt(&self) -> Result<Self> {
        if *self < 0.0 {
            return Err(Error::NonSmoothPoint(format!("sqrt at {self}")));
        }
        Ok(f64::sqrt(*self))
    }
    fn abs(&self) -> Result<Self> {
        Ok(f64::abs(*self))
    }
}

impl Num for Jet {
    fn lit(&self, v: f64) -> Self {
        self.constant_like(v)
    }
    fn val(&self) -> f64 {
        self.value()
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Result<Self> {
        self.checked_div(o)
    }
    fn neg(&self) -> Self {
        -self
    }
    fn powi(&self, n: i32) -> Result<Self> {
        Jet::powi(self, n)
    }
    fn exp(&self) -> Self {
        Jet::exp(self)
    }
    fn ln(&self) -> Result<Self> {
        Jet::ln(self)
    }
    fn sin(&self) -> Self {
        Jet::sin(self)
    }
    fn cos(&self) -> Self {
        Jet::cos(self)
    }
    fn tan(&self) -> Result<Self> {
        Jet::tan(self)
    }
    fn sqrt(&self) -> Result<Self> {
        Jet::sqrt(self)
    }
    fn abs(&self) -> Result<Self> {
        Jet::abs(self)
    }
}

impl Expr {
    /// Variables syntactically present.
    pub fn variables(&self) -> BTreeSet<Var> {
        let mut s = BTreeSet::new();
        self.collect_vars(&mut s);
        s
    }

    fn collect_vars(&self, s: &mut BTreeSet<Var>) {
        match self {
            Expr::Var(v) => {
                s.insert(*v);
            }
            Expr::Neg(a) => a.collect_vars(s),
            Expr::Bin(_, a, b) => {
                a.collect_vars(s);
                b.collect_vars(s);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_vars(s)),
            Expr::Num(_) | Expr::Const(_) => {}
        }
    }

    /// The exponent as an `i32` when it is a variable-free subtree with an
    /// exact integer value.
    fn integer_exponent(&self) -> Option<i32> {
        if !self.variables().is_empty() {
            return None;
        }
        let v = self.eval_num(&0.0, &|_| unreachable!()).ok()?;
        (v.fract() == 0.0 && v.abs() <= i32::MAX as f64).then_some(v as i32)
    }

    fn eval_num<T: Num>(&self, proto: &T, var: &dyn Fn(Var) -> T) -> Result<T> {
        Ok(match self {
            Expr::Num(v) => proto.lit(*v),
            Expr::Const(c) => proto.lit(c.value()),
            Expr::Var(v) => var(*v),
            Expr::Neg(a) => a.eval_num(proto, var)?.neg(),
            Expr::Bin(op, a, b) => {
                if *op == BinOp::Pow {
                    return power(a, b, proto, var);
                }
                let (a, b) = (a.eval_num(proto, var)?, b.eval_num(proto, var)?);
                match op {
                    BinOp::Add => a.add(&b),
                    BinOp::Sub => a.sub(&b),
                    BinOp::Mul => a.mul(&b),
                    BinOp::Div => a.div(&b)?,
                    BinOp::Pow => unreachable!(),
                }
            }
            Expr::Call(Func::Pow, args) => return power(&args[0], &args[1], proto, var),
            Expr::Call(f, args) => {
                let a = args[0].eval_num(proto, var)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tan => a.tan()?,
                    Func::Exp => a.exp(),
                    Func::Ln => a.ln()?,
                    Func::Sqrt => a.sqrt()?,
                    Func::Abs => a.abs()?,
                    Func::Pow => unreachable!(),
                }
            }
        })
    }

    /// Real evaluation with `x` and `y` coordinates.
    pub fn eval(&self, at: &Point) -> Result<f64> {
        self.eval_num(&0.0, &|v| match v {
            Var::X(i) => at.x[i],
            Var::Y(a) => at.y[a],
        })
    }

    /// Jet evaluation; `vars` are the seeded jets of `x1..xm, y1..yr`.
    pub fn eval_jet(&self, vars: &[Jet], dims: Dims) -> Result<Jet> {
        let proto = vars
            .first()
            .cloned()
            .unwrap_or_else(|| Jet::constant(0.0, 0, 0));
        self.eval_num(&proto, &|v| vars[dims.index(v)].clone())
    }
}

fn power<T: Num>(base: &Expr, exponent: &Expr, proto: &T, var: &dyn Fn(Var) -> T) -> Result<T> {
    let a = base.eval_num(proto, var)?;
    if let Some(n) = exponent.integer_exponent() {
        return a.powi(n);
    }
    let b = exponent.eval_num(proto, var)?;
    if a.val() <= 0.0 {
        return Err(Error::NonSmoothPoint(format!(
            "non-integer power of non-positive base {}",
            a.val()
        )));
    }
    Ok(b.mul(&a.ln()?).exp())
}

const EXPECT_OPERAND: [&str; 4] = ["number", "identifier", "(", "-"];

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dims: Dims,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn syntax(&self, expected: &[&str]) -> Error {
        Error::Syntax {
            offset: self.pos,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
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
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        let base = self.primary()?;
        if self.eat(b'^') {
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(b')') {
                    return Err(self.syntax(&[")", "operator"]));
                }
                Ok(e)
            }
            _ => Err(self.syntax(&EXPECT_OPERAND)),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let s = self.src;
        let digits = |mut p: usize| {
            while p < s.len() && s[p].is_ascii_digit() {
                p += 1;
            }
            p
        };
        let mut p = digits(start);
        if p < s.len() && s[p] == b'.' {
            p = digits(p + 1);
        }
        if p < s.len() && (s[p] == b'e' || s[p] == b'E') {
            let mut q = p + 1;
            if q < s.len() && (s[q] == b'+' || s[q] == b'-') {
                q += 1;
            }
            if q < s.len() && s[q].is_ascii_digit() {
                p = digits(q);
            }
        }
        let text = std::str::from_utf8(&s[start..p]).expect("ascii");
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => {
                self.pos = p;
                Ok(Expr::Num(v))
            }
            _ => Err(self.syntax(&["number"])),
        }
    }

    fn identifier(&mut self) -> Result<Expr> {
        let start = self.pos;
        let mut p = start;
        while p < self.src.len() && (self.src[p].is_ascii_alphanumeric() || self.src[p] == b'_') {
            p += 1;
        }
        let name = std::str::from_utf8(&self.src[start..p]).expect("ascii");
        self.pos = p;
        if let Some(func) = Func::lookup(name) {
            return self.call(func, start);
        }
        match name {
            "pi" => return Ok(Expr::Const(Constant::Pi)),
            "e" => return Ok(Expr::Const(Constant::E)),
            _ => {}
        }
        if let Some(v) = self.variable(name) {
            return Ok(Expr::Var(v));
        }
        Err(Error::UnknownIdentifier {
            name: name.to_string(),
            offset: start,
        })
    }

    fn variable(&self, name: &str) -> Option<Var> {
        let (kind, digits) = name.split_at(1);
        if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit())
        {
            return None;
        }
        let k: usize = digits.parse().ok()?;
        match kind {
            "x" if k <= self.dims.m => Some(Var::X(k - 1)),
            "y" if k <= self.dims.r => Some(Var::Y(k - 1)),
            _ => None,
        }
    }

    fn call(&mut self, func: Func, _start: usize) -> Result<Expr> {
        if !self.eat(b'(') {
            return Err(self.syntax(&["("]));
        }
        let mut args = vec![self.expr()?];
        while self.eat(b',') {
            args.push(self.expr()?);
        }
        if !self.eat(b')') {
            return Err(self.syntax(&[")", ",", "operator"]));
        }
        if args.len() != func.arity() {
            return Err(Error::Arity {
                name: func.name().to_string(),
                expected: func.arity(),
                got: args.len(),
            });
        }
        Ok(Expr::Call(func, args))
    }
}

/// Parses `source` against the coordinate counts `dims`.
pub fn parse(source: &str, dims: Dims) -> Result<Expr> {
    let mut p = Parser {
        src: source.as_bytes(),
        pos: 0,
        dims,
    };
    if let Some(bad) = source.bytes().position(|b| !b.is_ascii()) {
        p.pos = bad;
        return Err(p.syntax(&EXPECT_OPERAND));
    }
    let e = p.expr()?;
    if p.peek().is_some() {
        return Err(p.syntax(&["operator", "end of input"]));
    }
    Ok(e)
}

/// A field defined by an expression.
pub struct ExprField {
    expr: Expr,
    dims: Dims,
    deps: BTreeSet<Var>,
}

impl ExprField {
    pub fn expr(&self) -> &Expr {
        &self.expr
    }
}

impl ScalarField for ExprField {
    fn dims(&self) -> Dims {
        self.dims
    }
    fn dependence(&self) -> BTreeSet<Var> {
        self.deps.clone()
    }
    fn jet(&self, at: &Point, order: usize) -> Result<Jet> {
        let vars = Jet::seed(&at.coords(), order)?;
        if vars.is_empty() {
            return Ok(Jet::constant(self.expr.eval(at)?, 0, order));
        }
        self.expr.eval_jet(&vars, self.dims)
    }
}

pub fn to_field(expr: Expr, dims: Dims) -> Field {
    let deps = expr.variables();
    Arc::new(ExprField { expr, dims, deps })
}

/// Parses and wraps in one step.
pub fn field(source: &str, dims: Dims) -> Result<Field> {
    Ok(to_field(parse(source, dims)?, dims))
}
