//! Deterministic expressions over node values.
//!
//! Expressions are written as prefix s-expressions, e.g.
//! `(+ (* c a) (* d b) (* e (- 1 a b)))`. Operators:
//!
//! | token      | arity | meaning                                   |
//! |------------|-------|-------------------------------------------|
//! | `+` `*`    | ≥ 2   | sum / product (scalar broadcast)          |
//! | `-`        | ≥ 2   | left-fold subtraction                     |
//! | `/`        | 2     | division                                  |
//! | `neg`      | 1     | negation                                  |
//! | `log` `exp`| 1     | elementwise natural log / exponential     |
//! | `logit`    | 1     | elementwise logit                         |
//! | `ilogit`   | 1     | elementwise inverse logit                 |
//! | `inverse`  | 1     | inverse of a small square matrix          |
//! | `dot`      | 2     | inner product of two vectors              |
//! | `index`    | 2–3   | 1-based component: `(index phi 2)`, `(index W 1 2)` |
//! | `vec`      | ≥ 1   | vector from scalar entries                |
//!
//! Atoms are numbers (anything that parses as a finite `f64`) or names.
//! Names may contain brackets and commas (`phi[9]`, `y[9,2]`), but no
//! whitespace or parentheses.

use super::value::{Shape, Value};
use nalgebra::DMatrix;
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(String),
    Add(Vec<Expr>),
    Sub(Vec<Expr>),
    Mul(Vec<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    Log(Box<Expr>),
    Exp(Box<Expr>),
    Logit(Box<Expr>),
    InvLogit(Box<Expr>),
    Inverse(Box<Expr>),
    Dot(Box<Expr>, Box<Expr>),
    /// Zero-based component path.
    Index(Box<Expr>, Vec<usize>),
    Vector(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("expression parse error at offset {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape error: {0}")]
    Shape(String),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        let tokens = tokenize(src)?;
        let mut pos = 0;
        let expr = parse_tokens(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(ParseError {
                offset: tokens[pos].offset,
                message: "trailing input after expression".into(),
            });
        }
        Ok(expr)
    }

    /// Names referenced anywhere in the expression.
    pub fn vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Add(xs) | Expr::Sub(xs) | Expr::Mul(xs) | Expr::Vector(xs) => {
                xs.iter().for_each(|x| x.collect_vars(out))
            }
            Expr::Div(a, b) | Expr::Dot(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Expr::Neg(a)
            | Expr::Log(a)
            | Expr::Exp(a)
            | Expr::Logit(a)
            | Expr::InvLogit(a)
            | Expr::Inverse(a)
            | Expr::Index(a, _) => a.collect_vars(out),
        }
    }

    /// Replaces every reference to a name for which `f` returns `Some`.
    pub fn rename(&self, f: &dyn Fn(&str) -> Option<String>) -> Expr {
        let r = |e: &Expr| Box::new(e.rename(f));
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(v) => Expr::Var(f(v).unwrap_or_else(|| v.clone())),
            Expr::Add(xs) => Expr::Add(xs.iter().map(|x| x.rename(f)).collect()),
            Expr::Sub(xs) => Expr::Sub(xs.iter().map(|x| x.rename(f)).collect()),
            Expr::Mul(xs) => Expr::Mul(xs.iter().map(|x| x.rename(f)).collect()),
            Expr::Vector(xs) => Expr::Vector(xs.iter().map(|x| x.rename(f)).collect()),
            Expr::Div(a, b) => Expr::Div(r(a), r(b)),
            Expr::Dot(a, b) => Expr::Dot(r(a), r(b)),
            Expr::Neg(a) => Expr::Neg(r(a)),
            Expr::Log(a) => Expr::Log(r(a)),
            Expr::Exp(a) => Expr::Exp(r(a)),
            Expr::Logit(a) => Expr::Logit(r(a)),
            Expr::InvLogit(a) => Expr::InvLogit(r(a)),
            Expr::Inverse(a) => Expr::Inverse(r(a)),
            Expr::Index(a, idx) => Expr::Index(r(a), idx.clone()),
        }
    }

    /// Resolves names to slots, producing an evaluable form.
    pub(crate) fn compile(
        &self,
        resolve: &dyn Fn(&str) -> Option<Operand>,
    ) -> Result<Compiled, String> {
        let c = |e: &Expr| e.compile(resolve).map(Box::new);
        let cs = |xs: &[Expr]| {
            xs.iter()
                .map(|x| x.compile(resolve))
                .collect::<Result<Vec<_>, _>>()
        };
        Ok(match self {
            Expr::Const(x) => Compiled::Const(Value::Scalar(*x)),
            Expr::Var(v) => match resolve(v) {
                Some(Operand::Node(i)) => Compiled::Node(i),
                Some(Operand::Constant(val)) => Compiled::Const(val),
                None => return Err(format!("unresolved name `{v}`")),
            },
            Expr::Add(xs) => Compiled::Add(cs(xs)?),
            Expr::Sub(xs) => Compiled::Sub(cs(xs)?),
            Expr::Mul(xs) => Compiled::Mul(cs(xs)?),
            Expr::Vector(xs) => Compiled::Vector(cs(xs)?),
            Expr::Div(a, b) => Compiled::Div(c(a)?, c(b)?),
            Expr::Dot(a, b) => Compiled::Dot(c(a)?, c(b)?),
            Expr::Neg(a) => Compiled::Neg(c(a)?),
            Expr::Log(a) => Compiled::Log(c(a)?),
            Expr::Exp(a) => Compiled::Exp(c(a)?),
            Expr::Logit(a) => Compiled::Logit(c(a)?),
            Expr::InvLogit(a) => Compiled::InvLogit(c(a)?),
            Expr::Inverse(a) => Compiled::Inverse(c(a)?),
            Expr::Index(a, idx) => Compiled::Index(c(a)?, idx.clone()),
        })
    }

    /// Result shape given the shapes of referenced names.
    pub fn infer_shape(&self, shape_of: &dyn Fn(&str) -> Option<Shape>) -> Result<Shape, String> {
        let s = |e: &Expr| e.infer_shape(shape_of);
        match self {
            Expr::Const(_) => Ok(Shape::Scalar),
            Expr::Var(v) => shape_of(v).ok_or_else(|| format!("unresolved name `{v}`")),
            Expr::Add(xs) | Expr::Sub(xs) => {
                let mut acc = Shape::Scalar;
                for x in xs {
                    acc = broadcast(acc, s(x)?)?;
                }
                Ok(acc)
            }
            Expr::Mul(xs) => {
                let mut acc = s(&xs[0])?;
                for x in &xs[1..] {
                    acc = mul_shape(acc, s(x)?)?;
                }
                Ok(acc)
            }
            Expr::Div(a, b) => match (s(a)?, s(b)?) {
                (x, Shape::Scalar) => Ok(x),
                (x, y) if x == y && !matches!(x, Shape::Matrix(..)) => Ok(x),
                (x, y) => Err(format!("cannot divide {x} by {y}")),
            },
            Expr::Neg(a) | Expr::Log(a) | Expr::Exp(a) | Expr::Logit(a) | Expr::InvLogit(a) => {
                s(a)
            }
            Expr::Inverse(a) => match s(a)? {
                Shape::Matrix(r, c) if r == c => Ok(Shape::Matrix(r, c)),
                x => Err(format!("inverse needs a square matrix, got {x}")),
            },
            Expr::Dot(a, b) => match (s(a)?, s(b)?) {
                (Shape::Vector(n), Shape::Vector(m)) if n == m => Ok(Shape::Scalar),
                (x, y) => Err(format!("dot needs equal-length vectors, got {x} and {y}")),
            },
            Expr::Index(a, idx) => match (s(a)?, idx.as_slice()) {
                (Shape::Vector(n), [i]) if *i < n => Ok(Shape::Scalar),
                (Shape::Matrix(r, c), [i, j]) if *i < r && *j < c => Ok(Shape::Scalar),
                (x, _) => Err(format!("index {:?} out of range for {x}", one_based(idx))),
            },
            Expr::Vector(xs) => {
                for x in xs {
                    if s(x)? != Shape::Scalar {
                        return Err("vec entries must be scalars".into());
                    }
                }
                Ok(Shape::Vector(xs.len()))
            }
        }
    }
}

fn one_based(idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|i| i + 1).collect()
}

fn broadcast(a: Shape, b: Shape) -> Result<Shape, String> {
    match (a, b) {
        (Shape::Scalar, x) | (x, Shape::Scalar) => Ok(x),
        (x, y) if x == y => Ok(x),
        (x, y) => Err(format!("incompatible shapes {x} and {y}")),
    }
}

fn mul_shape(a: Shape, b: Shape) -> Result<Shape, String> {
    match (a, b) {
        (Shape::Scalar, x) | (x, Shape::Scalar) => Ok(x),
        (Shape::Vector(n), Shape::Vector(m)) if n == m => Ok(Shape::Vector(n)),
        (Shape::Matrix(r, c), Shape::Vector(n)) if c == n => Ok(Shape::Vector(r)),
        (Shape::Matrix(r, c), Shape::Matrix(p, q)) if c == p => Ok(Shape::Matrix(r, q)),
        (x, y) => Err(format!("cannot multiply {x} by {y}")),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(f: &mut fmt::Formatter<'_>, op: &str, xs: &[&Expr]) -> fmt::Result {
            write!(f, "({op}")?;
            for x in xs {
                write!(f, " {x}")?;
            }
            write!(f, ")")
        }
        match self {
            Expr::Const(x) => write!(f, "{x:?}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Add(xs) => list(f, "+", &xs.iter().collect::<Vec<_>>()),
            Expr::Sub(xs) => list(f, "-", &xs.iter().collect::<Vec<_>>()),
            Expr::Mul(xs) => list(f, "*", &xs.iter().collect::<Vec<_>>()),
            Expr::Vector(xs) => list(f, "vec", &xs.iter().collect::<Vec<_>>()),
            Expr::Div(a, b) => list(f, "/", &[a, b]),
            Expr::Dot(a, b) => list(f, "dot", &[a, b]),
            Expr::Neg(a) => list(f, "neg", &[a]),
            Expr::Log(a) => list(f, "log", &[a]),
            Expr::Exp(a) => list(f, "exp", &[a]),
            Expr::Logit(a) => list(f, "logit", &[a]),
            Expr::InvLogit(a) => list(f, "ilogit", &[a]),
            Expr::Inverse(a) => list(f, "inverse", &[a]),
            Expr::Index(a, idx) => {
                write!(f, "(index {a}")?;
                for i in idx {
                    write!(f, " {}", i + 1)?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Atom(String),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    offset: usize,
}

fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let mut out = Vec::new();
    let mut chars = src.char_indices().peekable();
    while let Some(&(i, ch)) = chars.peek() {
        match ch {
            '(' => {
                out.push(Token { tok: Tok::Open, offset: i });
                chars.next();
            }
            ')' => {
                out.push(Token { tok: Tok::Close, offset: i });
                chars.next();
            }
            c if c.is_whitespace() => {
                chars.next();
            }
            _ => {
                let start = i;
                let mut end = i;
                while let Some(&(j, c)) = chars.peek() {
                    if c == '(' || c == ')' || c.is_whitespace() {
                        break;
                    }
                    end = j + c.len_utf8();
                    chars.next();
                }
                out.push(Token { tok: Tok::Atom(src[start..end].to_string()), offset: start });
            }
        }
    }
    if out.is_empty() {
        return Err(ParseError { offset: 0, message: "empty expression".into() });
    }
    Ok(out)
}

/// Parses a numeric atom; names such as `inf` or `nan` are not numbers here.
pub(crate) fn parse_number(atom: &str) -> Option<f64> {
    let first = atom.chars().next()?;
    if !(first.is_ascii_digit() || first == '-' || first == '+' || first == '.') {
        return None;
    }
    atom.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn parse_tokens(tokens: &[Token], pos: &mut usize) -> Result<Expr, ParseError> {
    let Some(t) = tokens.get(*pos) else {
        let offset = tokens.last().map_or(0, |t| t.offset);
        return Err(ParseError { offset, message: "unexpected end of input".into() });
    };
    let offset = t.offset;
    match &t.tok {
        Tok::Close => Err(ParseError { offset, message: "unexpected `)`".into() }),
        Tok::Atom(a) => {
            *pos += 1;
            Ok(match parse_number(a) {
                Some(x) => Expr::Const(x),
                None => Expr::Var(a.clone()),
            })
        }
        Tok::Open => {
            *pos += 1;
            let op = match tokens.get(*pos) {
                Some(Token { tok: Tok::Atom(a), .. }) => a.clone(),
                _ => return Err(ParseError { offset, message: "expected operator after `(`".into() }),
            };
            *pos += 1;
            let mut args = Vec::new();
            loop {
                match tokens.get(*pos) {
                    Some(Token { tok: Tok::Close, .. }) => {
                        *pos += 1;
                        break;
                    }
                    Some(_) => args.push(parse_tokens(tokens, pos)?),
                    None => {
                        return Err(ParseError { offset, message: "unclosed `(`".into() });
                    }
                }
            }
            build(&op, args).map_err(|message| ParseError { offset, message })
        }
    }
}

fn build(op: &str, mut args: Vec<Expr>) -> Result<Expr, String> {
    let n = args.len();
    let need = |lo: usize, hi: usize| -> Result<(), String> {
        if n < lo || n > hi {
            Err(format!("`{op}` takes {lo}..={hi} arguments, got {n}"))
        } else {
            Ok(())
        }
    };
    let unary = |args: &mut Vec<Expr>| Box::new(args.pop().unwrap());
    match op {
        "+" => need(2, usize::MAX).map(|_| Expr::Add(args)),
        "-" => need(2, usize::MAX).map(|_| Expr::Sub(args)),
        "*" => need(2, usize::MAX).map(|_| Expr::Mul(args)),
        "vec" => need(1, usize::MAX).map(|_| Expr::Vector(args)),
        "/" | "dot" => {
            need(2, 2)?;
            let b = Box::new(args.pop().unwrap());
            let a = Box::new(args.pop().unwrap());
            Ok(if op == "/" { Expr::Div(a, b) } else { Expr::Dot(a, b) })
        }
        "neg" | "log" | "exp" | "logit" | "ilogit" | "inverse" => {
            need(1, 1)?;
            let a = unary(&mut args);
            Ok(match op {
                "neg" => Expr::Neg(a),
                "log" => Expr::Log(a),
                "exp" => Expr::Exp(a),
                "logit" => Expr::Logit(a),
                "ilogit" => Expr::InvLogit(a),
                _ => Expr::Inverse(a),
            })
        }
        "index" => {
            need(2, 3)?;
            let mut idx = Vec::new();
            for a in args.drain(1..) {
                match a {
                    Expr::Const(x) if x >= 1.0 && x.fract() == 0.0 => idx.push(x as usize - 1),
                    other => return Err(format!("index must be a positive integer, got {other}")),
                }
            }
            Ok(Expr::Index(Box::new(args.pop().unwrap()), idx))
        }
        other => Err(format!("unknown operator `{other}`")),
    }
}

/// What a name resolves to at compile time.
pub(crate) enum Operand {
    Node(usize),
    Constant(Value),
}

/// Expression with names resolved to node slots or inlined constants.
#[derive(Debug, Clone)]
pub(crate) enum Compiled {
    Const(Value),
    Node(usize),
    Add(Vec<Compiled>),
    Sub(Vec<Compiled>),
    Mul(Vec<Compiled>),
    Div(Box<Compiled>, Box<Compiled>),
    Neg(Box<Compiled>),
    Log(Box<Compiled>),
    Exp(Box<Compiled>),
    Logit(Box<Compiled>),
    InvLogit(Box<Compiled>),
    Inverse(Box<Compiled>),
    Dot(Box<Compiled>, Box<Compiled>),
    Index(Box<Compiled>, Vec<usize>),
    Vector(Vec<Compiled>),
}

impl Compiled {
    /// Evaluates against node values indexed by slot.
    pub fn eval(&self, values: &[Value]) -> Result<Value, EvalError> {
        let e = |x: &Compiled| x.eval(values);
        match self {
            Compiled::Const(v) => Ok(v.clone()),
            Compiled::Node(i) => Ok(values[*i].clone()),
            Compiled::Add(xs) => fold(xs, values, |a, b| a + b),
            Compiled::Sub(xs) => fold(xs, values, |a, b| a - b),
            Compiled::Mul(xs) => {
                let mut acc = e(&xs[0])?;
                for x in &xs[1..] {
                    acc = multiply(acc, e(x)?)?;
                }
                Ok(acc)
            }
            Compiled::Div(a, b) => divide(e(a)?, e(b)?),
            Compiled::Neg(a) => Ok(map(e(a)?, |x| -x)),
            Compiled::Exp(a) => Ok(map(e(a)?, f64::exp)),
            Compiled::Log(a) => try_map(e(a)?, |x| {
                if x > 0.0 {
                    Ok(x.ln())
                } else {
                    Err(EvalError::Domain(format!("log of non-positive value {x}")))
                }
            }),
            Compiled::Logit(a) => try_map(e(a)?, |x| {
                if x > 0.0 && x < 1.0 {
                    Ok((x / (1.0 - x)).ln())
                } else {
                    Err(EvalError::Domain(format!("logit of {x} outside (0, 1)")))
                }
            }),
            Compiled::InvLogit(a) => Ok(map(e(a)?, inv_logit)),
            Compiled::Inverse(a) => match e(a)? {
                Value::Matrix(m) => m
                    .try_inverse()
                    .map(Value::Matrix)
                    .ok_or_else(|| EvalError::Domain("singular matrix in inverse".into())),
                v => Err(EvalError::Shape(format!("inverse of {}", v.shape()))),
            },
            Compiled::Dot(a, b) => match (e(a)?, e(b)?) {
                (Value::Vector(x), Value::Vector(y)) if x.len() == y.len() => {
                    Ok(Value::Scalar(x.iter().zip(&y).map(|(p, q)| p * q).sum()))
                }
                (x, y) => Err(EvalError::Shape(format!("dot of {} and {}", x.shape(), y.shape()))),
            },
            Compiled::Index(a, idx) => {
                let owned;
                let v = match a.as_ref() {
                    Compiled::Node(i) => &values[*i],
                    other => {
                        owned = e(other)?;
                        &owned
                    }
                };
                match (v, idx.as_slice()) {
                    (Value::Vector(x), [i]) if *i < x.len() => Ok(Value::Scalar(x[*i])),
                    (Value::Matrix(m), [i, j]) if *i < m.nrows() && *j < m.ncols() => {
                        Ok(Value::Scalar(m[(*i, *j)]))
                    }
                    _ => Err(EvalError::Shape(format!(
                        "index {:?} out of range for {}",
                        one_based(idx),
                        v.shape()
                    ))),
                }
            }
            Compiled::Vector(xs) => {
                let mut out = Vec::with_capacity(xs.len());
                for x in xs {
                    match e(x)? {
                        Value::Scalar(s) => out.push(s),
                        v => return Err(EvalError::Shape(format!("vec entry is {}", v.shape()))),
                    }
                }
                Ok(Value::Vector(out))
            }
        }
    }

    /// Calls `f` on every node slot referenced.
    pub fn for_each_node(&self, f: &mut dyn FnMut(usize)) {
        match self {
            Compiled::Const(_) => {}
            Compiled::Node(i) => f(*i),
            Compiled::Add(xs) | Compiled::Sub(xs) | Compiled::Mul(xs) | Compiled::Vector(xs) => {
                xs.iter().for_each(|x| x.for_each_node(f))
            }
            Compiled::Div(a, b) | Compiled::Dot(a, b) => {
                a.for_each_node(f);
                b.for_each_node(f);
            }
            Compiled::Neg(a)
            | Compiled::Log(a)
            | Compiled::Exp(a)
            | Compiled::Logit(a)
            | Compiled::InvLogit(a)
            | Compiled::Inverse(a)
            | Compiled::Index(a, _) => a.for_each_node(f),
        }
    }
}

pub(crate) fn inv_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn map(v: Value, f: impl Fn(f64) -> f64) -> Value {
    match v {
        Value::Scalar(x) => Value::Scalar(f(x)),
        Value::Vector(xs) => Value::Vector(xs.into_iter().map(f).collect()),
        Value::Matrix(m) => Value::Matrix(m.map(f)),
    }
}

fn try_map(v: Value, f: impl Fn(f64) -> Result<f64, EvalError>) -> Result<Value, EvalError> {
    Ok(match v {
        Value::Scalar(x) => Value::Scalar(f(x)?),
        Value::Vector(xs) => Value::Vector(xs.into_iter().map(f).collect::<Result<_, _>>()?),
        Value::Matrix(m) => {
            let mut out = m.clone();
            for x in out.iter_mut() {
                *x = f(*x)?;
            }
            Value::Matrix(out)
        }
    })
}

fn zip_with(a: Value, b: Value, f: impl Fn(f64, f64) -> f64) -> Result<Value, EvalError> {
    Ok(match (a, b) {
        (Value::Scalar(x), Value::Scalar(y)) => Value::Scalar(f(x, y)),
        (Value::Scalar(x), v) => map(v, |y| f(x, y)),
        (v, Value::Scalar(y)) => map(v, |x| f(x, y)),
        (Value::Vector(x), Value::Vector(y)) if x.len() == y.len() => {
            Value::Vector(x.iter().zip(&y).map(|(p, q)| f(*p, *q)).collect())
        }
        (Value::Matrix(x), Value::Matrix(y)) if x.shape() == y.shape() => {
            Value::Matrix(x.zip_map(&y, f))
        }
        (x, y) => {
            return Err(EvalError::Shape(format!("incompatible {} and {}", x.shape(), y.shape())))
        }
    })
}

fn fold(xs: &[Compiled], values: &[Value], f: impl Fn(f64, f64) -> f64 + Copy) -> Result<Value, EvalError> {
    let mut acc = xs[0].eval(values)?;
    for x in &xs[1..] {
        acc = zip_with(acc, x.eval(values)?, f)?;
    }
    Ok(acc)
}

fn multiply(a: Value, b: Value) -> Result<Value, EvalError> {
    match (a, b) {
        (Value::Matrix(m), Value::Vector(v)) if m.ncols() == v.len() => {
            let out = &m * nalgebra::DVector::from_vec(v);
            Ok(Value::Vector(out.iter().copied().collect()))
        }
        (Value::Matrix(m), Value::Matrix(n)) if m.ncols() == n.nrows() => {
            Ok(Value::Matrix(&m * &n))
        }
        (Value::Matrix(m), Value::Matrix(n)) => Err(EvalError::Shape(format!(
            "matrix product {}x{} by {}x{}",
            m.nrows(),
            m.ncols(),
            n.nrows(),
            n.ncols()
        ))),
        (a, b) => zip_with(a, b, |x, y| x * y),
    }
}

fn divide(a: Value, b: Value) -> Result<Value, EvalError> {
    let check = |y: f64| {
        if y == 0.0 {
            Err(EvalError::Domain("division by zero".into()))
        } else {
            Ok(())
        }
    };
    match &b {
        Value::Scalar(y) => check(*y)?,
        Value::Vector(ys) => ys.iter().try_for_each(|y| check(*y))?,
        Value::Matrix(_) => return Err(EvalError::Shape("division by a matrix".into())),
    }
    zip_with(a, b, |x, y| x / y)
}

/// Builds a square matrix value (helper for constants in code).
pub fn matrix(rows: &[&[f64]]) -> Value {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    let flat: Vec<f64> = rows.iter().flat_map(|row| row.iter().copied()).collect();
    Value::Matrix(DMatrix::from_row_slice(r, c, &flat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn eval_scalar(src: &str, vars: &[(&str, f64)]) -> Result<f64, EvalError> {
        let e = Expr::parse(src).unwrap();
        let names: Vec<&str> = vars.iter().map(|(n, _)| *n).collect();
        let c = e
            .compile(&|n| names.iter().position(|m| *m == n).map(Operand::Node))
            .unwrap();
        let values: Vec<Value> = vars.iter().map(|(_, x)| Value::Scalar(*x)).collect();
        c.eval(&values).map(|v| v.as_scalar().unwrap())
    }

    #[test]
    fn parses_functional_parameter() {
        let e = Expr::parse("(+ (* c a) (* d b) (* e (- 1 a b)))").unwrap();
        let vars: Vec<_> = e.vars().into_iter().collect();
        assert_eq!(vars, ["a", "b", "c", "d", "e"]);
        let v = eval_scalar(
            "(+ (* c a) (* d b) (* e (- 1 a b)))",
            &[("a", 0.1), ("b", 0.01), ("c", 0.02), ("d", 0.03), ("e", 0.001)],
        )
        .unwrap();
        let expected = 0.02 * 0.1 + 0.03 * 0.01 + 0.001 * (1.0 - 0.1 - 0.01);
        assert_eq!(v, expected);
    }

    #[test]
    fn domain_errors_are_reported() {
        assert!(matches!(eval_scalar("(log x)", &[("x", 0.0)]), Err(EvalError::Domain(_))));
        assert!(matches!(eval_scalar("(/ 1 x)", &[("x", 0.0)]), Err(EvalError::Domain(_))));
        assert!(matches!(eval_scalar("(logit x)", &[("x", 1.0)]), Err(EvalError::Domain(_))));
    }

    #[test]
    fn parse_errors_carry_offsets() {
        let err = Expr::parse("(+ a").unwrap_err();
        assert_eq!(err.offset, 0);
        let err = Expr::parse("(frob a b)").unwrap_err();
        assert!(err.message.contains("unknown operator"));
        assert!(Expr::parse("(- a)").is_err());
        assert!(Expr::parse("a b").is_err());
    }

    #[test]
    fn bracketed_names_are_atoms() {
        let e = Expr::parse("(+ (index phi[9] 1) (* (index phi[9] 2) -14))").unwrap();
        assert_eq!(e.vars().into_iter().collect::<Vec<_>>(), ["phi[9]"]);
        assert_eq!(e.to_string(), "(+ (index phi[9] 1) (* (index phi[9] 2) -14.0))");
    }

    #[test]
    fn matrix_vector_product_and_inverse() {
        let e = Expr::parse("(* (inverse W) v)").unwrap();
        let c = e
            .compile(&|n| match n {
                "W" => Some(Operand::Constant(matrix(&[&[2.0, 0.0], &[0.0, 4.0]]))),
                "v" => Some(Operand::Constant(Value::Vector(vec![1.0, 1.0]))),
                _ => None,
            })
            .unwrap();
        assert_eq!(c.eval(&[]).unwrap(), Value::Vector(vec![0.5, 0.25]));
    }

    #[test]
    fn evaluation_is_bitwise_repeatable() {
        let vars = [("a", 0.123456789), ("b", 0.987654321)];
        let x = eval_scalar("(/ (exp (* a b)) (+ (ilogit a) (log b)))", &vars).unwrap();
        let y = eval_scalar("(/ (exp (* a b)) (+ (ilogit a) (log b)))", &vars).unwrap();
        assert_eq!(x.to_bits(), y.to_bits());
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            any::<f64>().prop_filter("finite", |x| x.is_finite()).prop_map(Expr::Const),
            "[a-z][a-z0-9_]{0,4}(\\[[0-9],?[0-9]?\\])?".prop_map(Expr::Var),
        ];
        leaf.prop_recursive(4, 32, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::Add),
                prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::Sub),
                prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::Mul),
                prop::collection::vec(inner.clone(), 1..3).prop_map(Expr::Vector),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Div(a.into(), b.into())),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Dot(a.into(), b.into())),
                inner.clone().prop_map(|a| Expr::Neg(a.into())),
                inner.clone().prop_map(|a| Expr::Log(a.into())),
                inner.clone().prop_map(|a| Expr::Logit(a.into())),
                inner.clone().prop_map(|a| Expr::InvLogit(a.into())),
                inner.clone().prop_map(|a| Expr::Inverse(a.into())),
                (inner, prop::collection::vec(0usize..5, 1..3))
                    .prop_map(|(a, idx)| Expr::Index(a.into(), idx)),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_then_parse_is_identity(e in arb_expr()) {
            let printed = e.to_string();
            let back = Expr::parse(&printed).unwrap();
            prop_assert_eq!(back, e);
        }
    }
}
