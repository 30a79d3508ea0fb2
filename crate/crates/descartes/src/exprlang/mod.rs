//! Closed-form expression language.
//!
//! Every symbolic quantity in the crate — metric coefficients, constraint
//! one-forms, multiplier functions, potentials, monitors — is an [`Expr`].
//! The language is deliberately small: real constants, coordinates `x1..xN`,
//! velocities `v1..vN` (monitors only), named parameters, arithmetic,
//! constant-exponent powers and the unary functions
//! `sin cos tan exp log sqrt abs`.
//!
//! Construction goes through the smart constructors ([`Expr::add`],
//! [`Expr::mul`], …), which fold literal constants and drop neutral elements
//! (`0 + e`, `1 * e`, `e^1`, …). This is a *value-preserving* cleanup, not
//! simplification: no factoring, no trig identities, no cancellation of equal
//! subtrees. The parser uses the same constructors, so
//! `parse(print(parse(s)))` is structurally equal to `parse(s)`.
//!
//! The grammar accepted by [`parse`] is documented in `docs/exprlang.md`.

mod parser;

pub use parser::parse;

use crate::error::{DescartesError, Result};
use std::fmt;
use std::sync::Arc;

/// Binary arithmetic operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Built-in unary functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
    Abs,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Tan => x.tan(),
            Func::Exp => x.exp(),
            Func::Log => x.ln(),
            Func::Sqrt => x.sqrt(),
            Func::Abs => x.abs(),
        }
    }
}

/// Expression AST. Subtrees are shared via `Arc`, so cloning is cheap and the
/// symbolic pipelines (Cramer expansion, exterior derivatives) stay affordable.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// Literal constant.
    Num(f64),
    /// Coordinate `x{i+1}` (zero-based index).
    Coord(usize),
    /// Velocity `v{i+1}` (zero-based index); only monitors may use these.
    Vel(usize),
    /// Named parameter, bound at evaluation time.
    Param(Arc<str>),
    Neg(Arc<Expr>),
    Bin(BinOp, Arc<Expr>, Arc<Expr>),
    /// Power with a constant exponent (the only exponent form the grammar admits).
    Pow(Arc<Expr>, f64),
    Call(Func, Arc<Expr>),
}

/// Evaluation environment: a point, optional velocities and parameter values.
#[derive(Debug, Clone, Copy, Default)]
pub struct Env<'a> {
    pub coords: &'a [f64],
    pub vels: &'a [f64],
    pub params: &'a [(&'a str, f64)],
}

impl<'a> Env<'a> {
    pub fn point(coords: &'a [f64]) -> Self {
        Env {
            coords,
            vels: &[],
            params: &[],
        }
    }

    pub fn with_params(coords: &'a [f64], params: &'a [(&'a str, f64)]) -> Self {
        Env {
            coords,
            vels: &[],
            params,
        }
    }

    pub fn extended(coords: &'a [f64], vels: &'a [f64], params: &'a [(&'a str, f64)]) -> Self {
        Env {
            coords,
            vels,
            params,
        }
    }

    fn param(&self, name: &str) -> Option<f64> {
        self.params
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| *v)
    }
}

impl Expr {
    // ---- smart constructors -------------------------------------------------

    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn coord(i: usize) -> Expr {
        Expr::Coord(i)
    }

    pub fn vel(i: usize) -> Expr {
        Expr::Vel(i)
    }

    pub fn param(name: &str) -> Expr {
        Expr::Param(Arc::from(name))
    }

    pub fn neg(e: Expr) -> Expr {
        match e {
            Expr::Num(v) => Expr::Num(-v),
            Expr::Neg(inner) => inner.as_ref().clone(),
            other => Expr::Neg(Arc::new(other)),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x + y),
            (Expr::Num(x), b) if x == 0.0 => b,
            (a, Expr::Num(y)) if y == 0.0 => a,
            (a, b) => Expr::Bin(BinOp::Add, Arc::new(a), Arc::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x - y),
            (a, Expr::Num(y)) if y == 0.0 => a,
            (Expr::Num(x), b) if x == 0.0 => Expr::neg(b),
            (a, b) => Expr::Bin(BinOp::Sub, Arc::new(a), Arc::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Num(x), Expr::Num(y)) => Expr::Num(x * y),
            (Expr::Num(x), _) | (_, Expr::Num(x)) if x == 0.0 => Expr::Num(0.0),
            (Expr::Num(x), b) if x == 1.0 => b,
            (a, Expr::Num(y)) if y == 1.0 => a,
            (Expr::Num(x), b) if x == -1.0 => Expr::neg(b),
            (a, Expr::Num(y)) if y == -1.0 => Expr::neg(a),
            (a, b) => Expr::Bin(BinOp::Mul, Arc::new(a), Arc::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            // Never fold a division by literal zero: evaluation must report it.
            (Expr::Num(x), Expr::Num(y)) if y != 0.0 => Expr::Num(x / y),
            (a, Expr::Num(y)) if y == 1.0 => a,
            (a, Expr::Num(y)) if y == -1.0 => Expr::neg(a),
            (Expr::Num(x), b) if x == 0.0 && !matches!(b, Expr::Num(_)) => Expr::Num(0.0),
            (a, b) => Expr::Bin(BinOp::Div, Arc::new(a), Arc::new(b)),
        }
    }

    pub fn powc(base: Expr, exponent: f64) -> Expr {
        if exponent == 1.0 {
            return base;
        }
        if exponent == 0.0 {
            return Expr::Num(1.0);
        }
        if let Expr::Num(v) = base {
            let folded = v.powf(exponent);
            if folded.is_finite() {
                return Expr::Num(folded);
            }
        }
        Expr::Pow(Arc::new(base), exponent)
    }

    pub fn call(f: Func, arg: Expr) -> Expr {
        if let Expr::Num(v) = arg {
            let folded = f.apply(v);
            if folded.is_finite() {
                return Expr::Num(folded);
            }
        }
        Expr::Call(f, Arc::new(arg))
    }

    pub fn sin(e: Expr) -> Expr {
        Expr::call(Func::Sin, e)
    }
    pub fn cos(e: Expr) -> Expr {
        Expr::call(Func::Cos, e)
    }
    pub fn sqrt(e: Expr) -> Expr {
        Expr::call(Func::Sqrt, e)
    }

    /// Convenience: ½·e.
    pub fn half(e: Expr) -> Expr {
        Expr::mul(Expr::Num(0.5), e)
    }

    /// Convenience: e².
    pub fn square(e: Expr) -> Expr {
        Expr::powc(e, 2.0)
    }

    // ---- evaluation ---------------------------------------------------------

    /// Evaluate at a point. Domain violations (`log` of a non-positive value,
    /// `sqrt` of a negative value, division by exact zero, powers outside
    /// their real domain) are reported with the offending subexpression.
    pub fn eval(&self, env: &Env) -> Result<f64> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Coord(i) => env.coords.get(*i).copied().ok_or_else(|| {
                DescartesError::InconsistentInput {
                    message: format!(
                        "expression uses x{} but the point has {} coordinates",
                        i + 1,
                        env.coords.len()
                    ),
                }
            }),
            Expr::Vel(i) => {
                env.vels
                    .get(*i)
                    .copied()
                    .ok_or_else(|| DescartesError::InconsistentInput {
                        message: format!(
                            "expression uses v{} but {} velocities are bound",
                            i + 1,
                            env.vels.len()
                        ),
                    })
            }
            Expr::Param(name) => {
                env.param(name)
                    .ok_or_else(|| DescartesError::InconsistentInput {
                        message: format!("parameter `{name}` is not bound"),
                    })
            }
            Expr::Neg(e) => Ok(-e.eval(env)?),
            Expr::Bin(op, a, b) => {
                let x = a.eval(env)?;
                let y = b.eval(env)?;
                match op {
                    BinOp::Add => Ok(x + y),
                    BinOp::Sub => Ok(x - y),
                    BinOp::Mul => Ok(x * y),
                    BinOp::Div => {
                        if y == 0.0 {
                            Err(self.domain_error("division by zero"))
                        } else {
                            Ok(x / y)
                        }
                    }
                }
            }
            Expr::Pow(base, c) => {
                let x = base.eval(env)?;
                if x == 0.0 && *c < 0.0 {
                    return Err(self.domain_error("zero raised to a negative power"));
                }
                if x < 0.0 && c.fract() != 0.0 {
                    return Err(
                        self.domain_error("negative base raised to a non-integer power")
                    );
                }
                Ok(x.powf(*c))
            }
            Expr::Call(f, arg) => {
                let x = arg.eval(env)?;
                match f {
                    Func::Log if x <= 0.0 => {
                        Err(self.domain_error("log of a non-positive value"))
                    }
                    Func::Sqrt if x < 0.0 => {
                        Err(self.domain_error("square root of a negative value"))
                    }
                    _ => Ok(f.apply(x)),
                }
            }
        }
    }

    fn domain_error(&self, message: &str) -> DescartesError {
        let mut at = self.to_string();
        if at.len() > 120 {
            at.truncate(117);
            at.push_str("...");
        }
        DescartesError::Domain {
            message: message.to_string(),
            at,
        }
    }

    // ---- differentiation ----------------------------------------------------

    /// Partial derivative with respect to coordinate `k` (zero-based).
    /// Velocities and parameters are treated as constants.
    pub fn diff(&self, k: usize) -> Expr {
        match self {
            Expr::Num(_) | Expr::Vel(_) | Expr::Param(_) => Expr::Num(0.0),
            Expr::Coord(i) => Expr::Num(if *i == k { 1.0 } else { 0.0 }),
            Expr::Neg(e) => Expr::neg(e.diff(k)),
            Expr::Bin(op, a, b) => {
                let da = a.diff(k);
                let db = b.diff(k);
                match op {
                    BinOp::Add => Expr::add(da, db),
                    BinOp::Sub => Expr::sub(da, db),
                    BinOp::Mul => Expr::add(
                        Expr::mul(da, b.as_ref().clone()),
                        Expr::mul(a.as_ref().clone(), db),
                    ),
                    BinOp::Div => Expr::sub(
                        Expr::div(da, b.as_ref().clone()),
                        Expr::div(
                            Expr::mul(a.as_ref().clone(), db),
                            Expr::square(b.as_ref().clone()),
                        ),
                    ),
                }
            }
            Expr::Pow(base, c) => {
                let db = base.diff(k);
                Expr::mul(
                    Expr::mul(Expr::Num(*c), Expr::powc(base.as_ref().clone(), c - 1.0)),
                    db,
                )
            }
            Expr::Call(f, arg) => {
                let da = arg.diff(k);
                let a = arg.as_ref().clone();
                let outer = match f {
                    Func::Sin => Expr::cos(a),
                    Func::Cos => Expr::neg(Expr::sin(a)),
                    Func::Tan => Expr::add(
                        Expr::Num(1.0),
                        Expr::square(Expr::call(Func::Tan, a)),
                    ),
                    Func::Exp => Expr::call(Func::Exp, a),
                    Func::Log => Expr::div(Expr::Num(1.0), a),
                    Func::Sqrt => Expr::div(
                        Expr::Num(1.0),
                        Expr::mul(Expr::Num(2.0), Expr::sqrt(a)),
                    ),
                    // d|u| = u/|u| · du; undefined at u = 0, like the function's corner.
                    Func::Abs => Expr::div(a.clone(), Expr::call(Func::Abs, a)),
                };
                Expr::mul(outer, da)
            }
        }
    }

    // ---- structural helpers -------------------------------------------------

    /// Replace coordinates by expressions (`map[i]` substitutes `x{i+1}`).
    /// Coordinates beyond the map's length are left untouched.
    pub fn substitute_coords(&self, map: &[Expr]) -> Expr {
        match self {
            Expr::Coord(i) => map.get(*i).cloned().unwrap_or_else(|| self.clone()),
            Expr::Num(_) | Expr::Vel(_) | Expr::Param(_) => self.clone(),
            Expr::Neg(e) => Expr::neg(e.substitute_coords(map)),
            Expr::Bin(op, a, b) => {
                let a = a.substitute_coords(map);
                let b = b.substitute_coords(map);
                match op {
                    BinOp::Add => Expr::add(a, b),
                    BinOp::Sub => Expr::sub(a, b),
                    BinOp::Mul => Expr::mul(a, b),
                    BinOp::Div => Expr::div(a, b),
                }
            }
            Expr::Pow(base, c) => Expr::powc(base.substitute_coords(map), *c),
            Expr::Call(f, arg) => Expr::call(*f, arg.substitute_coords(map)),
        }
    }

    /// Bind the listed parameters to constants, leaving others symbolic.
    pub fn bind_params(&self, params: &[(&str, f64)]) -> Expr {
        match self {
            Expr::Param(name) => params
                .iter()
                .find(|(n, _)| *n == name.as_ref())
                .map(|(_, v)| Expr::Num(*v))
                .unwrap_or_else(|| self.clone()),
            Expr::Num(_) | Expr::Coord(_) | Expr::Vel(_) => self.clone(),
            Expr::Neg(e) => Expr::neg(e.bind_params(params)),
            Expr::Bin(op, a, b) => {
                let a = a.bind_params(params);
                let b = b.bind_params(params);
                match op {
                    BinOp::Add => Expr::add(a, b),
                    BinOp::Sub => Expr::sub(a, b),
                    BinOp::Mul => Expr::mul(a, b),
                    BinOp::Div => Expr::div(a, b),
                }
            }
            Expr::Pow(base, c) => Expr::powc(base.bind_params(params), *c),
            Expr::Call(f, arg) => Expr::call(*f, arg.bind_params(params)),
        }
    }

    /// Largest coordinate index used, if any (zero-based).
    pub fn max_coord(&self) -> Option<usize> {
        match self {
            Expr::Coord(i) => Some(*i),
            Expr::Num(_) | Expr::Vel(_) | Expr::Param(_) => None,
            Expr::Neg(e) => e.max_coord(),
            Expr::Bin(_, a, b) => match (a.max_coord(), b.max_coord()) {
                (Some(x), Some(y)) => Some(x.max(y)),
                (x, y) => x.or(y),
            },
            Expr::Pow(base, _) => base.max_coord(),
            Expr::Call(_, arg) => arg.max_coord(),
        }
    }

    /// Does the expression mention coordinate `k`?
    pub fn depends_on(&self, k: usize) -> bool {
        match self {
            Expr::Coord(i) => *i == k,
            Expr::Num(_) | Expr::Vel(_) | Expr::Param(_) => false,
            Expr::Neg(e) => e.depends_on(k),
            Expr::Bin(_, a, b) => a.depends_on(k) || b.depends_on(k),
            Expr::Pow(base, _) => base.depends_on(k),
            Expr::Call(_, arg) => arg.depends_on(k),
        }
    }

    /// Names of all parameters mentioned, deduplicated, in first-use order.
    pub fn param_names(&self) -> Vec<String> {
        fn walk(e: &Expr, out: &mut Vec<String>) {
            match e {
                Expr::Param(name) => {
                    if !out.iter().any(|n| n == name.as_ref()) {
                        out.push(name.to_string());
                    }
                }
                Expr::Num(_) | Expr::Coord(_) | Expr::Vel(_) => {}
                Expr::Neg(e) => walk(e, out),
                Expr::Bin(_, a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                Expr::Pow(base, _) => walk(base, out),
                Expr::Call(_, arg) => walk(arg, out),
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    /// Is this the literal constant zero?
    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }
}

/// Fold an iterator of terms into a sum, pruning literal zeros.
pub fn sum(terms: impl IntoIterator<Item = Expr>) -> Expr {
    terms
        .into_iter()
        .fold(Expr::Num(0.0), |acc, t| Expr::add(acc, t))
}

// ---- printing ----------------------------------------------------------------

// Operator precedence levels used by the printer; parenthesization is chosen so
// the parser rebuilds the exact same tree.
const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_POW: u8 = 3;
const PREC_ATOM: u8 = 4;

impl Expr {
    fn prec(&self) -> u8 {
        match self {
            Expr::Bin(BinOp::Add | BinOp::Sub, ..) => PREC_ADD,
            Expr::Bin(BinOp::Mul | BinOp::Div, ..) | Expr::Neg(_) => PREC_MUL,
            Expr::Pow(..) => PREC_POW,
            Expr::Num(v) if *v < 0.0 => PREC_MUL,
            _ => PREC_ATOM,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let prec = self.prec();
        if prec < min {
            write!(f, "(")?;
            self.fmt_inner(f)?;
            write!(f, ")")
        } else {
            self.fmt_inner(f)
        }
    }

    fn fmt_inner(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Coord(i) => write!(f, "x{}", i + 1),
            Expr::Vel(i) => write!(f, "v{}", i + 1),
            Expr::Param(name) => write!(f, "{name}"),
            Expr::Neg(e) => {
                write!(f, "-")?;
                e.fmt_prec(f, PREC_POW)
            }
            Expr::Bin(op, a, b) => {
                let (sym, lp, rp) = match op {
                    BinOp::Add => (" + ", PREC_ADD, PREC_ADD + 1),
                    BinOp::Sub => (" - ", PREC_ADD, PREC_ADD + 1),
                    BinOp::Mul => ("*", PREC_MUL, PREC_MUL + 1),
                    BinOp::Div => ("/", PREC_MUL, PREC_MUL + 1),
                };
                a.fmt_prec(f, lp)?;
                write!(f, "{sym}")?;
                b.fmt_prec(f, rp)
            }
            Expr::Pow(base, c) => {
                base.fmt_prec(f, PREC_ATOM)?;
                if *c < 0.0 {
                    write!(f, "^({c})")
                } else {
                    write!(f, "^{c}")
                }
            }
            Expr::Call(func, arg) => write!(f, "{}({arg})", func.name()),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}
