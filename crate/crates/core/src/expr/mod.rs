//! Closed symbolic expression language for the diffusion coefficient.
//!
//! The language is deliberately small: real constants, the single variable
//! `x`, negation, sums, products, quotients, integer powers and the
//! transcendental functions `sin`, `cos`, `exp`, `tanh`. It is closed under
//! differentiation, so every derived object (derivatives of `sigma`, the
//! iterated Lie derivatives, the error weights) lives in the same type.
//!
//! Simplification is limited to constant folding, zero/one absorption and
//! double-negation removal; semantic equality of expressions is always
//! established by randomized evaluation, never by canonical form.

mod coefficient;
mod parse;

pub use coefficient::{Coefficient, ProbeInterval, MAX_SCHEME_SIZE};
pub use parse::parse;

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Errors produced while parsing or manipulating expressions.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown identifier `{name}` at offset {position}")]
    UnknownIdentifier { position: usize, name: String },
    #[error("ellipticity violation: inf |sigma| over the probe interval is {infimum:.3e}, must be > 0")]
    Ellipticity { infimum: f64 },
    #[error("scheme size {size} exceeds the supported maximum {max}")]
    SizeTooLarge { size: usize, max: usize },
}

/// Expression tree over the closed coefficient language.
///
/// Children are reference-counted so that derived expressions share
/// structure; the tree itself is immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var,
    Neg(Arc<Expr>),
    Add(Arc<Expr>, Arc<Expr>),
    Mul(Arc<Expr>, Arc<Expr>),
    Div(Arc<Expr>, Arc<Expr>),
    /// Integer power of a subexpression; the exponent may be negative.
    Pow(Arc<Expr>, i32),
    Sin(Arc<Expr>),
    Cos(Arc<Expr>),
    Exp(Arc<Expr>),
    Tanh(Arc<Expr>),
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn var() -> Expr {
        Expr::Var
    }

    pub fn neg(e: Expr) -> Expr {
        Expr::Neg(Arc::new(e))
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Add(Arc::new(a), Arc::new(b))
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::add(a, Expr::neg(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Mul(Arc::new(a), Arc::new(b))
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::Div(Arc::new(a), Arc::new(b))
    }

    pub fn pow(e: Expr, k: i32) -> Expr {
        Expr::Pow(Arc::new(e), k)
    }

    pub fn sin(e: Expr) -> Expr {
        Expr::Sin(Arc::new(e))
    }

    pub fn cos(e: Expr) -> Expr {
        Expr::Cos(Arc::new(e))
    }

    pub fn exp(e: Expr) -> Expr {
        Expr::Exp(Arc::new(e))
    }

    pub fn tanh(e: Expr) -> Expr {
        Expr::Tanh(Arc::new(e))
    }

    /// Evaluate the expression at the point `x`.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var => x,
            Expr::Neg(e) => -e.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(e, k) => e.eval(x).powi(*k),
            Expr::Sin(e) => e.eval(x).sin(),
            Expr::Cos(e) => e.eval(x).cos(),
            Expr::Exp(e) => e.eval(x).exp(),
            Expr::Tanh(e) => e.eval(x).tanh(),
        }
    }

    /// Exact symbolic derivative of the given order; order 0 is a clone.
    ///
    /// The result is simplified once per differentiation pass.
    pub fn derivative(&self, order: usize) -> Expr {
        let mut e = self.clone();
        for _ in 0..order {
            e = e.diff_once().simplify();
        }
        e
    }

    fn diff_once(&self) -> Expr {
        match self {
            Expr::Const(_) => Expr::Const(0.0),
            Expr::Var => Expr::Const(1.0),
            Expr::Neg(e) => Expr::neg(e.diff_once()),
            Expr::Add(a, b) => Expr::add(a.diff_once(), b.diff_once()),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.diff_once(), (**b).clone()),
                Expr::mul((**a).clone(), b.diff_once()),
            ),
            Expr::Div(a, b) => Expr::div(
                Expr::sub(
                    Expr::mul(a.diff_once(), (**b).clone()),
                    Expr::mul((**a).clone(), b.diff_once()),
                ),
                Expr::pow((**b).clone(), 2),
            ),
            Expr::Pow(e, k) => {
                if *k == 0 {
                    Expr::Const(0.0)
                } else {
                    Expr::mul(
                        Expr::mul(Expr::Const(f64::from(*k)), Expr::pow((**e).clone(), *k - 1)),
                        e.diff_once(),
                    )
                }
            }
            Expr::Sin(e) => Expr::mul(Expr::cos((**e).clone()), e.diff_once()),
            Expr::Cos(e) => Expr::neg(Expr::mul(Expr::sin((**e).clone()), e.diff_once())),
            Expr::Exp(e) => Expr::mul(Expr::exp((**e).clone()), e.diff_once()),
            Expr::Tanh(e) => Expr::mul(
                Expr::sub(Expr::Const(1.0), Expr::pow(Expr::tanh((**e).clone()), 2)),
                e.diff_once(),
            ),
        }
    }

    /// Structural simplification: constant folding, zero/one absorption and
    /// double-negation removal. Pointwise values are preserved wherever the
    /// original expression is defined.
    pub fn simplify(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::Var => self.clone(),
            Expr::Neg(e) => match e.simplify() {
                Expr::Const(c) => Expr::Const(-c),
                Expr::Neg(inner) => (*inner).clone(),
                s => Expr::neg(s),
            },
            Expr::Add(a, b) => match (a.simplify(), b.simplify()) {
                (Expr::Const(x), Expr::Const(y)) => Expr::Const(x + y),
                (Expr::Const(x), s) if x == 0.0 => s,
                (s, Expr::Const(y)) if y == 0.0 => s,
                (sa, sb) => Expr::add(sa, sb),
            },
            Expr::Mul(a, b) => match (a.simplify(), b.simplify()) {
                (Expr::Const(x), Expr::Const(y)) => Expr::Const(x * y),
                (Expr::Const(x), _) | (_, Expr::Const(x)) if x == 0.0 => Expr::Const(0.0),
                (Expr::Const(x), s) if x == 1.0 => s,
                (s, Expr::Const(y)) if y == 1.0 => s,
                (Expr::Const(x), s) if x == -1.0 => Expr::neg(s),
                (s, Expr::Const(y)) if y == -1.0 => Expr::neg(s),
                // pull nested constant factors together: a * (b * e) -> (a b) * e
                (Expr::Const(x), Expr::Mul(l, r)) => match (&*l, &*r) {
                    (Expr::Const(y), _) => Expr::mul(Expr::Const(x * y), (*r).clone()).simplify(),
                    (_, Expr::Const(y)) => Expr::mul(Expr::Const(x * y), (*l).clone()).simplify(),
                    _ => Expr::mul(Expr::Const(x), Expr::Mul(l, r)),
                },
                (sa, sb) => Expr::mul(sa, sb),
            },
            Expr::Div(a, b) => match (a.simplify(), b.simplify()) {
                (Expr::Const(x), Expr::Const(y)) if y != 0.0 => Expr::Const(x / y),
                (Expr::Const(x), _) if x == 0.0 => Expr::Const(0.0),
                (s, Expr::Const(y)) if y == 1.0 => s,
                (s, Expr::Const(y)) if y == -1.0 => Expr::neg(s),
                (sa, sb) => Expr::div(sa, sb),
            },
            Expr::Pow(e, k) => match (e.simplify(), *k) {
                (_, 0) => Expr::Const(1.0),
                (s, 1) => s,
                (Expr::Const(c), k) => Expr::Const(c.powi(k)),
                (s, k) => Expr::pow(s, k),
            },
            Expr::Sin(e) => match e.simplify() {
                Expr::Const(c) => Expr::Const(c.sin()),
                s => Expr::sin(s),
            },
            Expr::Cos(e) => match e.simplify() {
                Expr::Const(c) => Expr::Const(c.cos()),
                s => Expr::cos(s),
            },
            Expr::Exp(e) => match e.simplify() {
                Expr::Const(c) => Expr::Const(c.exp()),
                s => Expr::exp(s),
            },
            Expr::Tanh(e) => match e.simplify() {
                Expr::Const(c) => Expr::Const(c.tanh()),
                s => Expr::tanh(s),
            },
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Const(c) if *c < 0.0 => 3,
            _ => 5,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, parent: u8) -> fmt::Result {
        let prec = self.precedence();
        let parens = prec < parent;
        if parens {
            write!(f, "(")?;
        }
        match self {
            Expr::Const(c) => write!(f, "{c}")?,
            Expr::Var => write!(f, "x")?,
            Expr::Neg(e) => {
                write!(f, "-")?;
                e.fmt_prec(f, 4)?;
            }
            Expr::Add(a, b) => {
                a.fmt_prec(f, 1)?;
                if let Expr::Neg(inner) = &**b {
                    write!(f, " - ")?;
                    inner.fmt_prec(f, 2)?;
                } else {
                    write!(f, " + ")?;
                    b.fmt_prec(f, 2)?;
                }
            }
            Expr::Mul(a, b) => {
                a.fmt_prec(f, 2)?;
                write!(f, " * ")?;
                b.fmt_prec(f, 3)?;
            }
            Expr::Div(a, b) => {
                a.fmt_prec(f, 2)?;
                write!(f, " / ")?;
                b.fmt_prec(f, 3)?;
            }
            Expr::Pow(e, k) => {
                e.fmt_prec(f, 5)?;
                write!(f, "^{k}")?;
            }
            Expr::Sin(e) => write!(f, "sin({e})")?,
            Expr::Cos(e) => write!(f, "cos({e})")?,
            Expr::Exp(e) => write!(f, "exp({e})")?,
            Expr::Tanh(e) => write!(f, "tanh({e})")?,
        }
        if parens {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// Exact factorial in integer arithmetic. Panics beyond 20! (the largest
/// factorial representable in a `u64`); scheme sizes are capped well below.
pub fn factorial(n: u32) -> u64 {
    assert!(n <= 20, "factorial({n}) exceeds u64 range");
    (1..=u64::from(n)).product::<u64>().max(1)
}

/// Maximum of `|e|` over a uniform scan of `[lo, hi]` with `points` samples.
/// NaN samples (e.g. a vanishing quotient denominator) are treated as
/// infinitely large so they can never certify anything.
pub fn scan_max_abs(e: &Expr, lo: f64, hi: f64, points: usize) -> f64 {
    scan(e, lo, hi, points, f64::max, 0.0)
}

/// Minimum of `|e|` over a uniform scan of `[lo, hi]`; NaN samples yield 0.
pub fn scan_min_abs(e: &Expr, lo: f64, hi: f64, points: usize) -> f64 {
    scan(e, lo, hi, points, f64::min, f64::INFINITY)
}

fn scan(e: &Expr, lo: f64, hi: f64, points: usize, fold: fn(f64, f64) -> f64, init: f64) -> f64 {
    assert!(points >= 2 && hi > lo);
    let step = (hi - lo) / (points - 1) as f64;
    let mut acc = init;
    for i in 0..points {
        let v = e.eval(lo + step * i as f64).abs();
        // NaN poisons the certificate in the conservative direction.
        let v = if v.is_nan() {
            if init == 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            v
        };
        acc = fold(acc, v);
    }
    acc
}
