//! Scalar expression trees over time `t` and state variables `x1..xn`.
//!
//! Domain violations (log of a nonpositive number, division by zero, real
//! powers outside their domain, non-finite results) are hard errors, never
//! silent NaNs: certificates must not be fitted to garbage values.

use std::fmt;
use thiserror::Error;

/// A variable an expression can reference or be differentiated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    /// The time variable `t`.
    Time,
    /// The state variable `x{k+1}` (zero-based index).
    State(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Sin,
    Cos,
    Exp,
    Log,
    Tanh,
    Abs,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Abstract syntax tree of a scalar expression.
///
/// Trees are immutable after construction and evaluation is pure, so shared
/// references may be evaluated concurrently from multiple workers.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Time,
    State(usize),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("expression references state variable x{0} but no state was supplied")]
    MissingState(usize),
    #[error("state vector has {got} entries, expression references x{want}")]
    StateTooShort { want: usize, got: usize },
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Abs => "abs",
            UnaryOp::Sqrt => "sqrt",
        }
    }

    fn apply(self, v: f64) -> Result<f64, EvalError> {
        let out = match self {
            UnaryOp::Neg => -v,
            UnaryOp::Sin => v.sin(),
            UnaryOp::Cos => v.cos(),
            UnaryOp::Exp => v.exp(),
            UnaryOp::Log => {
                if v <= 0.0 {
                    return Err(EvalError::Domain(format!("log of nonpositive value {v}")));
                }
                v.ln()
            }
            UnaryOp::Tanh => v.tanh(),
            UnaryOp::Abs => v.abs(),
            UnaryOp::Sqrt => {
                if v < 0.0 {
                    return Err(EvalError::Domain(format!("sqrt of negative value {v}")));
                }
                v.sqrt()
            }
        };
        if out.is_finite() {
            Ok(out)
        } else {
            Err(EvalError::Domain(format!(
                "non-finite result from {}({v})",
                self.name()
            )))
        }
    }
}

impl BinOp {
    fn apply(self, a: f64, b: f64) -> Result<f64, EvalError> {
        let out = match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => {
                if b == 0.0 {
                    return Err(EvalError::Domain(format!("division of {a} by zero")));
                }
                a / b
            }
            BinOp::Pow => {
                // Real power: negative bases are only allowed with integer
                // exponents, where IEEE pow is exact about the sign.
                if a < 0.0 && b.fract() != 0.0 {
                    return Err(EvalError::Domain(format!(
                        "power {a}^{b} with negative base and non-integer exponent"
                    )));
                }
                if a == 0.0 && b < 0.0 {
                    return Err(EvalError::Domain(format!("power 0^{b} with negative exponent")));
                }
                a.powf(b)
            }
        };
        if out.is_finite() {
            Ok(out)
        } else {
            Err(EvalError::Domain(format!("non-finite result in binary op ({a}, {b})")))
        }
    }
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    /// True when the expression is the exact literal zero.
    pub fn is_zero_literal(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }

    /// Evaluate at time `t` with an optional state vector.
    ///
    /// `x` must be supplied iff the expression references state variables.
    pub fn eval(&self, t: f64, x: Option<&[f64]>) -> Result<f64, EvalError> {
        match self {
            Expr::Num(v) => Ok(*v),
            Expr::Time => Ok(t),
            Expr::State(k) => match x {
                None => Err(EvalError::MissingState(k + 1)),
                Some(xs) => xs.get(*k).copied().ok_or(EvalError::StateTooShort {
                    want: k + 1,
                    got: xs.len(),
                }),
            },
            Expr::Unary(op, a) => op.apply(a.eval(t, x)?),
            Expr::Binary(op, a, b) => op.apply(a.eval(t, x)?, b.eval(t, x)?),
        }
    }

    /// Largest state index referenced (1-based), or 0 if none.
    pub fn max_state_ref(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Time => 0,
            Expr::State(k) => k + 1,
            Expr::Unary(_, a) => a.max_state_ref(),
            Expr::Binary(_, a, b) => a.max_state_ref().max(b.max_state_ref()),
        }
    }

    /// Smallest state index referenced (1-based), or `usize::MAX` if none.
    pub fn min_state_ref(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Time => usize::MAX,
            Expr::State(k) => k + 1,
            Expr::Unary(_, a) => a.min_state_ref(),
            Expr::Binary(_, a, b) => a.min_state_ref().min(b.min_state_ref()),
        }
    }

    pub fn references_state(&self) -> bool {
        self.max_state_ref() > 0
    }

    /// Exact symbolic derivative with respect to `var`.
    ///
    /// The result is constant-folded but correctness never depends on
    /// simplification; the dual numeric check lives in the tests.
    pub fn differentiate(&self, var: Var) -> Expr {
        use BinOp::*;
        use Expr::*;
        use UnaryOp::*;
        match self {
            Num(_) => Num(0.0),
            Time => Num(if var == Var::Time { 1.0 } else { 0.0 }),
            State(k) => Num(if var == Var::State(*k) { 1.0 } else { 0.0 }),
            Unary(op, a) => {
                let da = a.differentiate(var);
                let inner = match op {
                    Neg => return simplify(Unary(Neg, Box::new(da))),
                    Sin => Unary(Cos, a.clone()),
                    Cos => Unary(Neg, Box::new(Unary(Sin, a.clone()))),
                    Exp => Unary(Exp, a.clone()),
                    // d log(u) = u'/u
                    Log => {
                        return simplify(Binary(Div, Box::new(da), a.clone()));
                    }
                    // d tanh(u) = (1 - tanh(u)^2) u'
                    Tanh => Binary(
                        Sub,
                        Box::new(Num(1.0)),
                        Box::new(Binary(
                            Pow,
                            Box::new(Unary(Tanh, a.clone())),
                            Box::new(Num(2.0)),
                        )),
                    ),
                    // d |u| = u/|u| u'
                    Abs => Binary(Div, a.clone(), Box::new(Unary(Abs, a.clone()))),
                    // d sqrt(u) = u' / (2 sqrt(u))
                    Sqrt => {
                        return simplify(Binary(
                            Div,
                            Box::new(da),
                            Box::new(Binary(
                                Mul,
                                Box::new(Num(2.0)),
                                Box::new(Unary(Sqrt, a.clone())),
                            )),
                        ));
                    }
                };
                simplify(Binary(Mul, Box::new(inner), Box::new(da)))
            }
            Binary(op, a, b) => {
                let da = a.differentiate(var);
                let db = b.differentiate(var);
                match op {
                    Add => simplify(Binary(Add, Box::new(da), Box::new(db))),
                    Sub => simplify(Binary(Sub, Box::new(da), Box::new(db))),
                    Mul => simplify(Binary(
                        Add,
                        Box::new(Binary(Mul, Box::new(da), b.clone())),
                        Box::new(Binary(Mul, a.clone(), Box::new(db))),
                    )),
                    // (u/v)' = (u'v - uv')/v^2
                    Div => simplify(Binary(
                        Div,
                        Box::new(Binary(
                            Sub,
                            Box::new(Binary(Mul, Box::new(da), b.clone())),
                            Box::new(Binary(Mul, a.clone(), Box::new(db))),
                        )),
                        Box::new(Binary(Pow, b.clone(), Box::new(Num(2.0)))),
                    )),
                    Pow => {
                        if let Num(c) = **b {
                            // (u^c)' = c u^(c-1) u'
                            simplify(Binary(
                                Mul,
                                Box::new(Binary(
                                    Mul,
                                    Box::new(Num(c)),
                                    Box::new(Binary(Pow, a.clone(), Box::new(Num(c - 1.0)))),
                                )),
                                Box::new(da),
                            ))
                        } else {
                            // General rule: (u^v)' = u^v (v' log u + v u'/u)
                            simplify(Binary(
                                Mul,
                                Box::new(Binary(Pow, a.clone(), b.clone())),
                                Box::new(Binary(
                                    Add,
                                    Box::new(Binary(
                                        Mul,
                                        Box::new(db),
                                        Box::new(Unary(Log, a.clone())),
                                    )),
                                    Box::new(Binary(
                                        Mul,
                                        b.clone(),
                                        Box::new(Binary(Div, Box::new(da), a.clone())),
                                    )),
                                )),
                            ))
                        }
                    }
                }
            }
        }
    }

    /// Flatten into a stack program for fast repeated evaluation.
    pub fn compile(&self) -> CompiledExpr {
        let mut prog = Vec::new();
        flatten(self, &mut prog);
        let mut depth = 0usize;
        let mut max_depth = 0usize;
        for ins in &prog {
            match ins {
                Instr::Num(_) | Instr::Time | Instr::State(_) => depth += 1,
                Instr::Unary(_) => {}
                Instr::Binary(_) => depth -= 1,
            }
            max_depth = max_depth.max(depth);
        }
        CompiledExpr {
            prog,
            stack: max_depth,
        }
    }
}

fn flatten(e: &Expr, out: &mut Vec<Instr>) {
    match e {
        Expr::Num(v) => out.push(Instr::Num(*v)),
        Expr::Time => out.push(Instr::Time),
        Expr::State(k) => out.push(Instr::State(*k)),
        Expr::Unary(op, a) => {
            flatten(a, out);
            out.push(Instr::Unary(*op));
        }
        Expr::Binary(op, a, b) => {
            flatten(a, out);
            flatten(b, out);
            out.push(Instr::Binary(*op));
        }
    }
}

#[derive(Debug, Clone)]
enum Instr {
    Num(f64),
    Time,
    State(usize),
    Unary(UnaryOp),
    Binary(BinOp),
}

/// Postfix form of an [`Expr`] evaluated on a small value stack.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    prog: Vec<Instr>,
    stack: usize,
}

impl CompiledExpr {
    pub fn eval(&self, t: f64, x: &[f64]) -> Result<f64, EvalError> {
        let mut stack = [0.0f64; 32];
        debug_assert!(self.stack <= 32);
        let mut top = 0usize;
        for ins in &self.prog {
            match ins {
                Instr::Num(v) => {
                    stack[top] = *v;
                    top += 1;
                }
                Instr::Time => {
                    stack[top] = t;
                    top += 1;
                }
                Instr::State(k) => {
                    stack[top] = *x.get(*k).ok_or(EvalError::StateTooShort {
                        want: *k + 1,
                        got: x.len(),
                    })?;
                    top += 1;
                }
                Instr::Unary(op) => {
                    stack[top - 1] = op.apply(stack[top - 1])?;
                }
                Instr::Binary(op) => {
                    stack[top - 2] = op.apply(stack[top - 2], stack[top - 1])?;
                    top -= 1;
                }
            }
        }
        Ok(stack[0])
    }
}

/// One-level constant folding and 0/1 absorption applied bottom-up by the
/// differentiation rules.
pub(crate) fn simplify(e: Expr) -> Expr {
    use BinOp::*;
    use Expr::*;
    match e {
        Unary(op, a) => {
            if let Num(v) = *a {
                if let Ok(out) = op.apply(v) {
                    return Num(out);
                }
            }
            if op == UnaryOp::Neg {
                if let Unary(UnaryOp::Neg, inner) = *a {
                    return *inner;
                }
                return Unary(UnaryOp::Neg, a);
            }
            Unary(op, a)
        }
        Binary(op, a, b) => {
            let a = *a;
            let b = *b;
            if let (Num(x), Num(y)) = (&a, &b) {
                if let Ok(out) = op.apply(*x, *y) {
                    return Num(out);
                }
            }
            match op {
                Add => {
                    if a.is_zero_literal() {
                        return b;
                    }
                    if b.is_zero_literal() {
                        return a;
                    }
                }
                Sub => {
                    if b.is_zero_literal() {
                        return a;
                    }
                    if a.is_zero_literal() {
                        return simplify(Unary(UnaryOp::Neg, Box::new(b)));
                    }
                }
                Mul => {
                    if a.is_zero_literal() || b.is_zero_literal() {
                        return Num(0.0);
                    }
                    if matches!(a, Num(v) if v == 1.0) {
                        return b;
                    }
                    if matches!(b, Num(v) if v == 1.0) {
                        return a;
                    }
                }
                Div => {
                    if a.is_zero_literal() && !b.is_zero_literal() {
                        return Num(0.0);
                    }
                    if matches!(b, Num(v) if v == 1.0) {
                        return a;
                    }
                }
                Pow => {
                    if matches!(b, Num(v) if v == 1.0) {
                        return a;
                    }
                    if matches!(b, Num(v) if v == 0.0) {
                        return Num(1.0);
                    }
                }
            }
            Binary(op, Box::new(a), Box::new(b))
        }
        other => other,
    }
}

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Unary(UnaryOp::Neg, _) => 3,
        Expr::Binary(BinOp::Pow, ..) => 4,
        _ => 5,
    }
}

impl fmt::Display for Expr {
    /// Prints with the minimal parenthesization that round-trips through the
    /// parser to a structurally identical tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => {
                if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) {
                    // Negative literals print parenthesized so that e.g.
                    // x^(-2) survives the round trip.
                    write!(f, "({v})")
                } else {
                    write!(f, "{v}")
                }
            }
            Expr::Time => write!(f, "t"),
            Expr::State(k) => write!(f, "x{}", k + 1),
            Expr::Unary(UnaryOp::Neg, a) => {
                if prec(a) < 3 {
                    write!(f, "-({a})")
                } else {
                    write!(f, "-{a}")
                }
            }
            Expr::Unary(op, a) => write!(f, "{}({a})", op.name()),
            Expr::Binary(op, a, b) => {
                let (sym, p) = match op {
                    BinOp::Add => ("+", 1),
                    BinOp::Sub => ("-", 1),
                    BinOp::Mul => ("*", 2),
                    BinOp::Div => ("/", 2),
                    BinOp::Pow => ("^", 4),
                };
                if *op == BinOp::Pow {
                    // Right-associative; a bare unary minus on the left would
                    // bind looser than `^`.
                    if prec(a) <= 4 {
                        write!(f, "({a})")?;
                    } else {
                        write!(f, "{a}")?;
                    }
                    write!(f, "^")?;
                    if prec(b) < 3 {
                        write!(f, "({b})")
                    } else {
                        write!(f, "{b}")
                    }
                } else {
                    if prec(a) < p {
                        write!(f, "({a})")?;
                    } else {
                        write!(f, "{a}")?;
                    }
                    write!(f, " {sym} ")?;
                    // Left-associative chains need parens on an equal-precedence
                    // right child: a - (b - c).
                    if prec(b) <= p {
                        write!(f, "({b})")
                    } else {
                        write!(f, "{b}")
                    }
                }
            }
        }
    }
}
