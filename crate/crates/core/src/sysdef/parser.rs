//! Recursive-descent parser for the scalar expression language.
//!
//! Grammar (tightest first): `^` right-associative, unary `-`, `* /`, `+ -`.
//! Identifiers are `t`, `x1..xn`, the unary functions, and the constants
//! `pi` and `e`.

use super::expr::{BinOp, Expr, UnaryOp};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at byte {offset}: {msg}")]
    Syntax { offset: usize, msg: String },
    #[error("unknown variable `{name}` at byte {offset} (dimension is {n})")]
    UnknownVariable { offset: usize, name: String, n: usize },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { offset: usize, name: String },
    #[error("`{name}` at byte {offset} takes exactly one parenthesized argument")]
    Arity { offset: usize, name: String },
    #[error("empty expression")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Next token with its starting byte offset, or None at end of input.
    fn next(&mut self) -> Result<Option<(usize, Tok)>, ParseError> {
        self.skip_ws();
        if self.pos >= self.src.len() {
            return Ok(None);
        }
        let start = self.pos;
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => {
                self.pos += 1;
                Tok::Plus
            }
            b'-' => {
                self.pos += 1;
                Tok::Minus
            }
            b'*' => {
                self.pos += 1;
                Tok::Star
            }
            b'/' => {
                self.pos += 1;
                Tok::Slash
            }
            b'^' => {
                self.pos += 1;
                Tok::Caret
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b'0'..=b'9' | b'.' => {
                let mut end = self.pos;
                let mut seen_exp = false;
                while end < self.src.len() {
                    let b = self.src[end];
                    let ok = b.is_ascii_digit()
                        || b == b'.'
                        || b == b'e'
                        || b == b'E'
                        || (seen_exp
                            && (b == b'+' || b == b'-')
                            && matches!(self.src[end - 1], b'e' | b'E'));
                    if !ok {
                        break;
                    }
                    if b == b'e' || b == b'E' {
                        // `e` only continues the number when followed by a digit
                        // or a signed digit; otherwise it is the constant.
                        let next = self.src.get(end + 1).copied();
                        let next2 = self.src.get(end + 2).copied();
                        let exp_ok = matches!(next, Some(d) if d.is_ascii_digit())
                            || (matches!(next, Some(b'+') | Some(b'-'))
                                && matches!(next2, Some(d) if d.is_ascii_digit()));
                        if !exp_ok {
                            break;
                        }
                        seen_exp = true;
                    }
                    end += 1;
                }
                let text = std::str::from_utf8(&self.src[self.pos..end]).unwrap();
                let v: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    offset: start,
                    msg: format!("invalid number `{text}`"),
                })?;
                self.pos = end;
                Tok::Num(v)
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let mut end = self.pos;
                while end < self.src.len()
                    && (self.src[end].is_ascii_alphanumeric() || self.src[end] == b'_')
                {
                    end += 1;
                }
                let name = std::str::from_utf8(&self.src[self.pos..end]).unwrap().to_string();
                self.pos = end;
                Tok::Ident(name)
            }
            other => {
                return Err(ParseError::Syntax {
                    offset: start,
                    msg: format!("unexpected character `{}`", other as char),
                })
            }
        };
        Ok(Some((start, tok)))
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    idx: usize,
    n: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&(usize, Tok)> {
        self.toks.get(self.idx)
    }

    fn bump(&mut self) -> Option<(usize, Tok)> {
        let t = self.toks.get(self.idx).cloned();
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        match self.bump() {
            Some((_, t)) if t == want => Ok(()),
            Some((off, _)) => Err(ParseError::Syntax {
                offset: off,
                msg: format!("expected {what}"),
            }),
            None => Err(ParseError::Syntax {
                offset: self.len,
                msg: format!("expected {what}, found end of input"),
            }),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some((_, tok)) = self.peek() {
            let op = match tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.idx += 1;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some((_, tok)) = self.peek() {
            let op = match tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.idx += 1;
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if let Some((_, Tok::Minus)) = self.peek() {
            self.idx += 1;
            let inner = self.unary()?;
            // Fold negated literals so `-1` and the printed `(-1)` produce
            // the same tree.
            if let Expr::Num(v) = inner {
                return Ok(Expr::Num(-v));
            }
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if let Some((_, Tok::Caret)) = self.peek() {
            self.idx += 1;
            // Exponent parses at unary level: `^` is right-associative and a
            // leading minus in the exponent is allowed.
            let exp = self.unary()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.bump() {
            Some((_, Tok::Num(v))) => Ok(Expr::Num(v)),
            Some((_, Tok::LParen)) => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some((off, Tok::Ident(name))) => self.ident(off, name),
            Some((off, _)) => Err(ParseError::Syntax {
                offset: off,
                msg: "expected a number, variable, function, or `(`".into(),
            }),
            None => Err(ParseError::Syntax {
                offset: self.len,
                msg: "unexpected end of input".into(),
            }),
        }
    }

    fn ident(&mut self, off: usize, name: String) -> Result<Expr, ParseError> {
        let func = match name.as_str() {
            "sin" => Some(UnaryOp::Sin),
            "cos" => Some(UnaryOp::Cos),
            "exp" => Some(UnaryOp::Exp),
            "log" => Some(UnaryOp::Log),
            "tanh" => Some(UnaryOp::Tanh),
            "abs" => Some(UnaryOp::Abs),
            "sqrt" => Some(UnaryOp::Sqrt),
            _ => None,
        };
        if let Some(op) = func {
            if !matches!(self.peek(), Some((_, Tok::LParen))) {
                return Err(ParseError::Arity { offset: off, name });
            }
            self.idx += 1;
            let arg = self.expr()?;
            self.expect(Tok::RParen, "`)` closing the function argument")?;
            return Ok(Expr::Unary(op, Box::new(arg)));
        }
        let var = match name.as_str() {
            "t" => Some(Expr::Time),
            "pi" => Some(Expr::Num(std::f64::consts::PI)),
            "e" => Some(Expr::Num(std::f64::consts::E)),
            _ => {
                if let Some(rest) = name.strip_prefix('x') {
                    if let Ok(k) = rest.parse::<usize>() {
                        if k >= 1 && k <= self.n {
                            Some(Expr::State(k - 1))
                        } else {
                            return Err(ParseError::UnknownVariable {
                                offset: off,
                                name,
                                n: self.n,
                            });
                        }
                    } else {
                        None
                    }
                } else {
                    None
                }
            }
        };
        let expr = var.ok_or(ParseError::UnknownIdentifier { offset: off, name })?;
        // A variable or constant used like a function is an arity error.
        if matches!(self.peek(), Some((_, Tok::LParen))) {
            return Err(ParseError::Syntax {
                offset: off,
                msg: "variables and constants take no arguments".into(),
            });
        }
        Ok(expr)
    }
}

/// Parse `text` as an expression over `t` and `x1..xn`.
pub fn parse_expr(text: &str, n: usize) -> Result<Expr, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let mut lex = Lexer::new(text);
    let mut toks = Vec::new();
    while let Some(t) = lex.next()? {
        toks.push(t);
    }
    let mut p = Parser {
        toks,
        idx: 0,
        n,
        len: text.len(),
    };
    let e = p.expr()?;
    if let Some((off, _)) = p.peek() {
        return Err(ParseError::Syntax {
            offset: *off,
            msg: "trailing input after expression".into(),
        });
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysdef::expr::Var;

    #[test]
    fn precedence_and_eval() {
        let e = parse_expr("-1 - t*sin(t)", 0).unwrap();
        assert_eq!(e.eval(0.0, None).unwrap(), -1.0);
        // ^ binds tighter than unary minus: -x^2 = -(x^2)
        let e = parse_expr("-x1^2", 1).unwrap();
        assert_eq!(e.eval(0.0, Some(&[3.0])).unwrap(), -9.0);
        // right-associativity: 2^3^2 = 2^9
        let e = parse_expr("2^3^2", 0).unwrap();
        assert_eq!(e.eval(0.0, None).unwrap(), 512.0);
        // exponent accepts unary minus
        let e = parse_expr("2^-1", 0).unwrap();
        assert_eq!(e.eval(0.0, None).unwrap(), 0.5);
        // unary minus binds tighter than *: -2 * 3 is (-2)*3
        let e = parse_expr("1 - 2 * 3", 0).unwrap();
        assert_eq!(e.eval(0.0, None).unwrap(), -5.0);
    }

    #[test]
    fn valid_state_references() {
        assert!(parse_expr("x1^2 + t", 2).is_ok());
        let err = parse_expr("x3", 2).unwrap_err();
        assert!(matches!(err, ParseError::UnknownVariable { .. }));
    }

    #[test]
    fn error_offsets() {
        match parse_expr("1 + foo", 0).unwrap_err() {
            ParseError::UnknownIdentifier { offset, name } => {
                assert_eq!(offset, 4);
                assert_eq!(name, "foo");
            }
            other => panic!("unexpected: {other:?}"),
        }
        match parse_expr("sin t", 0).unwrap_err() {
            ParseError::Arity { offset, name } => {
                assert_eq!(offset, 0);
                assert_eq!(name, "sin");
            }
            other => panic!("unexpected: {other:?}"),
        }
        assert!(matches!(parse_expr("  ", 0), Err(ParseError::Empty)));
        assert!(parse_expr("1 + ", 0).is_err());
        assert!(parse_expr("(1 + 2", 0).is_err());
        assert!(parse_expr("1 2", 0).is_err());
    }

    #[test]
    fn constants() {
        let e = parse_expr("cos(pi)", 0).unwrap();
        assert!((e.eval(0.0, None).unwrap() + 1.0).abs() < 1e-15);
        let e = parse_expr("log(e)", 0).unwrap();
        assert!((e.eval(0.0, None).unwrap() - 1.0).abs() < 1e-15);
        // scientific notation vs the constant `e`
        let e = parse_expr("1e2", 0).unwrap();
        assert_eq!(e.eval(0.0, None).unwrap(), 100.0);
        let e = parse_expr("2e", 0);
        assert!(e.is_err()); // 2 followed by the constant e is not a product
    }

    #[test]
    fn print_parse_round_trip() {
        for src in [
            "-1 - t*sin(t)",
            "x1^2 + t",
            "2^-1",
            "1 - 2 - 3",
            "1 - (2 - 3)",
            "(x1 + x2)^(t + 1)",
            "-(t + 1)*exp(-2*t)",
            "t/(1 + t)/2",
            "abs(t - 3)^3",
        ] {
            let e = parse_expr(src, 2).unwrap();
            let printed = e.to_string();
            let re = parse_expr(&printed, 2).unwrap();
            assert_eq!(e, re, "round trip failed for `{src}` -> `{printed}`");
        }
    }

    proptest::proptest! {
        /// print -> parse returns a structurally identical tree.
        #[test]
        fn prop_round_trip(e in arb_expr(3)) {
            let printed = e.to_string();
            let re = parse_expr(&printed, 3).unwrap();
            proptest::prop_assert_eq!(&e, &re, "printed `{}`", printed);
        }

        /// Symbolic derivatives agree with central finite differences at
        /// points where both evaluate.
        #[test]
        fn prop_derivative_matches_fd(e in arb_expr(2), t0 in 0.1f64..3.0, x0 in -2.0f64..2.0, x1 in -2.0f64..2.0) {
            let d = e.differentiate(Var::State(0));
            let h = 1e-6;
            let at = |x: f64| e.eval(t0, Some(&[x, x1]));
            if let (Ok(fp), Ok(fm), Ok(sym)) = (at(x0 + h), at(x0 - h), d.eval(t0, Some(&[x0, x1]))) {
                let fd = (fp - fm) / (2.0 * h);
                let scale = 1.0f64.max(sym.abs());
                // Central differences on these smooth nodes are good to ~1e-9
                // relative; allow slack for cancellation-heavy trees.
                if fd.is_finite() && sym.abs() < 1e6 {
                    proptest::prop_assert!((sym - fd).abs() <= 2e-4 * scale,
                        "sym={} fd={} expr={}", sym, fd, e);
                }
            }
        }
    }

    /// Random smooth expression trees (no log/sqrt/div/pow to keep the
    /// finite-difference oracle well behaved; those get targeted tests).
    fn arb_expr(depth: u32) -> impl proptest::strategy::Strategy<Value = Expr> {
        use proptest::prelude::*;
        let leaf = prop_oneof![
            (-3.0f64..3.0).prop_map(Expr::Num),
            Just(Expr::Time),
            Just(Expr::State(0)),
            Just(Expr::State(1)),
        ];
        leaf.prop_recursive(depth, 32, 2, |inner| {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Binary(
                    BinOp::Add,
                    Box::new(a),
                    Box::new(b)
                )),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Binary(
                    BinOp::Sub,
                    Box::new(a),
                    Box::new(b)
                )),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Binary(
                    BinOp::Mul,
                    Box::new(a),
                    Box::new(b)
                )),
                // The parser folds negated literals, so the generator must too.
                inner.clone().prop_map(|a| match a {
                    Expr::Num(v) => Expr::Num(-v),
                    other => Expr::Unary(UnaryOp::Neg, Box::new(other)),
                }),
                inner.clone().prop_map(|a| Expr::Unary(UnaryOp::Sin, Box::new(a))),
                inner.clone().prop_map(|a| Expr::Unary(UnaryOp::Cos, Box::new(a))),
                inner.clone().prop_map(|a| Expr::Unary(UnaryOp::Tanh, Box::new(a))),
                inner.prop_map(|a| Expr::Unary(UnaryOp::Exp, Box::new(a))),
            ]
        })
    }
}
