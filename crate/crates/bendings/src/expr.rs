//! S-expression parser and AST for closed-form scalar expressions over chart
//! variables `x1..xn`.
//!
//! Grammar: `expr := number | xK | (op expr...)` with operators
//! `+ - * / neg pow sin cos exp log sqrt`; `pow` takes a base expression and
//! a rational exponent written as two integer literals `p q`.

use std::fmt;

/// Expression tree. Evaluated exactly as written; no simplification pass.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Zero-based variable index (source syntax `x1` maps to index 0).
    Var(usize),
    Sum(Vec<Expr>),
    Diff(Box<Expr>, Box<Expr>),
    Prod(Vec<Expr>),
    Quot(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    /// Base raised to the rational exponent p/q. Base must evaluate > 0.
    Pow(Box<Expr>, i64, i64),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
    Sqrt(Box<Expr>),
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown symbol `{symbol}` at byte {pos}")]
    UnknownSymbol { pos: usize, symbol: String },
    #[error("variable x{index} out of range at byte {pos} (chart dimension {dim})")]
    VarOutOfRange { pos: usize, index: usize, dim: usize },
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn syntax(&self, msg: impl Into<String>) -> ParseError {
        ParseError::Syntax { pos: self.pos, msg: msg.into() }
    }

    fn atom(&mut self) -> Result<String, ParseError> {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_whitespace() || c == b'(' || c == b')' {
                break;
            }
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.syntax("expected an atom"));
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.syntax("unexpected end of input")),
            Some(b')') => Err(self.syntax("unexpected `)`")),
            Some(b'(') => {
                self.pos += 1;
                self.skip_ws();
                let op_pos = self.pos;
                let op = self.atom()?;
                let mut args = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(b')') => {
                            self.pos += 1;
                            break;
                        }
                        None => return Err(self.syntax("missing `)`")),
                        _ => args.push(self.expr()?),
                    }
                }
                self.apply(&op, op_pos, args)
            }
            Some(_) => {
                let pos = self.pos;
                let atom = self.atom()?;
                self.leaf(&atom, pos)
            }
        }
    }

    fn leaf(&self, atom: &str, pos: usize) -> Result<Expr, ParseError> {
        if let Some(rest) = atom.strip_prefix('x') {
            if let Ok(k) = rest.parse::<usize>() {
                if k == 0 || k > self.dim {
                    return Err(ParseError::VarOutOfRange { pos, index: k, dim: self.dim });
                }
                return Ok(Expr::Var(k - 1));
            }
        }
        if let Ok(v) = atom.parse::<f64>() {
            return Ok(Expr::Const(v));
        }
        Err(ParseError::UnknownSymbol { pos, symbol: atom.to_owned() })
    }

    fn apply(&self, op: &str, pos: usize, args: Vec<Expr>) -> Result<Expr, ParseError> {
        let got = args.len();
        let arity_err = |want: &str| ParseError::Syntax {
            pos,
            msg: format!("operator `{op}` expects {want} argument(s), got {got}"),
        };
        let unary = |args: Vec<Expr>, want: &str| -> Result<Box<Expr>, ParseError> {
            let mut args = args;
            if args.len() != 1 {
                return Err(ParseError::Syntax {
                    pos,
                    msg: format!("operator expects {want} argument(s), got {}", args.len()),
                });
            }
            Ok(Box::new(args.remove(0)))
        };
        match op {
            "+" => {
                if args.is_empty() {
                    return Err(arity_err("at least 1"));
                }
                Ok(Expr::Sum(args))
            }
            "*" => {
                if args.is_empty() {
                    return Err(arity_err("at least 1"));
                }
                Ok(Expr::Prod(args))
            }
            "-" => {
                let mut args = args;
                if args.len() != 2 {
                    return Err(arity_err("2"));
                }
                let b = args.pop().unwrap();
                let a = args.pop().unwrap();
                Ok(Expr::Diff(Box::new(a), Box::new(b)))
            }
            "/" => {
                let mut args = args;
                if args.len() != 2 {
                    return Err(arity_err("2"));
                }
                let b = args.pop().unwrap();
                let a = args.pop().unwrap();
                Ok(Expr::Quot(Box::new(a), Box::new(b)))
            }
            "neg" => Ok(Expr::Neg(unary(args, "1")?)),
            "sin" => Ok(Expr::Sin(unary(args, "1")?)),
            "cos" => Ok(Expr::Cos(unary(args, "1")?)),
            "exp" => Ok(Expr::Exp(unary(args, "1")?)),
            "log" => Ok(Expr::Log(unary(args, "1")?)),
            "sqrt" => Ok(Expr::Sqrt(unary(args, "1")?)),
            "pow" => {
                let mut args = args;
                if args.len() != 3 {
                    return Err(arity_err("3 (base, p, q)"));
                }
                let q = args.pop().unwrap();
                let p = args.pop().unwrap();
                let base = args.pop().unwrap();
                let as_int = |e: &Expr| -> Option<i64> {
                    match e {
                        Expr::Const(v) if v.fract() == 0.0 => Some(*v as i64),
                        _ => None,
                    }
                };
                let (p, q) = match (as_int(&p), as_int(&q)) {
                    (Some(p), Some(q)) if q != 0 => (p, q),
                    _ => {
                        return Err(ParseError::Syntax {
                            pos,
                            msg: "pow exponent must be two integer literals p q with q != 0"
                                .into(),
                        })
                    }
                };
                Ok(Expr::Pow(Box::new(base), p, q))
            }
            _ => Err(ParseError::UnknownSymbol { pos, symbol: op.to_owned() }),
        }
    }
}

/// Parse an s-expression over chart variables `x1..xn`.
pub fn parse_expression(text: &str, n: usize) -> Result<Expr, ParseError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0, dim: n };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.syntax("trailing input after expression"));
    }
    Ok(e)
}

impl Expr {
    /// Largest variable index used, if any.
    pub fn max_var(&self) -> Option<usize> {
        let mut m = None;
        self.visit(&mut |e| {
            if let Expr::Var(k) = e {
                m = Some(m.map_or(*k, |cur: usize| cur.max(*k)));
            }
        });
        m
    }

    fn visit(&self, f: &mut impl FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Const(_) | Expr::Var(_) => {}
            Expr::Sum(v) | Expr::Prod(v) => v.iter().for_each(|e| e.visit(f)),
            Expr::Diff(a, b) | Expr::Quot(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Expr::Neg(a)
            | Expr::Pow(a, _, _)
            | Expr::Sin(a)
            | Expr::Cos(a)
            | Expr::Exp(a)
            | Expr::Log(a)
            | Expr::Sqrt(a) => a.visit(f),
        }
    }

    /// Shift every variable index by `by` (used when a chart gains a leading
    /// cone parameter).
    pub fn shift_vars(&self, by: usize) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(k) => Expr::Var(k + by),
            Expr::Sum(v) => Expr::Sum(v.iter().map(|e| e.shift_vars(by)).collect()),
            Expr::Prod(v) => Expr::Prod(v.iter().map(|e| e.shift_vars(by)).collect()),
            Expr::Diff(a, b) => {
                Expr::Diff(Box::new(a.shift_vars(by)), Box::new(b.shift_vars(by)))
            }
            Expr::Quot(a, b) => {
                Expr::Quot(Box::new(a.shift_vars(by)), Box::new(b.shift_vars(by)))
            }
            Expr::Neg(a) => Expr::Neg(Box::new(a.shift_vars(by))),
            Expr::Pow(a, p, q) => Expr::Pow(Box::new(a.shift_vars(by)), *p, *q),
            Expr::Sin(a) => Expr::Sin(Box::new(a.shift_vars(by))),
            Expr::Cos(a) => Expr::Cos(Box::new(a.shift_vars(by))),
            Expr::Exp(a) => Expr::Exp(Box::new(a.shift_vars(by))),
            Expr::Log(a) => Expr::Log(Box::new(a.shift_vars(by))),
            Expr::Sqrt(a) => Expr::Sqrt(Box::new(a.shift_vars(by))),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(f: &mut fmt::Formatter<'_>, op: &str, args: &[&Expr]) -> fmt::Result {
            write!(f, "({op}")?;
            for a in args {
                write!(f, " {a}")?;
            }
            write!(f, ")")
        }
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Var(k) => write!(f, "x{}", k + 1),
            Expr::Sum(v) => list(f, "+", &v.iter().collect::<Vec<_>>()),
            Expr::Prod(v) => list(f, "*", &v.iter().collect::<Vec<_>>()),
            Expr::Diff(a, b) => list(f, "-", &[a, b]),
            Expr::Quot(a, b) => list(f, "/", &[a, b]),
            Expr::Neg(a) => list(f, "neg", &[a]),
            Expr::Pow(a, p, q) => write!(f, "(pow {a} {p} {q})"),
            Expr::Sin(a) => list(f, "sin", &[a]),
            Expr::Cos(a) => list(f, "cos", &[a]),
            Expr::Exp(a) => list(f, "exp", &[a]),
            Expr::Log(a) => list(f, "log", &[a]),
            Expr::Sqrt(a) => list(f, "sqrt", &[a]),
        }
    }
}

/// Convenience constructors used by the scene catalog.
pub mod build {
    use super::Expr;

    pub fn c(v: f64) -> Expr {
        Expr::Const(v)
    }
    pub fn var(k: usize) -> Expr {
        Expr::Var(k)
    }
    pub fn sum(v: Vec<Expr>) -> Expr {
        Expr::Sum(v)
    }
    pub fn prod(v: Vec<Expr>) -> Expr {
        Expr::Prod(v)
    }
    pub fn neg(e: Expr) -> Expr {
        Expr::Neg(Box::new(e))
    }
    pub fn sin(e: Expr) -> Expr {
        Expr::Sin(Box::new(e))
    }
    pub fn cos(e: Expr) -> Expr {
        Expr::Cos(Box::new(e))
    }
    pub fn scale(k: f64, e: Expr) -> Expr {
        Expr::Prod(vec![Expr::Const(k), e])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_simple_forms() {
        assert_eq!(parse_expression("(sin x1)", 2).unwrap(), Expr::Sin(Box::new(Expr::Var(0))));
        assert_eq!(
            parse_expression("(+ (* x1 x1) 1)", 2).unwrap(),
            Expr::Sum(vec![Expr::Prod(vec![Expr::Var(0), Expr::Var(0)]), Expr::Const(1.0)])
        );
    }

    #[test]
    fn variable_out_of_range() {
        match parse_expression("(cos x7)", 3) {
            Err(ParseError::VarOutOfRange { index: 7, dim: 3, .. }) => {}
            other => panic!("expected out-of-range error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_symbol_reports_position() {
        match parse_expression("(tan x1)", 3) {
            Err(ParseError::UnknownSymbol { symbol, pos }) => {
                assert_eq!(symbol, "tan");
                assert_eq!(pos, 1);
            }
            other => panic!("expected unknown symbol, got {other:?}"),
        }
    }

    #[test]
    fn trailing_garbage_rejected() {
        assert!(matches!(parse_expression("x1 x2", 3), Err(ParseError::Syntax { .. })));
    }

    #[test]
    fn display_round_trips() {
        let src = "(+ (* 2 x1 (cos x2)) (pow x2 3 2) (neg (/ x1 x2)))";
        let e = parse_expression(src, 2).unwrap();
        let e2 = parse_expression(&e.to_string(), 2).unwrap();
        assert_eq!(e, e2);
    }
}
