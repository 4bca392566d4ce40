//! Forward propagation of truncated Taylor coefficients: value, gradient,
//! Hessian and symmetric third-order tensor of an expression at a chart point.

use crate::expr::Expr;

/// Truncated Taylor jet of a scalar function of `n` variables, maintained up
/// to `order` (1, 2 or 3). Hessian and third tensor are stored densely with
/// all symmetric mirrors filled.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet3 {
    pub n: usize,
    pub order: usize,
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
    pub third: Vec<f64>,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
#[error("domain violation in `{expr}` at point {point:?}: {msg}")]
pub struct DomainError {
    pub expr: String,
    pub point: Vec<f64>,
    pub msg: String,
}

#[inline]
fn hx(n: usize, i: usize, j: usize) -> usize {
    i * n + j
}

#[inline]
fn tx(n: usize, i: usize, j: usize, k: usize) -> usize {
    (i * n + j) * n + k
}

impl Jet3 {
    pub fn constant(n: usize, order: usize, v: f64) -> Jet3 {
        Jet3 {
            n,
            order,
            value: v,
            grad: vec![0.0; n],
            hess: if order >= 2 { vec![0.0; n * n] } else { vec![] },
            third: if order >= 3 { vec![0.0; n * n * n] } else { vec![] },
        }
    }

    pub fn variable(n: usize, order: usize, idx: usize, x: f64) -> Jet3 {
        let mut j = Jet3::constant(n, order, x);
        j.grad[idx] = 1.0;
        j
    }

    #[inline]
    pub fn h(&self, i: usize, j: usize) -> f64 {
        self.hess[hx(self.n, i, j)]
    }

    #[inline]
    pub fn t(&self, i: usize, j: usize, k: usize) -> f64 {
        self.third[tx(self.n, i, j, k)]
    }

    /// Jet of the partial derivative with respect to variable `i`, one order
    /// lower: value from grad, grad from Hessian, Hessian from the third
    /// tensor.
    pub fn partial(&self, i: usize) -> Jet3 {
        let n = self.n;
        assert!(self.order >= 1, "partial of an order-0 jet");
        let order = self.order - 1;
        let mut out = Jet3::constant(n, order, self.grad[i]);
        if order >= 1 {
            for a in 0..n {
                out.grad[a] = self.h(i, a);
            }
        }
        if order >= 2 {
            for a in 0..n {
                for b in 0..n {
                    out.hess[hx(n, a, b)] = self.t(i, a, b);
                }
            }
        }
        out
    }

    pub fn add(&self, o: &Jet3) -> Jet3 {
        self.zip(o, |a, b| a + b)
    }

    pub fn sub(&self, o: &Jet3) -> Jet3 {
        self.zip(o, |a, b| a - b)
    }

    fn zip(&self, o: &Jet3, f: impl Fn(f64, f64) -> f64) -> Jet3 {
        assert_eq!(self.n, o.n);
        let order = self.order.min(o.order);
        let n = self.n;
        let mut out = Jet3::constant(n, order, f(self.value, o.value));
        for i in 0..n {
            out.grad[i] = f(self.grad[i], o.grad[i]);
        }
        if order >= 2 {
            for i in 0..n * n {
                out.hess[i] = f(self.hess[i], o.hess[i]);
            }
        }
        if order >= 3 {
            for i in 0..n * n * n {
                out.third[i] = f(self.third[i], o.third[i]);
            }
        }
        out
    }

    pub fn neg(&self) -> Jet3 {
        self.scale(-1.0)
    }

    pub fn scale(&self, c: f64) -> Jet3 {
        let mut out = self.clone();
        out.value *= c;
        out.grad.iter_mut().for_each(|v| *v *= c);
        out.hess.iter_mut().for_each(|v| *v *= c);
        out.third.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// Truncated Leibniz product.
    pub fn mul(&self, o: &Jet3) -> Jet3 {
        assert_eq!(self.n, o.n);
        let n = self.n;
        let order = self.order.min(o.order);
        let (a, b) = (self, o);
        let mut out = Jet3::constant(n, order, a.value * b.value);
        for i in 0..n {
            out.grad[i] = a.grad[i] * b.value + a.value * b.grad[i];
        }
        if order >= 2 {
            for i in 0..n {
                for j in 0..n {
                    out.hess[hx(n, i, j)] = a.h(i, j) * b.value
                        + a.grad[i] * b.grad[j]
                        + a.grad[j] * b.grad[i]
                        + a.value * b.h(i, j);
                }
            }
        }
        if order >= 3 {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        out.third[tx(n, i, j, k)] = a.t(i, j, k) * b.value
                            + a.h(i, j) * b.grad[k]
                            + a.h(i, k) * b.grad[j]
                            + a.h(j, k) * b.grad[i]
                            + a.grad[i] * b.h(j, k)
                            + a.grad[j] * b.h(i, k)
                            + a.grad[k] * b.h(i, j)
                            + a.value * b.t(i, j, k);
                    }
                }
            }
        }
        out
    }

    /// Compose with a univariate function given its derivatives at the inner
    /// value (Faa di Bruno up to order 3).
    pub fn chain(&self, d: [f64; 4]) -> Jet3 {
        let n = self.n;
        let u = self;
        let mut out = Jet3::constant(n, self.order, d[0]);
        for i in 0..n {
            out.grad[i] = d[1] * u.grad[i];
        }
        if self.order >= 2 {
            for i in 0..n {
                for j in 0..n {
                    out.hess[hx(n, i, j)] = d[2] * u.grad[i] * u.grad[j] + d[1] * u.h(i, j);
                }
            }
        }
        if self.order >= 3 {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        out.third[tx(n, i, j, k)] = d[3] * u.grad[i] * u.grad[j] * u.grad[k]
                            + d[2]
                                * (u.h(i, j) * u.grad[k]
                                    + u.h(i, k) * u.grad[j]
                                    + u.h(j, k) * u.grad[i])
                            + d[1] * u.t(i, j, k);
                    }
                }
            }
        }
        out
    }

    fn recip(&self) -> Jet3 {
        let u = self.value;
        self.chain([1.0 / u, -1.0 / (u * u), 2.0 / (u * u * u), -6.0 / (u * u * u * u)])
    }

    pub fn div(&self, o: &Jet3) -> Jet3 {
        self.mul(&o.recip())
    }

    pub fn sqrt_jet(&self) -> Jet3 {
        let u = self.value;
        let s = u.sqrt();
        self.chain([s, 0.5 / s, -0.25 / (s * u), 0.375 / (s * u * u)])
    }

    pub fn sin_jet(&self) -> Jet3 {
        let (s, c) = self.value.sin_cos();
        self.chain([s, c, -s, -c])
    }

    pub fn cos_jet(&self) -> Jet3 {
        let (s, c) = self.value.sin_cos();
        self.chain([c, -s, -c, s])
    }

    pub fn exp_jet(&self) -> Jet3 {
        let e = self.value.exp();
        self.chain([e, e, e, e])
    }

    pub fn log_jet(&self) -> Jet3 {
        let u = self.value;
        self.chain([u.ln(), 1.0 / u, -1.0 / (u * u), 2.0 / (u * u * u)])
    }

    pub fn powf_jet(&self, r: f64) -> Jet3 {
        let u = self.value;
        self.chain([
            u.powf(r),
            r * u.powf(r - 1.0),
            r * (r - 1.0) * u.powf(r - 2.0),
            r * (r - 1.0) * (r - 2.0) * u.powf(r - 3.0),
        ])
    }
}

/// Evaluate the jet of `expr` at `at` to the requested order (1, 2 or 3).
pub fn eval_jet(expr: &Expr, at: &[f64], order: usize) -> Result<Jet3, DomainError> {
    assert!((1..=3).contains(&order), "order must be 1, 2 or 3");
    let n = at.len();
    let err = |e: &Expr, msg: &str| DomainError {
        expr: e.to_string(),
        point: at.to_vec(),
        msg: msg.to_owned(),
    };
    match expr {
        Expr::Const(c) => Ok(Jet3::constant(n, order, *c)),
        Expr::Var(k) => {
            if *k >= n {
                return Err(err(expr, "variable index out of range for point dimension"));
            }
            Ok(Jet3::variable(n, order, *k, at[*k]))
        }
        Expr::Sum(v) => {
            let mut acc = eval_jet(&v[0], at, order)?;
            for e in &v[1..] {
                acc = acc.add(&eval_jet(e, at, order)?);
            }
            Ok(acc)
        }
        Expr::Prod(v) => {
            let mut acc = eval_jet(&v[0], at, order)?;
            for e in &v[1..] {
                acc = acc.mul(&eval_jet(e, at, order)?);
            }
            Ok(acc)
        }
        Expr::Diff(a, b) => Ok(eval_jet(a, at, order)?.sub(&eval_jet(b, at, order)?)),
        Expr::Quot(a, b) => {
            let den = eval_jet(b, at, order)?;
            if den.value == 0.0 {
                return Err(err(b, "division by zero"));
            }
            Ok(eval_jet(a, at, order)?.div(&den))
        }
        Expr::Neg(a) => Ok(eval_jet(a, at, order)?.neg()),
        Expr::Sin(a) => Ok(eval_jet(a, at, order)?.sin_jet()),
        Expr::Cos(a) => Ok(eval_jet(a, at, order)?.cos_jet()),
        Expr::Exp(a) => Ok(eval_jet(a, at, order)?.exp_jet()),
        Expr::Log(a) => {
            let u = eval_jet(a, at, order)?;
            if u.value <= 0.0 {
                return Err(err(a, "log of a non-positive value"));
            }
            Ok(u.log_jet())
        }
        Expr::Sqrt(a) => {
            let u = eval_jet(a, at, order)?;
            if u.value <= 0.0 {
                return Err(err(a, "sqrt of a non-positive value"));
            }
            Ok(u.sqrt_jet())
        }
        Expr::Pow(a, p, q) => {
            let u = eval_jet(a, at, order)?;
            if u.value <= 0.0 {
                return Err(err(a, "pow with non-positive base"));
            }
            Ok(u.powf_jet(*p as f64 / *q as f64))
        }
    }
}

/// Evaluate only the value of `expr` at `at`.
pub fn eval_value(expr: &Expr, at: &[f64]) -> Result<f64, DomainError> {
    Ok(eval_jet(expr, at, 1)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn jet(src: &str, at: &[f64], order: usize) -> Jet3 {
        eval_jet(&parse_expression(src, at.len()).unwrap(), at, order).unwrap()
    }

    #[test]
    fn sin_at_zero() {
        let j = jet("(sin x1)", &[0.0], 1);
        assert_eq!(j.value, 0.0);
        assert_eq!(j.grad[0], 1.0);
    }

    #[test]
    fn square_at_three() {
        let j = jet("(* x1 x1)", &[3.0], 2);
        assert_eq!(j.value, 9.0);
        assert_eq!(j.grad[0], 6.0);
        assert_eq!(j.h(0, 0), 2.0);
    }

    /// Central finite difference with one Richardson extrapolation step.
    fn fd_dir(f: &dyn Fn(&[f64]) -> f64, at: &[f64], i: usize, h: f64) -> f64 {
        let shift = |s: f64, step: f64| {
            let mut p = at.to_vec();
            p[i] += s * step;
            f(&p)
        };
        let d = |step: f64| (shift(1.0, step) - shift(-1.0, step)) / (2.0 * step);
        (4.0 * d(h / 2.0) - d(h)) / 3.0
    }

    #[test]
    fn third_partials_of_exp_product_match_finite_differences() {
        let e = parse_expression("(exp (* x1 x2))", 2).unwrap();
        let at = [0.3, 0.7];
        let j = eval_jet(&e, &at, 3).unwrap();
        // d^3/dxi dxj dxk via nested finite differences of lower-order jets.
        for i in 0..2 {
            for jj in 0..2 {
                for k in 0..2 {
                    let hess_fn = |p: &[f64]| eval_jet(&e, p, 2).unwrap().h(jj, k);
                    let fd = fd_dir(&hess_fn, &at, i, 1e-3);
                    let exact = j.t(i, jj, k);
                    assert!(
                        (fd - exact).abs() <= 1e-6 * exact.abs().max(1.0),
                        "third[{i}{jj}{k}] fd={fd} exact={exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn every_operator_matches_finite_differences_on_random_points() {
        // One expression per supported operator, chart dim 2.
        let cases = [
            "(+ x1 x2 1.5)",
            "(- x1 (* 2 x2))",
            "(* x1 x2 x2)",
            "(/ x1 (+ 2 (* x2 x2)))",
            "(neg (* x1 x2))",
            "(pow (+ 1.5 (* x1 x1)) 3 2)",
            "(sin (* x1 x2))",
            "(cos (+ x1 x2))",
            "(exp (* 0.5 x1 x2))",
            "(log (+ 2 x1))",
            "(sqrt (+ 2 (* x1 x2)))",
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for src in cases {
            let e = parse_expression(src, 2).unwrap();
            for _ in 0..100 {
                let at = [rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9)];
                let j = eval_jet(&e, &at, 3).unwrap();
                for i in 0..2 {
                    let val_fn = |p: &[f64]| eval_jet(&e, p, 1).unwrap().value;
                    let fd = fd_dir(&val_fn, &at, i, 1e-3);
                    assert!(
                        (fd - j.grad[i]).abs() <= 1e-6 * j.grad[i].abs().max(1.0),
                        "{src} grad[{i}] at {at:?}: fd={fd} exact={}",
                        j.grad[i]
                    );
                    for k in 0..2 {
                        let grad_fn = |p: &[f64]| eval_jet(&e, p, 1).unwrap().grad[k];
                        let fd = fd_dir(&grad_fn, &at, i, 1e-3);
                        assert!(
                            (fd - j.h(i, k)).abs() <= 1e-6 * j.h(i, k).abs().max(1.0),
                            "{src} hess[{i}{k}] at {at:?}: fd={fd} exact={}",
                            j.h(i, k)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn sum_rule_exact() {
        let a = parse_expression("(* x1 x2 x2)", 2).unwrap();
        let b = parse_expression("(sin (* x1 x2))", 2).unwrap();
        let s = parse_expression("(+ (* x1 x2 x2) (sin (* x1 x2)))", 2).unwrap();
        let at = [0.4, -1.2];
        let ja = eval_jet(&a, &at, 3).unwrap();
        let jb = eval_jet(&b, &at, 3).unwrap();
        let js = eval_jet(&s, &at, 3).unwrap();
        assert_eq!(ja.add(&jb), js);
    }

    #[test]
    fn product_rule_matches_symbolic_expansion_on_cubics() {
        // (x1 + 2 x2)(x1 x2 - 3) expanded by hand:
        // x1^2 x2 - 3 x1 + 2 x1 x2^2 - 6 x2
        let a = parse_expression("(+ x1 (* 2 x2))", 2).unwrap();
        let b = parse_expression("(- (* x1 x2) 3)", 2).unwrap();
        let expanded = parse_expression(
            "(+ (* x1 x1 x2) (* -3 x1) (* 2 x1 x2 x2) (* -6 x2))",
            2,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let at = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let prod = eval_jet(&a, &at, 3).unwrap().mul(&eval_jet(&b, &at, 3).unwrap());
            let exp = eval_jet(&expanded, &at, 3).unwrap();
            assert!((prod.value - exp.value).abs() <= 1e-14 * exp.value.abs().max(1.0));
            for i in 0..2 {
                assert!((prod.grad[i] - exp.grad[i]).abs() <= 1e-13);
                for j in 0..2 {
                    assert!((prod.h(i, j) - exp.h(i, j)).abs() <= 1e-13);
                    for k in 0..2 {
                        assert!((prod.t(i, j, k) - exp.t(i, j, k)).abs() <= 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn hessian_and_third_are_symmetric() {
        let e = parse_expression("(* (sin x1) (exp x2) x3)", 3).unwrap();
        let j = eval_jet(&e, &[0.3, -0.2, 1.1], 3).unwrap();
        for i in 0..3 {
            for jj in 0..3 {
                assert_eq!(j.h(i, jj), j.h(jj, i));
                for k in 0..3 {
                    let v = j.t(i, jj, k);
                    assert_eq!(v, j.t(i, k, jj));
                    assert_eq!(v, j.t(jj, i, k));
                    assert_eq!(v, j.t(k, jj, i));
                }
            }
        }
    }

    #[test]
    fn domain_errors_report_subexpression() {
        let e = parse_expression("(+ 1 (log (neg x1)))", 1).unwrap();
        let err = eval_jet(&e, &[2.0], 2).unwrap_err();
        assert!(err.expr.contains("neg"));
        assert_eq!(err.point, vec![2.0]);
    }

    #[test]
    fn partial_lowers_order() {
        let e = parse_expression("(* x1 x1 x2)", 2).unwrap();
        let j = eval_jet(&e, &[2.0, 3.0], 3).unwrap();
        let d1 = j.partial(0); // 2 x1 x2
        assert_eq!(d1.value, 12.0);
        assert_eq!(d1.grad[0], 6.0); // 2 x2
        assert_eq!(d1.grad[1], 4.0); // 2 x1
        assert_eq!(d1.h(0, 1), 2.0);
    }
}
