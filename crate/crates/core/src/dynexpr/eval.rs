//! Point and interval evaluation of expressions over an [`Arith`] back-end.

use super::ast::{BinOp, Expr, Func};
use super::table::Table2;
use crate::autodiff::{Arith, Plain};
use crate::error::{Error, Result};
use crate::ivl::{self, Iv};
use crate::scalar::prelude::*;

fn unbound(name: &str) -> Error {
    Error::Domain(format!("'{name}' is not bound to a value"))
}

fn checked<A: Arith>(a: &A, v: A::V, what: &str) -> Result<A::V> {
    if a.value(v).is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

fn exponent(e: &Expr) -> Result<f64> {
    e.const_value()
        .ok_or_else(|| Error::Domain("exponent is not a bound constant".into()))
}

fn as_int(p: f64) -> Option<i32> {
    (p.fract() == 0.0 && p.abs() < 1e9).then_some(p as i32)
}

impl Expr {
    /// Value at a point.
    pub fn eval<A: Arith>(&self, a: &mut A, x: &[A::V], u: &[A::V]) -> Result<A::V> {
        let z = A::T::zero();
        let v = match self {
            Expr::Const(c) => a.constant(A::T::of(*c)),
            Expr::Named(n) => return Err(unbound(n)),
            Expr::State(i) => *x.get(*i).ok_or(Error::DimensionMismatch {
                expected: i + 1,
                got: x.len(),
            })?,
            Expr::Input(j) => *u.get(*j).ok_or(Error::DimensionMismatch {
                expected: j + 1,
                got: u.len(),
            })?,
            Expr::Neg(e) => {
                let v = e.eval(a, x, u)?;
                a.neg(v)
            }
            Expr::Bin(BinOp::Pow, b, e) => {
                let p = exponent(e)?;
                let bv = b.eval(a, x, u)?;
                let base = a.value(bv);
                match as_int(p) {
                    Some(k) => {
                        if k < 0 && base == z {
                            return Err(Error::Domain("zero raised to a negative power".into()));
                        }
                        a.powi(bv, k)
                    }
                    None => {
                        if base <= z {
                            return Err(Error::Domain(format!("non-integer power of {base}")));
                        }
                        a.powf(bv, A::T::of(p))
                    }
                }
            }
            Expr::Bin(op, l, r) => {
                let lv = l.eval(a, x, u)?;
                let rv = r.eval(a, x, u)?;
                match op {
                    BinOp::Add => a.add(lv, rv),
                    BinOp::Sub => a.sub(lv, rv),
                    BinOp::Mul => a.mul(lv, rv),
                    BinOp::Div => {
                        if a.value(rv) == z {
                            return Err(Error::Domain("division by zero".into()));
                        }
                        a.div(lv, rv)
                    }
                    BinOp::Pow => unreachable!(),
                }
            }
            Expr::Call(f, e) => {
                let v = e.eval(a, x, u)?;
                let xv = a.value(v);
                match f {
                    Func::Sin => a.sin(v),
                    Func::Cos => a.cos(v),
                    Func::Tan => a.tan(v),
                    Func::Exp => a.exp(v),
                    Func::Log => {
                        if xv <= z {
                            return Err(Error::Domain(format!("log of {xv}")));
                        }
                        a.log(v)
                    }
                    Func::Sqrt => {
                        if xv < z {
                            return Err(Error::Domain(format!("sqrt of {xv}")));
                        }
                        a.sqrt(v)
                    }
                    Func::Tanh => a.tanh(v),
                    Func::Abs => a.abs(v),
                }
            }
            Expr::Table { name, table, args } => {
                let t = table.as_ref().ok_or_else(|| unbound(name))?;
                let p = args[0].eval(a, x, u)?;
                let q = args[1].eval(a, x, u)?;
                table_point(a, t, p, q)
            }
        };
        checked(a, v, "expression value")
    }

    /// Enclosure over a box of states and inputs.
    pub fn eval_iv<A: Arith>(&self, a: &mut A, x: &[Iv<A::V>], u: &[Iv<A::V>]) -> Result<Iv<A::V>> {
        let out = match self {
            Expr::Const(c) => ivl::constant_point(a, A::T::of(*c)),
            Expr::Named(n) => return Err(unbound(n)),
            Expr::State(i) => *x.get(*i).ok_or(Error::DimensionMismatch {
                expected: i + 1,
                got: x.len(),
            })?,
            Expr::Input(j) => *u.get(*j).ok_or(Error::DimensionMismatch {
                expected: j + 1,
                got: u.len(),
            })?,
            Expr::Neg(e) => {
                let v = e.eval_iv(a, x, u)?;
                ivl::neg(a, v)
            }
            Expr::Bin(BinOp::Pow, b, e) => {
                let p = exponent(e)?;
                let bv = b.eval_iv(a, x, u)?;
                match as_int(p) {
                    Some(k) => ivl::powi(a, bv, k)?,
                    None => ivl::powf(a, bv, A::T::of(p))?,
                }
            }
            Expr::Bin(op, l, r) => {
                // constant factors keep the enclosure exact
                if *op == BinOp::Mul {
                    if let Some(c) = l.const_value() {
                        let rv = r.eval_iv(a, x, u)?;
                        return Ok(ivl::scale(a, rv, A::T::of(c)));
                    }
                    if let Some(c) = r.const_value() {
                        let lv = l.eval_iv(a, x, u)?;
                        return Ok(ivl::scale(a, lv, A::T::of(c)));
                    }
                }
                let lv = l.eval_iv(a, x, u)?;
                let rv = r.eval_iv(a, x, u)?;
                match op {
                    BinOp::Add => ivl::add(a, lv, rv),
                    BinOp::Sub => ivl::sub(a, lv, rv),
                    BinOp::Mul => {
                        if std::ptr::eq(l.as_ref(), r.as_ref()) || l == r {
                            ivl::square(a, lv)
                        } else {
                            ivl::mul(a, lv, rv)
                        }
                    }
                    BinOp::Div => ivl::div(a, lv, rv)?,
                    BinOp::Pow => unreachable!(),
                }
            }
            Expr::Call(f, e) => {
                let v = e.eval_iv(a, x, u)?;
                match f {
                    Func::Sin => ivl::sin(a, v),
                    Func::Cos => ivl::cos(a, v),
                    Func::Tan => ivl::tan(a, v)?,
                    Func::Exp => ivl::exp(a, v),
                    Func::Log => ivl::log(a, v)?,
                    Func::Sqrt => ivl::sqrt(a, v)?,
                    Func::Tanh => ivl::tanh(a, v),
                    Func::Abs => ivl::abs(a, v),
                }
            }
            Expr::Table { name, table, args } => {
                let t = table.as_ref().ok_or_else(|| unbound(name))?;
                let p = args[0].eval_iv(a, x, u)?;
                let q = args[1].eval_iv(a, x, u)?;
                let (pl, ph) = (a.value(p.lo).to_f64_lossy(), a.value(p.hi).to_f64_lossy());
                let (ql, qh) = (a.value(q.lo).to_f64_lossy(), a.value(q.hi).to_f64_lossy());
                let (lo, hi) = t.range((pl, ph), (ql, qh));
                Iv::new(a.constant(A::T::of(lo)), a.constant(A::T::of(hi)))
            }
        };
        ivl::value(a, out)?;
        Ok(out)
    }

    /// Point value on plain `f64`.
    pub fn eval_f64(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        self.eval(&mut Plain::<f64>::new(), x, u)
    }

    /// Enclosure on plain `f64` intervals.
    pub fn eval_interval(
        &self,
        x: &[crate::Interval<f64>],
        u: &[crate::Interval<f64>],
    ) -> Result<crate::Interval<f64>> {
        let mut p = Plain::<f64>::new();
        let xi: Vec<Iv<f64>> = x.iter().map(|s| Iv::new(s.lo(), s.hi())).collect();
        let ui: Vec<Iv<f64>> = u.iter().map(|s| Iv::new(s.lo(), s.hi())).collect();
        let r = self.eval_iv(&mut p, &xi, &ui)?;
        ivl::value(&p, r)
    }
}

/// Bilinear interpolation recorded through the back-end so that gradients
/// flow to the arguments.
fn table_point<A: Arith>(a: &mut A, t: &Table2, p: A::V, q: A::V) -> A::V {
    let (i, s) = Table2::locate(&t.xs, a.value(p).to_f64_lossy());
    let (j, r) = Table2::locate(&t.ys, a.value(q).to_f64_lossy());
    let ny = t.ys.len();
    let f = |ii: usize, jj: usize| A::T::of(t.values[ii * ny + jj]);
    // clamped coordinates are constants, interior ones depend on the argument
    let sv = if s > 0.0 && s < 1.0 {
        let d = a.add_const(p, A::T::of(-t.xs[i]));
        a.scale(d, A::T::of(1.0 / (t.xs[i + 1] - t.xs[i])))
    } else {
        a.constant(A::T::of(s))
    };
    let rv = if r > 0.0 && r < 1.0 {
        let d = a.add_const(q, A::T::of(-t.ys[j]));
        a.scale(d, A::T::of(1.0 / (t.ys[j + 1] - t.ys[j])))
    } else {
        a.constant(A::T::of(r))
    };
    // f00 + s (f10 - f00) + r (f01 - f00) + s r (f11 - f10 - f01 + f00)
    let sr = a.mul(sv, rv);
    let lin = a.lincomb(
        &[f(i + 1, j) - f(i, j), f(i, j + 1) - f(i, j), f(i + 1, j + 1) - f(i + 1, j) - f(i, j + 1) + f(i, j)],
        &[sv, rv, sr],
    );
    a.add_const(lin, f(i, j))
}

#[cfg(test)]
mod tests {
    use super::super::parse::{parse_expr, Symbols};
    use crate::Interval;

    fn iv(l: f64, h: f64) -> Interval<f64> {
        Interval::new(l, h).unwrap()
    }

    #[test]
    fn scalar_examples() {
        let s = Symbols::new(2, 2);
        let e = parse_expr("-0.5*x1 + x2", &s).unwrap();
        assert_eq!(e.eval_f64(&[1.0, 0.0], &[]).unwrap(), -0.5);
        let e = parse_expr("-0.5*x1 + 1*x2 + u1", &s).unwrap();
        assert_eq!(e.eval_f64(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), -1.5);
        let e = parse_expr("sin(x1)", &s).unwrap();
        assert_eq!(e.eval_f64(&[0.0, 0.0], &[]).unwrap(), 0.0);
        assert!(parse_expr("log(x1)", &s).unwrap().eval_f64(&[0.0, 0.0], &[]).is_err());
        assert!(parse_expr("x2/x1", &s).unwrap().eval_f64(&[0.0, 1.0], &[]).is_err());
        assert!(parse_expr("x1^0.5", &s).unwrap().eval_f64(&[-1.0, 1.0], &[]).is_err());
    }

    #[test]
    fn interval_examples() {
        let s = Symbols::new(1, 0);
        let e = parse_expr("sin(x1)", &s).unwrap();
        let r = e.eval_interval(&[iv(0.0, std::f64::consts::FRAC_PI_2)], &[]).unwrap();
        assert!(r.lo().abs() < 1e-15 && (r.hi() - 1.0).abs() < 1e-15);
        let r = parse_expr("x1^2", &s).unwrap().eval_interval(&[iv(-1.0, 2.0)], &[]).unwrap();
        assert_eq!((r.lo(), r.hi()), (0.0, 4.0));
        let r = parse_expr("0.2*x1", &s).unwrap().eval_interval(&[iv(45.0, 55.0)], &[]).unwrap();
        assert!((r.lo() - 9.0).abs() < 1e-12 && (r.hi() - 11.0).abs() < 1e-12);
        assert!(parse_expr("1/x1", &s).unwrap().eval_interval(&[iv(-1.0, 1.0)], &[]).is_err());
        assert!(parse_expr("log(x1)", &s).unwrap().eval_interval(&[iv(0.0, 1.0)], &[]).is_err());
    }

    #[test]
    fn degenerate_box_matches_point() {
        let s = Symbols::new(2, 1);
        let e = parse_expr("exp(-x1)*cos(x2) + tanh(u1)/(2 + x1^2) - sqrt(abs(x2))", &s).unwrap();
        let (x, u) = ([0.3, -1.7], [0.4]);
        let v = e.eval_f64(&x, &u).unwrap();
        let r = e
            .eval_interval(&[iv(x[0], x[0]), iv(x[1], x[1])], &[iv(u[0], u[0])])
            .unwrap();
        assert!((r.lo() - v).abs() <= 1e-15 * v.abs().max(1.0));
        assert!((r.hi() - v).abs() <= 1e-15 * v.abs().max(1.0));
    }
}
