//! Expression language for drift and diffusion terms.

mod ast;
mod eval;
mod parse;
mod table;

pub use ast::{Affine, BinOp, Expr, Func};
pub use parse::{parse_expr, Symbols};
pub use table::Table2;

use crate::autodiff::{Arith, Plain};
use crate::error::{Error, Result};
use crate::ivl::{self, Iv};
use crate::scalar::prelude::*;
use std::collections::BTreeMap;
use std::sync::Arc;

/// `dx = f(x, u) dt + g(x) dw` with `f` of length `n` and `g` of shape
/// `n × n_w`.
#[derive(Clone, Debug)]
pub struct Dynamics {
    pub n: usize,
    pub m: usize,
    pub n_w: usize,
    pub drift: Vec<Expr>,
    pub diffusion: Vec<Vec<Expr>>,
    pub constants: BTreeMap<String, f64>,
    affine: Vec<Option<Affine>>,
    /// Non-zero entries `(i, l, [g gᵀ]_il)` with `i <= l`.
    gg: Vec<(usize, usize, Expr)>,
}

impl Dynamics {
    /// Parses and binds the expressions.
    pub fn parse(
        n: usize,
        m: usize,
        n_w: usize,
        drift: &[&str],
        diffusion: &[Vec<&str>],
        constants: BTreeMap<String, f64>,
        tables: BTreeMap<String, Arc<Table2>>,
    ) -> Result<Self> {
        let sym = Symbols::new(n, m)
            .with_constants(constants.keys().cloned())
            .with_tables(tables.keys().cloned());
        let drift = drift
            .iter()
            .map(|s| parse_expr(s, &sym)?.bind(&constants, &tables))
            .collect::<Result<Vec<_>>>()?;
        let diffusion = diffusion
            .iter()
            .map(|row| {
                row.iter()
                    .map(|s| parse_expr(s, &sym)?.bind(&constants, &tables))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, m, n_w, drift, diffusion, constants)
    }

    pub fn new(
        n: usize,
        m: usize,
        n_w: usize,
        drift: Vec<Expr>,
        diffusion: Vec<Vec<Expr>>,
        constants: BTreeMap<String, f64>,
    ) -> Result<Self> {
        if drift.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: drift.len(),
            });
        }
        if diffusion.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: diffusion.len(),
            });
        }
        for row in &diffusion {
            if row.len() != n_w {
                return Err(Error::DimensionMismatch {
                    expected: n_w,
                    got: row.len(),
                });
            }
            if row.iter().any(Expr::uses_input) {
                return Err(Error::Config("diffusion may depend on the state only".into()));
            }
        }
        for e in drift.iter().chain(diffusion.iter().flatten()) {
            let (a, b) = e.arity();
            if a > n || b > m {
                return Err(Error::Config(format!("expression {e} references undeclared variables")));
            }
        }
        let affine = drift.iter().map(|e| e.as_affine(n, m)).collect();
        let mut gg = Vec::new();
        for i in 0..n {
            for l in i..n {
                let mut terms = Vec::new();
                for k in 0..n_w {
                    let (a, b) = (&diffusion[i][k], &diffusion[l][k]);
                    if a.is_zero() || b.is_zero() {
                        continue;
                    }
                    terms.push(if i == l {
                        Expr::bin(BinOp::Pow, a.clone(), Expr::Const(2.0))
                    } else {
                        Expr::bin(BinOp::Mul, a.clone(), b.clone())
                    });
                }
                if let Some(first) = terms.first().cloned() {
                    let e = terms.into_iter().skip(1).fold(first, |acc, t| Expr::bin(BinOp::Add, acc, t));
                    gg.push((i, l, e));
                }
            }
        }
        Ok(Self {
            n,
            m,
            n_w,
            drift,
            diffusion,
            constants,
            affine,
            gg,
        })
    }

    /// Same system with `u_j := us[j]` substituted into the drift; the result
    /// has no inputs.
    pub fn with_inputs_inlined(&self, us: &[Expr]) -> Result<Self> {
        if us.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: us.len(),
            });
        }
        if us.iter().any(Expr::uses_input) {
            return Err(Error::Config("controller expressions may depend on the state only".into()));
        }
        let drift = self.drift.iter().map(|e| e.substitute_inputs(us)).collect();
        Self::new(self.n, 0, self.n_w, drift, self.diffusion.clone(), self.constants.clone())
    }

    /// Non-zero upper-triangular entries of `g gᵀ`.
    pub fn diffusion_products(&self) -> &[(usize, usize, Expr)] {
        &self.gg
    }

    pub fn drift_at<A: Arith>(&self, a: &mut A, x: &[A::V], u: &[A::V]) -> Result<Vec<A::V>> {
        self.drift.iter().map(|e| e.eval(a, x, u)).collect()
    }

    pub fn drift_f64(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.drift_at(&mut Plain::<f64>::new(), x, u)
    }

    /// `g(x)` as rows.
    pub fn diffusion_f64(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.diffusion
            .iter()
            .map(|row| row.iter().map(|e| e.eval_f64(x, &[])).collect())
            .collect()
    }

    /// Drift enclosure. Affine components use the center-radius form.
    pub fn drift_iv<A: Arith>(&self, a: &mut A, x: &[Iv<A::V>], u: &[Iv<A::V>]) -> Result<Vec<Iv<A::V>>> {
        let mut out = Vec::with_capacity(self.n);
        for (e, aff) in self.drift.iter().zip(&self.affine) {
            match aff {
                Some(af) => out.push(affine_iv(a, af, x, u)),
                None => out.push(e.eval_iv(a, x, u)?),
            }
        }
        Ok(out)
    }

    pub fn gg_at<A: Arith>(&self, a: &mut A, x: &[A::V]) -> Result<Vec<A::V>> {
        self.gg.iter().map(|(_, _, e)| e.eval(a, x, &[])).collect()
    }

    pub fn gg_iv<A: Arith>(&self, a: &mut A, x: &[Iv<A::V>]) -> Result<Vec<Iv<A::V>>> {
        self.gg.iter().map(|(_, _, e)| e.eval_iv(a, x, &[])).collect()
    }
}

fn affine_iv<A: Arith>(a: &mut A, af: &Affine, x: &[Iv<A::V>], u: &[Iv<A::V>]) -> Iv<A::V> {
    let mut coef = Vec::new();
    let mut cs = Vec::new();
    let mut rs = Vec::new();
    for (k, v) in af.state.iter().zip(x).chain(af.input.iter().zip(u)) {
        if *k != 0.0 {
            let (c, r) = ivl::center_radius(a, *v);
            coef.push(A::T::of(*k));
            cs.push(c);
            rs.push(r);
        }
    }
    let c = a.lincomb(&coef, &cs);
    let c = a.add_const(c, A::T::of(af.c0));
    let abs: Vec<A::T> = coef.iter().map(|k| k.abs()).collect();
    let r = a.lincomb(&abs, &rs);
    ivl::from_center_radius(a, c, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Interval;

    pub(crate) fn gbm(n: usize) -> Dynamics {
        let mut drift = Vec::new();
        for i in 0..n {
            let mut s = format!("-0.5*x{}", i + 1);
            if i + 1 < n {
                s += &format!(" + x{}", i + 2);
            }
            if i > 0 {
                s += &format!(" - x{}", i);
            }
            s += &format!(" + u{}", i + 1);
            drift.push(s);
        }
        let diff: Vec<Vec<String>> = (0..n)
            .map(|i| (0..n).map(|k| if i == k { format!("0.2*x{}", i + 1) } else { "0".into() }).collect())
            .collect();
        let d: Vec<&str> = drift.iter().map(String::as_str).collect();
        let g: Vec<Vec<&str>> = diff.iter().map(|r| r.iter().map(String::as_str).collect()).collect();
        Dynamics::parse(n, n, n, &d, &g, BTreeMap::new(), BTreeMap::new()).unwrap()
    }

    #[test]
    fn gbm_drift_with_negative_feedback() {
        let d = gbm(2);
        let f = d.drift_f64(&[1.0, 0.0], &[-1.0, 0.0]).unwrap();
        assert_eq!(f, vec![-1.5, -1.0]);
        let inl = d
            .with_inputs_inlined(&[Expr::Neg(Box::new(Expr::State(0))), Expr::Neg(Box::new(Expr::State(1)))])
            .unwrap();
        assert_eq!(inl.m, 0);
        assert_eq!(inl.drift_f64(&[1.0, 0.0], &[]).unwrap(), vec![-1.5, -1.0]);
        // diagonal diffusion gives diagonal products only
        assert_eq!(d.diffusion_products().len(), 2);
        assert!(d.diffusion_products().iter().all(|(i, l, _)| i == l));
    }

    #[test]
    fn affine_enclosure_is_tight() {
        let d = gbm(2)
            .with_inputs_inlined(&[Expr::Neg(Box::new(Expr::State(0))), Expr::Neg(Box::new(Expr::State(1)))])
            .unwrap();
        let mut p = Plain::<f64>::new();
        let x = [Iv::new(0.0, 2.0), Iv::new(-1.0, 1.0)];
        let f = d.drift_iv(&mut p, &x, &[]).unwrap();
        // f1 = -1.5 x1 + x2 over the box
        assert_eq!((f[0].lo, f[0].hi), (-4.0, 1.0));
        let g = d.gg_iv(&mut p, &x).unwrap();
        let r = ivl::value(&p, g[1]).unwrap();
        assert_eq!(r, Interval::new(0.0, 0.04000000000000001).unwrap());
    }

    #[test]
    fn rejects_input_dependent_diffusion() {
        let r = Dynamics::parse(1, 1, 1, &["u1"], &[vec!["u1"]], BTreeMap::new(), BTreeMap::new());
        assert!(r.is_err());
    }

    #[test]
    fn rank_one_noise_has_off_diagonal_products() {
        let g = vec![vec!["0.1"], vec!["0.1"], vec!["0.1"]];
        let d = Dynamics::parse(3, 0, 1, &["0", "0", "0"], &g, BTreeMap::new(), BTreeMap::new()).unwrap();
        assert_eq!(d.diffusion_products().len(), 6);
        let v = d.gg_at(&mut Plain::<f64>::new(), &[0.0; 3]).unwrap();
        assert!(v.iter().all(|x| (x - 0.01).abs() < 1e-15));
    }
}
