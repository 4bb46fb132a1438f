//! The generator `Φ(x) = Σ_i f_i(x, π(x)) ∂_i V(x) + ½ Σ_il [g gᵀ]_il ∂_il V(x)`
//! of a certificate under closed-loop dynamics.

use crate::autodiff::{Arith, Plain};
use crate::bounds::{self, CertAux, DerivIv};
use crate::dynexpr::{Dynamics, Expr};
use crate::error::{Error, Result};
use crate::ivl::{self, Iv};
use crate::net::{self, control, CertView, CertificateNet, ControllerNet};
use crate::scalar::prelude::*;

/// Source of the control input.
#[derive(Clone, Debug)]
pub enum Controller {
    /// The dynamics have no inputs.
    None,
    /// `u_j = expr_j(x)`, inlined into the drift.
    Expressions(Vec<Expr>),
    Net(ControllerNet),
}

#[derive(Clone, Debug)]
pub struct Generator {
    /// Closed-loop dynamics when the controller is an expression.
    pub dynamics: Dynamics,
    pub controller: Option<ControllerNet>,
    pairs: Vec<(usize, usize)>,
}

/// Controller parameters as back-end handles; `None` uses the stored
/// (frozen) controller parameters.
pub type CtrlParams<'a, V> = Option<&'a [V]>;

impl Generator {
    pub fn new(dynamics: &Dynamics, controller: Controller) -> Result<Self> {
        let (dynamics, controller) = match controller {
            Controller::None => {
                if dynamics.m != 0 {
                    return Err(Error::Config(format!("dynamics take {} inputs but no controller is given", dynamics.m)));
                }
                (dynamics.clone(), None)
            }
            Controller::Expressions(us) => (dynamics.with_inputs_inlined(&us)?, None),
            Controller::Net(c) => {
                if c.arch.m() != dynamics.m {
                    return Err(Error::DimensionMismatch {
                        expected: dynamics.m,
                        got: c.arch.m(),
                    });
                }
                if c.arch.n != dynamics.n {
                    return Err(Error::DimensionMismatch {
                        expected: dynamics.n,
                        got: c.arch.n,
                    });
                }
                (dynamics.clone(), Some(c))
            }
        };
        let pairs = dynamics.diffusion_products().iter().map(|(i, l, _)| (*i, *l)).collect();
        Ok(Self {
            dynamics,
            controller,
            pairs,
        })
    }

    pub fn n(&self) -> usize {
        self.dynamics.n
    }

    /// Upper-triangular Hessian entries that enter `Φ`.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Control input at a point (empty for closed-loop dynamics).
    pub fn control_f64(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.controller {
            Some(c) => c.forward(x),
            None => Ok(Vec::new()),
        }
    }

    /// Closed-loop drift and the `[g gᵀ]` entries of [`Generator::pairs`] at a
    /// point, with the stored controller.
    pub fn closed_loop_f64(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let u = self.control_f64(x)?;
        Ok((self.dynamics.drift_f64(x, &u)?, self.gg_point(x)?))
    }

    fn drift_point<A: Arith>(&self, a: &mut A, ctrl: CtrlParams<A::V>, x: &[f64]) -> Result<Vec<A::V>> {
        match (&self.controller, ctrl) {
            (Some(c), Some(p)) => {
                let u = control::forward(a, c, p, x);
                let xs: Vec<A::V> = x.iter().map(|&v| a.constant(A::T::of(v))).collect();
                self.dynamics.drift_at(a, &xs, &u)
            }
            _ => {
                let u = self.control_f64(x)?;
                let f = self.dynamics.drift_f64(x, &u)?;
                Ok(f.iter().map(|&v| a.constant(A::T::of(v))).collect())
            }
        }
    }

    fn gg_point(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.dynamics.gg_at(&mut Plain::<f64>::new(), x)
    }

    /// `(V(x), Φ(x))`.
    pub fn eval<A: Arith>(&self, a: &mut A, v: &CertView<A::V>, ctrl: CtrlParams<A::V>, x: &[f64]) -> Result<(A::V, A::V)> {
        let d = net::derivatives(a, v, x, &self.pairs);
        let f = self.drift_point(a, ctrl, x)?;
        let gg = self.gg_point(x)?;
        let mut terms = Vec::with_capacity(f.len() + gg.len());
        for (fi, gi) in f.iter().zip(&d.grad) {
            terms.push(a.mul(*fi, *gi));
        }
        for ((&(i, l), c), h) in self.pairs.iter().zip(&gg).zip(&d.hess) {
            let w = if i == l { 0.5 } else { 1.0 };
            terms.push(a.scale(*h, A::T::of(w * c)));
        }
        let phi = a.sum(&terms);
        Ok((d.value, phi))
    }

    pub fn eval_f64(&self, net: &CertificateNet, x: &[f64]) -> Result<f64> {
        if x.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: x.len(),
            });
        }
        let mut a = Plain::<f64>::new();
        Ok(self.eval(&mut a, &net.view(&net.params), None, x)?.1)
    }

    /// Drift and diffusion-product enclosures over a box.
    fn dynamics_iv<A: Arith>(
        &self,
        a: &mut A,
        ctrl: CtrlParams<A::V>,
        lo: &[f64],
        hi: &[f64],
    ) -> Result<(Vec<Iv<A::V>>, Vec<Iv<A::V>>)> {
        let mut p = Plain::<f64>::new();
        let xs: Vec<Iv<f64>> = lo.iter().zip(hi).map(|(&l, &h)| Iv::new(l, h)).collect();
        let lift = |a: &mut A, v: &[Iv<f64>]| -> Vec<Iv<A::V>> {
            v.iter()
                .map(|iv| Iv::new(a.constant(A::T::of(iv.lo)), a.constant(A::T::of(iv.hi))))
                .collect()
        };
        let f = match (&self.controller, ctrl) {
            (Some(c), Some(params)) => {
                let u = control::forward_iv(a, c, params, lo, hi);
                let x = lift(a, &xs);
                self.dynamics.drift_iv(a, &x, &u)?
            }
            (Some(c), None) => {
                let u = control::forward_iv(&mut p, c, &c.params, lo, hi);
                let f = self.dynamics.drift_iv(&mut p, &xs, &u)?;
                lift(a, &f)
            }
            (None, _) => {
                let f = self.dynamics.drift_iv(&mut p, &xs, &[])?;
                lift(a, &f)
            }
        };
        let gg = self.dynamics.gg_iv(&mut p, &xs)?;
        Ok((f, lift(a, &gg)))
    }

    /// Enclosures of `V` and `Φ` over the box `[lo, hi]`.
    pub fn bound<A: Arith>(
        &self,
        a: &mut A,
        v: &CertView<A::V>,
        aux: &CertAux<A::V>,
        ctrl: CtrlParams<A::V>,
        lo: &[f64],
        hi: &[f64],
    ) -> Result<(DerivIv<A::V>, Iv<A::V>)> {
        let d = bounds::bound_derivatives(a, v, aux, lo, hi, &self.pairs);
        let (f, gg) = self.dynamics_iv(a, ctrl, lo, hi)?;
        for x in f.iter().chain(&gg) {
            ivl::value(a, *x)?;
        }
        let phi = bounds::assemble_generator(a, &d, &f, &gg, &self.pairs);
        Ok((d, phi))
    }

    pub fn bound_f64(&self, net: &CertificateNet, lo: &[f64], hi: &[f64]) -> Result<(f64, f64, f64, f64)> {
        let mut a = Plain::<f64>::new();
        let v = net.view(&net.params);
        let aux = CertAux::new(&mut a, &v, &self.pairs);
        let (d, phi) = self.bound(&mut a, &v, &aux, None, lo, hi)?;
        Ok((d.value.lo, d.value.hi, phi.lo, phi.hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{CertArch, CertInit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn gbm2() -> Generator {
        let d = Dynamics::parse(
            2,
            2,
            2,
            &["-0.5*x1 + x2 + u1", "-0.5*x2 - x1 + u2"],
            &[vec!["0.2*x1", "0"], vec!["0", "0.2*x2"]],
            BTreeMap::new(),
            BTreeMap::new(),
        )
        .unwrap();
        let us = vec![
            crate::dynexpr::parse_expr("-x1", &crate::dynexpr::Symbols::new(2, 0)).unwrap(),
            crate::dynexpr::parse_expr("-x2", &crate::dynexpr::Symbols::new(2, 0)).unwrap(),
        ];
        Generator::new(&d, Controller::Expressions(us)).unwrap()
    }

    #[test]
    fn zero_net_has_zero_generator() {
        let g = gbm2();
        let net = CertificateNet::zeros(CertArch::new(2, 4, 4, true).unwrap(), vec![100.0; 2], 50.0).unwrap();
        assert_eq!(g.eval_f64(&net, &[3.0, 4.0]).unwrap(), 0.0);
        let (_, _, lo, hi) = g.bound_f64(&net, &[0.0, 0.0], &[10.0, 10.0]).unwrap();
        assert_eq!((lo, hi), (0.0, 0.0));
    }

    #[test]
    fn generator_bound_dominates_samples() {
        let g = gbm2();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..10 {
            let arch = CertArch::new(2, 8, 6, true).unwrap();
            let net = CertificateNet::init(arch, vec![100.0; 2], 50.0, CertInit::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let lo = [rng.random_range(-100.0..80.0), rng.random_range(-100.0..80.0)];
            let hi = [lo[0] + 10.0, lo[1] + 20.0];
            let (vl, vh, _, ph) = g.bound_f64(&net, &lo, &hi).unwrap();
            for _ in 0..100 {
                let x = [rng.random_range(lo[0]..=hi[0]), rng.random_range(lo[1]..=hi[1])];
                let v = net.forward(&x).unwrap();
                assert!(v >= vl - 1e-9 && v <= vh + 1e-9);
                assert!(g.eval_f64(&net, &x).unwrap() <= ph + 1e-9);
            }
        }
    }

    #[test]
    fn controller_dimension_is_checked() {
        let d = gbm2().dynamics;
        assert!(Generator::new(&d, Controller::None).is_ok());
        let open = Dynamics::parse(1, 1, 1, &["u1"], &[vec!["1"]], BTreeMap::new(), BTreeMap::new()).unwrap();
        assert!(Generator::new(&open, Controller::None).is_err());
    }
}
