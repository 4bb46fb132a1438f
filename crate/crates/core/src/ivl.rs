//! Interval arithmetic over an [`Arith`] back-end.
//!
//! An [`Iv`] holds two handles, so on a tape both endpoints are
//! differentiable. Case splits (sign of an endpoint, critical points inside
//! the interval) are decided on current values; the chosen branch is then
//! recorded, which gives the same subgradient as min/max over all candidates.

use crate::autodiff::Arith;
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::scalar::prelude::*;
use crate::scalar;

#[derive(Clone, Copy, Debug)]
pub struct Iv<V> {
    pub lo: V,
    pub hi: V,
}

impl<V: Copy> Iv<V> {
    pub fn new(lo: V, hi: V) -> Self {
        Self { lo, hi }
    }

    pub fn point(v: V) -> Self {
        Self { lo: v, hi: v }
    }
}

pub fn constant<A: Arith>(a: &mut A, x: Interval<A::T>) -> Iv<A::V> {
    Iv::new(a.constant(x.lo()), a.constant(x.hi()))
}

pub fn constant_point<A: Arith>(a: &mut A, x: A::T) -> Iv<A::V> {
    Iv::point(a.constant(x))
}

/// Current numeric value as a checked interval.
pub fn value<A: Arith>(a: &A, x: Iv<A::V>) -> Result<Interval<A::T>> {
    let (lo, hi) = (a.value(x.lo), a.value(x.hi));
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::NonFinite(format!("interval [{lo}, {hi}]")));
    }
    Interval::new(lo, hi)
}

fn lo<A: Arith>(a: &A, x: Iv<A::V>) -> A::T {
    a.value(x.lo)
}

fn hi<A: Arith>(a: &A, x: Iv<A::V>) -> A::T {
    a.value(x.hi)
}

pub fn add<A: Arith>(a: &mut A, x: Iv<A::V>, y: Iv<A::V>) -> Iv<A::V> {
    Iv::new(a.add(x.lo, y.lo), a.add(x.hi, y.hi))
}

pub fn sub<A: Arith>(a: &mut A, x: Iv<A::V>, y: Iv<A::V>) -> Iv<A::V> {
    Iv::new(a.sub(x.lo, y.hi), a.sub(x.hi, y.lo))
}

pub fn neg<A: Arith>(a: &mut A, x: Iv<A::V>) -> Iv<A::V> {
    Iv::new(a.neg(x.hi), a.neg(x.lo))
}

pub fn add_const<A: Arith>(a: &mut A, x: Iv<A::V>, c: A::T) -> Iv<A::V> {
    Iv::new(a.add_const(x.lo, c), a.add_const(x.hi, c))
}

/// Multiplication by a constant.
pub fn scale<A: Arith>(a: &mut A, x: Iv<A::V>, c: A::T) -> Iv<A::V> {
    if c >= A::T::zero() {
        Iv::new(a.scale(x.lo, c), a.scale(x.hi, c))
    } else {
        Iv::new(a.scale(x.hi, c), a.scale(x.lo, c))
    }
}

/// Multiplication by a point value `v`.
pub fn mul_point<A: Arith>(a: &mut A, x: Iv<A::V>, v: A::V) -> Iv<A::V> {
    if a.value(v) >= A::T::zero() {
        Iv::new(a.mul(x.lo, v), a.mul(x.hi, v))
    } else {
        Iv::new(a.mul(x.hi, v), a.mul(x.lo, v))
    }
}

/// Four-corner product.
pub fn mul<A: Arith>(a: &mut A, x: Iv<A::V>, y: Iv<A::V>) -> Iv<A::V> {
    let z = A::T::zero();
    let (xl, xh, yl, yh) = (lo(a, x), hi(a, x), lo(a, y), hi(a, y));
    // sign-definite factors need only two corners
    if xl >= z && yl >= z {
        return Iv::new(a.mul(x.lo, y.lo), a.mul(x.hi, y.hi));
    }
    if xh <= z && yh <= z {
        return Iv::new(a.mul(x.hi, y.hi), a.mul(x.lo, y.lo));
    }
    if xl >= z && yh <= z {
        return Iv::new(a.mul(x.hi, y.lo), a.mul(x.lo, y.hi));
    }
    if xh <= z && yl >= z {
        return Iv::new(a.mul(x.lo, y.hi), a.mul(x.hi, y.lo));
    }
    let p1 = a.mul(x.lo, y.lo);
    let p2 = a.mul(x.lo, y.hi);
    let p3 = a.mul(x.hi, y.lo);
    let p4 = a.mul(x.hi, y.hi);
    let m12 = a.min(p1, p2);
    let m34 = a.min(p3, p4);
    let l = a.min(m12, m34);
    let n12 = a.max(p1, p2);
    let n34 = a.max(p3, p4);
    let h = a.max(n12, n34);
    Iv::new(l, h)
}

pub fn square<A: Arith>(a: &mut A, x: Iv<A::V>) -> Iv<A::V> {
    let z = A::T::zero();
    let (xl, xh) = (lo(a, x), hi(a, x));
    if xl >= z {
        Iv::new(a.square(x.lo), a.square(x.hi))
    } else if xh <= z {
        Iv::new(a.square(x.hi), a.square(x.lo))
    } else {
        let l2 = a.square(x.lo);
        let h2 = a.square(x.hi);
        let zero = a.zero();
        Iv::new(zero, a.max(l2, h2))
    }
}

pub fn abs<A: Arith>(a: &mut A, x: Iv<A::V>) -> Iv<A::V> {
    let z = A::T::zero();
    let (xl, xh) = (lo(a, x), hi(a, x));
    if xl >= z {
        x
    } else if xh <= z {
        neg(a, x)
    } else {
        let nl = a.neg(x.lo);
        let zero = a.zero();
        Iv::new(zero, a.max(nl, x.hi))
    }
}

pub fn recip<A: Arith>(a: &mut A, x: Iv<A::V>) -> Result<Iv<A::V>> {
    let z = A::T::zero();
    let (xl, xh) = (lo(a, x), hi(a, x));
    if xl <= z && xh >= z {
        return Err(Error::Domain(format!("division by an interval containing zero [{xl}, {xh}]")));
    }
    let one = a.constant(A::T::one());
    Ok(Iv::new(a.div(one, x.hi), a.div(one, x.lo)))
}

pub fn div<A: Arith>(a: &mut A, x: Iv<A::V>, y: Iv<A::V>) -> Result<Iv<A::V>> {
    let r = recip(a, y)?;
    Ok(mul(a, x, r))
}

pub fn powi<A: Arith>(a: &mut A, x: Iv<A::V>, n: i32) -> Result<Iv<A::V>> {
    if n == 0 {
        return Ok(constant_point(a, A::T::one()));
    }
    if n < 0 {
        let p = powi(a, x, -n)?;
        return recip(a, p);
    }
    if n == 1 {
        return Ok(x);
    }
    if n == 2 {
        return Ok(square(a, x));
    }
    if n % 2 == 1 {
        return Ok(Iv::new(a.powi(x.lo, n), a.powi(x.hi, n)));
    }
    let z = A::T::zero();
    let (xl, xh) = (lo(a, x), hi(a, x));
    Ok(if xl >= z {
        Iv::new(a.powi(x.lo, n), a.powi(x.hi, n))
    } else if xh <= z {
        Iv::new(a.powi(x.hi, n), a.powi(x.lo, n))
    } else {
        let l = a.powi(x.lo, n);
        let h = a.powi(x.hi, n);
        let zero = a.zero();
        Iv::new(zero, a.max(l, h))
    })
}

/// Real power; the base must be positive.
pub fn powf<A: Arith>(a: &mut A, x: Iv<A::V>, p: A::T) -> Result<Iv<A::V>> {
    let xl = lo(a, x);
    if xl <= A::T::zero() {
        return Err(Error::Domain(format!(
            "non-integer power of an interval reaching {xl} (base must be positive)"
        )));
    }
    Ok(if p >= A::T::zero() {
        Iv::new(a.powf(x.lo, p), a.powf(x.hi, p))
    } else {
        Iv::new(a.powf(x.hi, p), a.powf(x.lo, p))
    })
}

pub fn exp<A: Arith>(a: &mut A, x: Iv<A::V>) -> Iv<A::V> {
    Iv::new(a.exp(x.lo), a.exp(x.hi))
}

pub fn log<A: Arith>(a: &mut A, x: Iv<A::V>) -> Result<Iv<A::V>> {
    let xl = lo(a, x);
    if xl <= A::T::zero() {
        return Err(Error::Domain(format!("log of an interval reaching {xl}")));
    }
    Ok(Iv::new(a.log(x.lo), a.log(x.hi)))
}

pub fn sqrt<A: Arith>(a: &mut A, x: Iv<A::V>) -> Result<Iv<A::V>> {
    let xl = lo(a, x);
    if xl < A::T::zero() {
        return Err(Error::Domain(format!("sqrt of an interval reaching {xl}")));
    }
    Ok(Iv::new(a.sqrt(x.lo), a.sqrt(x.hi)))
}

pub fn sigmoid<A: Arith>(a: &mut A, x: Iv<A::V>) -> Iv<A::V> {
    Iv::new(a.sigmoid(x.lo), a.sigmoid(x.hi))
}

pub fn tanh<A: Arith>(a: &mut A, x: Iv<A::V>) -> Iv<A::V> {
    Iv::new(a.tanh(x.lo), a.tanh(x.hi))
}

/// Range of a function increasing on `(-inf, c]` and decreasing on
/// `[c, inf)` with maximum `peak` at `c`.
fn unimodal<A: Arith>(
    a: &mut A,
    x: Iv<A::V>,
    c: A::T,
    peak: A::T,
    f: fn(&mut A, A::V) -> A::V,
) -> Iv<A::V> {
    let (xl, xh) = (lo(a, x), hi(a, x));
    if xh <= c {
        Iv::new(f(a, x.lo), f(a, x.hi))
    } else if xl >= c {
        Iv::new(f(a, x.hi), f(a, x.lo))
    } else {
        let fl = f(a, x.lo);
        let fh = f(a, x.hi);
        Iv::new(a.min(fl, fh), a.constant(peak))
    }
}

pub fn dsigmoid<A: Arith>(a: &mut A, x: Iv<A::V>) -> Iv<A::V> {
    unimodal(a, x, A::T::zero(), A::T::of(0.25), |a, v| a.dsigmoid(v))
}

pub fn dtanh<A: Arith>(a: &mut A, x: Iv<A::V>) -> Iv<A::V> {
    unimodal(a, x, A::T::zero(), A::T::one(), |a, v| a.dtanh(v))
}

/// `σ''` increases up to `-z*`, decreases to `z*`, then increases towards 0.
pub fn d2sigmoid<A: Arith>(a: &mut A, x: Iv<A::V>) -> Iv<A::V> {
    let (zs, peak) = scalar::d2sigmoid_extremum::<A::T>();
    let (xl, xh) = (lo(a, x), hi(a, x));
    let fl = a.d2sigmoid(x.lo);
    let fh = a.d2sigmoid(x.hi);
    let has_max = xl <= -zs && -zs <= xh;
    let has_min = xl <= zs && zs <= xh;
    let l = if has_min { a.constant(-peak) } else { a.min(fl, fh) };
    let h = if has_max { a.constant(peak) } else { a.max(fl, fh) };
    Iv::new(l, h)
}

/// Exact range of `cos` over the interval.
pub fn cos<A: Arith>(a: &mut A, x: Iv<A::V>) -> Iv<A::V> {
    let (xl, xh) = (lo(a, x), hi(a, x));
    let pi = A::T::PI();
    let tau = pi + pi;
    if xh - xl >= tau || !xl.is_finite() || !xh.is_finite() {
        return Iv::new(a.constant(-A::T::one()), a.constant(A::T::one()));
    }
    // maxima at 2kπ, minima at (2k+1)π
    let has_max = (xl / tau).ceil() * tau <= xh;
    let has_min = ((xl - pi) / tau).ceil() * tau + pi <= xh;
    let cl = a.cos(x.lo);
    let ch = a.cos(x.hi);
    let l = if has_min { a.constant(-A::T::one()) } else { a.min(cl, ch) };
    let h = if has_max { a.constant(A::T::one()) } else { a.max(cl, ch) };
    Iv::new(l, h)
}

/// Exact range of `sin` over the interval.
pub fn sin<A: Arith>(a: &mut A, x: Iv<A::V>) -> Iv<A::V> {
    let (xl, xh) = (lo(a, x), hi(a, x));
    let pi = A::T::PI();
    let tau = pi + pi;
    let half = pi * A::T::half();
    if xh - xl >= tau || !xl.is_finite() || !xh.is_finite() {
        return Iv::new(a.constant(-A::T::one()), a.constant(A::T::one()));
    }
    let has_max = ((xl - half) / tau).ceil() * tau + half <= xh;
    let has_min = ((xl + half) / tau).ceil() * tau - half <= xh;
    let sl = a.sin(x.lo);
    let sh = a.sin(x.hi);
    let l = if has_min { a.constant(-A::T::one()) } else { a.min(sl, sh) };
    let h = if has_max { a.constant(A::T::one()) } else { a.max(sl, sh) };
    Iv::new(l, h)
}

pub fn tan<A: Arith>(a: &mut A, x: Iv<A::V>) -> Result<Iv<A::V>> {
    let (xl, xh) = (lo(a, x), hi(a, x));
    let pi = A::T::PI();
    let half = pi * A::T::half();
    // branch index of (kπ - π/2, kπ + π/2)
    let kl = ((xl + half) / pi).floor();
    let kh = ((xh + half) / pi).floor();
    let pole_at_lo = (xl + half) / pi == kl;
    if kl != kh || pole_at_lo {
        return Err(Error::Domain(format!("tan over [{xl}, {xh}] crosses a pole")));
    }
    Ok(Iv::new(a.tan(x.lo), a.tan(x.hi)))
}

pub fn sum<A: Arith>(a: &mut A, xs: &[Iv<A::V>]) -> Iv<A::V> {
    let l: Vec<A::V> = xs.iter().map(|x| x.lo).collect();
    let h: Vec<A::V> = xs.iter().map(|x| x.hi).collect();
    Iv::new(a.sum(&l), a.sum(&h))
}

pub fn hull<A: Arith>(a: &mut A, x: Iv<A::V>, y: Iv<A::V>) -> Iv<A::V> {
    Iv::new(a.min(x.lo, y.lo), a.max(x.hi, y.hi))
}

/// Center and radius handles.
pub fn center_radius<A: Arith>(a: &mut A, x: Iv<A::V>) -> (A::V, A::V) {
    let s = a.add(x.lo, x.hi);
    let d = a.sub(x.hi, x.lo);
    (a.scale(s, A::T::half()), a.scale(d, A::T::half()))
}

pub fn from_center_radius<A: Arith>(a: &mut A, c: A::V, r: A::V) -> Iv<A::V> {
    Iv::new(a.sub(c, r), a.add(c, r))
}
