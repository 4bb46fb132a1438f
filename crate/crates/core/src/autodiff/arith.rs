//! Arithmetic back-ends. Numeric code is written once against [`Arith`] and
//! runs either on plain floats ([`Plain`]) or recorded onto a [`Tape`]
//! (see `tape.rs`) for reverse-mode differentiation.

use crate::scalar::prelude::*;
use crate::scalar;
use std::fmt::Debug;
use std::marker::PhantomData;

pub trait Arith {
    type T: Scalar;
    type V: Copy + Debug;

    fn constant(&mut self, c: Self::T) -> Self::V;
    fn value(&self, v: Self::V) -> Self::T;

    fn add(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn sub(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn mul(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn div(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn neg(&mut self, a: Self::V) -> Self::V;
    /// `a * c` for a constant `c`.
    fn scale(&mut self, a: Self::V, c: Self::T) -> Self::V;
    /// `a + c` for a constant `c`.
    fn add_const(&mut self, a: Self::V, c: Self::T) -> Self::V;

    /// Ties select the first argument.
    fn min(&mut self, a: Self::V, b: Self::V) -> Self::V;
    /// Ties select the first argument.
    fn max(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn relu(&mut self, a: Self::V) -> Self::V;
    fn abs(&mut self, a: Self::V) -> Self::V;

    fn sigmoid(&mut self, a: Self::V) -> Self::V;
    fn dsigmoid(&mut self, a: Self::V) -> Self::V;
    fn d2sigmoid(&mut self, a: Self::V) -> Self::V;
    fn tanh(&mut self, a: Self::V) -> Self::V;
    fn dtanh(&mut self, a: Self::V) -> Self::V;
    fn exp(&mut self, a: Self::V) -> Self::V;
    fn log(&mut self, a: Self::V) -> Self::V;
    fn square(&mut self, a: Self::V) -> Self::V;
    fn sqrt(&mut self, a: Self::V) -> Self::V;
    fn sin(&mut self, a: Self::V) -> Self::V;
    fn cos(&mut self, a: Self::V) -> Self::V;
    fn tan(&mut self, a: Self::V) -> Self::V;
    fn powi(&mut self, a: Self::V, n: i32) -> Self::V;
    fn powf(&mut self, a: Self::V, p: Self::T) -> Self::V;

    /// `Σ a_k b_k`, accumulated left to right.
    fn dot(&mut self, a: &[Self::V], b: &[Self::V]) -> Self::V;
    /// `Σ c_k a_k` with constant coefficients.
    fn lincomb(&mut self, c: &[Self::T], a: &[Self::V]) -> Self::V;
    fn sum(&mut self, a: &[Self::V]) -> Self::V;

    fn zero(&mut self) -> Self::V {
        self.constant(Self::T::zero())
    }
}

/// Evaluation on bare floats; nothing is recorded.
#[derive(Clone, Copy, Debug, Default)]
pub struct Plain<T>(PhantomData<T>);

impl<T> Plain<T> {
    pub fn new() -> Self {
        Plain(PhantomData)
    }
}

impl<T: Scalar> Arith for Plain<T> {
    type T = T;
    type V = T;

    #[inline]
    fn constant(&mut self, c: T) -> T {
        c
    }
    #[inline]
    fn value(&self, v: T) -> T {
        v
    }
    #[inline]
    fn add(&mut self, a: T, b: T) -> T {
        a + b
    }
    #[inline]
    fn sub(&mut self, a: T, b: T) -> T {
        a - b
    }
    #[inline]
    fn mul(&mut self, a: T, b: T) -> T {
        a * b
    }
    #[inline]
    fn div(&mut self, a: T, b: T) -> T {
        a / b
    }
    #[inline]
    fn neg(&mut self, a: T) -> T {
        -a
    }
    #[inline]
    fn scale(&mut self, a: T, c: T) -> T {
        a * c
    }
    #[inline]
    fn add_const(&mut self, a: T, c: T) -> T {
        a + c
    }
    #[inline]
    fn min(&mut self, a: T, b: T) -> T {
        if b < a {
            b
        } else {
            a
        }
    }
    #[inline]
    fn max(&mut self, a: T, b: T) -> T {
        if b > a {
            b
        } else {
            a
        }
    }
    #[inline]
    fn relu(&mut self, a: T) -> T {
        if a > T::zero() {
            a
        } else {
            T::zero()
        }
    }
    #[inline]
    fn abs(&mut self, a: T) -> T {
        a.abs()
    }
    #[inline]
    fn sigmoid(&mut self, a: T) -> T {
        scalar::sigmoid(a)
    }
    #[inline]
    fn dsigmoid(&mut self, a: T) -> T {
        scalar::dsigmoid(a)
    }
    #[inline]
    fn d2sigmoid(&mut self, a: T) -> T {
        scalar::d2sigmoid(a)
    }
    #[inline]
    fn tanh(&mut self, a: T) -> T {
        a.tanh()
    }
    #[inline]
    fn dtanh(&mut self, a: T) -> T {
        scalar::dtanh(a)
    }
    #[inline]
    fn exp(&mut self, a: T) -> T {
        a.exp()
    }
    #[inline]
    fn log(&mut self, a: T) -> T {
        a.ln()
    }
    #[inline]
    fn square(&mut self, a: T) -> T {
        a * a
    }
    #[inline]
    fn sqrt(&mut self, a: T) -> T {
        a.sqrt()
    }
    #[inline]
    fn sin(&mut self, a: T) -> T {
        a.sin()
    }
    #[inline]
    fn cos(&mut self, a: T) -> T {
        a.cos()
    }
    #[inline]
    fn tan(&mut self, a: T) -> T {
        a.tan()
    }
    #[inline]
    fn powi(&mut self, a: T, n: i32) -> T {
        a.powi(n)
    }
    #[inline]
    fn powf(&mut self, a: T, p: T) -> T {
        a.powf(p)
    }
    #[inline]
    fn dot(&mut self, a: &[T], b: &[T]) -> T {
        let mut acc = T::zero();
        for (&x, &y) in a.iter().zip(b) {
            acc += x * y;
        }
        acc
    }
    #[inline]
    fn lincomb(&mut self, c: &[T], a: &[T]) -> T {
        let mut acc = T::zero();
        for (&x, &y) in c.iter().zip(a) {
            acc += x * y;
        }
        acc
    }
    #[inline]
    fn sum(&mut self, a: &[T]) -> T {
        let mut acc = T::zero();
        for &x in a {
            acc += x;
        }
        acc
    }
}
