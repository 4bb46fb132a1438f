//! Floating point scalar abstraction shared by every numeric module.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// floating point: f32 or f64
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn half() -> Self {
        Self::of(0.5)
    }

    #[inline]
    fn two() -> Self {
        Self::of(2.0)
    }
}

/// Traits needed to call scalar methods in generic code.
pub mod prelude {
    pub use super::Scalar;
    pub use num_traits::{Float, FloatConst, One, Zero};
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Logistic sigmoid.
#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// First derivative of the sigmoid, `σ(1-σ)`.
#[inline]
pub fn dsigmoid<T: Scalar>(z: T) -> T {
    let s = sigmoid(z);
    s * (T::one() - s)
}

/// Second derivative of the sigmoid, `(1-2σ)σ'`.
#[inline]
pub fn d2sigmoid<T: Scalar>(z: T) -> T {
    let s = sigmoid(z);
    (T::one() - T::two() * s) * s * (T::one() - s)
}

/// Third derivative of the sigmoid, `σ'(1 - 6σ + 6σ²)`.
#[inline]
pub fn d3sigmoid<T: Scalar>(z: T) -> T {
    let s = sigmoid(z);
    let six = T::of(6.0);
    s * (T::one() - s) * (T::one() - six * s + six * s * s)
}

/// `1 - tanh²`.
#[inline]
pub fn dtanh<T: Scalar>(z: T) -> T {
    let t = z.tanh();
    T::one() - t * t
}

/// Location of the positive extremum of `σ''`: `σ''` attains its maximum
/// `1/(6√3)` at `-ln(2+√3)` and its minimum at `+ln(2+√3)`.
pub fn d2sigmoid_extremum<T: Scalar>() -> (T, T) {
    let z = T::of((2.0 + 3f64.sqrt()).ln());
    let v = T::one() / (T::of(6.0) * T::of(3.0).sqrt());
    (z, v)
}
