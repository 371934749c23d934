//! Scalar abstraction shared by plain reals and Taylor jets.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic needed by field providers and metric functions.
///
/// Every closed form in this crate is written once against this trait and
/// evaluated either on `f64` or on [`crate::jet::Jet`] to obtain exact
/// derivatives.
pub trait Scalar:
    Clone
    + Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + for<'a> Add<&'a Self, Output = Self>
    + for<'a> Sub<&'a Self, Output = Self>
    + for<'a> Mul<&'a Self, Output = Self>
    + for<'a> Div<&'a Self, Output = Self>
{
    /// A constant of the same kind (and jet order) as `self`.
    fn cst(&self, v: f64) -> Self;
    /// The plain value.
    fn re(&self) -> f64;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn powf(&self, p: f64) -> Self;
    fn sqrt(&self) -> Self;
    fn recip(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn atan(&self) -> Self;
    fn acos(&self) -> Self;
    /// Four-quadrant arctangent of `self / x`.
    fn atan2(&self, x: &Self) -> Self;

    fn sq(&self) -> Self {
        self.clone() * self
    }
}

impl Scalar for f64 {
    fn cst(&self, v: f64) -> Self {
        v
    }
    fn re(&self) -> f64 {
        *self
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn powf(&self, p: f64) -> Self {
        f64::powf(*self, p)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn recip(&self) -> Self {
        1.0 / self
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn atan(&self) -> Self {
        f64::atan(*self)
    }
    fn acos(&self) -> Self {
        f64::acos(*self)
    }
    fn atan2(&self, x: &Self) -> Self {
        f64::atan2(*self, *x)
    }
}

/// Sum of products `Σ a_i b_i`.
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut it = a.iter().zip(b);
    let (a0, b0) = it.next().expect("empty dot product");
    let mut s = a0.clone() * b0;
    for (x, y) in it {
        s = s + x.clone() * y;
    }
    s
}
