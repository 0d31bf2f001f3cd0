//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! Expressions, force fields and Hamiltonians are written once against
//! [`Scalar`] and evaluated either on plain floats or on [`Dual`](crate::Dual)
//! numbers (possibly nested) to obtain exact derivatives.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_traits::{Float, One, Zero};

/// A real-like number: `f32`, `f64`, or a dual number over one of them.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Zero
    + One
    + Neg<Output = Self>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    fn from_f64(x: f64) -> Self;

    /// Primal (real) value, with every infinitesimal part dropped.
    fn re(&self) -> f64;

    /// True when the primal value and all derivative parts are finite.
    fn is_finite(&self) -> bool;

    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tan(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn powf(self, e: Self) -> Self;

    fn scale(self, c: f64) -> Self {
        self * Self::from_f64(c)
    }
}

macro_rules! impl_float_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            #[inline]
            fn re(&self) -> f64 {
                *self as f64
            }
            #[inline]
            fn is_finite(&self) -> bool {
                Float::is_finite(*self)
            }
            #[inline]
            fn sin(self) -> Self {
                Float::sin(self)
            }
            #[inline]
            fn cos(self) -> Self {
                Float::cos(self)
            }
            #[inline]
            fn tan(self) -> Self {
                Float::tan(self)
            }
            #[inline]
            fn exp(self) -> Self {
                Float::exp(self)
            }
            #[inline]
            fn ln(self) -> Self {
                Float::ln(self)
            }
            #[inline]
            fn sqrt(self) -> Self {
                Float::sqrt(self)
            }
            #[inline]
            fn abs(self) -> Self {
                Float::abs(self)
            }
            #[inline]
            fn powi(self, n: i32) -> Self {
                Float::powi(self, n)
            }
            #[inline]
            fn powf(self, e: Self) -> Self {
                Float::powf(self, e)
            }
        }
    };
}

impl_float_scalar!(f32);
impl_float_scalar!(f64);

/// Dot product of two equal-length slices.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Lift a slice of floats into any scalar type.
pub fn lift<T: Scalar>(xs: &[f64]) -> Vec<T> {
    xs.iter().map(|&x| T::from_f64(x)).collect()
}

/// Primal values of a slice of scalars.
pub fn primal<T: Scalar>(xs: &[T]) -> Vec<f64> {
    xs.iter().map(Scalar::re).collect()
}
