//! Forward-mode dual numbers `a + b·ε` with `ε² = 0`.
//!
//! `Dual<T>` is itself a [`Scalar`], so duals nest: `Dual<Dual<f64>>`
//! carries mixed second derivatives, which the Hamiltonian vector field
//! needs when it differentiates a force that already contains constraint
//! gradients.

use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_traits::{One, Zero};

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Scalar> Dual<T> {
    pub fn new(re: T, eps: T) -> Self {
        Dual { re, eps }
    }

    /// A constant: zero derivative.
    pub fn constant(re: T) -> Self {
        Dual { re, eps: T::zero() }
    }

    /// An independent variable: unit derivative.
    pub fn variable(re: T) -> Self {
        Dual { re, eps: T::one() }
    }

    // f(a + bε) = f(a) + f'(a)·b·ε
    #[inline]
    fn chain(self, value: T, slope: T) -> Self {
        Dual { re: value, eps: slope * self.eps }
    }
}

impl<T: Scalar> Zero for Dual<T> {
    fn zero() -> Self {
        Dual::constant(T::zero())
    }
    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.eps.is_zero()
    }
}

impl<T: Scalar> One for Dual<T> {
    fn one() -> Self {
        Dual::constant(T::one())
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual { re: -self.re, eps: -self.eps }
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual { re: self.re + o.re, eps: self.eps + o.eps }
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual { re: self.re - o.re, eps: self.eps - o.eps }
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual { re: self.re * o.re, eps: self.re * o.eps + self.eps * o.re }
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = T::one() / o.re;
        let re = self.re * inv;
        Dual { re, eps: (self.eps - re * o.eps) * inv }
    }
}

macro_rules! assign_op {
    ($tr:ident, $m:ident, $op:tt) => {
        impl<T: Scalar> $tr for Dual<T> {
            fn $m(&mut self, o: Self) {
                *self = *self $op o;
            }
        }
    };
}
assign_op!(AddAssign, add_assign, +);
assign_op!(SubAssign, sub_assign, -);
assign_op!(MulAssign, mul_assign, *);
assign_op!(DivAssign, div_assign, /);

impl<T: Scalar> Scalar for Dual<T> {
    fn from_f64(x: f64) -> Self {
        Dual::constant(T::from_f64(x))
    }

    fn re(&self) -> f64 {
        self.re.re()
    }

    fn is_finite(&self) -> bool {
        self.re.is_finite() && self.eps.is_finite()
    }

    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }

    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }

    fn tan(self) -> Self {
        let t = self.re.tan();
        self.chain(t, T::one() + t * t)
    }

    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }

    fn ln(self) -> Self {
        self.chain(self.re.ln(), T::one() / self.re)
    }

    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, T::one() / (s + s))
    }

    fn abs(self) -> Self {
        if self.re.re() < 0.0 {
            -self
        } else {
            self
        }
    }

    fn powi(self, n: i32) -> Self {
        match n {
            0 => Dual::one(),
            _ => self.chain(self.re.powi(n), T::from_f64(n as f64) * self.re.powi(n - 1)),
        }
    }

    fn powf(self, e: Self) -> Self {
        // a^b = exp(b ln a); both partials carried.
        let value = self.re.powf(e.re);
        let d_base = e.re * self.re.powf(e.re - T::one());
        let d_exp = value * self.re.ln();
        Dual { re: value, eps: d_base * self.eps + d_exp * e.eps }
    }
}

/// Derivative of a scalar function at `x`.
pub fn derivative<F>(f: F, x: f64) -> f64
where
    F: Fn(Dual<f64>) -> Dual<f64>,
{
    f(Dual::variable(x)).eps
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn elementary_rules_match_central_differences() {
        let x = 0.8;
        type Rule = (fn(Dual<f64>) -> Dual<f64>, fn(f64) -> f64);
        let cases: Vec<Rule> = vec![
            (|d| d.sin(), f64::sin),
            (|d| d.cos(), f64::cos),
            (|d| d.tan(), f64::tan),
            (|d| d.exp(), f64::exp),
            (|d| d.ln(), f64::ln),
            (|d| d.sqrt(), f64::sqrt),
            (|d| d.powi(3), |x| x.powi(3)),
            (|d| d.powf(Dual::constant(2.5)), |x| x.powf(2.5)),
            (|d| d / (d * d + Dual::one()), |x| x / (x * x + 1.0)),
        ];
        for (fd, ff) in cases {
            let exact = derivative(fd, x);
            let approx = central(ff, x);
            assert!((exact - approx).abs() < 1e-8, "{exact} vs {approx}");
        }
    }

    #[test]
    fn nested_duals_give_second_derivatives() {
        // d²/dx² sin(x) = -sin(x)
        let x = 0.3;
        let d = Dual::new(Dual::variable(x), Dual::constant(1.0));
        let y = d.sin();
        assert!((y.eps.eps + x.sin()).abs() < 1e-15);
    }

    #[test]
    fn power_with_variable_exponent() {
        // d/dy 2^y = 2^y ln 2
        let y = Dual::variable(3.0);
        let r = Dual::constant(2.0).powf(y);
        assert!((r.eps - 8.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn abs_derivative_is_sign() {
        assert_eq!(Dual::variable(-2.0).abs().eps, -1.0);
        assert_eq!(Dual::variable(2.0).abs().eps, 1.0);
    }
}
