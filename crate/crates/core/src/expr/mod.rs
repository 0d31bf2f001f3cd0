//! Scalar expressions in `q1..qn`, `v1..vn` and `t`, evaluated on any
//! [`Scalar`] and differentiated exactly by forward-mode dual passes.

mod ast;
mod parse;

use std::fmt;

pub use ast::{BinaryOp, Node, UnaryOp, Var};
pub use parse::{ParseError, ParseErrorKind};

use crate::dual::Dual;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A configuration-velocity-time point `(q, v, t)`; `v` stands for `q̇`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalPoint<T> {
    pub q: Vec<T>,
    pub v: Vec<T>,
    pub t: T,
}

impl<T: Scalar> EvalPoint<T> {
    pub fn new(q: Vec<T>, v: Vec<T>, t: T) -> Result<Self> {
        if q.len() != v.len() {
            return Err(Error::Dimension(format!("q has {} components but v has {}", q.len(), v.len())));
        }
        Ok(EvalPoint { q, v, t })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn get(&self, var: Var) -> T {
        match var {
            Var::Q(i) => self.q[i],
            Var::V(i) => self.v[i],
            Var::T => self.t,
        }
    }

    pub fn map<U>(&self, f: impl Fn(T) -> U) -> EvalPoint<U> {
        EvalPoint { q: self.q.iter().map(|&x| f(x)).collect(), v: self.v.iter().map(|&x| f(x)).collect(), t: f(self.t) }
    }
}

impl EvalPoint<f64> {
    pub fn from_slices(q: &[f64], v: &[f64], t: f64) -> Result<Self> {
        Self::new(q.to_vec(), v.to_vec(), t)
    }
}

/// Partial derivatives with respect to every `q_i`, `v_i` and `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient<T> {
    pub dq: Vec<T>,
    pub dv: Vec<T>,
    pub dt: T,
}

impl<T: Scalar> Gradient<T> {
    fn zeros(n: usize) -> Self {
        Gradient { dq: vec![T::zero(); n], dv: vec![T::zero(); n], dt: T::zero() }
    }

    fn slot(&mut self, var: Var) -> &mut T {
        match var {
            Var::Q(i) => &mut self.dq[i],
            Var::V(i) => &mut self.dv[i],
            Var::T => &mut self.dt,
        }
    }
}

/// A parsed expression bound to a dimension `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    node: Node,
    n: usize,
    vars: Vec<Var>,
}

impl Expr {
    pub fn parse(source: &str, n: usize) -> Result<Self, ParseError> {
        let node = parse::parse_node(source, n)?;
        Ok(Self::bind(node, n))
    }

    /// Wrap an AST, checking every variable index against `n`.
    pub fn from_node(node: Node, n: usize) -> Result<Self> {
        let mut bad = None;
        node.visit_vars(&mut |v| {
            if let Var::Q(i) | Var::V(i) = v {
                if i >= n {
                    bad = Some(v);
                }
            }
        });
        match bad {
            Some(v) => Err(Error::Dimension(format!("variable {v} out of range for dimension {n}"))),
            None => Ok(Self::bind(node, n)),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::bind(Node::Const(c), 0)
    }

    fn bind(node: Node, n: usize) -> Self {
        let mut vars = Vec::new();
        node.visit_vars(&mut |v| vars.push(v));
        vars.sort();
        vars.dedup();
        Expr { node, n, vars }
    }

    pub fn node(&self) -> &Node {
        &self.node
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Variables the expression actually references, sorted.
    pub fn variables(&self) -> &[Var] {
        &self.vars
    }

    fn check_dim<T: Scalar>(&self, pt: &EvalPoint<T>) -> Result<()> {
        if pt.q.len() != pt.v.len() || pt.dim() < self.n {
            return Err(Error::Dimension(format!(
                "expression of dimension {} evaluated at a point of dimension {}",
                self.n,
                pt.dim()
            )));
        }
        Ok(())
    }

    pub fn eval<T: Scalar>(&self, pt: &EvalPoint<T>) -> Result<T> {
        self.check_dim(pt)?;
        finite(eval_node(&self.node, &|v| pt.get(v))?)
    }

    /// Exact partial derivatives, one dual pass per referenced variable.
    pub fn grad<T: Scalar>(&self, pt: &EvalPoint<T>) -> Result<Gradient<T>> {
        self.value_and_grad(pt).map(|(_, g)| g)
    }

    pub fn value_and_grad<T: Scalar>(&self, pt: &EvalPoint<T>) -> Result<(T, Gradient<T>)> {
        self.check_dim(pt)?;
        let mut grad = Gradient::zeros(pt.dim());
        if self.vars.is_empty() {
            return Ok((self.eval(pt)?, grad));
        }
        let mut value = T::zero();
        for &seed in &self.vars {
            let d = eval_node(&self.node, &|v| {
                if v == seed {
                    Dual::variable(pt.get(v))
                } else {
                    Dual::constant(pt.get(v))
                }
            })?;
            let d = finite(d)?;
            value = d.re;
            *grad.slot(seed) = d.eps;
        }
        Ok((value, grad))
    }

    /// Derivative along a tangent direction `(δq, δv, δt)` in a single pass.
    pub fn directional<T: Scalar>(&self, pt: &EvalPoint<T>, dir: &EvalPoint<T>) -> Result<T> {
        self.check_dim(pt)?;
        let d = eval_node(&self.node, &|v| Dual::new(pt.get(v), dir.get(v)))?;
        Ok(finite(d)?.eps)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.node.fmt(f)
    }
}

fn finite<T: Scalar>(x: T) -> Result<T> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Domain(format!("non-finite result ({:?})", x.re())))
    }
}

fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

fn eval_node<T: Scalar>(node: &Node, lookup: &impl Fn(Var) -> T) -> Result<T> {
    Ok(match node {
        Node::Const(c) => T::from_f64(*c),
        Node::Var(v) => lookup(*v),
        Node::Unary(op, a) => {
            let x = eval_node(a, lookup)?;
            match op {
                UnaryOp::Neg => -x,
                UnaryOp::Sin => x.sin(),
                UnaryOp::Cos => x.cos(),
                UnaryOp::Tan => {
                    if x.re().cos().abs() <= f64::EPSILON {
                        return Err(domain(format!("tan pole at {}", x.re())));
                    }
                    x.tan()
                }
                UnaryOp::Exp => x.exp(),
                UnaryOp::Log => {
                    if x.re() <= 0.0 {
                        return Err(domain(format!("log of non-positive value {}", x.re())));
                    }
                    x.ln()
                }
                UnaryOp::Sqrt => {
                    if x.re() < 0.0 {
                        return Err(domain(format!("sqrt of negative value {}", x.re())));
                    }
                    x.sqrt()
                }
                UnaryOp::Abs => x.abs(),
            }
        }
        Node::Binary(op, a, b) => {
            let x = eval_node(a, lookup)?;
            match op {
                BinaryOp::Add => x + eval_node(b, lookup)?,
                BinaryOp::Sub => x - eval_node(b, lookup)?,
                BinaryOp::Mul => x * eval_node(b, lookup)?,
                BinaryOp::Div => {
                    let y = eval_node(b, lookup)?;
                    if y.re() == 0.0 {
                        return Err(domain("division by zero"));
                    }
                    x / y
                }
                BinaryOp::Pow => power(x, b, lookup)?,
            }
        }
    })
}

fn power<T: Scalar>(base: T, exponent: &Node, lookup: &impl Fn(Var) -> T) -> Result<T> {
    let e = eval_node(exponent, lookup)?;
    let k = e.re();
    if exponent.is_constant() && k.fract() == 0.0 && k.abs() <= i32::MAX as f64 {
        if base.re() == 0.0 && k < 0.0 {
            return Err(domain("zero raised to a negative power"));
        }
        return Ok(base.powi(k as i32));
    }
    // A negative base is only admissible for constant integer exponents:
    // the exponent derivative of b^x needs ln b.
    if base.re() < 0.0 {
        return Err(domain(format!("negative base {} raised to non-integer or variable exponent", base.re())));
    }
    Ok(base.powf(e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};

    fn pt(q: &[f64], v: &[f64]) -> EvalPoint<f64> {
        EvalPoint::from_slices(q, v, 0.0).unwrap()
    }

    #[test]
    fn sleigh_constraint_values() {
        let d = Expr::parse("v1*sin(q3) - v2*cos(q3)", 3).unwrap();
        let x = d.eval(&pt(&[0.0, 0.0, FRAC_PI_2], &[0.0, 1.0, 0.0])).unwrap();
        assert!(x.abs() < 1e-15);
        let x = d.eval(&pt(&[0.0, 0.0, 0.0], &[0.0, 1.0, 0.0])).unwrap();
        assert_eq!(x, -1.0);
        let x = d.eval(&pt(&[0.0, 0.0, FRAC_PI_2], &[1.0, 0.0, 0.0])).unwrap();
        assert_eq!(x, 1.0);
        let x = d.eval(&pt(&[0.0; 3], &[5.0, 0.0, 0.0])).unwrap();
        assert_eq!(x, 0.0);
    }

    #[test]
    fn square() {
        let e = Expr::parse("q1^2", 1).unwrap();
        assert_eq!(e.eval(&pt(&[3.0], &[0.0])).unwrap(), 9.0);
    }

    #[test]
    fn domain_errors() {
        let at0 = pt(&[0.0], &[0.0]);
        let cases = [
            "1/q1",
            "log(q1)",
            "log(q1 - 1)",
            "sqrt(q1 - 1)",
            "tan(q1 + 1.5707963267948966)",
            "(q1-1)^0.5",
            "q1^(-1)",
            "(q1-2)^v1",
        ];
        for src in cases {
            let e = Expr::parse(src, 1).unwrap();
            assert!(matches!(e.eval(&at0), Err(Error::Domain(_))), "{src}");
        }
        // constant integer exponent of a negative base is fine
        assert_eq!(Expr::parse("(q1-2)^3", 1).unwrap().eval(&at0).unwrap(), -8.0);
        // overflow to infinity is reported
        assert!(Expr::parse("exp(1000)", 1).unwrap().eval(&at0).is_err());
    }

    #[test]
    fn gradient_examples() {
        let e = Expr::parse("q1", 2).unwrap();
        let g = e.grad(&pt(&[0.3, 0.1], &[1.0, 2.0])).unwrap();
        assert_eq!(g, Gradient { dq: vec![1.0, 0.0], dv: vec![0.0, 0.0], dt: 0.0 });

        let e = Expr::parse("v1*sin(q3)", 3).unwrap();
        let g = e.grad(&pt(&[0.0, 0.0, FRAC_PI_6], &[0.0; 3])).unwrap();
        assert!((g.dv[0] - 0.5).abs() < 1e-15);

        let e = Expr::parse("2.5", 2).unwrap();
        let (value, g) = e.value_and_grad(&pt(&[1.0, 1.0], &[1.0, 1.0])).unwrap();
        assert_eq!(value, 2.5);
        assert_eq!(g, Gradient { dq: vec![0.0; 2], dv: vec![0.0; 2], dt: 0.0 });
    }

    #[test]
    fn time_derivative_and_directional() {
        let e = Expr::parse("t*q1^2 + v1", 1).unwrap();
        let p = EvalPoint::from_slices(&[2.0], &[1.0], 3.0).unwrap();
        let g = e.grad(&p).unwrap();
        assert_eq!(g.dt, 4.0);
        assert_eq!(g.dq[0], 12.0);
        let dir = EvalPoint::from_slices(&[1.0], &[2.0], 0.5).unwrap();
        // 12*1 + 1*2 + 4*0.5
        assert_eq!(e.directional(&p, &dir).unwrap(), 16.0);
    }

    #[test]
    fn dimension_checks() {
        let e = Expr::parse("q2", 2).unwrap();
        assert!(matches!(e.eval(&pt(&[1.0], &[1.0])), Err(Error::Dimension(_))));
        assert!(Expr::from_node(Node::Var(Var::V(3)), 3).is_err());
        assert!(EvalPoint::new(vec![1.0], vec![], 0.0).is_err());
    }

    #[test]
    fn evaluation_in_f32() {
        let e = Expr::parse("sin(q1) + v1^2", 1).unwrap();
        let p = EvalPoint::new(vec![0.5f32], vec![2.0f32], 0.0).unwrap();
        assert!((e.eval(&p).unwrap() - (0.5f32.sin() + 4.0)).abs() < 1e-6);
    }
}
