//! Lagrange-d'Alembert force assembly.
//!
//! For a system `mass_i q̈_i = F0_i(q, q̇) + Σ_α h_α ∂D_α/∂q̇_i` with
//! constraints `D_α(q, q̇, t) = 0`, the multipliers `h` are fixed by
//! requiring `dD_α/dt = 0` along the motion:
//!
//! ```text
//! M_αβ h_β = b_α
//! M_αβ = Σ_i (∂D_α/∂v_i)(∂D_β/∂v_i) / mass_i
//! b_α  = -Σ_i (∂D_α/∂q_i) v_i - ∂D_α/∂t - Σ_i (∂D_α/∂v_i) F0_i / mass_i
//! ```
//!
//! For one constraint, unit masses and `F0 = -∇U` this is
//! `h = Δ⁻¹ (∂D/∂v·∇U - ∂D/∂q·v)` with `Δ = |∂D/∂v|²`.
//!
//! Every routine is generic over [`Scalar`], so the whole force field can
//! be differentiated by evaluating it on dual numbers, including through
//! the Gram solve.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::expr::{EvalPoint, Expr, Gradient};
use crate::scalar::{dot, primal, Scalar};

pub const DEFAULT_REGULARITY_EPS: f64 = 1e-10;

/// Tolerance on `|D_α|` reached by [`SystemSpec::project_initial_state`].
pub const PROJECTION_TOLERANCE: f64 = 1e-12;
pub const PROJECTION_MAX_ITERATIONS: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub enum BaseForce {
    /// `F0 = -∇U(q)`.
    Potential(Expr),
    /// Explicit components `F0_i(q, v, t)`.
    Explicit(Vec<Expr>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSet {
    constraints: Vec<Expr>,
    regularity_eps: f64,
}

impl ConstraintSet {
    pub fn new(constraints: Vec<Expr>) -> Self {
        ConstraintSet { constraints, regularity_eps: DEFAULT_REGULARITY_EPS }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new())
    }

    pub fn parse(sources: &[&str], n: usize) -> Result<Self> {
        let exprs = sources.iter().map(|s| Expr::parse(s, n)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(exprs))
    }

    pub fn with_regularity_eps(mut self, eps: f64) -> Self {
        self.regularity_eps = eps;
        self
    }

    pub fn regularity_eps(&self) -> f64 {
        self.regularity_eps
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.constraints
    }

    pub fn values<T: Scalar>(&self, pt: &EvalPoint<T>) -> Result<Vec<T>> {
        self.constraints.iter().map(|d| d.eval(pt)).collect()
    }

    pub fn values_and_grads<T: Scalar>(&self, pt: &EvalPoint<T>) -> Result<(Vec<T>, Vec<Gradient<T>>)> {
        let mut values = Vec::with_capacity(self.len());
        let mut grads = Vec::with_capacity(self.len());
        for d in &self.constraints {
            let (value, grad) = d.value_and_grad(pt)?;
            values.push(value);
            grads.push(grad);
        }
        Ok((values, grads))
    }
}

/// Multipliers together with the linear system they solve.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierResult<T> {
    pub h: Vec<T>,
    pub gram: Vec<Vec<T>>,
    pub rhs: Vec<T>,
    /// Smallest eigenvalue of the primal Gram matrix.
    pub min_eigenvalue: f64,
}

/// Per-state constraint diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    pub constraint_values: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub gram_min_eigenvalue: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    n: usize,
    mass: Vec<f64>,
    base_force: BaseForce,
    constraints: ConstraintSet,
}

impl SystemSpec {
    pub fn new(mass: Vec<f64>, base_force: BaseForce, constraints: ConstraintSet) -> Result<Self> {
        let n = mass.len();
        if let Some((i, m)) = mass.iter().enumerate().find(|(_, m)| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::InvalidParameter(format!("mass[{i}] = {m} must be positive")));
        }
        let check = |e: &Expr, what: &str| {
            if e.dim() > n {
                Err(Error::Dimension(format!("{what} is declared for dimension {} but the system has {n}", e.dim())))
            } else {
                Ok(())
            }
        };
        match &base_force {
            BaseForce::Potential(u) => check(u, "potential")?,
            BaseForce::Explicit(fs) => {
                if fs.len() != n {
                    return Err(Error::Dimension(format!("{} force components for dimension {n}", fs.len())));
                }
                for f in fs {
                    check(f, "force component")?;
                }
            }
        }
        for d in constraints.exprs() {
            check(d, "constraint")?;
        }
        if !(constraints.regularity_eps > 0.0) {
            return Err(Error::InvalidParameter("regularity threshold must be positive".into()));
        }
        Ok(SystemSpec { n, mass, base_force, constraints })
    }

    pub fn with_potential(mass: Vec<f64>, potential: &str, constraints: &[&str]) -> Result<Self> {
        let n = mass.len();
        let u = Expr::parse(potential, n)?;
        Self::new(mass, BaseForce::Potential(u), ConstraintSet::parse(constraints, n)?)
    }

    pub fn with_force(mass: Vec<f64>, force: &[&str], constraints: &[&str]) -> Result<Self> {
        let n = mass.len();
        let fs = force.iter().map(|s| Expr::parse(s, n)).collect::<Result<Vec<_>, _>>()?;
        Self::new(mass, BaseForce::Explicit(fs), ConstraintSet::parse(constraints, n)?)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn base_force(&self) -> &BaseForce {
        &self.base_force
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    fn check_point<T: Scalar>(&self, pt: &EvalPoint<T>) -> Result<()> {
        if pt.q.len() != self.n || pt.v.len() != self.n {
            return Err(Error::Dimension(format!(
                "state has |q| = {}, |v| = {} for a system of dimension {}",
                pt.q.len(),
                pt.v.len(),
                self.n
            )));
        }
        Ok(())
    }

    /// Unconstrained force `F0(q, v, t)`.
    pub fn base_force_at<T: Scalar>(&self, pt: &EvalPoint<T>) -> Result<Vec<T>> {
        self.check_point(pt)?;
        match &self.base_force {
            BaseForce::Potential(u) => Ok(u.grad(pt)?.dq.into_iter().map(|g| -g).collect()),
            BaseForce::Explicit(fs) => fs.iter().map(|f| f.eval(pt)).collect(),
        }
    }

    /// `a_i = F0_i / mass_i`.
    pub fn base_acceleration<T: Scalar>(&self, pt: &EvalPoint<T>) -> Result<Vec<T>> {
        let f0 = self.base_force_at(pt)?;
        Ok(f0.into_iter().zip(&self.mass).map(|(f, &m)| f.scale(1.0 / m)).collect())
    }

    pub fn compute_multipliers<T: Scalar>(&self, pt: &EvalPoint<T>) -> Result<MultiplierResult<T>> {
        let f0 = self.base_force_at(pt)?;
        let (_, grads) = self.constraints.values_and_grads(pt)?;
        self.solve_multipliers(pt, &f0, &grads)
    }

    fn solve_multipliers<T: Scalar>(&self, pt: &EvalPoint<T>, f0: &[T], grads: &[Gradient<T>]) -> Result<MultiplierResult<T>> {
        let inv_mass: Vec<T> = self.mass.iter().map(|&m| T::from_f64(1.0 / m)).collect();
        let weighted: Vec<Vec<T>> = grads.iter().map(|g| g.dv.iter().zip(&inv_mass).map(|(&d, &w)| d * w).collect()).collect();
        let gram: Vec<Vec<T>> = weighted.iter().map(|wa| grads.iter().map(|gb| dot(wa, &gb.dv)).collect()).collect();
        let rhs: Vec<T> = grads.iter().zip(&weighted).map(|(g, w)| -dot(&g.dq, &pt.v) - g.dt - dot(w, f0)).collect();

        let min_eigenvalue = min_eigenvalue(&gram);
        let threshold = self.constraints.regularity_eps;
        if gram.is_empty() {
            return Ok(MultiplierResult { h: Vec::new(), gram, rhs, min_eigenvalue });
        }
        if !(min_eigenvalue >= threshold) {
            return Err(Error::Regularity { min_eigenvalue, threshold });
        }
        let h = cholesky_solve(&gram, &rhs).ok_or(Error::Regularity { min_eigenvalue, threshold })?;
        Ok(MultiplierResult { h, gram, rhs, min_eigenvalue })
    }

    /// Constrained force `F0 + Σ_α h_α ∂D_α/∂v` and its multipliers.
    pub fn constrained_force<T: Scalar>(&self, pt: &EvalPoint<T>) -> Result<(Vec<T>, MultiplierResult<T>)> {
        let mut force = self.base_force_at(pt)?;
        let (_, grads) = self.constraints.values_and_grads(pt)?;
        let mult = self.solve_multipliers(pt, &force, &grads)?;
        for (g, &h) in grads.iter().zip(&mult.h) {
            for (f, &d) in force.iter_mut().zip(&g.dv) {
                *f += h * d;
            }
        }
        Ok((force, mult))
    }

    /// `a_i = (F0_i + Σ_α h_α ∂D_α/∂v_i) / mass_i`.
    pub fn total_acceleration<T: Scalar>(&self, pt: &EvalPoint<T>) -> Result<Vec<T>> {
        if self.constraints.is_empty() {
            return self.base_acceleration(pt);
        }
        let (force, _) = self.constrained_force(pt)?;
        Ok(force.into_iter().zip(&self.mass).map(|(f, &m)| f.scale(1.0 / m)).collect())
    }

    pub fn diagnostics(&self, pt: &EvalPoint<f64>) -> Result<Diagnostics> {
        if self.constraints.is_empty() {
            return Ok(Diagnostics { constraint_values: Vec::new(), multipliers: Vec::new(), gram_min_eigenvalue: None });
        }
        let f0 = self.base_force_at(pt)?;
        let (values, grads) = self.constraints.values_and_grads(pt)?;
        let mult = self.solve_multipliers(pt, &f0, &grads)?;
        Ok(Diagnostics { constraint_values: values, multipliers: mult.h, gram_min_eigenvalue: Some(mult.min_eigenvalue) })
    }

    /// Smallest eigenvalue of the mass-weighted constraint Gram matrix.
    pub fn gram_min_eigenvalue(&self, pt: &EvalPoint<f64>) -> Result<Option<f64>> {
        if self.constraints.is_empty() {
            return Ok(None);
        }
        let (_, grads) = self.constraints.values_and_grads(pt)?;
        let gram: Vec<Vec<f64>> = grads
            .iter()
            .map(|ga| {
                grads.iter().map(|gb| ga.dv.iter().zip(&gb.dv).zip(&self.mass).map(|((a, b), m)| a * b / m).sum()).collect()
            })
            .collect();
        Ok(Some(min_eigenvalue(&gram)))
    }

    /// Newton-correct `v0` along `span{∂D_α/∂v}` until every `|D_α| ≤ 1e-12`.
    pub fn project_initial_state(&self, q0: &[f64], v0: &[f64], t: f64) -> Result<Vec<f64>> {
        if self.constraints.is_empty() {
            return Err(Error::InvalidParameter("projection requires at least one constraint".into()));
        }
        let mut pt = EvalPoint::from_slices(q0, v0, t)?;
        self.check_point(&pt)?;
        let mut residual = f64::INFINITY;
        for iteration in 0..=PROJECTION_MAX_ITERATIONS {
            let (values, grads) = self.constraints.values_and_grads(&pt)?;
            residual = values.iter().fold(0.0, |m: f64, d| m.max(d.abs()));
            if residual <= PROJECTION_TOLERANCE {
                return Ok(pt.v);
            }
            if iteration == PROJECTION_MAX_ITERATIONS {
                break;
            }
            let jjt: Vec<Vec<f64>> = grads.iter().map(|ga| grads.iter().map(|gb| dot(&ga.dv, &gb.dv)).collect()).collect();
            let Some(step) = cholesky_solve(&jjt, &values).filter(|_| min_eigenvalue(&jjt) > 1e-14) else {
                return Err(Error::NoConvergence { iterations: iteration, residual });
            };
            for (g, s) in grads.iter().zip(&step) {
                for (v, d) in pt.v.iter_mut().zip(&g.dv) {
                    *v -= s * d;
                }
            }
        }
        Err(Error::NoConvergence { iterations: PROJECTION_MAX_ITERATIONS, residual })
    }
}

pub(crate) fn min_eigenvalue<T: Scalar>(gram: &[Vec<T>]) -> f64 {
    let m = gram.len();
    match m {
        0 => f64::INFINITY,
        1 => gram[0][0].re(),
        _ => {
            let mat = DMatrix::from_fn(m, m, |i, j| 0.5 * (gram[i][j].re() + gram[j][i].re()));
            mat.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
        }
    }
}

/// Solve `A x = b` for symmetric positive definite `A`.
pub(crate) fn cholesky_solve<T: Scalar>(a: &[Vec<T>], b: &[T]) -> Option<Vec<T>> {
    let m = a.len();
    let mut l = vec![vec![T::zero(); m]; m];
    for i in 0..m {
        for j in 0..=i {
            let mut s = a[i][j];
            for (&x, &y) in l[i][..j].iter().zip(&l[j][..j]) {
                s -= x * y;
            }
            if i == j {
                if !(s.re() > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = vec![T::zero(); m];
    for i in 0..m {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![T::zero(); m];
    for i in (0..m).rev() {
        let mut s = y[i];
        for k in i + 1..m {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    Some(x)
}

/// Primal values of a multiplier result.
impl<T: Scalar> MultiplierResult<T> {
    pub fn primal(&self) -> MultiplierResult<f64> {
        MultiplierResult {
            h: primal(&self.h),
            gram: self.gram.iter().map(|r| primal(r)).collect(),
            rhs: primal(&self.rhs),
            min_eigenvalue: self.min_eigenvalue,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(q: &[f64], v: &[f64]) -> EvalPoint<f64> {
        EvalPoint::from_slices(q, v, 0.0).unwrap()
    }

    fn sleigh(constraint: &str, m: f64, inertia: f64) -> SystemSpec {
        SystemSpec::with_potential(vec![m, m, inertia], "0", &[constraint]).unwrap()
    }

    #[test]
    fn base_acceleration_examples() {
        let s = SystemSpec::with_potential(vec![1.0], "0.5*q1^2", &[]).unwrap();
        assert_eq!(s.base_acceleration(&pt(&[2.0], &[0.0])).unwrap(), vec![-2.0]);

        let s = SystemSpec::with_force(vec![1.0], &["0"], &[]).unwrap();
        assert_eq!(s.base_acceleration(&pt(&[7.0], &[3.0])).unwrap(), vec![0.0]);

        let s = SystemSpec::with_potential(vec![4.0], "q1", &[]).unwrap();
        assert_eq!(s.base_acceleration(&pt(&[-1.0], &[5.0])).unwrap(), vec![-0.25]);
    }

    #[test]
    fn multiplier_vanishes_for_velocity_lock_without_force() {
        let s = SystemSpec::with_force(vec![1.0], &["0"], &["v1 - 1"]).unwrap();
        let r = s.compute_multipliers(&pt(&[0.4], &[1.0])).unwrap();
        assert_eq!(r.h, vec![0.0]);
    }

    #[test]
    fn linear_sleigh_multiplier_and_acceleration() {
        let (m, inertia, v0, w) = (2.0, 0.7, 1.5, 0.8);
        let s = sleigh("v1*sin(q3) - v2*cos(q3)", m, inertia);
        let p = pt(&[0.0, 0.0, 0.0], &[v0, 0.0, w]);
        let r = s.compute_multipliers(&p).unwrap();
        assert!((r.h[0] + m * v0 * w).abs() < 1e-14);
        let a = s.total_acceleration(&p).unwrap();
        assert!(a[0].abs() < 1e-15 && (a[1] - v0 * w).abs() < 1e-14 && a[2] == 0.0);
    }

    #[test]
    fn nonlinear_sleigh_acceleration() {
        let (v0, w) = (1.3, 0.6);
        let s = sleigh("v2/v1 - tan(q3)", 1.0, 1.0);
        let a = s.total_acceleration(&pt(&[0.0; 3], &[v0, 0.0, w])).unwrap();
        assert!(a[0].abs() < 1e-15 && (a[1] - v0 * w).abs() < 1e-14 && a[2].abs() < 1e-15);
    }

    #[test]
    fn speed_constraint_cancels_potential_along_velocity() {
        let s = SystemSpec::with_potential(vec![1.0, 1.0], "q1", &["0.5*(v1^2+v2^2) - 0.5"]).unwrap();
        let p = pt(&[0.0, 0.0], &[1.0, 0.0]);
        let r = s.compute_multipliers(&p).unwrap();
        assert_eq!(r.h, vec![1.0]);
        let (force, _) = s.constrained_force(&p).unwrap();
        assert_eq!(force, vec![0.0, 0.0]);
    }

    #[test]
    fn empty_constraint_set_matches_base_acceleration() {
        let s = SystemSpec::with_force(vec![1.0, 3.0], &["-q1 + v2", "sin(q2)*v1"], &[]).unwrap();
        let p = pt(&[0.3, -1.2], &[0.5, 2.0]);
        let a = s.total_acceleration(&p).unwrap();
        let b = s.base_acceleration(&p).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-15);
        }
    }

    #[test]
    fn degenerate_constraint_is_rejected() {
        // ∂D/∂v vanishes at v = 0
        let s = SystemSpec::with_force(vec![1.0], &["0"], &["v1^2"]).unwrap();
        assert!(matches!(s.compute_multipliers(&pt(&[0.0], &[0.0])), Err(Error::Regularity { .. })));
        // duplicated constraints give a singular Gram matrix
        let s = SystemSpec::with_force(vec![1.0, 1.0], &["0", "0"], &["v1 + v2", "2*v1 + 2*v2"]).unwrap();
        assert!(matches!(s.total_acceleration(&pt(&[0.0; 2], &[1.0, -1.0])), Err(Error::Regularity { .. })));
    }

    #[test]
    fn projection_examples() {
        let s = sleigh("v1*sin(q3) - v2*cos(q3)", 1.0, 1.0);
        let v = s.project_initial_state(&[0.0; 3], &[1.0, 0.0, 1.0], 0.0).unwrap();
        assert_eq!(v, vec![1.0, 0.0, 1.0]);

        let s = SystemSpec::with_force(vec![1.0], &["0"], &["v1 - 1"]).unwrap();
        assert_eq!(s.project_initial_state(&[0.0], &[0.0], 0.0).unwrap(), vec![1.0]);

        let s = SystemSpec::with_force(vec![1.0], &["0"], &["v1^2 + 1"]).unwrap();
        for v0 in [0.0, 0.5, -3.0] {
            assert!(matches!(s.project_initial_state(&[0.0], &[v0], 0.0), Err(Error::NoConvergence { .. })));
        }
    }

    #[test]
    fn projection_repairs_nonlinear_sleigh_data() {
        let s = sleigh("v2/v1 - tan(q3)", 1.0, 1.0);
        let q = [0.0, 0.0, 0.3];
        let v = s.project_initial_state(&q, &[1.0, 0.0, 1.0], 0.0).unwrap();
        let d = s.constraints().values(&pt(&q, &v)).unwrap();
        assert!(d[0].abs() <= PROJECTION_TOLERANCE);
        assert_eq!(v[2], 1.0);
    }

    #[test]
    fn invalid_specs() {
        assert!(SystemSpec::with_potential(vec![1.0, -1.0], "0", &[]).is_err());
        assert!(SystemSpec::with_force(vec![1.0, 1.0], &["0"], &[]).is_err());
        assert!(SystemSpec::with_potential(vec![1.0], "q2", &[]).is_err());
    }

    #[test]
    fn cholesky_matches_direct_solve() {
        let a = vec![vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 2.0]];
        let b = vec![1.0, -2.0, 0.5];
        let x = cholesky_solve(&a, &b).unwrap();
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i][j] * x[j]).sum::<f64>() - b[i];
            assert!(r.abs() < 1e-14);
        }
        assert!((min_eigenvalue(&[vec![2.0, 1.0], vec![1.0, 2.0]]) - 1.0).abs() < 1e-14);
    }
}
