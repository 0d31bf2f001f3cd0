//! Extended phase space `(q, p, v, π, e, π_e)` of dimension `4n + 2`.
//!
//! Second-order equations `q̈ = F(q, q̇)` are carried by
//!
//! ```text
//! H = π²/(2e) + π·F(q, v) + p·v + μ_e π_e
//! ```
//!
//! with canonical pairs `(q, p)`, `(v, π)`, `(e, π_e)` and the constraint
//! surface `π_e = 0, p = 0, π = 0`. On that surface the flow reduces to
//! `q̇ = v, v̇ = F, ė = μ_e` and `H` vanishes. `F` is the engine's total
//! acceleration, so for constrained systems it contains the multipliers.
//! The auxiliary pair `λ, π_λ` is identically zero and is not represented.

use num_traits::Zero;

use crate::dual::Dual;
use crate::engine::SystemSpec;
use crate::error::{Error, Result};
use crate::expr::EvalPoint;
use crate::path::PhasePath;
use crate::scalar::{dot, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedPhasePoint<T> {
    pub q: Vec<T>,
    pub p: Vec<T>,
    pub v: Vec<T>,
    pub pi: Vec<T>,
    pub e: T,
    pub pi_e: T,
}

impl<T: Scalar> ExtendedPhasePoint<T> {
    /// A point on the constraint surface: `p = π = 0`, `π_e = 0`.
    pub fn on_surface(q: Vec<T>, v: Vec<T>, e: T) -> Self {
        let n = q.len();
        ExtendedPhasePoint { q, p: vec![T::zero(); n], v, pi: vec![T::zero(); n], e, pi_e: T::zero() }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Number of phase-space coordinates, `4n + 2`.
    pub fn phase_dim(&self) -> usize {
        4 * self.dim() + 2
    }

    pub fn is_consistent(&self) -> bool {
        let n = self.q.len();
        self.p.len() == n && self.v.len() == n && self.pi.len() == n
    }

    /// Coordinates in the order `q, p, v, π, e, π_e`.
    pub fn to_vec(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.phase_dim());
        out.extend_from_slice(&self.q);
        out.extend_from_slice(&self.p);
        out.extend_from_slice(&self.v);
        out.extend_from_slice(&self.pi);
        out.push(self.e);
        out.push(self.pi_e);
        out
    }

    pub fn from_slice(x: &[T]) -> Result<Self> {
        if x.len() < 2 || !(x.len() - 2).is_multiple_of(4) {
            return Err(Error::Dimension(format!("{} is not of the form 4n + 2", x.len())));
        }
        let n = (x.len() - 2) / 4;
        Ok(ExtendedPhasePoint {
            q: x[..n].to_vec(),
            p: x[n..2 * n].to_vec(),
            v: x[2 * n..3 * n].to_vec(),
            pi: x[3 * n..4 * n].to_vec(),
            e: x[4 * n],
            pi_e: x[4 * n + 1],
        })
    }

    pub fn map<U>(&self, f: impl Fn(T) -> U) -> ExtendedPhasePoint<U> {
        let m = |xs: &[T]| xs.iter().map(|&x| f(x)).collect();
        ExtendedPhasePoint { q: m(&self.q), p: m(&self.p), v: m(&self.v), pi: m(&self.pi), e: f(self.e), pi_e: f(self.pi_e) }
    }

    fn eval_point(&self, t: T) -> EvalPoint<T> {
        EvalPoint { q: self.q.clone(), v: self.v.clone(), t }
    }
}

fn check<T: Scalar>(spec: &SystemSpec, z: &ExtendedPhasePoint<T>) -> Result<()> {
    if !z.is_consistent() || z.dim() != spec.dim() {
        return Err(Error::Dimension(format!("phase point of dimension {} for a system of dimension {}", z.dim(), spec.dim())));
    }
    if z.e.re() == 0.0 {
        return Err(Error::ZeroEinbein);
    }
    Ok(())
}

/// `H = π²/(2e) + π·F + p·v + μ_e π_e`.
pub fn hamiltonian_value<T: Scalar>(spec: &SystemSpec, z: &ExtendedPhasePoint<T>, mu_e: T, t: T) -> Result<T> {
    check(spec, z)?;
    let force = spec.total_acceleration(&z.eval_point(t))?;
    let two = T::from_f64(2.0);
    Ok(dot(&z.pi, &z.pi) / (two * z.e) + dot(&z.pi, &force) + dot(&z.p, &z.v) + mu_e * z.pi_e)
}

/// `Σ_j π_j ∂F_j/∂x` for `x` ranging over `q` (first) and `v` (second),
/// one dual pass per coordinate.
fn force_jacobian_transpose<T: Scalar>(spec: &SystemSpec, z: &ExtendedPhasePoint<T>, t: T) -> Result<(Vec<T>, Vec<T>)> {
    let n = z.dim();
    let lifted = z.eval_point(t).map(Dual::constant);
    let pass = |pt: EvalPoint<Dual<T>>| -> Result<T> {
        let f = spec.total_acceleration(&pt)?;
        Ok(z.pi.iter().zip(&f).fold(T::zero(), |acc, (&p, fj)| acc + p * fj.eps))
    };
    let mut dq = Vec::with_capacity(n);
    let mut dv = Vec::with_capacity(n);
    for i in 0..n {
        let mut pt = lifted.clone();
        pt.q[i].eps = T::one();
        dq.push(pass(pt)?);
    }
    for i in 0..n {
        let mut pt = lifted.clone();
        pt.v[i].eps = T::one();
        dv.push(pass(pt)?);
    }
    Ok((dq, dv))
}

/// Hamiltonian vector field, returned as a tangent vector in the same
/// layout as the point:
///
/// ```text
/// q̇ = v            ṗ = -π·∂F/∂q
/// v̇ = π/e + F      π̇ = -p - π·∂F/∂v
/// ė = μ_e          π̇_e = π²/(2e²)
/// ```
pub fn hamiltonian_vector_field<T: Scalar>(
    spec: &SystemSpec,
    z: &ExtendedPhasePoint<T>,
    mu_e: T,
    t: T,
) -> Result<ExtendedPhasePoint<T>> {
    check(spec, z)?;
    let n = z.dim();
    let force = spec.total_acceleration(&z.eval_point(t))?;
    let (jq, jv) = if z.pi.iter().all(Zero::is_zero) {
        (vec![T::zero(); n], vec![T::zero(); n])
    } else {
        force_jacobian_transpose(spec, z, t)?
    };
    let pi_sq = dot(&z.pi, &z.pi);
    Ok(ExtendedPhasePoint {
        q: z.v.clone(),
        p: jq.into_iter().map(|x| -x).collect(),
        v: z.pi.iter().zip(&force).map(|(&p, &f)| p / z.e + f).collect(),
        pi: z.p.iter().zip(jv).map(|(&p, j)| -p - j).collect(),
        e: mu_e,
        pi_e: pi_sq / (T::from_f64(2.0) * z.e * z.e),
    })
}

/// `max(|π_e|, ‖p‖∞, ‖π‖∞)`: distance from the constraint surface.
pub fn constraint_surface_residual<T: Scalar>(z: &ExtendedPhasePoint<T>) -> f64 {
    z.p.iter().chain(&z.pi).map(|x| x.re().abs()).fold(z.pi_e.re().abs(), f64::max)
}

/// A scalar function on extended phase space, evaluable on any scalar.
pub trait PhaseFunction {
    fn eval<T: Scalar>(&self, z: &ExtendedPhasePoint<T>) -> Result<T>;
}

/// A single canonical coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseCoordinate {
    Q(usize),
    P(usize),
    V(usize),
    Pi(usize),
    E,
    PiE,
}

impl PhaseFunction for PhaseCoordinate {
    fn eval<T: Scalar>(&self, z: &ExtendedPhasePoint<T>) -> Result<T> {
        let get =
            |xs: &[T], i: usize| xs.get(i).copied().ok_or_else(|| Error::Dimension(format!("coordinate index {i} out of range")));
        match *self {
            PhaseCoordinate::Q(i) => get(&z.q, i),
            PhaseCoordinate::P(i) => get(&z.p, i),
            PhaseCoordinate::V(i) => get(&z.v, i),
            PhaseCoordinate::Pi(i) => get(&z.pi, i),
            PhaseCoordinate::E => Ok(z.e),
            PhaseCoordinate::PiE => Ok(z.pi_e),
        }
    }
}

/// The constraints `π_e`, `p_i`, `π_i` defining the surface.
pub fn surface_constraints(n: usize) -> Vec<PhaseCoordinate> {
    let mut out = vec![PhaseCoordinate::PiE];
    out.extend((0..n).map(PhaseCoordinate::P));
    out.extend((0..n).map(PhaseCoordinate::Pi));
    out
}

/// `H` as a phase function, with `μ_e` and `t` held fixed.
#[derive(Clone, Copy, Debug)]
pub struct Hamiltonian<'a> {
    pub spec: &'a SystemSpec,
    pub mu_e: f64,
    pub t: f64,
}

impl PhaseFunction for Hamiltonian<'_> {
    fn eval<T: Scalar>(&self, z: &ExtendedPhasePoint<T>) -> Result<T> {
        hamiltonian_value(self.spec, z, T::from_f64(self.mu_e), T::from_f64(self.t))
    }
}

/// Gradient of `f` over all `4n + 2` coordinates (layout of `to_vec`).
pub fn phase_gradient<F: PhaseFunction>(f: &F, z: &ExtendedPhasePoint<f64>) -> Result<Vec<f64>> {
    let x = z.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let seeded: Vec<Dual<f64>> =
            x.iter().enumerate().map(|(j, &xj)| if i == j { Dual::variable(xj) } else { Dual::constant(xj) }).collect();
        grad.push(f.eval(&ExtendedPhasePoint::from_slice(&seeded)?)?.eps);
    }
    Ok(grad)
}

/// Canonical bracket
/// `{f, g} = Σ (∂f/∂q ∂g/∂p - ∂f/∂p ∂g/∂q) + (v, π) + (e, π_e)`.
pub fn poisson_bracket<F: PhaseFunction, G: PhaseFunction>(f: &F, g: &G, z: &ExtendedPhasePoint<f64>) -> Result<f64> {
    let n = z.dim();
    let df = phase_gradient(f, z)?;
    let dg = phase_gradient(g, z)?;
    // (coordinate, momentum) offsets of the three canonical blocks
    let mut sum = 0.0;
    for (x, p, len) in [(0, n, n), (2 * n, 3 * n, n), (4 * n, 4 * n + 1, 1)] {
        for i in 0..len {
            sum += df[x + i] * dg[p + i] - df[p + i] * dg[x + i];
        }
    }
    Ok(sum)
}

/// Infinitesimal gauge variations at every sample:
///
/// ```text
/// δe   = α (1 - v·q̇ / v²)
/// δp   = α π² / (2 e² v²) v
/// δμ_e = d(δe)/dt
/// ```
///
/// `q̇` and the time derivative use the path's difference stencils.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugeVariation {
    pub delta_e: Vec<f64>,
    pub delta_p: Vec<Vec<f64>>,
    pub delta_mu_e: Vec<f64>,
}

pub fn gauge_variation(path: &PhasePath, alpha: &[f64]) -> Result<GaugeVariation> {
    if alpha.len() != path.len() {
        return Err(Error::Dimension(format!("{} gauge samples for a path of {}", alpha.len(), path.len())));
    }
    let mut delta_e = Vec::with_capacity(path.len());
    let mut delta_p = Vec::with_capacity(path.len());
    for (k, (z, &a)) in path.points.iter().zip(alpha).enumerate() {
        let v_sq = dot(&z.v, &z.v);
        if v_sq < 1e-12 {
            return Err(Error::VanishingVelocity { sample: k, norm_sq: v_sq });
        }
        if z.e == 0.0 {
            return Err(Error::ZeroEinbein);
        }
        let q_dot = path.q_dot(k);
        delta_e.push(a * (1.0 - dot(&z.v, &q_dot) / v_sq));
        let c = a * dot(&z.pi, &z.pi) / (2.0 * z.e * z.e * v_sq);
        delta_p.push(z.v.iter().map(|&vi| c * vi).collect());
    }
    let delta_mu_e = crate::path::derivative(&delta_e, path.grid.dt());
    Ok(GaugeVariation { delta_e, delta_p, delta_mu_e })
}

/// Apply the gauge variation with parameter samples `alpha`; `q`, `v`, `π`
/// and `π_e` are left untouched.
pub fn gauge_transform(path: &PhasePath, alpha: &[f64]) -> Result<PhasePath> {
    let var = gauge_variation(path, alpha)?;
    let mut out = path.clone();
    for (k, z) in out.points.iter_mut().enumerate() {
        z.e += var.delta_e[k];
        for (p, dp) in z.p.iter_mut().zip(&var.delta_p[k]) {
            *p += dp;
        }
        out.mu_e[k] += var.delta_mu_e[k];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::TimeGrid;

    fn free(n: usize) -> SystemSpec {
        SystemSpec::with_potential(vec![1.0; n], "0", &[]).unwrap()
    }

    fn point1(p: f64, v: f64, pi: f64, e: f64, pi_e: f64) -> ExtendedPhasePoint<f64> {
        ExtendedPhasePoint { q: vec![0.0], p: vec![p], v: vec![v], pi: vec![pi], e, pi_e }
    }

    #[test]
    fn hamiltonian_examples() {
        let s = free(1);
        assert_eq!(hamiltonian_value(&s, &point1(0.0, 0.0, 1.0, 1.0, 0.0), 0.0, 0.0).unwrap(), 0.5);
        assert_eq!(hamiltonian_value(&s, &point1(3.0, 2.0, 1.0, 1.0, 0.0), 0.0, 0.0).unwrap(), 6.5);
        let sleigh = SystemSpec::with_potential(vec![1.0; 3], "0", &["v1*sin(q3) - v2*cos(q3)"]).unwrap();
        let z = ExtendedPhasePoint::on_surface(vec![0.1, 0.2, 0.3], vec![1.0, 0.5, 2.0], 0.7);
        assert_eq!(hamiltonian_value(&sleigh, &z, 3.0, 0.0).unwrap(), 0.0);
        assert!(matches!(hamiltonian_value(&s, &point1(0.0, 0.0, 1.0, 0.0, 0.0), 0.0, 0.0), Err(Error::ZeroEinbein)));
    }

    #[test]
    fn vector_field_examples() {
        let s = free(1);
        let f = hamiltonian_vector_field(&s, &point1(0.0, 0.0, 1.0, 1.0, 0.0), 0.0, 0.0).unwrap();
        assert_eq!(f.v, vec![1.0]);
        assert_eq!(f.pi, vec![0.0]);
        assert_eq!(f.pi_e, 0.5);

        let osc = SystemSpec::with_potential(vec![1.0], "0.5*q1^2", &[]).unwrap();
        let z = ExtendedPhasePoint::on_surface(vec![2.0], vec![-1.0], 1.0);
        let f = hamiltonian_vector_field(&osc, &z, 0.25, 0.0).unwrap();
        assert_eq!(f.q, vec![-1.0]);
        assert_eq!(f.v, vec![-2.0]);
        assert_eq!(f.e, 0.25);
        assert_eq!((f.p[0], f.pi[0], f.pi_e), (0.0, 0.0, 0.0));
    }

    #[test]
    fn off_surface_momentum_rates() {
        // F = -q: ṗ = -π ∂F/∂q = π, π̇ = -p
        let osc = SystemSpec::with_potential(vec![1.0], "0.5*q1^2", &[]).unwrap();
        let z = ExtendedPhasePoint { q: vec![0.3], p: vec![0.7], v: vec![0.1], pi: vec![2.0], e: 2.0, pi_e: 0.0 };
        let f = hamiltonian_vector_field(&osc, &z, 0.0, 0.0).unwrap();
        assert!((f.p[0] - 2.0).abs() < 1e-15);
        assert!((f.pi[0] + 0.7).abs() < 1e-15);
        assert!((f.v[0] - (1.0 - 0.3)).abs() < 1e-15);
        assert!((f.pi_e - 0.5).abs() < 1e-15);
    }

    #[test]
    fn residual_is_max_norm() {
        let z = ExtendedPhasePoint { q: vec![0.0; 2], p: vec![0.0; 2], v: vec![0.0; 2], pi: vec![1e-3, 0.0], e: 1.0, pi_e: 0.0 };
        assert_eq!(constraint_surface_residual(&z), 1e-3);
        assert_eq!(constraint_surface_residual(&point1(1.0, 0.0, 2.0, 1.0, 3.0)), 3.0);
        assert_eq!(constraint_surface_residual(&point1(0.0, 5.0, 0.0, 1.0, 0.0)), 0.0);
    }

    #[test]
    fn bracket_examples() {
        let z = ExtendedPhasePoint {
            q: vec![0.4, -0.2],
            p: vec![0.1, 0.3],
            v: vec![1.0, 2.0],
            pi: vec![1.0, 0.0],
            e: 1.0,
            pi_e: 0.0,
        };
        use PhaseCoordinate::*;
        assert_eq!(poisson_bracket(&Q(0), &P(0), &z).unwrap(), 1.0);
        assert_eq!(poisson_bracket(&Q(0), &P(1), &z).unwrap(), 0.0);
        assert_eq!(poisson_bracket(&Q(0), &Q(1), &z).unwrap(), 0.0);
        assert_eq!(poisson_bracket(&V(1), &Pi(1), &z).unwrap(), 1.0);
        assert_eq!(poisson_bracket(&E, &PiE, &z).unwrap(), 1.0);
        let s = free(2);
        let h = Hamiltonian { spec: &s, mu_e: 0.0, t: 0.0 };
        assert!((poisson_bracket(&h, &PiE, &z).unwrap() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn flat_layout_round_trip() {
        let z = ExtendedPhasePoint {
            q: vec![1.0, 2.0],
            p: vec![3.0, 4.0],
            v: vec![5.0, 6.0],
            pi: vec![7.0, 8.0],
            e: 9.0,
            pi_e: 10.0,
        };
        let x = z.to_vec();
        assert_eq!(x.len(), 10);
        assert_eq!(ExtendedPhasePoint::from_slice(&x).unwrap(), z);
        assert!(ExtendedPhasePoint::<f64>::from_slice(&[0.0; 7]).is_err());
    }

    fn single_sample_path(v: f64, q_dot: f64, e: f64, pi: f64) -> PhasePath {
        // q linear in t so every stencil returns q_dot exactly
        let grid = TimeGrid::new(0.0, 0.5, 5).unwrap();
        let points = grid
            .times()
            .iter()
            .map(|&t| ExtendedPhasePoint { q: vec![q_dot * t], p: vec![0.0], v: vec![v], pi: vec![pi], e, pi_e: 0.0 })
            .collect();
        PhasePath::new(grid, points, vec![0.0; 5]).unwrap()
    }

    #[test]
    fn gauge_variation_values() {
        let path = single_sample_path(2.0, 1.0, 1.0, 3.0);
        let var = gauge_variation(&path, &[0.1; 5]).unwrap();
        for k in 0..5 {
            assert!((var.delta_e[k] - 0.05).abs() < 1e-15);
            assert!((var.delta_p[k][0] - 0.225).abs() < 1e-15);
            assert!(var.delta_mu_e[k].abs() < 1e-15);
        }
    }

    #[test]
    fn gauge_transform_identity_and_on_shell_triviality() {
        let path = single_sample_path(2.0, 1.0, 1.0, 3.0);
        assert_eq!(gauge_transform(&path, &[0.0; 5]).unwrap(), path);

        // q̇ = v and π = 0: nothing moves
        let on_shell = single_sample_path(2.0, 2.0, 1.0, 0.0);
        let out = gauge_transform(&on_shell, &[0.3, 0.1, -0.2, 0.5, 0.05]).unwrap();
        for (a, b) in out.points.iter().zip(&on_shell.points) {
            assert!((a.e - b.e).abs() < 1e-15);
            assert_eq!(a.p, b.p);
            assert_eq!((&a.q, &a.v, &a.pi, a.pi_e), (&b.q, &b.v, &b.pi, b.pi_e));
        }
    }

    #[test]
    fn gauge_requires_nonzero_velocity() {
        let path = single_sample_path(0.0, 1.0, 1.0, 3.0);
        assert!(matches!(gauge_transform(&path, &[0.1; 5]), Err(Error::VanishingVelocity { sample: 0, .. })));
    }
}
