//! Discrete action functionals and the numerical checks built on them.
//!
//! * [`universal_action`]: `∫ (e/2) ‖q̈ - F(q, q̇)‖² dt`, non-negative and
//!   zero exactly on solutions.
//! * [`first_order_action`]: `∫ p·q̇ + π·v̇ + π_e ė - H dt`.
//! * [`stationarity_check`]: numeric gradient of the first-order action
//!   with respect to every interior sample coordinate.
//! * [`gauge_invariance_check`]: change of the first-order action under
//!   the gauge transformation at several amplitudes, fitted as
//!   `ΔS = A α + B α²`.

use serde::Serialize;

use crate::engine::SystemSpec;
use crate::error::{Error, Result};
use crate::expr::EvalPoint;
use crate::hamiltonian::{gauge_transform, gauge_variation, ExtendedPhasePoint};
use crate::path::{ConfigPath, PhasePath};
use crate::scalar::dot;

/// Constant in the stationarity pass bound `C (dt² + h²)`.
pub const STATIONARITY_CONSTANT: f64 = 1.0;
/// Constant in the gauge pass bound `|A| ≤ C dt²`.
pub const GAUGE_CONSTANT: f64 = 1.0;

pub fn universal_action(spec: &SystemSpec, path: &ConfigPath, e_profile: &[f64]) -> Result<f64> {
    if e_profile.len() != path.grid.len() {
        return Err(Error::Dimension(format!("{} e samples for a path of {}", e_profile.len(), path.grid.len())));
    }
    if let Some(k) = e_profile.iter().position(|&e| !(e > 0.0)) {
        return Err(Error::InvalidParameter(format!("e must be positive (sample {k} is {})", e_profile[k])));
    }
    let residual_sq = universal_residuals(spec, path)?;
    let integrand: Vec<f64> = residual_sq.iter().zip(e_profile).map(|(r, e)| 0.5 * e * r).collect();
    Ok(path.grid.integrate(&integrand))
}

/// `‖q̈_k - F(q_k, q̇_k, t_k)‖²` at every sample.
pub fn universal_residuals(spec: &SystemSpec, path: &ConfigPath) -> Result<Vec<f64>> {
    (0..path.grid.len())
        .map(|k| {
            let q_dot = path.velocity(k);
            let q_ddot = path.acceleration(k);
            let pt = EvalPoint::new(path.q[k].clone(), q_dot, path.grid.time(k))?;
            let f = spec.total_acceleration(&pt)?;
            Ok(q_ddot.iter().zip(&f).map(|(a, b)| (a - b) * (a - b)).sum())
        })
        .collect()
}

/// Integrand of the first-order action at sample `k`.
pub fn first_order_integrand(spec: &SystemSpec, path: &PhasePath, k: usize) -> Result<f64> {
    let z = &path.points[k];
    if z.e == 0.0 {
        return Err(Error::ZeroEinbein);
    }
    let q_dot = path.q_dot(k);
    let v_dot = path.v_dot(k);
    let e_dot = path.e_dot(k);
    // π·F only needs the force when π is nonzero
    let pi_force = if z.pi.iter().all(|&x| x == 0.0) {
        0.0
    } else {
        let pt = EvalPoint::new(z.q.clone(), z.v.clone(), path.grid.time(k))?;
        dot(&z.pi, &spec.total_acceleration(&pt)?)
    };
    Ok(dot(&z.p, &q_dot) + dot(&z.pi, &v_dot) + z.pi_e * e_dot
        - dot(&z.pi, &z.pi) / (2.0 * z.e)
        - pi_force
        - dot(&z.v, &z.p)
        - path.mu_e[k] * z.pi_e)
}

pub fn first_order_integrands(spec: &SystemSpec, path: &PhasePath) -> Result<Vec<f64>> {
    (0..path.len()).map(|k| first_order_integrand(spec, path, k)).collect()
}

pub fn first_order_action(spec: &SystemSpec, path: &PhasePath) -> Result<f64> {
    Ok(path.grid.integrate(&first_order_integrands(spec, path)?))
}

/// Build a phase path on the constraint surface from sampled `(q, v)`.
pub fn surface_path(grid: crate::path::TimeGrid, q: &[Vec<f64>], v: &[Vec<f64>], e: &[f64], mu_e: &[f64]) -> Result<PhasePath> {
    if q.len() != v.len() || q.len() != e.len() {
        return Err(Error::Dimension("q, v and e sample counts differ".into()));
    }
    let points = q.iter().zip(v).zip(e).map(|((q, v), &e)| ExtendedPhasePoint::on_surface(q.clone(), v.clone(), e)).collect();
    PhasePath::new(grid, points, mu_e.to_vec())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationarityReport {
    pub dt: f64,
    pub perturbation_scale: f64,
    /// Largest `|∂S_H/∂x|` over interior samples.
    pub max_gradient: f64,
    pub worst_sample: usize,
    pub worst_coordinate: String,
    pub bound: f64,
    pub pass: bool,
}

fn coordinate_name(n: usize, c: usize) -> String {
    match c {
        c if c < n => format!("q{}", c + 1),
        c if c < 2 * n => format!("p{}", c - n + 1),
        c if c < 3 * n => format!("v{}", c - 2 * n + 1),
        c if c < 4 * n => format!("pi{}", c - 3 * n + 1),
        c if c == 4 * n => "e".into(),
        c if c == 4 * n + 1 => "pi_e".into(),
        _ => "mu_e".into(),
    }
}

fn coordinate_mut(path: &mut PhasePath, k: usize, c: usize) -> &mut f64 {
    let n = path.dim();
    if c == 4 * n + 2 {
        return &mut path.mu_e[k];
    }
    let z = &mut path.points[k];
    match c {
        c if c < n => &mut z.q[c],
        c if c < 2 * n => &mut z.p[c - n],
        c if c < 3 * n => &mut z.v[c - 2 * n],
        c if c < 4 * n => &mut z.pi[c - 3 * n],
        c if c == 4 * n => &mut z.e,
        _ => &mut z.pi_e,
    }
}

/// Central-difference gradient of the first-order action with respect to
/// every coordinate (including `μ_e`) of every interior sample.
///
/// Only the integrand samples whose stencils read the perturbed sample are
/// recomputed, so the cost is linear in the path length.
pub fn stationarity_check(spec: &SystemSpec, path: &PhasePath, perturbation_scale: f64) -> Result<StationarityReport> {
    if !(perturbation_scale > 0.0) {
        return Err(Error::InvalidParameter("perturbation scale must be positive".into()));
    }
    let h = perturbation_scale;
    let n = path.dim();
    let mut work = path.clone();
    let local = |p: &PhasePath, k: usize| -> Result<f64> {
        p.grid.stencil_support(k).map(|j| Ok(p.grid.weight(j) * first_order_integrand(spec, p, j)?)).sum()
    };
    let (mut max_gradient, mut worst_sample, mut worst_coordinate) = (0.0_f64, 0, 0);
    for k in 1..path.len() - 1 {
        for c in 0..4 * n + 3 {
            let x0 = *coordinate_mut(&mut work, k, c);
            *coordinate_mut(&mut work, k, c) = x0 + h;
            let plus = local(&work, k)?;
            *coordinate_mut(&mut work, k, c) = x0 - h;
            let minus = local(&work, k)?;
            *coordinate_mut(&mut work, k, c) = x0;
            let g = ((plus - minus) / (2.0 * h)).abs();
            if g > max_gradient {
                (max_gradient, worst_sample, worst_coordinate) = (g, k, c);
            }
        }
    }
    let dt = path.grid.dt();
    let bound = STATIONARITY_CONSTANT * (dt * dt + h * h);
    Ok(StationarityReport {
        dt,
        perturbation_scale: h,
        max_gradient,
        worst_sample,
        worst_coordinate: coordinate_name(n, worst_coordinate),
        bound,
        pass: max_gradient <= bound,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaugeReport {
    pub dt: f64,
    pub amplitudes: Vec<f64>,
    /// `ΔS` at each amplitude.
    pub values: Vec<f64>,
    pub fitted_a: f64,
    pub fitted_b: f64,
    /// Linear term of `ΔS` from the pointwise first variation
    /// `δp·(q̇ - v) + π² δe/(2e²) + π_e (d(δe)/dt - δμ_e)` per unit amplitude.
    pub first_variation: f64,
    /// `max |α|` over the two endpoints; nonzero means a boundary term may appear.
    pub endpoint_alpha: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Least-squares fit of `y = A x + B x²`.
pub fn fit_linear_quadratic(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (mut s2, mut s3, mut s4, mut sy1, mut sy2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        s2 += a * a;
        s3 += a * a * a;
        s4 += a * a * a * a;
        sy1 += a * b;
        sy2 += a * a * b;
    }
    let det = s2 * s4 - s3 * s3;
    ((sy1 * s4 - sy2 * s3) / det, (s2 * sy2 - s3 * sy1) / det)
}

pub fn gauge_invariance_check(
    spec: &SystemSpec,
    path: &PhasePath,
    alpha_profile: &[f64],
    alpha_amplitude: f64,
) -> Result<GaugeReport> {
    let base = first_order_integrands(spec, path)?;
    let amplitudes: Vec<f64> = [1.0, 0.5, 0.25].iter().map(|s| s * alpha_amplitude).collect();
    let mut values = Vec::with_capacity(3);
    for &a in &amplitudes {
        let alpha: Vec<f64> = alpha_profile.iter().map(|x| a * x).collect();
        let moved = gauge_transform(path, &alpha)?;
        let shifted = first_order_integrands(spec, &moved)?;
        let diff: Vec<f64> = shifted.iter().zip(&base).map(|(x, y)| x - y).collect();
        values.push(path.grid.integrate(&diff));
    }
    let (fitted_a, fitted_b) = if alpha_amplitude == 0.0 { (0.0, 0.0) } else { fit_linear_quadratic(&amplitudes, &values) };

    let var = gauge_variation(path, alpha_profile)?;
    let e_var_dot = crate::path::derivative(&var.delta_e, path.grid.dt());
    let linear: Vec<f64> = (0..path.len())
        .map(|k| {
            let z = &path.points[k];
            let q_dot = path.q_dot(k);
            let slip: Vec<f64> = q_dot.iter().zip(&z.v).map(|(a, b)| a - b).collect();
            dot(&var.delta_p[k], &slip)
                + dot(&z.pi, &z.pi) * var.delta_e[k] / (2.0 * z.e * z.e)
                + z.pi_e * (e_var_dot[k] - var.delta_mu_e[k])
        })
        .collect();

    let dt = path.grid.dt();
    let bound = GAUGE_CONSTANT * dt * dt;
    let endpoint_alpha = alpha_profile[0].abs().max(alpha_profile[alpha_profile.len() - 1].abs());
    Ok(GaugeReport {
        dt,
        amplitudes,
        values,
        fitted_a,
        fitted_b,
        first_variation: path.grid.integrate(&linear),
        endpoint_alpha,
        bound,
        pass: fitted_a.abs() <= bound,
    })
}
