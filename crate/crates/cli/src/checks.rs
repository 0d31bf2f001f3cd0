//! Verification checks requested by a config, evaluated on a finished run.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use nonholonomic::action::{gauge_invariance_check, stationarity_check, surface_path};
use nonholonomic::engine::Diagnostics;
use nonholonomic::integrate::{integrate_hamiltonian, integrate_second_order, ExtendedTrajectory, Trajectory};
use nonholonomic::path::{bump_profile, PhasePath, TimeGrid, MIN_SAMPLES};
use nonholonomic::scenarios::{sleigh_circle, sleigh_friction_analytic, OscillatorSign};
use nonholonomic::{ExtendedPhasePoint, PhasePoint};

use crate::config::{CheckConfig, MuSpec, Reference, Resolved};
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub record: &'static str,
    pub index: usize,
    pub kind: &'static str,
    pub pass: bool,
    /// Non-gating checks are reported but never fail the run.
    pub gating: bool,
    pub value: f64,
    pub tolerance: f64,
    pub details: Value,
}

/// The samples of either kind of run.
#[derive(Clone, Debug)]
pub struct RunView {
    pub times: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub diagnostics: Vec<Diagnostics>,
    pub phase: Option<(Vec<PhasePoint>, Vec<f64>)>,
}

impl From<&Trajectory> for RunView {
    fn from(t: &Trajectory) -> Self {
        RunView { times: t.times.clone(), q: t.q.clone(), v: t.v.clone(), diagnostics: t.diagnostics.clone(), phase: None }
    }
}

impl From<&ExtendedTrajectory> for RunView {
    fn from(t: &ExtendedTrajectory) -> Self {
        RunView {
            times: t.times.clone(),
            q: t.points.iter().map(|z| z.q.clone()).collect(),
            v: t.points.iter().map(|z| z.v.clone()).collect(),
            diagnostics: t.diagnostics.clone(),
            phase: Some((t.points.clone(), t.mu_e.clone())),
        }
    }
}

fn report(index: usize, check: &CheckConfig, pass: bool, value: f64, tolerance: f64, details: Value) -> CheckReport {
    CheckReport { record: "check", index, kind: check.kind(), pass, gating: true, value, tolerance, details }
}

fn sup_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).flat_map(|(x, y)| x.iter().zip(y).map(|(u, w)| (u - w).abs())).fold(0.0, f64::max)
}

/// `max`, but NaN-propagating so that a broken sample fails the check.
fn nan_max(acc: f64, x: f64) -> f64 {
    if acc.is_nan() || x.is_nan() {
        f64::NAN
    } else {
        acc.max(x)
    }
}

pub fn run_checks(resolved: &Resolved, run: &RunView) -> Result<Vec<CheckReport>, CliError> {
    resolved.checks.iter().enumerate().map(|(i, check)| run_check(i, check, resolved, run)).collect()
}

fn run_check(index: usize, check: &CheckConfig, resolved: &Resolved, run: &RunView) -> Result<CheckReport, CliError> {
    match *check {
        CheckConfig::Drift { tolerance } => {
            let drift = run.diagnostics.iter().flat_map(|d| &d.constraint_values).fold(0.0, |m, x| nan_max(m, x.abs()));
            Ok(report(index, check, drift <= tolerance, drift, tolerance, json!({ "samples": run.times.len() })))
        }
        CheckConfig::AnalyticCompare { tolerance } => analytic_compare(index, check, tolerance, resolved, run),
        CheckConfig::HamiltonianEquivalence { tolerance, ref e0, ref mu_e } => {
            equivalence(index, check, tolerance, e0, mu_e, resolved, run)
        }
        CheckConfig::ActionStationarity { tolerance, perturbation } => {
            let path = phase_path(resolved, run)?;
            let fine = stationarity_check(&resolved.spec, &path, perturbation)?;
            let coarse = subsample(&path)?.map(|p| stationarity_check(&resolved.spec, &p, perturbation)).transpose()?;
            let order = coarse.as_ref().map(|c| (c.max_gradient / fine.max_gradient).log2());
            let tol = tolerance.unwrap_or(fine.bound);
            Ok(report(
                index,
                check,
                fine.max_gradient <= tol,
                fine.max_gradient,
                tol,
                json!({ "fine": fine, "coarse": coarse, "observed_order": order }),
            ))
        }
        CheckConfig::GaugeInvariance { tolerance, amplitude, offshell } => {
            let on_shell = phase_path(resolved, run)?;
            let off_shell = push_off_shell(&on_shell, offshell);
            let (t0, t1) = (on_shell.grid.t0(), on_shell.grid.t_end());
            let alpha = bump_profile(&on_shell.grid, t0 + 0.1 * (t1 - t0), t1 - 0.1 * (t1 - t0));
            let off = gauge_invariance_check(&resolved.spec, &off_shell, &alpha, amplitude)?;
            let on = gauge_invariance_check(&resolved.spec, &on_shell, &alpha, amplitude)?;
            let tol = tolerance.unwrap_or(off.bound);
            let on_shell_delta = on.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            Ok(report(
                index,
                check,
                off.fitted_a.abs() <= tol,
                off.fitted_a,
                tol,
                json!({ "fitted_first_order": off.fitted_a, "off_shell": off, "on_shell_max_delta": on_shell_delta }),
            ))
        }
    }
}

fn analytic_compare(
    index: usize,
    check: &CheckConfig,
    tolerance: f64,
    resolved: &Resolved,
    run: &RunView,
) -> Result<CheckReport, CliError> {
    let reference = resolved.reference.expect("validated at resolution");
    Ok(match reference {
        Reference::Circle(p) => {
            let dev = run
                .times
                .iter()
                .zip(&run.q)
                .map(|(&t, q)| {
                    let c = sleigh_circle(&p, t);
                    (0..3).map(|i| (q[i] - c[i]).abs()).fold(0.0, f64::max)
                })
                .fold(0.0, nan_max);
            report(index, check, dev <= tolerance, dev, tolerance, json!({ "reference": "circle", "radius": p.v0 / p.omega }))
        }
        Reference::FrictionPrinted(p) => {
            let (gap, note) = match sleigh_friction_analytic(&p) {
                Ok(sol) => {
                    let gap = run
                        .times
                        .iter()
                        .zip(&run.q)
                        .map(|(&t, q)| {
                            let y = sol.eval(t);
                            (q[0] - y[0]).abs().max((q[1] - y[1]).abs())
                        })
                        .fold(0.0, nan_max);
                    (gap, json!({ "solution": sol }))
                }
                Err(e) => (f64::NAN, json!({ "unavailable": e.to_string() })),
            };
            let circle = run
                .times
                .iter()
                .zip(&run.q)
                .map(|(&t, q)| {
                    let c = sleigh_circle(&p, t);
                    (q[0] - c[0]).abs().max((q[1] - c[1]).abs())
                })
                .fold(0.0, nan_max);
            CheckReport {
                gating: false,
                ..report(
                    index,
                    check,
                    gap <= tolerance,
                    gap,
                    tolerance,
                    json!({ "reference": "strong-friction closed form (soft)", "closed_form": note, "circle_distance": circle }),
                )
            }
        }
        Reference::Oscillator { omega, k, sign } => {
            let (x0, v0) = (resolved.q0[0], resolved.v0[0]);
            let dev = run
                .times
                .iter()
                .zip(&run.q)
                .map(|(&t, q)| (q[0] - oscillator(omega, k, sign, x0, v0, t)).abs())
                .fold(0.0, nan_max);
            report(index, check, dev <= tolerance, dev, tolerance, json!({ "reference": "linear oscillator" }))
        }
    })
}

/// Closed-form solution of `ẍ + k² ẋ - s ω² x = 0`.
pub fn oscillator(omega: f64, k: f64, sign: OscillatorSign, x0: f64, v0: f64, t: f64) -> f64 {
    let beta = k * k;
    let gamma = -sign.value() * omega * omega;
    let lambda = -0.5 * beta;
    // r² = disc / 4; C = cosh(rt), S = sinh(rt)/r, continued through r = 0
    let r2 = 0.25 * (beta * beta - 4.0 * gamma);
    let (c, s) = if (r2 * t * t).abs() < 1e-8 {
        let z = r2 * t * t;
        (1.0 + z / 2.0 + z * z / 24.0, t * (1.0 + z / 6.0 + z * z / 120.0))
    } else if r2 > 0.0 {
        let r = r2.sqrt();
        ((r * t).cosh(), (r * t).sinh() / r)
    } else {
        let w = (-r2).sqrt();
        ((w * t).cos(), (w * t).sin() / w)
    };
    (lambda * t).exp() * (x0 * c + (v0 - lambda * x0) * s)
}

fn equivalence(
    index: usize,
    check: &CheckConfig,
    tolerance: f64,
    extra_e0: &[f64],
    extra_mu: &[MuSpec],
    resolved: &Resolved,
    run: &RunView,
) -> Result<CheckReport, CliError> {
    let lagrangian = match run.phase {
        None => (run.q.clone(), run.v.clone(), run.times.len()),
        Some(_) => {
            let t = integrate_second_order(&resolved.spec, &resolved.q0, &resolved.v0, &resolved.integrator)?;
            let len = t.len();
            (t.q, t.v, len)
        }
    };
    let mut cases = vec![(resolved.e0, resolved.mu_e.clone(), resolved.mu_e.to_string())];
    cases.extend(extra_e0.iter().map(|&e| (e, resolved.mu_e.clone(), resolved.mu_e.to_string())));
    for m in extra_mu {
        let f = m.to_function()?;
        let label = f.to_string();
        cases.push((resolved.e0, f, label));
    }
    // independent runs fan out; collect keeps the case order
    let outcomes: Vec<_> = cases
        .par_iter()
        .map(|(e0, mu, _)| {
            let z0 = ExtendedPhasePoint::on_surface(resolved.q0.clone(), resolved.v0.clone(), *e0);
            integrate_hamiltonian(&resolved.spec, &z0, mu, &resolved.integrator)
        })
        .collect();
    let mut worst = 0.0_f64;
    let mut surface = 0.0_f64;
    let mut rows = Vec::new();
    for ((e0, _, label), outcome) in cases.iter().zip(outcomes) {
        let ext = outcome?;
        let q: Vec<Vec<f64>> = ext.points.iter().map(|z| z.q.clone()).collect();
        let v: Vec<Vec<f64>> = ext.points.iter().map(|z| z.v.clone()).collect();
        let gap =
            if q.len() == lagrangian.2 { sup_diff(&q, &lagrangian.0).max(sup_diff(&v, &lagrangian.1)) } else { f64::INFINITY };
        worst = nan_max(worst, gap);
        surface = surface.max(ext.max_surface_residual());
        rows.push(json!({ "e0": e0, "mu_e": label, "gap": gap, "surface_residual": ext.max_surface_residual() }));
    }
    Ok(report(index, check, worst <= tolerance, worst, tolerance, json!({ "cases": rows, "max_surface_residual": surface })))
}

/// The run as a phase path on its longest uniformly spaced prefix.
fn phase_path(resolved: &Resolved, run: &RunView) -> Result<PhasePath, CliError> {
    let mut len = run.times.len();
    let grid = loop {
        if len < MIN_SAMPLES {
            return Err(CliError::Runtime(nonholonomic::Error::InvalidParameter(
                "run too short or not uniformly sampled for an action check".into(),
            )));
        }
        match TimeGrid::from_times(&run.times[..len]) {
            Ok(g) => break g,
            Err(_) if len == run.times.len() => len -= 1,
            Err(e) => return Err(e.into()),
        }
    };
    match &run.phase {
        Some((points, mu)) => Ok(PhasePath::new(grid, points[..len].to_vec(), mu[..len].to_vec())?),
        None => {
            let mu = run.times[..len].iter().map(|&t| resolved.mu_e.eval(t)).collect::<Result<Vec<_>, _>>()?;
            let e = einbein(resolved, &run.times[..len])?;
            Ok(surface_path(grid, &run.q[..len], &run.v[..len], &e, &mu)?)
        }
    }
}

/// On shell `ė = μ_e`, so `e(t) = e0 + ∫ μ_e`, integrated per step with
/// three-point Gauss-Legendre.
fn einbein(resolved: &Resolved, times: &[f64]) -> Result<Vec<f64>, CliError> {
    const NODES: [(f64, f64); 3] = [(-0.7745966692414834, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.7745966692414834, 5.0 / 9.0)];
    let mut e = Vec::with_capacity(times.len());
    let mut acc = resolved.e0;
    e.push(acc);
    for w in times.windows(2) {
        let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
        for (x, weight) in NODES {
            acc += half * weight * resolved.mu_e.eval(mid + half * x)?;
        }
        e.push(acc);
    }
    Ok(e)
}

/// Every other sample, or `None` when too few remain.
fn subsample(path: &PhasePath) -> Result<Option<PhasePath>, CliError> {
    let keep: Vec<usize> = (0..path.len()).step_by(2).collect();
    if keep.len() < MIN_SAMPLES {
        return Ok(None);
    }
    let grid = TimeGrid::new(path.grid.t0(), 2.0 * path.grid.dt(), keep.len())?;
    let points = keep.iter().map(|&k| path.points[k].clone()).collect();
    let mu = keep.iter().map(|&k| path.mu_e[k]).collect();
    Ok(Some(PhasePath::new(grid, points, mu)?))
}

/// Smooth momenta of size `s` added on top of the path.
fn push_off_shell(path: &PhasePath, s: f64) -> PhasePath {
    let mut out = path.clone();
    for (k, z) in out.points.iter_mut().enumerate() {
        let t = path.grid.time(k);
        for (i, (p, pi)) in z.p.iter_mut().zip(z.pi.iter_mut()).enumerate() {
            let w = (i + 1) as f64;
            *p += s * (w * t).sin();
            *pi += s * (w * t).cos();
        }
        z.pi_e += s;
        z.e *= 1.0 + 0.5 * s * t.sin();
    }
    out
}
