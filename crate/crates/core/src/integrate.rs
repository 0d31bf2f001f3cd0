//! Time integration of the Lagrange-d'Alembert flow and of the extended
//! Hamiltonian flow.
//!
//! Fixed-step RK4 is the reference method; RKF45 (Fehlberg 4(5) with
//! error control on the fourth-order solution) handles stiff friction
//! runs. Events are located by bisection on the step length when a guard
//! function changes sign; constraint drift is checked after every step.

use serde::{Deserialize, Serialize};

use crate::engine::{Diagnostics, SystemSpec};
use crate::error::{Error, Result};
use crate::expr::{EvalPoint, Expr};
use crate::hamiltonian::{constraint_surface_residual, hamiltonian_vector_field, ExtendedPhasePoint};

/// Largest `|D_α(q0, v0)|` accepted as initial data.
pub const INITIAL_CONSTRAINT_TOLERANCE: f64 = 1e-10;
/// Width in time to which events are bisected.
pub const EVENT_TIME_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_DRIFT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    Rk4 { dt: f64 },
    Rkf45 { atol: f64, rtol: f64, dt_min: f64, dt_max: f64 },
}

/// Halts the run when `expr(q, v, t)` changes sign.
#[derive(Clone, Debug, PartialEq)]
pub struct Guard {
    pub name: String,
    pub expr: Expr,
}

impl Guard {
    pub fn parse(name: &str, source: &str, n: usize) -> Result<Self> {
        Ok(Guard { name: name.to_string(), expr: Expr::parse(source, n)? })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    pub t_end: f64,
    pub drift_tolerance: f64,
    /// Newton-project `v` back onto `D = 0` after each step. A stabilization
    /// extension, off by default.
    pub projection: bool,
    pub guards: Vec<Guard>,
}

impl IntegratorConfig {
    pub fn rk4(dt: f64, t_end: f64) -> Self {
        IntegratorConfig {
            method: Method::Rk4 { dt },
            t_end,
            drift_tolerance: DEFAULT_DRIFT_TOLERANCE,
            projection: false,
            guards: Vec::new(),
        }
    }

    pub fn rkf45(atol: f64, rtol: f64, dt_min: f64, dt_max: f64, t_end: f64) -> Self {
        IntegratorConfig { method: Method::Rkf45 { atol, rtol, dt_min, dt_max }, ..Self::rk4(dt_max, t_end) }
    }

    pub fn with_guard(mut self, guard: Guard) -> Self {
        self.guards.push(guard);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64, what: &str| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{what} must be positive, got {x}")))
            }
        };
        positive(self.t_end, "t_end")?;
        positive(self.drift_tolerance, "drift_tolerance")?;
        match self.method {
            Method::Rk4 { dt } => positive(dt, "dt"),
            Method::Rkf45 { atol, rtol, dt_min, dt_max } => {
                positive(atol, "atol")?;
                positive(rtol, "rtol")?;
                positive(dt_min, "dt_min")?;
                positive(dt_max, "dt_max")?;
                if dt_min > dt_max {
                    return Err(Error::InvalidParameter("dt_min exceeds dt_max".into()));
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Termination {
    Completed,
    Event { name: String, t: f64 },
    Error { kind: String, t: f64 },
}

/// Solution of the second-order Cauchy problem with per-sample diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub diagnostics: Vec<Diagnostics>,
    pub termination: Termination,
    pub projection: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `max |D_α|` over all samples.
    pub fn max_drift(&self) -> f64 {
        max_drift(&self.diagnostics)
    }
}

/// Solution of the extended Hamiltonian system.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedTrajectory {
    pub times: Vec<f64>,
    pub points: Vec<ExtendedPhasePoint<f64>>,
    pub mu_e: Vec<f64>,
    pub diagnostics: Vec<Diagnostics>,
    pub surface_residual: Vec<f64>,
    pub termination: Termination,
    pub projection: bool,
}

impl ExtendedTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_drift(&self) -> f64 {
        max_drift(&self.diagnostics)
    }

    pub fn max_surface_residual(&self) -> f64 {
        self.surface_residual.iter().copied().fold(0.0, f64::max)
    }
}

fn max_drift(diagnostics: &[Diagnostics]) -> f64 {
    diagnostics.iter().flat_map(|d| d.constraint_values.iter()).fold(0.0, |m: f64, x| m.max(x.abs()))
}

/// A scalar function of time, `μ_e(t)` for the Hamiltonian flow.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeFunction(Expr);

impl TimeFunction {
    /// Parse an expression whose only variable is `t`.
    pub fn parse(source: &str) -> Result<Self> {
        Ok(TimeFunction(Expr::parse(source, 0)?))
    }

    pub fn constant(c: f64) -> Self {
        TimeFunction(Expr::constant(c))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        self.0.eval(&EvalPoint { q: Vec::new(), v: Vec::new(), t })
    }
}

impl std::fmt::Display for TimeFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

trait Flow {
    fn rhs(&self, t: f64, y: &[f64]) -> Result<Vec<f64>>;
    fn guards(&self, t: f64, y: &[f64]) -> Result<Vec<f64>>;
    fn guard_name(&self, i: usize) -> String;
    fn post_step(&self, t: f64, y: &mut Vec<f64>) -> Result<()>;
    fn halt(&self, t: f64, y: &[f64]) -> Result<Option<String>>;
}

fn axpy(y: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

fn rk4_step<F: Flow>(flow: &F, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>> {
    let k1 = flow.rhs(t, y)?;
    let k2 = flow.rhs(t + 0.5 * h, &axpy(y, 0.5 * h, &k1))?;
    let k3 = flow.rhs(t + 0.5 * h, &axpy(y, 0.5 * h, &k2))?;
    let k4 = flow.rhs(t + h, &axpy(y, h, &k3))?;
    Ok((0..y.len()).map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

// Fehlberg 4(5) tableau.
const RKF_C: [f64; 6] = [0.0, 0.25, 3.0 / 8.0, 12.0 / 13.0, 1.0, 0.5];
const RKF_A: [[f64; 5]; 6] = [
    [0.0; 5],
    [0.25, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 32.0, 9.0 / 32.0, 0.0, 0.0, 0.0],
    [1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0, 0.0, 0.0],
    [439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0, 0.0],
    [-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
];
const RKF_B4: [f64; 6] = [25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -0.2, 0.0];
const RKF_B5: [f64; 6] = [16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0];

/// Fourth-order solution and the embedded error estimate.
fn rkf45_step<F: Flow>(flow: &F, t: f64, y: &[f64], h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(6);
    for s in 0..6 {
        let mut ys = y.to_vec();
        for (j, kj) in k.iter().enumerate() {
            for (yi, kji) in ys.iter_mut().zip(kj) {
                *yi += h * RKF_A[s][j] * kji;
            }
        }
        k.push(flow.rhs(t + RKF_C[s] * h, &ys)?);
    }
    let combine =
        |b: &[f64; 6]| -> Vec<f64> { (0..y.len()).map(|i| y[i] + h * (0..6).map(|s| b[s] * k[s][i]).sum::<f64>()).collect() };
    let y4 = combine(&RKF_B4);
    let y5 = combine(&RKF_B5);
    let err = y4.iter().zip(&y5).map(|(a, b)| b - a).collect();
    Ok((y4, err))
}

struct Run {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    termination: Termination,
}

fn error_kind(e: &Error) -> String {
    match e {
        Error::Regularity { .. } => "regularity".into(),
        Error::Domain(_) => "domain".into(),
        Error::NoConvergence { .. } => "projection".into(),
        Error::ZeroEinbein => "zero-einbein".into(),
        other => format!("{other}"),
    }
}

fn crossed(before: f64, after: f64) -> bool {
    (before < 0.0 && after >= 0.0) || (before > 0.0 && after <= 0.0)
}

fn drive<F: Flow>(flow: &F, y0: Vec<f64>, cfg: &IntegratorConfig) -> Result<Run> {
    cfg.validate()?;
    let mut t = 0.0;
    let mut y = y0;
    let mut g_prev = flow.guards(t, &y)?;
    let mut run = Run { times: vec![t], states: vec![y.clone()], termination: Termination::Completed };
    let mut step_index: u64 = 0;
    let mut h_adaptive = match cfg.method {
        Method::Rk4 { dt } => dt,
        Method::Rkf45 { dt_min, dt_max, .. } => (0.01 * cfg.t_end).clamp(dt_min, dt_max),
    };

    let take_step = |t: f64, y: &[f64], h: f64| -> Result<Vec<f64>> {
        let mut out = match cfg.method {
            Method::Rk4 { .. } => rk4_step(flow, t, y, h)?,
            Method::Rkf45 { .. } => rkf45_step(flow, t, y, h)?.0,
        };
        flow.post_step(t + h, &mut out)?;
        Ok(out)
    };

    while t < cfg.t_end {
        // advance one accepted step
        let stepped = match cfg.method {
            Method::Rk4 { dt } => {
                let t_next = ((step_index + 1) as f64 * dt).min(cfg.t_end);
                let t_next = if cfg.t_end - t_next < 1e-12 * dt { cfg.t_end } else { t_next };
                take_step(t, &y, t_next - t).map(|y_new| (t_next, y_new))
            }
            Method::Rkf45 { atol, rtol, dt_min, dt_max } => {
                adaptive_step(flow, t, &y, &mut h_adaptive, cfg.t_end, atol, rtol, dt_min, dt_max)
            }
        };
        let (t_next, y_new) = match stepped {
            Ok(s) => s,
            Err(e) => {
                run.termination = Termination::Error { kind: error_kind(&e), t };
                return Ok(run);
            }
        };
        let g_new = match flow.guards(t_next, &y_new) {
            Ok(g) => g,
            Err(e) => {
                run.termination = Termination::Error { kind: error_kind(&e), t: t_next };
                return Ok(run);
            }
        };
        if let Some(i) = (0..g_new.len()).find(|&i| crossed(g_prev[i], g_new[i])) {
            // bisect on the step length, keeping the last state before the crossing
            let (mut lo, mut hi) = (0.0, t_next - t);
            let mut y_lo = y.clone();
            while hi - lo > EVENT_TIME_TOLERANCE {
                let mid = 0.5 * (lo + hi);
                match take_step(t, &y, mid).and_then(|ym| Ok((flow.guards(t + mid, &ym)?, ym))) {
                    Ok((g, ym)) if !crossed(g_prev[i], g[i]) => {
                        lo = mid;
                        y_lo = ym;
                    }
                    _ => hi = mid,
                }
            }
            if lo > 0.0 {
                run.times.push(t + lo);
                run.states.push(y_lo);
            }
            run.termination = Termination::Event { name: flow.guard_name(i), t: t + lo };
            return Ok(run);
        }
        t = t_next;
        y = y_new;
        g_prev = g_new;
        step_index += 1;
        run.times.push(t);
        run.states.push(y.clone());
        match flow.halt(t, &y) {
            Ok(Some(name)) => {
                run.termination = Termination::Event { name, t };
                return Ok(run);
            }
            Ok(None) => {}
            Err(e) => {
                run.termination = Termination::Error { kind: error_kind(&e), t };
                return Ok(run);
            }
        }
    }
    Ok(run)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_step<F: Flow>(
    flow: &F,
    t: f64,
    y: &[f64],
    h: &mut f64,
    t_end: f64,
    atol: f64,
    rtol: f64,
    dt_min: f64,
    dt_max: f64,
) -> Result<(f64, Vec<f64>)> {
    loop {
        let step = h.min(t_end - t);
        let at_floor = *h <= dt_min;
        match rkf45_step(flow, t, y, step) {
            Ok((mut y_new, err)) => {
                let norm = y
                    .iter()
                    .zip(&y_new)
                    .zip(&err)
                    .map(|((a, b), e)| e.abs() / (atol + rtol * a.abs().max(b.abs())))
                    .fold(0.0, f64::max);
                let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
                if norm <= 1.0 || at_floor {
                    if norm > 1.0 {
                        return Err(Error::InvalidParameter(format!(
                            "step size underflow at t = {t}: error norm {norm:e} with dt_min = {dt_min:e}"
                        )));
                    }
                    *h = (*h * factor).clamp(dt_min, dt_max);
                    let t_next = if t_end - (t + step) < 1e-14 * t_end { t_end } else { t + step };
                    flow.post_step(t_next, &mut y_new)?;
                    return Ok((t_next, y_new));
                }
                *h = (*h * factor).max(dt_min);
            }
            Err(e) if at_floor => return Err(e),
            Err(_) => *h = (*h * 0.5).max(dt_min),
        }
    }
}

fn regularity_margin(spec: &SystemSpec, pt: &EvalPoint<f64>) -> Result<Option<f64>> {
    Ok(spec.gram_min_eigenvalue(pt)?.map(|eig| eig - 10.0 * spec.constraints().regularity_eps()))
}

fn drift_halt(spec: &SystemSpec, cfg: &IntegratorConfig, pt: &EvalPoint<f64>) -> Result<Option<String>> {
    if cfg.projection || spec.constraints().is_empty() {
        return Ok(None);
    }
    let drift = spec.constraints().values(pt)?.iter().fold(0.0, |m: f64, d| m.max(d.abs()));
    Ok((drift > cfg.drift_tolerance).then(|| "drift".to_string()))
}

fn project_velocity(spec: &SystemSpec, cfg: &IntegratorConfig, q: &[f64], v: &mut [f64], t: f64) -> Result<()> {
    if cfg.projection && !spec.constraints().is_empty() {
        let projected = spec.project_initial_state(q, v, t)?;
        v.copy_from_slice(&projected);
    }
    Ok(())
}

struct SecondOrder<'a> {
    spec: &'a SystemSpec,
    cfg: &'a IntegratorConfig,
}

impl SecondOrder<'_> {
    fn point(&self, t: f64, y: &[f64]) -> EvalPoint<f64> {
        let n = self.spec.dim();
        EvalPoint { q: y[..n].to_vec(), v: y[n..].to_vec(), t }
    }
}

impl Flow for SecondOrder<'_> {
    fn rhs(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let pt = self.point(t, y);
        let a = self.spec.total_acceleration(&pt)?;
        Ok(pt.v.into_iter().chain(a).collect())
    }

    fn guards(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let pt = self.point(t, y);
        let mut g = Vec::new();
        if let Some(m) = regularity_margin(self.spec, &pt)? {
            g.push(m);
        }
        for guard in &self.cfg.guards {
            g.push(guard.expr.eval(&pt)?);
        }
        Ok(g)
    }

    fn guard_name(&self, i: usize) -> String {
        let offset = usize::from(!self.spec.constraints().is_empty());
        if i < offset {
            "regularity".into()
        } else {
            self.cfg.guards[i - offset].name.clone()
        }
    }

    fn post_step(&self, t: f64, y: &mut Vec<f64>) -> Result<()> {
        let n = self.spec.dim();
        let (q, v) = y.split_at_mut(n);
        project_velocity(self.spec, self.cfg, q, v, t)
    }

    fn halt(&self, t: f64, y: &[f64]) -> Result<Option<String>> {
        drift_halt(self.spec, self.cfg, &self.point(t, y))
    }
}

/// Diagnostics that never fail: multipliers become NaN where the Gram
/// system cannot be solved.
fn diagnostics_at(spec: &SystemSpec, pt: &EvalPoint<f64>) -> Diagnostics {
    spec.diagnostics(pt).unwrap_or_else(|_| {
        let values = spec.constraints().values(pt).unwrap_or_else(|_| vec![f64::NAN; spec.constraints().len()]);
        Diagnostics {
            multipliers: vec![f64::NAN; values.len()],
            constraint_values: values,
            gram_min_eigenvalue: spec.gram_min_eigenvalue(pt).ok().flatten(),
        }
    })
}

fn check_initial(spec: &SystemSpec, pt: &EvalPoint<f64>) -> Result<()> {
    if pt.dim() != spec.dim() {
        return Err(Error::Dimension(format!(
            "initial state of dimension {} for a system of dimension {}",
            pt.dim(),
            spec.dim()
        )));
    }
    for (index, value) in spec.constraints().values(pt)?.into_iter().enumerate() {
        if value.abs() > INITIAL_CONSTRAINT_TOLERANCE {
            return Err(Error::InitialConstraintViolation { index, value, tolerance: INITIAL_CONSTRAINT_TOLERANCE });
        }
    }
    Ok(())
}

/// Integrate `q̈ = total_acceleration(q, q̇, t)` from `(q0, v0)` at `t = 0`.
pub fn integrate_second_order(spec: &SystemSpec, q0: &[f64], v0: &[f64], cfg: &IntegratorConfig) -> Result<Trajectory> {
    let pt0 = EvalPoint::from_slices(q0, v0, 0.0)?;
    check_initial(spec, &pt0)?;
    let flow = SecondOrder { spec, cfg };
    let run = drive(&flow, q0.iter().chain(v0).copied().collect(), cfg)?;
    let n = spec.dim();
    let mut out = Trajectory {
        times: run.times,
        q: Vec::with_capacity(run.states.len()),
        v: Vec::with_capacity(run.states.len()),
        diagnostics: Vec::with_capacity(run.states.len()),
        termination: run.termination,
        projection: cfg.projection,
    };
    for (t, y) in out.times.iter().zip(run.states) {
        let pt = EvalPoint { q: y[..n].to_vec(), v: y[n..].to_vec(), t: *t };
        out.diagnostics.push(diagnostics_at(spec, &pt));
        out.q.push(pt.q);
        out.v.push(pt.v);
    }
    Ok(out)
}

struct Extended<'a> {
    spec: &'a SystemSpec,
    cfg: &'a IntegratorConfig,
    mu_e: &'a TimeFunction,
}

impl Extended<'_> {
    fn point(&self, t: f64, y: &[f64]) -> EvalPoint<f64> {
        let n = self.spec.dim();
        EvalPoint { q: y[..n].to_vec(), v: y[2 * n..3 * n].to_vec(), t }
    }
}

impl Flow for Extended<'_> {
    fn rhs(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let z = ExtendedPhasePoint::from_slice(y)?;
        Ok(hamiltonian_vector_field(self.spec, &z, self.mu_e.eval(t)?, t)?.to_vec())
    }

    fn guards(&self, t: f64, y: &[f64]) -> Result<Vec<f64>> {
        let pt = self.point(t, y);
        let mut g = vec![y[4 * self.spec.dim()]];
        if let Some(m) = regularity_margin(self.spec, &pt)? {
            g.push(m);
        }
        for guard in &self.cfg.guards {
            g.push(guard.expr.eval(&pt)?);
        }
        Ok(g)
    }

    fn guard_name(&self, i: usize) -> String {
        let offset = 1 + usize::from(!self.spec.constraints().is_empty());
        match i {
            0 => "e-crossing".into(),
            i if i < offset => "regularity".into(),
            i => self.cfg.guards[i - offset].name.clone(),
        }
    }

    fn post_step(&self, t: f64, y: &mut Vec<f64>) -> Result<()> {
        let n = self.spec.dim();
        let (head, tail) = y.split_at_mut(2 * n);
        project_velocity(self.spec, self.cfg, &head[..n], &mut tail[..n], t)
    }

    fn halt(&self, t: f64, y: &[f64]) -> Result<Option<String>> {
        drift_halt(self.spec, self.cfg, &self.point(t, y))
    }
}

/// Integrate the `4n + 2`-dimensional Hamiltonian flow from `z0`.
pub fn integrate_hamiltonian(
    spec: &SystemSpec,
    z0: &ExtendedPhasePoint<f64>,
    mu_e: &TimeFunction,
    cfg: &IntegratorConfig,
) -> Result<ExtendedTrajectory> {
    if z0.e == 0.0 {
        return Err(Error::ZeroEinbein);
    }
    if !z0.is_consistent() {
        return Err(Error::Dimension("inconsistent phase point".into()));
    }
    let pt0 = EvalPoint::from_slices(&z0.q, &z0.v, 0.0)?;
    check_initial(spec, &pt0)?;
    mu_e.eval(0.0)?;
    let flow = Extended { spec, cfg, mu_e };
    let run = drive(&flow, z0.to_vec(), cfg)?;
    let mut out = ExtendedTrajectory {
        times: run.times,
        points: Vec::with_capacity(run.states.len()),
        mu_e: Vec::with_capacity(run.states.len()),
        diagnostics: Vec::with_capacity(run.states.len()),
        surface_residual: Vec::with_capacity(run.states.len()),
        termination: run.termination,
        projection: cfg.projection,
    };
    for (t, y) in out.times.iter().zip(run.states) {
        let z = ExtendedPhasePoint::from_slice(&y)?;
        out.diagnostics.push(diagnostics_at(spec, &flow.point(*t, &y)));
        out.surface_residual.push(constraint_surface_residual(&z));
        out.mu_e.push(mu_e.eval(*t).unwrap_or(f64::NAN));
        out.points.push(z);
    }
    Ok(out)
}
