//! Chaplygin sleigh models and the damped oscillator.
//!
//! Configuration is `q = (y¹, y², φ)` with masses `(m, m, I)`. The two
//! Lagrange-d'Alembert variants are plain [`SystemSpec`]s whose dynamics
//! come from the generic multiplier solve; friction and the reduced
//! vakonomic equation are explicit-force systems.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::engine::SystemSpec;
use crate::error::{Error, Result};
use crate::integrate::{Guard, Trajectory};

pub const SCENARIO_NAMES: [&str; 5] = ["friction", "lda_linear", "lda_nonlinear", "vakonomic_phi", "damped_oscillator"];

/// Fraction of `v0` below which `|ẏ¹|` stops the nonlinear sleigh.
pub const NONLINEAR_GUARD_FRACTION: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SleighParams {
    pub m: f64,
    #[serde(rename = "I")]
    pub inertia: f64,
    pub k: f64,
    pub v0: f64,
    pub omega: f64,
}

impl Default for SleighParams {
    fn default() -> Self {
        SleighParams { m: 1.0, inertia: 1.0, k: 10.0, v0: 1.0, omega: 1.0 }
    }
}

impl SleighParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0 && self.inertia > 0.0) {
            return Err(Error::InvalidParameter(format!("m = {} and I = {} must be positive", self.m, self.inertia)));
        }
        if !(self.k >= 0.0) {
            return Err(Error::InvalidParameter(format!("friction coefficient k = {} must be non-negative", self.k)));
        }
        if ![self.m, self.inertia, self.k, self.v0, self.omega].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidParameter("sleigh parameters must be finite".into()));
        }
        Ok(())
    }

    fn require_rotation(&self) -> Result<()> {
        if self.omega == 0.0 {
            return Err(Error::InvalidParameter("omega must be non-zero for the circle reference".into()));
        }
        Ok(())
    }

    /// `q(0) = 0`, `q̇(0) = (v0, 0, ω)`.
    pub fn initial_state(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0; 3], vec![self.v0, 0.0, self.omega])
    }

    /// One revolution, `2π/|ω|`.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega.abs()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum SleighVariant {
    Friction,
    LdaLinear,
    LdaNonlinear,
    VakonomicPhi { c: f64 },
}

impl SleighVariant {
    pub fn name(&self) -> &'static str {
        match self {
            SleighVariant::Friction => "friction",
            SleighVariant::LdaLinear => "lda_linear",
            SleighVariant::LdaNonlinear => "lda_nonlinear",
            SleighVariant::VakonomicPhi { .. } => "vakonomic_phi",
        }
    }

    /// Default time window: a full turn, except the nonlinear chart which
    /// ends before `ẏ¹` vanishes at `ωt = π/2`.
    pub fn default_t_end(&self, params: &SleighParams) -> f64 {
        match self {
            SleighVariant::LdaNonlinear => 0.4 * PI / params.omega.abs(),
            _ => params.period(),
        }
    }

    /// Event guards the variant needs.
    pub fn guards(&self, params: &SleighParams) -> Vec<Guard> {
        match self {
            SleighVariant::LdaNonlinear => {
                let threshold = NONLINEAR_GUARD_FRACTION * params.v0.abs();
                let guard = Guard::parse("v1-vanishing", &format!("abs(v1) - ({threshold:?})"), 3)
                    .expect("guard expression is well formed");
                vec![guard]
            }
            _ => Vec::new(),
        }
    }
}

fn num(x: f64) -> String {
    format!("({x:?})")
}

/// Body-frame velocity `(v¹, v²)`.
pub fn body_velocity(ydot: [f64; 2], phi: f64) -> [f64; 2] {
    let (s, c) = phi.sin_cos();
    [ydot[0] * c + ydot[1] * s, -ydot[0] * s + ydot[1] * c]
}

/// `(ÿ¹, ÿ², φ̈)` of the sleigh with lateral friction.
pub fn sleigh_friction_rhs(params: &SleighParams, ydot: [f64; 2], phi: f64) -> [f64; 3] {
    let lateral = body_velocity(ydot, phi)[1];
    let rate = params.k / params.m;
    [rate * lateral * phi.sin(), -rate * lateral * phi.cos(), 0.0]
}

/// The strong-friction closed form with the printed constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FrictionAnalyticSolution {
    pub d1: f64,
    pub d2: f64,
    pub y1_inf: f64,
    pub y2_inf: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub v0: f64,
    pub omega: f64,
}

impl FrictionAnalyticSolution {
    pub fn eval(&self, t: f64) -> [f64; 3] {
        let wt = self.omega * t;
        let pre = self.v0 / (self.omega * (self.d2 - self.d1));
        let (a, b) = (self.d2 * (-self.d1 * t).exp(), self.d1 * (-self.d2 * t).exp());
        [
            self.y1_inf + pre * (a * (wt + self.phi1).sin() - b * (wt + self.phi2).sin()),
            self.y2_inf - pre * (a * (wt + self.phi1).cos() - b * (wt + self.phi2).cos()),
            wt,
        ]
    }
}

pub fn sleigh_friction_analytic(params: &SleighParams) -> Result<FrictionAnalyticSolution> {
    params.validate()?;
    params.require_rotation()?;
    let limit = 2.0 * params.m * params.omega.abs();
    if params.k <= limit {
        return Err(Error::ComplexRoots { k: params.k, limit });
    }
    let root = (params.k * params.k - 4.0 * params.omega * params.omega * params.m * params.m).sqrt();
    let d1 = (params.k - root) / (2.0 * params.m);
    let d2 = (params.k + root) / (2.0 * params.m);
    let phase = |d: f64| {
        let s = -2.0 * d / (params.omega * params.omega + d * d);
        if s.abs() > 1.0 {
            Err(Error::Domain(format!("phase sine {s} outside [-1, 1]")))
        } else {
            Ok(s.asin())
        }
    };
    Ok(FrictionAnalyticSolution {
        d1,
        d2,
        y1_inf: 2.0 * params.v0 * params.m / (params.omega * params.k),
        y2_inf: params.v0 / params.omega,
        phi1: phase(d1)?,
        phi2: phase(d2)?,
        v0: params.v0,
        omega: params.omega,
    })
}

/// Uniform circular motion of radius `v0/ω`, wheel axis toward the center.
pub fn sleigh_circle(params: &SleighParams, t: f64) -> [f64; 3] {
    let r = params.v0 / params.omega;
    let wt = params.omega * t;
    [r * wt.sin(), r * (1.0 - wt.cos()), wt]
}

/// Sup-norm distance of `(y¹, y², φ)` from the circle over a trajectory.
pub fn circle_deviation(params: &SleighParams, traj: &Trajectory) -> f64 {
    traj.times
        .iter()
        .zip(&traj.q)
        .map(|(&t, q)| {
            let c = sleigh_circle(params, t);
            (0..3).map(|i| (q[i] - c[i]).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Center of curvature of the current motion, `y + (v¹/ω)·(−sinφ, cosφ)`.
///
/// Once the lateral slip has decayed this is where the sleigh is heading;
/// it is the final-position estimate for finite runs.
pub fn final_position_estimate(params: &SleighParams, q: &[f64], v: &[f64]) -> [f64; 2] {
    let forward = body_velocity([v[0], v[1]], q[2])[0];
    let r = forward / params.omega;
    [q[0] - r * q[2].sin(), q[1] + r * q[2].cos()]
}

/// `2 I m φ̈ = [c² − (m v0)²] sin 2φ + c m v0 cos 2φ`, solved for `φ̈`.
pub fn vakonomic_phi_rhs(params: &SleighParams, c: f64, phi: f64) -> f64 {
    let mv = params.m * params.v0;
    ((c * c - mv * mv) * (2.0 * phi).sin() + c * mv * (2.0 * phi).cos()) / (2.0 * params.inertia * params.m)
}

pub fn build_sleigh_spec(variant: SleighVariant, params: &SleighParams) -> Result<SystemSpec> {
    params.validate()?;
    let mass = vec![params.m, params.m, params.inertia];
    match variant {
        SleighVariant::LdaLinear => SystemSpec::with_force(mass, &["0", "0", "0"], &["v1*sin(q3) - v2*cos(q3)"]),
        SleighVariant::LdaNonlinear => SystemSpec::with_force(mass, &["0", "0", "0"], &["v2/v1 - tan(q3)"]),
        SleighVariant::Friction => {
            let k = num(params.k);
            let lateral = "((-v1)*sin(q3) + v2*cos(q3))";
            SystemSpec::with_force(mass, &[&format!("{k}*{lateral}*sin(q3)"), &format!("-{k}*{lateral}*cos(q3)"), "0"], &[])
        }
        SleighVariant::VakonomicPhi { c } => {
            if !c.is_finite() {
                return Err(Error::InvalidParameter(format!("vakonomic constant c = {c} must be finite")));
            }
            let mv = params.m * params.v0;
            let force = format!("({}*sin(2*q1) + {}*cos(2*q1))/{}", num(c * c - mv * mv), num(c * mv), num(2.0 * params.m));
            SystemSpec::with_force(vec![params.inertia], &[&force], &[])
        }
    }
}

/// Initial `(q0, v0)` for a variant; the vakonomic system is `φ` alone.
pub fn sleigh_initial_state(variant: SleighVariant, params: &SleighParams) -> (Vec<f64>, Vec<f64>) {
    match variant {
        SleighVariant::VakonomicPhi { .. } => (vec![0.0], vec![params.omega]),
        _ => params.initial_state(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OscillatorSign {
    /// `ẍ = −ω²x − k²ẋ`.
    #[default]
    Restoring,
    /// `ẍ = ω²x − k²ẋ`, the sign as printed.
    Printed,
}

impl OscillatorSign {
    pub fn value(self) -> f64 {
        match self {
            OscillatorSign::Restoring => -1.0,
            OscillatorSign::Printed => 1.0,
        }
    }
}

/// Unit-mass oscillator with force `s·ω²x − k²ẋ`.
pub fn damped_oscillator_spec(omega: f64, k: f64, sign: OscillatorSign) -> Result<SystemSpec> {
    if !(omega.is_finite() && k.is_finite()) {
        return Err(Error::InvalidParameter("oscillator parameters must be finite".into()));
    }
    let force = format!("{}*q1 - {}*v1", num(sign.value() * omega * omega), num(k * k));
    SystemSpec::with_force(vec![1.0], &[&force], &[])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::EvalPoint;
    use crate::integrate::{integrate_second_order, IntegratorConfig, Termination};

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn friction_rhs_examples() {
        let p = SleighParams { k: 2.0, ..Default::default() };
        assert_eq!(sleigh_friction_rhs(&p, [0.3, 0.0], 0.0), [0.0, 0.0, 0.0]);
        assert!(close(&sleigh_friction_rhs(&p, [0.0, 1.0], 0.0), &[0.0, -2.0, 0.0], 1e-15));
        assert!(close(&sleigh_friction_rhs(&p, [-1.0, 0.0], PI / 2.0), &[2.0, 0.0, 0.0], 1e-15));
    }

    #[test]
    fn friction_spec_matches_rhs() {
        let p = SleighParams { k: 3.5, ..Default::default() };
        let spec = build_sleigh_spec(SleighVariant::Friction, &p).unwrap();
        let (ydot, phi) = ([0.4, -1.3], 0.7);
        let pt = EvalPoint::from_slices(&[1.0, 2.0, phi], &[ydot[0], ydot[1], 0.2], 0.0).unwrap();
        assert!(close(&spec.total_acceleration(&pt).unwrap(), &sleigh_friction_rhs(&p, ydot, phi), 1e-14));
    }

    #[test]
    fn circle_examples() {
        let p = SleighParams { v0: 2.0, omega: 0.5, ..Default::default() };
        assert_eq!(sleigh_circle(&p, 0.0), [0.0, 0.0, 0.0]);
        assert!(close(&sleigh_circle(&p, PI / 0.5), &[0.0, 8.0, PI], 1e-12));
        assert!(close(&sleigh_circle(&p, PI), &[4.0, 4.0, PI / 2.0], 1e-12));
    }

    #[test]
    fn lda_accelerations_at_initial_data() {
        let p = SleighParams { v0: 1.5, omega: 0.8, ..Default::default() };
        let (q, v) = p.initial_state();
        let pt = EvalPoint::from_slices(&q, &v, 0.0).unwrap();
        for variant in [SleighVariant::LdaLinear, SleighVariant::LdaNonlinear] {
            let a = build_sleigh_spec(variant, &p).unwrap().total_acceleration(&pt).unwrap();
            assert!(close(&a, &[0.0, 1.5 * 0.8, 0.0], 1e-14), "{variant:?}: {a:?}");
        }
    }

    #[test]
    fn analytic_roots() {
        let p = SleighParams { k: 10.0, ..Default::default() };
        let sol = sleigh_friction_analytic(&p).unwrap();
        assert!((sol.d1 * sol.d2 - 1.0).abs() < 1e-12);
        assert!((sol.d1 + sol.d2 - 10.0).abs() < 1e-12);
        assert_eq!((sol.y1_inf, sol.y2_inf), (0.2, 1.0));
        assert!(matches!(
            sleigh_friction_analytic(&SleighParams { k: 2.0, ..Default::default() }),
            Err(Error::ComplexRoots { .. })
        ));
        let far = sol.eval(500.0);
        assert!((far[0] - 0.2).abs() < 1e-12 && (far[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vakonomic_rhs_examples() {
        let p = SleighParams { m: 2.0, inertia: 3.0, v0: 0.5, ..Default::default() };
        let mv = 1.0;
        assert!(vakonomic_phi_rhs(&p, mv, PI / 4.0).abs() < 1e-15);
        assert!((vakonomic_phi_rhs(&p, 0.0, PI / 4.0) + mv * mv / 12.0).abs() < 1e-15);
        assert!((vakonomic_phi_rhs(&p, 0.7, 0.0) - 0.7 * 0.5 / 6.0).abs() < 1e-15);

        let spec = build_sleigh_spec(SleighVariant::VakonomicPhi { c: 0.0 }, &p).unwrap();
        let pt = EvalPoint::from_slices(&[0.0], &[1.0], 0.0).unwrap();
        assert_eq!(spec.total_acceleration(&pt).unwrap()[0], 0.0);
        for phi in [0.3, 1.1, -2.0] {
            let spec = build_sleigh_spec(SleighVariant::VakonomicPhi { c: 0.7 }, &p).unwrap();
            let pt = EvalPoint::from_slices(&[phi], &[1.0], 0.0).unwrap();
            assert!((spec.total_acceleration(&pt).unwrap()[0] - vakonomic_phi_rhs(&p, 0.7, phi)).abs() < 1e-14);
        }
    }

    #[test]
    fn oscillator_signs() {
        let restoring = damped_oscillator_spec(2.0, 0.0, OscillatorSign::Restoring).unwrap();
        let traj = integrate_second_order(&restoring, &[1.0], &[0.0], &IntegratorConfig::rk4(1e-3, PI)).unwrap();
        assert!((traj.q.last().unwrap()[0] - 1.0).abs() < 1e-9);

        let printed = damped_oscillator_spec(1.0, 0.0, OscillatorSign::Printed).unwrap();
        let traj = integrate_second_order(&printed, &[1.0], &[1.0], &IntegratorConfig::rk4(1e-3, 1.0)).unwrap();
        assert!((traj.q.last().unwrap()[0] - 1f64.exp()).abs() < 1e-9);

        // envelope e^{-k² t/2}
        let damped = damped_oscillator_spec(3.0, 0.5, OscillatorSign::Restoring).unwrap();
        let traj = integrate_second_order(&damped, &[1.0], &[-0.125], &IntegratorConfig::rk4(1e-3, 4.0)).unwrap();
        let wd = (9.0f64 - 0.125 * 0.125).sqrt();
        for (t, q) in traj.times.iter().zip(&traj.q) {
            assert!((q[0] - (-0.125 * t).exp() * (wd * t).cos()).abs() < 1e-9);
        }
    }

    #[test]
    fn nonlinear_guard_fires_near_quarter_turn() {
        let p = SleighParams::default();
        let variant = SleighVariant::LdaNonlinear;
        let spec = build_sleigh_spec(variant, &p).unwrap();
        let (q0, v0) = p.initial_state();
        let mut cfg = IntegratorConfig::rk4(1e-3, PI);
        cfg.guards = variant.guards(&p);
        let traj = integrate_second_order(&spec, &q0, &v0, &cfg).unwrap();
        match traj.termination {
            Termination::Event { ref name, t } => {
                assert_eq!(name, "v1-vanishing");
                assert!((t.cos() - NONLINEAR_GUARD_FRACTION).abs() < 1e-6, "{t}");
            }
            ref other => panic!("{other:?}"),
        }
    }

    #[test]
    fn final_position_on_the_circle_is_its_center() {
        let p = SleighParams { v0: 2.0, omega: 0.5, ..Default::default() };
        for t in [0.0, 1.0, 5.0] {
            let q = sleigh_circle(&p, t);
            let v = [2.0 * (0.5 * t).cos(), 2.0 * (0.5 * t).sin(), 0.5];
            assert!(close(&final_position_estimate(&p, &q, &v), &[0.0, 4.0], 1e-12));
        }
    }

    #[test]
    fn params_validation() {
        assert!(SleighParams { m: 0.0, ..Default::default() }.validate().is_err());
        assert!(SleighParams { k: -1.0, ..Default::default() }.validate().is_err());
        let p: SleighParams = serde_json::from_str(r#"{"I": 2.0, "k": 5}"#).unwrap();
        assert_eq!((p.inertia, p.k, p.m), (2.0, 5.0, 1.0));
    }
}
