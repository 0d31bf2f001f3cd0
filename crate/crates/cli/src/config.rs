//! JSON run configuration and its validation into ready-to-run objects.
//!
//! ```json
//! {
//!   "system": { "scenario": "lda_linear", "params": { "v0": 1.0, "omega": 1.0 } },
//!   "initial": { "e0": 1.0, "mu_e": "sin(t)" },
//!   "integrator": { "method": "rk4", "dt": 1e-3, "t_end": 6.283185307179586 },
//!   "outputs": { "csv": "run.csv", "report": "run.jsonl" },
//!   "checks": [ { "kind": "analytic-compare", "tolerance": 1e-8 } ]
//! }
//! ```
//!
//! An inline system replaces `scenario`/`params` with `n`, `masses`, one of
//! `potential` or `force`, and optional `constraints`. Relative output
//! paths are resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;

use nonholonomic::engine::{BaseForce, ConstraintSet, SystemSpec};
use nonholonomic::integrate::{Guard, IntegratorConfig, Method, TimeFunction, DEFAULT_DRIFT_TOLERANCE};
use nonholonomic::scenarios::{
    build_sleigh_spec, damped_oscillator_spec, sleigh_initial_state, OscillatorSign, SleighParams, SleighVariant, SCENARIO_NAMES,
};
use nonholonomic::{Error as CoreError, Expr};

use crate::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub outputs: OutputsConfig,
    #[serde(default)]
    pub checks: Vec<CheckConfig>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub scenario: Option<String>,
    pub params: Option<Value>,
    pub n: Option<usize>,
    pub masses: Option<Vec<f64>>,
    pub potential: Option<String>,
    pub force: Option<Vec<String>>,
    pub constraints: Option<Vec<String>>,
    pub regularity_eps: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum MuSpec {
    Constant(f64),
    Expr(String),
}

impl MuSpec {
    pub fn to_function(&self) -> Result<TimeFunction, CoreError> {
        match self {
            MuSpec::Constant(c) => Ok(TimeFunction::constant(*c)),
            MuSpec::Expr(s) => TimeFunction::parse(s),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub q0: Option<Vec<f64>>,
    pub v0: Option<Vec<f64>>,
    pub e0: Option<f64>,
    pub mu_e: Option<MuSpec>,
    /// Newton-project `v0` onto the constraint surface before the run.
    #[serde(default)]
    pub project: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    #[default]
    Rk4,
    Rkf45,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default)]
    pub method: MethodName,
    pub dt: Option<f64>,
    pub atol: Option<f64>,
    pub rtol: Option<f64>,
    pub dt_min: Option<f64>,
    pub dt_max: Option<f64>,
    pub t_end: Option<f64>,
    pub drift_tolerance: Option<f64>,
    #[serde(default)]
    pub projection: bool,
    #[serde(default)]
    pub guards: Vec<GuardConfig>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuardConfig {
    pub name: String,
    pub expr: String,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    pub csv: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CheckConfig {
    Drift {
        tolerance: f64,
    },
    HamiltonianEquivalence {
        #[serde(default = "default_equivalence_tolerance")]
        tolerance: f64,
        /// Extra `e(0)` values to sweep.
        #[serde(default)]
        e0: Vec<f64>,
        /// Extra `μ_e(t)` choices to sweep.
        #[serde(default)]
        mu_e: Vec<MuSpec>,
    },
    ActionStationarity {
        tolerance: Option<f64>,
        #[serde(default = "default_perturbation")]
        perturbation: f64,
    },
    GaugeInvariance {
        tolerance: Option<f64>,
        #[serde(default = "default_gauge_amplitude")]
        amplitude: f64,
        /// Size of the momenta added to make the tested path off-shell.
        #[serde(default = "default_offshell")]
        offshell: f64,
    },
    AnalyticCompare {
        tolerance: f64,
    },
}

fn default_equivalence_tolerance() -> f64 {
    1e-8
}

fn default_perturbation() -> f64 {
    1e-5
}

fn default_gauge_amplitude() -> f64 {
    1e-2
}

fn default_offshell() -> f64 {
    0.1
}

impl CheckConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            CheckConfig::Drift { .. } => "drift",
            CheckConfig::HamiltonianEquivalence { .. } => "hamiltonian-equivalence",
            CheckConfig::ActionStationarity { .. } => "action-stationarity",
            CheckConfig::GaugeInvariance { .. } => "gauge-invariance",
            CheckConfig::AnalyticCompare { .. } => "analytic-compare",
        }
    }
}

/// Closed-form solution a run can be compared against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Reference {
    /// Uniform circle; exact for both Lagrange-d'Alembert sleighs.
    Circle(SleighParams),
    /// The printed strong-friction formula; reported, never gating.
    FrictionPrinted(SleighParams),
    Oscillator {
        omega: f64,
        k: f64,
        sign: OscillatorSign,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillatorParams {
    #[serde(default = "one")]
    pub omega: f64,
    #[serde(default)]
    pub k: f64,
    #[serde(default)]
    pub sign: OscillatorSign,
}

fn one() -> f64 {
    1.0
}

impl Default for OscillatorParams {
    fn default() -> Self {
        OscillatorParams { omega: 1.0, k: 0.0, sign: OscillatorSign::Restoring }
    }
}

/// A validated configuration.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub label: String,
    pub spec: SystemSpec,
    pub reference: Option<Reference>,
    pub q0: Vec<f64>,
    pub v0: Vec<f64>,
    pub e0: f64,
    pub mu_e: TimeFunction,
    pub integrator: IntegratorConfig,
    pub outputs: OutputsConfig,
    pub checks: Vec<CheckConfig>,
}

fn config_error(path: impl Into<String>, message: impl Into<String>) -> CliError {
    CliError::Config { path: path.into(), message: message.into() }
}

fn at<T>(path: &str, r: Result<T, CoreError>) -> Result<T, CliError> {
    r.map_err(|e| config_error(path, e.to_string()))
}

fn positive(path: &str, x: f64) -> Result<f64, CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(config_error(path, format!("must be a positive number, got {x}")))
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    serde_json::from_str(text).map_err(|e| config_error("config", e.to_string()))
}

fn params<T: serde::de::DeserializeOwned + Default>(value: &Option<Value>) -> Result<T, CliError> {
    match value {
        None => Ok(T::default()),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| config_error("system.params", e.to_string())),
    }
}

struct SystemParts {
    label: String,
    spec: SystemSpec,
    reference: Option<Reference>,
    q0: Option<Vec<f64>>,
    v0: Option<Vec<f64>>,
    t_end: Option<f64>,
    guards: Vec<Guard>,
}

/// Sleigh parameters plus the vakonomic constant `c`.
#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct VakonomicParams {
    m: f64,
    #[serde(rename = "I")]
    inertia: f64,
    k: f64,
    v0: f64,
    omega: f64,
    c: f64,
}

impl Default for VakonomicParams {
    fn default() -> Self {
        let p = SleighParams::default();
        VakonomicParams { m: p.m, inertia: p.inertia, k: p.k, v0: p.v0, omega: p.omega, c: 0.0 }
    }
}

fn scenario_system(name: &str, raw: &Option<Value>) -> Result<SystemParts, CliError> {
    let sleigh = |variant: SleighVariant, p: SleighParams| -> Result<SystemParts, CliError> {
        at("system.params", p.validate())?;
        let spec = at("system.params", build_sleigh_spec(variant, &p))?;
        let (q0, v0) = sleigh_initial_state(variant, &p);
        let reference = match variant {
            SleighVariant::LdaLinear | SleighVariant::LdaNonlinear if p.omega != 0.0 => Some(Reference::Circle(p)),
            SleighVariant::Friction if p.omega != 0.0 => Some(Reference::FrictionPrinted(p)),
            _ => None,
        };
        Ok(SystemParts {
            label: variant.name().to_string(),
            spec,
            reference,
            q0: Some(q0),
            v0: Some(v0),
            t_end: Some(variant.default_t_end(&p)),
            guards: variant.guards(&p),
        })
    };
    match name {
        "friction" => sleigh(SleighVariant::Friction, params(raw)?),
        "lda_linear" => sleigh(SleighVariant::LdaLinear, params(raw)?),
        "lda_nonlinear" => sleigh(SleighVariant::LdaNonlinear, params(raw)?),
        "vakonomic_phi" => {
            let p: VakonomicParams = params(raw)?;
            let sleigh_params = SleighParams { m: p.m, inertia: p.inertia, k: p.k, v0: p.v0, omega: p.omega };
            sleigh(SleighVariant::VakonomicPhi { c: p.c }, sleigh_params)
        }
        "damped_oscillator" => {
            let p: OscillatorParams = params(raw)?;
            let spec = at("system.params", damped_oscillator_spec(p.omega, p.k, p.sign))?;
            Ok(SystemParts {
                label: name.to_string(),
                spec,
                reference: Some(Reference::Oscillator { omega: p.omega, k: p.k, sign: p.sign }),
                q0: Some(vec![1.0]),
                v0: Some(vec![0.0]),
                t_end: None,
                guards: Vec::new(),
            })
        }
        other => {
            Err(config_error("system.scenario", format!("unknown scenario `{other}` (known: {})", SCENARIO_NAMES.join(", "))))
        }
    }
}

fn inline_system(sys: &SystemConfig) -> Result<SystemParts, CliError> {
    let n = sys.n.ok_or_else(|| config_error("system.n", "required for an inline system"))?;
    if n == 0 {
        return Err(config_error("system.n", "must be at least 1"));
    }
    let masses = sys.masses.clone().ok_or_else(|| config_error("system.masses", "required for an inline system"))?;
    if masses.len() != n {
        return Err(config_error("system.masses", format!("expected n = {n} entries, got {}", masses.len())));
    }
    for (i, &m) in masses.iter().enumerate() {
        positive(&format!("system.masses[{i}]"), m)?;
    }
    let base = match (&sys.potential, &sys.force) {
        (Some(_), Some(_)) => return Err(config_error("system", "give either `potential` or `force`, not both")),
        (None, None) => return Err(config_error("system", "one of `potential` or `force` is required")),
        (Some(u), None) => BaseForce::Potential(at("system.potential", Expr::parse(u, n).map_err(Into::into))?),
        (None, Some(f)) => {
            if f.len() != n {
                return Err(config_error("system.force", format!("expected n = {n} components, got {}", f.len())));
            }
            let exprs = f
                .iter()
                .enumerate()
                .map(|(i, s)| at(&format!("system.force[{i}]"), Expr::parse(s, n).map_err(Into::into)))
                .collect::<Result<Vec<_>, _>>()?;
            BaseForce::Explicit(exprs)
        }
    };
    let constraints = sys
        .constraints
        .iter()
        .flatten()
        .enumerate()
        .map(|(i, s)| at(&format!("system.constraints[{i}]"), Expr::parse(s, n).map_err(Into::into)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut set = ConstraintSet::new(constraints);
    if let Some(eps) = sys.regularity_eps {
        set = set.with_regularity_eps(positive("system.regularity_eps", eps)?);
    }
    let spec = at("system", SystemSpec::new(masses, base, set))?;
    Ok(SystemParts { label: "inline".into(), spec, reference: None, q0: None, v0: None, t_end: None, guards: Vec::new() })
}

fn integrator(section: &IntegratorSection, t_end: f64, guards: Vec<Guard>, n: usize) -> Result<IntegratorConfig, CliError> {
    let method = match section.method {
        MethodName::Rk4 => Method::Rk4 { dt: positive("integrator.dt", section.dt.unwrap_or(1e-3))? },
        MethodName::Rkf45 => {
            let dt_max = positive("integrator.dt_max", section.dt_max.unwrap_or(0.1))?;
            let dt_min = positive("integrator.dt_min", section.dt_min.unwrap_or(1e-10))?;
            if dt_min > dt_max {
                return Err(config_error("integrator.dt_min", "exceeds integrator.dt_max"));
            }
            Method::Rkf45 {
                atol: positive("integrator.atol", section.atol.unwrap_or(1e-10))?,
                rtol: positive("integrator.rtol", section.rtol.unwrap_or(1e-10))?,
                dt_min,
                dt_max,
            }
        }
    };
    let mut all_guards = guards;
    for (i, g) in section.guards.iter().enumerate() {
        all_guards.push(at(&format!("integrator.guards[{i}].expr"), Guard::parse(&g.name, &g.expr, n))?);
    }
    Ok(IntegratorConfig {
        method,
        t_end: positive("integrator.t_end", t_end)?,
        drift_tolerance: positive("integrator.drift_tolerance", section.drift_tolerance.unwrap_or(DEFAULT_DRIFT_TOLERANCE))?,
        projection: section.projection,
        guards: all_guards,
    })
}

/// Validate every block against the system dimension.
pub fn resolve(cfg: &RunConfig, base_dir: &Path) -> Result<Resolved, CliError> {
    let sys = &cfg.system;
    let inline_given = sys.n.is_some()
        || sys.masses.is_some()
        || sys.potential.is_some()
        || sys.force.is_some()
        || sys.constraints.is_some()
        || sys.regularity_eps.is_some();
    let parts = match &sys.scenario {
        Some(_) if inline_given => {
            return Err(config_error("system", "give either `scenario` or an inline system, not both"));
        }
        Some(name) => scenario_system(name, &sys.params)?,
        None if sys.params.is_some() => return Err(config_error("system.params", "only valid with `scenario`")),
        None => inline_system(sys)?,
    };
    let n = parts.spec.dim();

    let pick = |given: &Option<Vec<f64>>, default: Option<Vec<f64>>, path: &str| -> Result<Vec<f64>, CliError> {
        let v = given.clone().or(default).ok_or_else(|| config_error(path, "required for an inline system"))?;
        if v.len() != n {
            return Err(config_error(path, format!("expected n = {n} entries, got {}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(config_error(path, "entries must be finite"));
        }
        Ok(v)
    };
    let q0 = pick(&cfg.initial.q0, parts.q0, "initial.q0")?;
    let mut v0 = pick(&cfg.initial.v0, parts.v0, "initial.v0")?;
    if cfg.initial.project {
        v0 = at("initial.v0", parts.spec.project_initial_state(&q0, &v0, 0.0))?;
    }
    let e0 = cfg.initial.e0.unwrap_or(1.0);
    if !(e0.is_finite() && e0 != 0.0) {
        return Err(config_error("initial.e0", format!("must be finite and non-zero, got {e0}")));
    }
    let mu_e = match &cfg.initial.mu_e {
        None => TimeFunction::zero(),
        Some(spec) => at("initial.mu_e", spec.to_function())?,
    };

    let t_end =
        cfg.integrator.t_end.or(parts.t_end).ok_or_else(|| config_error("integrator.t_end", "required for this system"))?;
    let integrator = integrator(&cfg.integrator, t_end, parts.guards, n)?;

    for (i, check) in cfg.checks.iter().enumerate() {
        let path = format!("checks[{i}]");
        match check {
            CheckConfig::Drift { tolerance } | CheckConfig::AnalyticCompare { tolerance } => {
                positive(&format!("{path}.tolerance"), *tolerance)?;
            }
            CheckConfig::HamiltonianEquivalence { tolerance, e0, mu_e } => {
                positive(&format!("{path}.tolerance"), *tolerance)?;
                if let Some(j) = e0.iter().position(|e| !(e.is_finite() && *e != 0.0)) {
                    return Err(config_error(format!("{path}.e0[{j}]"), "must be finite and non-zero"));
                }
                for (j, m) in mu_e.iter().enumerate() {
                    at(&format!("{path}.mu_e[{j}]"), m.to_function())?;
                }
            }
            CheckConfig::ActionStationarity { tolerance, perturbation } => {
                if let Some(t) = tolerance {
                    positive(&format!("{path}.tolerance"), *t)?;
                }
                positive(&format!("{path}.perturbation"), *perturbation)?;
            }
            CheckConfig::GaugeInvariance { tolerance, amplitude, offshell } => {
                if let Some(t) = tolerance {
                    positive(&format!("{path}.tolerance"), *t)?;
                }
                positive(&format!("{path}.amplitude"), *amplitude)?;
                positive(&format!("{path}.offshell"), *offshell)?;
            }
        }
        if matches!(check, CheckConfig::AnalyticCompare { .. }) && parts.reference.is_none() {
            return Err(config_error(
                path,
                format!("analytic-compare needs a closed-form reference, `{}` has none", parts.label),
            ));
        }
        if matches!(check, CheckConfig::ActionStationarity { .. } | CheckConfig::GaugeInvariance { .. })
            && matches!(integrator.method, Method::Rkf45 { .. })
        {
            return Err(config_error(path, format!("{} needs the uniform grid of the rk4 method", check.kind())));
        }
    }

    let resolve_path = |p: &Option<PathBuf>| p.as_ref().map(|p| if p.is_absolute() { p.clone() } else { base_dir.join(p) });
    Ok(Resolved {
        label: parts.label,
        spec: parts.spec,
        reference: parts.reference,
        q0,
        v0,
        e0,
        mu_e,
        integrator,
        outputs: OutputsConfig { csv: resolve_path(&cfg.outputs.csv), report: resolve_path(&cfg.outputs.report) },
        checks: cfg.checks.clone(),
    })
}
