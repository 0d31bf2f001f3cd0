//! Batch front-end: config-driven runs, verification reports and the sleigh
//! parameter sweeps.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use nonholonomic::integrate::{integrate_hamiltonian, integrate_second_order, IntegratorConfig, Termination, Trajectory};
use nonholonomic::scenarios::{
    build_sleigh_spec, circle_deviation, sleigh_initial_state, SleighParams, SleighVariant, SCENARIO_NAMES,
};
use nonholonomic::ExtendedPhasePoint;

pub mod checks;
pub mod config;
pub mod output;

use checks::{run_checks, CheckReport, RunView};
use output::Metadata;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid input, with the offending field path.
    #[error("{path}: {message}")]
    Config { path: String, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Runtime(#[from] nonholonomic::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => EXIT_CONFIG,
            CliError::Io { .. } | CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

/// Core errors raised by the initial state belong to the input.
fn initial_error(e: nonholonomic::Error) -> CliError {
    match e {
        nonholonomic::Error::InitialConstraintViolation { .. } => {
            CliError::Config { path: "initial".into(), message: e.to_string() }
        }
        nonholonomic::Error::ZeroEinbein => CliError::Config { path: "initial.e0".into(), message: e.to_string() },
        e => CliError::Runtime(e),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Simulate,
    Hamiltonian,
    Verify,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub termination: Termination,
    pub samples: usize,
    pub checks: Vec<CheckReport>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> u8 {
        if matches!(self.termination, Termination::Error { .. }) {
            EXIT_RUNTIME
        } else if self.checks.iter().any(|c| c.gating && !c.pass) {
            EXIT_CHECK_FAILED
        } else {
            EXIT_OK
        }
    }
}

fn write_to(path: &Path, f: impl FnOnce(&mut io::BufWriter<std::fs::File>) -> io::Result<()>) -> Result<(), CliError> {
    let mut w = output::create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

pub fn run_config_file(path: &Path, mode: Mode, out: &mut impl Write) -> Result<RunOutcome, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config { path: path.display().to_string(), message: e.to_string() })?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|e| CliError::Config { path: path.display().to_string(), message: e.to_string() })?;
    let cfg = config::parse_config(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolved = config::resolve(&cfg, base)?;
    let meta = Metadata::new(&bytes, resolved.integrator.projection);
    let m = resolved.spec.constraints().len();
    log::info!("running {} ({:?})", resolved.label, mode);

    let (view, termination) = match mode {
        Mode::Simulate | Mode::Verify => {
            let traj = integrate_second_order(&resolved.spec, &resolved.q0, &resolved.v0, &resolved.integrator)
                .map_err(initial_error)?;
            if let Some(csv) = &resolved.outputs.csv {
                write_to(csv, |w| output::write_trajectory_csv(w, &meta, &traj, m))?;
            }
            (RunView::from(&traj), traj.termination)
        }
        Mode::Hamiltonian => {
            let z0 = ExtendedPhasePoint::on_surface(resolved.q0.clone(), resolved.v0.clone(), resolved.e0);
            let traj = integrate_hamiltonian(&resolved.spec, &z0, &resolved.mu_e, &resolved.integrator).map_err(initial_error)?;
            if let Some(csv) = &resolved.outputs.csv {
                write_to(csv, |w| output::write_extended_csv(w, &meta, &traj, m))?;
            }
            (RunView::from(&traj), traj.termination)
        }
    };

    let checks = run_checks(&resolved, &view)?;
    let samples = view.times.len();
    let run_record = json!({
        "record": "run",
        "mode": format!("{mode:?}").to_lowercase(),
        "system": resolved.label,
        "termination": termination,
        "samples": samples,
        "t_final": view.times.last(),
    });
    let mut records = vec![run_record];
    records.extend(checks.iter().map(|c| serde_json::to_value(c).expect("check records serialize")));
    if let Some(report) = &resolved.outputs.report {
        write_to(report, |w| output::write_report_lines(w, &meta, &records))?;
    }

    let stdout_err = |source| CliError::Io { path: "<stdout>".into(), source };
    if mode == Mode::Verify {
        output::write_report_lines(out, &meta, &records).map_err(stdout_err)?;
    } else {
        summary(out, &resolved.label, &termination, samples, &checks).map_err(stdout_err)?;
    }
    Ok(RunOutcome { termination, samples, checks })
}

fn summary(
    out: &mut impl Write,
    label: &str,
    termination: &Termination,
    samples: usize,
    checks: &[CheckReport],
) -> io::Result<()> {
    writeln!(out, "system: {label}")?;
    match termination {
        Termination::Completed => writeln!(out, "termination: completed ({samples} samples)")?,
        Termination::Event { name, t } => writeln!(out, "termination: event {name} at t = {t} ({samples} samples)")?,
        Termination::Error { kind, t } => writeln!(out, "termination: {kind} error at t = {t} ({samples} samples)")?,
    }
    for c in checks {
        let verdict = match (c.pass, c.gating) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "INFO",
        };
        writeln!(out, "check {} {}: value {:.3e}, tolerance {:.3e}", c.kind, verdict, c.value, c.tolerance)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum VariantArg {
    Friction,
    LdaLinear,
    LdaNonlinear,
    VakonomicPhi,
}

#[derive(Clone, Debug, Args)]
pub struct SleighArgs {
    #[arg(value_enum)]
    pub variant: VariantArg,
    #[arg(long, default_value_t = 1.0)]
    pub m: f64,
    #[arg(long = "I", default_value_t = 1.0)]
    pub inertia: f64,
    /// Friction coefficient; repeat to sweep.
    #[arg(long, num_args = 1..)]
    pub k: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub v0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    /// Vakonomic constant; repeat to sweep.
    #[arg(long, num_args = 1..)]
    pub c: Vec<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Trajectory CSV (single runs only).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SleighRun {
    pub variant: &'static str,
    pub params: SleighParams,
    pub c: Option<f64>,
    pub termination: Termination,
    /// Sup-distance from the reference circle, or `max |φ - ωt|` for the
    /// vakonomic reduction.
    pub deviation: f64,
    pub max_drift: f64,
}

fn sleigh_one(variant: SleighVariant, params: SleighParams, args: &SleighArgs) -> Result<(SleighRun, Trajectory), CliError> {
    let spec = build_sleigh_spec(variant, &params)?;
    let (q0, v0) = sleigh_initial_state(variant, &params);
    let t_end = args.t_end.unwrap_or_else(|| variant.default_t_end(&params));
    let cfg = variant.guards(&params).into_iter().fold(IntegratorConfig::rk4(args.dt, t_end), IntegratorConfig::with_guard);
    cfg.validate()?;
    let traj = integrate_second_order(&spec, &q0, &v0, &cfg)?;
    let deviation = match variant {
        SleighVariant::VakonomicPhi { .. } => {
            traj.times.iter().zip(&traj.q).map(|(&t, q)| (q[0] - params.omega * t).abs()).fold(0.0, f64::max)
        }
        _ => circle_deviation(&params, &traj),
    };
    let c = match variant {
        SleighVariant::VakonomicPhi { c } => Some(c),
        _ => None,
    };
    let run = SleighRun {
        variant: variant.name(),
        params,
        c,
        termination: traj.termination.clone(),
        deviation,
        max_drift: traj.max_drift(),
    };
    Ok((run, traj))
}

/// Runs every requested sweep point in parallel; results keep the order of
/// the arguments.
pub fn sleigh_sweep(args: &SleighArgs) -> Result<Vec<(SleighRun, Trajectory)>, CliError> {
    let ks = if args.k.is_empty() { vec![SleighParams::default().k] } else { args.k.clone() };
    let cases: Vec<(SleighVariant, SleighParams)> = match args.variant {
        VariantArg::VakonomicPhi => {
            let cs = if args.c.is_empty() { vec![1.0] } else { args.c.clone() };
            cs.iter().map(|&c| (SleighVariant::VakonomicPhi { c }, params(args, ks[0]))).collect()
        }
        v => {
            let variant = match v {
                VariantArg::Friction => SleighVariant::Friction,
                VariantArg::LdaLinear => SleighVariant::LdaLinear,
                _ => SleighVariant::LdaNonlinear,
            };
            ks.iter().map(|&k| (variant, params(args, k))).collect()
        }
    };
    if args.csv.is_some() && cases.len() > 1 {
        return Err(CliError::Config { path: "--csv".into(), message: "a trajectory file needs a single sweep point".into() });
    }
    cases.par_iter().map(|&(variant, p)| sleigh_one(variant, p, args)).collect()
}

fn params(args: &SleighArgs, k: f64) -> SleighParams {
    SleighParams { m: args.m, inertia: args.inertia, k, v0: args.v0, omega: args.omega }
}

pub fn run_sleigh(args: &SleighArgs, out: &mut impl Write) -> Result<u8, CliError> {
    let runs = sleigh_sweep(args)?;
    if let (Some(path), Some((_, traj))) = (&args.csv, runs.first()) {
        let label = format!("sleigh {:?} {:?}", args.variant, runs[0].0.params);
        let meta = Metadata::new(label.as_bytes(), false);
        let m = if args.variant == VariantArg::VakonomicPhi { 0 } else { 1 };
        write_to(path, |w| output::write_trajectory_csv(w, &meta, traj, m))?;
    }
    let stdout_err = |source| CliError::Io { path: "<stdout>".into(), source };
    let mut code = EXIT_OK;
    for (run, _) in &runs {
        let p = &run.params;
        let measure = if run.c.is_some() { "max_phase_deviation" } else { "max_circle_deviation" };
        let extra = run.c.map(|c| format!(" c={c}")).unwrap_or_default();
        let term = match &run.termination {
            Termination::Completed => "completed".to_string(),
            Termination::Event { name, t } => format!("event:{name}@{t:.6}"),
            Termination::Error { kind, t } => {
                code = EXIT_RUNTIME;
                format!("error:{kind}@{t:.6}")
            }
        };
        writeln!(
            out,
            "variant={} m={} I={} k={} v0={} omega={}{extra} {measure}={:.6e} max_drift={:.3e} termination={term}",
            run.variant, p.m, p.inertia, p.k, p.v0, p.omega, run.deviation, run.max_drift
        )
        .map_err(stdout_err)?;
    }
    Ok(code)
}

pub fn list_scenarios(out: &mut impl Write) -> io::Result<()> {
    SCENARIO_NAMES.iter().try_for_each(|name| writeln!(out, "{name}"))
}
