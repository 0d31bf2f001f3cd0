//! CSV trajectories and JSON-lines reports, each led by run metadata.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use nonholonomic::engine::Diagnostics;
use nonholonomic::integrate::{ExtendedTrajectory, Trajectory};
use nonholonomic::MULTIPLIER_CONVENTION;

pub const TOOL_VERSION: &str = concat!("nonholo ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metadata {
    pub tool: String,
    pub config_sha256: String,
    pub multiplier_convention: String,
    pub projection: String,
}

impl Metadata {
    pub fn new(config_bytes: &[u8], projection: bool) -> Self {
        Metadata {
            tool: TOOL_VERSION.to_string(),
            config_sha256: sha256_hex(config_bytes),
            multiplier_convention: MULTIPLIER_CONVENTION.to_string(),
            projection: projection_label(projection).to_string(),
        }
    }
}

pub fn projection_label(projection: bool) -> &'static str {
    if projection {
        "on (velocity re-projected onto D = 0 after every step; not the raw flow)"
    } else {
        "off (raw Lagrange-d'Alembert flow)"
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// 17 significant digits, enough to round-trip any `f64`.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn header(out: &mut impl Write, meta: &Metadata) -> io::Result<()> {
    writeln!(out, "# tool: {}", meta.tool)?;
    writeln!(out, "# config_sha256: {}", meta.config_sha256)?;
    writeln!(out, "# multiplier_convention: {}", meta.multiplier_convention)?;
    writeln!(out, "# projection: {}", meta.projection)
}

fn numbered(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |i| format!("{prefix}{i}"))
}

fn diagnostic_columns(m: usize) -> Vec<String> {
    if m == 0 {
        return Vec::new();
    }
    numbered("D_", m).chain(numbered("h_", m)).chain(["gram_min_eig".to_string()]).collect()
}

fn diagnostic_cells(d: &Diagnostics, m: usize, row: &mut Vec<String>) {
    if m == 0 {
        return;
    }
    row.extend(d.constraint_values.iter().map(|&x| fmt(x)));
    row.extend(d.multipliers.iter().map(|&x| fmt(x)));
    row.push(d.gram_min_eigenvalue.map_or_else(|| "nan".to_string(), fmt));
}

pub fn write_trajectory_csv(out: &mut impl Write, meta: &Metadata, traj: &Trajectory, m: usize) -> io::Result<()> {
    header(out, meta)?;
    let n = traj.q.first().map_or(0, Vec::len);
    let columns: Vec<String> =
        ["t".to_string()].into_iter().chain(numbered("q", n)).chain(numbered("v", n)).chain(diagnostic_columns(m)).collect();
    writeln!(out, "{}", columns.join(","))?;
    for k in 0..traj.len() {
        let mut row = vec![fmt(traj.times[k])];
        row.extend(traj.q[k].iter().chain(&traj.v[k]).map(|&x| fmt(x)));
        diagnostic_cells(&traj.diagnostics[k], m, &mut row);
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_extended_csv(out: &mut impl Write, meta: &Metadata, traj: &ExtendedTrajectory, m: usize) -> io::Result<()> {
    header(out, meta)?;
    let n = traj.points.first().map_or(0, |z| z.dim());
    let columns: Vec<String> = ["t".to_string()]
        .into_iter()
        .chain(numbered("q", n))
        .chain(numbered("v", n))
        .chain(diagnostic_columns(m))
        .chain(numbered("p", n))
        .chain(numbered("pi", n))
        .chain(["e", "pi_e", "surface_residual", "mu_e"].map(String::from))
        .collect();
    writeln!(out, "{}", columns.join(","))?;
    for (k, z) in traj.points.iter().enumerate() {
        let mut row = vec![fmt(traj.times[k])];
        row.extend(z.q.iter().chain(&z.v).map(|&x| fmt(x)));
        diagnostic_cells(&traj.diagnostics[k], m, &mut row);
        row.extend(z.p.iter().chain(&z.pi).map(|&x| fmt(x)));
        row.extend([z.e, z.pi_e, traj.surface_residual[k], traj.mu_e[k]].map(fmt));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Buffered file writer that reports the failing path.
pub fn create(path: &Path) -> Result<BufWriter<File>, crate::CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| crate::CliError::Io { path: dir.to_path_buf(), source })?;
    }
    File::create(path).map(BufWriter::new).map_err(|source| crate::CliError::Io { path: path.to_path_buf(), source })
}

/// One JSON object per line, metadata first.
pub fn write_report_lines<T: Serialize>(out: &mut impl Write, meta: &Metadata, records: &[T]) -> io::Result<()> {
    let mut first = serde_json::to_value(meta)?;
    first["record"] = "metadata".into();
    writeln!(out, "{}", serde_json::to_string(&first)?)?;
    for r in records {
        writeln!(out, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}
