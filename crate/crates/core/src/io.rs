//! CSV result files and run manifests.
//!
//! Every CSV starts with one `#` comment line holding the JSON manifest of the
//! run that produced it (parameters and device, no paths or timings), so a
//! result file is self-describing and reproducible from its own header.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pwl_mech::ErrorReport;
use crate::rom::RomSystem;
use crate::sim::{SweepRow, SweepStatus, Trajectory};

/// Shortest round-trip representation, in exponent form.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn comment_line(w: &mut impl Write, header: &str) -> Result<()> {
    if header.contains('\n') {
        return Err(Error::Config("manifest header must be a single line".into()));
    }
    writeln!(w, "# {header}")?;
    Ok(())
}

pub fn write_trajectory<W: Write>(mut w: W, rom: &RomSystem, traj: &Trajectory, header: &str) -> Result<()> {
    comment_line(&mut w, header)?;
    let nm = rom.n_beam();
    let ms = rom.n_squeeze();
    let mut out = csv::Writer::from_writer(w);
    let mut names = vec!["t".to_string()];
    names.extend((1..=nm).map(|j| format!("x_{j}")));
    names.extend((1..=nm).map(|j| format!("v_{j}")));
    names.extend((1..=ms).map(|k| format!("s_{k}")));
    names.push("u_mid".into());
    out.write_record(&names)?;
    for ((t, z), u) in traj.times.iter().zip(&traj.states).zip(&traj.midpoint) {
        let mut row = vec![fmt_f64(*t)];
        row.extend(z.x.iter().chain(z.v.iter()).chain(z.s.iter()).map(|v| fmt_f64(*v)));
        row.push(fmt_f64(*u));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_trajectory(path: &Path, rom: &RomSystem, traj: &Trajectory, header: &str) -> Result<()> {
    write_trajectory(create(path)?, rom, traj, header)
}

fn status_label(status: &SweepStatus) -> String {
    match status {
        SweepStatus::PullIn => "pull-in".into(),
        SweepStatus::NoPullIn => "no pull-in".into(),
        SweepStatus::Failed(msg) => format!("failed: {msg}"),
    }
}

/// Largest `|t - t_ref| / t_ref` over voltages where both runs pulled in.
pub fn max_relative_discrepancy(rows: &[SweepRow], reference: &[SweepRow]) -> Option<f64> {
    rows.iter()
        .zip(reference)
        .filter_map(|(a, b)| match (a.pull_in_time, b.pull_in_time) {
            (Some(t), Some(r)) => Some((t - r).abs() / r),
            _ => None,
        })
        .reduce(f64::max)
}

/// Sweep table `V,t_pullin,status`. With a reference sweep, a final summary
/// row carries the largest relative pull-in-time discrepancy.
pub fn write_sweep<W: Write>(mut w: W, rows: &[SweepRow], reference: Option<&[SweepRow]>, header: &str) -> Result<()> {
    comment_line(&mut w, header)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["V", "t_pullin", "status"])?;
    for r in rows {
        let t = r.pull_in_time.map(fmt_f64).unwrap_or_default();
        out.write_record([fmt_f64(r.volts), t, status_label(&r.status)])?;
    }
    if let Some(reference) = reference {
        let value = max_relative_discrepancy(rows, reference).map(fmt_f64).unwrap_or_default();
        out.write_record(["summary".to_string(), value, "max relative discrepancy vs full".into()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_sweep(path: &Path, rows: &[SweepRow], reference: Option<&[SweepRow]>, header: &str) -> Result<()> {
    write_sweep(create(path)?, rows, reference, header)
}

pub fn write_table<W: Write>(mut w: W, rows: &[ErrorReport], header: &str) -> Result<()> {
    comment_line(&mut w, header)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["n_points", "disp_err_pct", "pullin_err_pct"])?;
    for r in rows {
        out.write_record([r.n_points.to_string(), fmt_f64(r.displacement_error_pct), fmt_f64(r.pullin_error_pct)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_table(path: &Path, rows: &[ErrorReport], header: &str) -> Result<()> {
    write_table(create(path)?, rows, header)
}

/// Write bytes through the same directory handling as the CSV writers.
pub fn save_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(bytes)?;
    w.flush()?;
    Ok(())
}

/// Sidecar record of one command run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest<S> {
    pub code_version: String,
    /// Everything needed to repeat the run.
    pub run: S,
    pub outputs: Vec<PathBuf>,
    pub wall_time_s: f64,
}

impl<S: Serialize> RunManifest<S> {
    pub fn path_for(output: &Path) -> PathBuf {
        let mut name = output.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_bytes(path, serde_json::to_string_pretty(self)?.as_bytes())
    }
}

/// Read the CSV body after the manifest comment line.
pub fn read_csv_body(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let headers = rdr.headers()?.iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|rec| rec.iter().map(String::from).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, csv::Error>>()?;
    Ok((headers, rows))
}
