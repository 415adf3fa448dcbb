//! Output files: CSV snapshots, JSON reports and PGM images.
//!
//! Every CSV starts with `#` comment lines carrying the SHA-256 of the
//! configuration text and the scheme parameters, so a file can be traced
//! back to the run that produced it.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::functionals::Metrics;
use crate::grid::ScalarField;
use crate::solver::{RunResult, SchemeParams, Snapshot};

/// Lowercase hex SHA-256 of `text`.
pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// What produced an output file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_sha256: String,
    pub scenario: String,
    pub scheme: Option<SchemeParams>,
    pub dx: f64,
    pub version: &'static str,
}

impl Provenance {
    pub fn new(config_text: &str, scenario: &str, scheme: Option<SchemeParams>, dx: f64) -> Self {
        Provenance {
            config_sha256: config_hash(config_text),
            scenario: scenario.to_string(),
            scheme,
            dx,
            version: env!("CARGO_PKG_VERSION"),
        }
    }

    /// `#` comment lines describing the run.
    pub fn header_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("# crowd {}", self.version),
            format!("# scenario: {}", self.scenario),
            format!("# config_sha256: {}", self.config_sha256),
            format!("# dx: {:.16e}", self.dx),
        ];
        if let Some(s) = &self.scheme {
            lines.push(format!(
                "# scheme: cfl={} dt_max={} end_time={} snapshot_every={} stop_at_evacuation={}",
                s.cfl,
                s.dt_max,
                s.end_time,
                s.snapshot_every,
                s.stop_at_evacuation.map_or("none".to_string(), |v| v.to_string())
            ));
        }
        lines
    }

    fn write_header(&self, w: &mut impl Write) -> std::io::Result<()> {
        for line in self.header_lines() {
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// One row per cell: `i,j,x,y,rho[,rho2,...]`, floats in `%.16e`.
pub fn write_snapshot_csv(path: &Path, snapshot: &Snapshot, prov: &Provenance) -> Result<()> {
    let mut w = create(path)?;
    prov.write_header(&mut w)?;
    writeln!(w, "# t: {:.16e}", snapshot.t)?;
    let mut header = String::from("i,j,x,y,rho");
    for p in 2..=snapshot.densities.len() {
        header.push_str(&format!(",rho{p}"));
    }
    writeln!(w, "{header}")?;
    let grid = snapshot.densities[0].grid;
    for k in 0..grid.len() {
        let (i, j) = grid.cell(k);
        let c = grid.center_of(k);
        write!(w, "{i},{j},{:.16e},{:.16e}", c[0], c[1])?;
        for d in &snapshot.densities {
            write!(w, ",{:.16e}", d.values[k])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// `t,mass` after every step.
pub fn write_mass_trace(path: &Path, run: &RunResult, prov: &Provenance) -> Result<()> {
    let mut w = create(path)?;
    prov.write_header(&mut w)?;
    writeln!(w, "t,mass")?;
    for (t, m) in &run.mass_trace {
        writeln!(w, "{t:.16e},{m:.16e}")?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty-printed JSON.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// 8-bit binary PGM, north up; `max` maps to white, values are clamped.
pub fn write_pgm(path: &Path, field: &ScalarField, max: f64, prov: &Provenance) -> Result<()> {
    let g = field.grid;
    let mut w = create(path)?;
    writeln!(w, "P5")?;
    for line in prov.header_lines() {
        writeln!(w, "{line}")?;
    }
    writeln!(w, "# gray = round(255 * clamp(rho / {max:e}, 0, 1))")?;
    write!(w, "{} {}\n255\n", g.nx, g.ny)?;
    let mut row = vec![0u8; g.nx];
    for j in (0..g.ny).rev() {
        for (i, px) in row.iter_mut().enumerate() {
            let v = field.at(i, j) / max;
            *px = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
        w.write_all(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Time series of a run, indexed `[population][snapshot]`.
#[derive(Debug, Clone, Serialize)]
pub struct Series {
    pub t: Vec<f64>,
    pub mass: Vec<Vec<f64>>,
    pub linf: Vec<Vec<f64>>,
    pub tv: Vec<Vec<f64>>,
    pub agents: Vec<Vec<[f64; 2]>>,
}

impl Series {
    pub fn of(run: &RunResult) -> Self {
        let pops = run.metrics.first().map_or(0, Vec::len);
        let col = |f: fn(&Metrics) -> f64| -> Vec<Vec<f64>> {
            (0..pops).map(|p| run.metrics.iter().map(|m| f(&m[p])).collect()).collect()
        };
        Series {
            t: run.snapshots.iter().map(|s| s.t).collect(),
            mass: col(|m| m.mass),
            linf: col(|m| m.linf),
            tv: col(|m| m.tv),
            agents: run.snapshots.iter().map(|s| s.agents.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary<'a> {
    pub provenance: &'a Provenance,
    pub initial_mass: f64,
    pub outflow: f64,
    pub final_time: f64,
    pub steps: usize,
    pub evacuation_time: Option<f64>,
    /// Smallest and largest density over every step.
    pub density_bounds: [f64; 2],
    pub series: Series,
}

/// What to write for a run.
#[derive(Debug, Clone, Copy)]
pub struct RunOutputs {
    pub snapshots: bool,
    pub pgm: Option<f64>,
}

/// Write snapshots, images, the mass trace and `metrics.json` into `dir`.
/// Returns the paths written.
pub fn write_run(
    dir: &Path,
    run: &RunResult,
    evacuation_time: Option<f64>,
    prov: &Provenance,
    what: RunOutputs,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (n, s) in run.snapshots.iter().enumerate() {
        if what.snapshots {
            let p = dir.join(format!("snapshot_{n:04}.csv"));
            write_snapshot_csv(&p, s, prov)?;
            written.push(p);
        }
        if let Some(max) = what.pgm {
            for (k, d) in s.densities.iter().enumerate() {
                let p = dir.join(format!("density_{}_{n:04}.pgm", k + 1));
                write_pgm(&p, d, max, prov)?;
                written.push(p);
            }
        }
    }
    let p = dir.join("mass.csv");
    write_mass_trace(&p, run, prov)?;
    written.push(p);
    let summary = RunSummary {
        provenance: prov,
        initial_mass: run.initial_mass,
        outflow: run.outflow,
        final_time: run.final_time,
        steps: run.dts.len(),
        evacuation_time,
        density_bounds: run
            .density_range
            .iter()
            .fold([f64::INFINITY, f64::NEG_INFINITY], |b, r| [b[0].min(r[0]), b[1].max(r[1])]),
        series: Series::of(run),
    };
    let p = dir.join("metrics.json");
    write_json(&p, &summary)?;
    written.push(p);
    Ok(written)
}
