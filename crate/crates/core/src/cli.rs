//! Subcommands behind the `crowd` binary.
//!
//! Each command reads one scenario file, runs it and writes its outputs
//! under `--out`. The exit code is 0 on success, 2 when the input is
//! rejected and 3 when the integration aborts.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;

use crate::confinement::{confinement_condition, dispersal_condition, reach_evolve, ConfinementReport, DispersalReport};
use crate::config::{parse_config, Overrides, ScenarioConfig};
use crate::error::{Error, Result};
use crate::functionals::{cost_jt, evacuation_time, gateaux_check, GateauxReport};
use crate::io::{write_json, write_run, Provenance, RunOutputs};
use crate::solver::{run_scenario, RunResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Braess,
    Gateaux,
    Confine,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Flags {
    /// Output directory; `out` when absent.
    pub out: Option<PathBuf>,
    pub dx: Option<f64>,
    pub end_time: Option<f64>,
    /// Accepted for interface stability; nothing is random.
    pub seedless: bool,
}

/// Result of a command: exit code, files written and a human summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Run `command` on the scenario file at `config`.
pub fn run_cli(command: Command, config: &Path, flags: &Flags) -> Outcome {
    let out = flags.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let result = fs::read_to_string(config).map_err(Error::from).and_then(|text| {
        let cfg = parse_config(&text)?.with_overrides(&Overrides { dx: flags.dx, end_time: flags.end_time })?;
        match command {
            Command::Simulate => simulate(&cfg, &text, &out),
            Command::Braess => braess(&cfg, &text, &out),
            Command::Gateaux => gateaux(&cfg, &text, &out),
            Command::Confine => confine(&cfg, &text, &out),
        }
    });
    match result {
        Ok((files, summary)) => Outcome { code: EXIT_OK, files, summary },
        Err(e) => Outcome {
            code: if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_INVALID },
            files: vec![],
            summary: format!("error: {e}"),
        },
    }
}

type Written = (Vec<PathBuf>, String);

fn provenance(cfg: &ScenarioConfig, text: &str) -> Provenance {
    let dx = cfg.geometry.as_ref().map(|g| g.dx).or(cfg.confinement.as_ref().map(|c| c.dx)).unwrap_or(f64::NAN);
    Provenance::new(text, &cfg.name, cfg.scheme.clone(), dx)
}

fn outputs(cfg: &ScenarioConfig) -> RunOutputs {
    RunOutputs { snapshots: cfg.output.snapshots, pgm: cfg.output.pgm.then_some(cfg.output.pgm_max) }
}

fn simulate(cfg: &ScenarioConfig, text: &str, out: &Path) -> Result<Written> {
    let scenario = cfg.build()?;
    info!("simulating {} to t = {}", cfg.name, scenario.simulation.params.end_time);
    let run = run_scenario(&scenario)?;
    let evac = evacuation_time(&run, cfg.output.evacuation_fraction)?;
    let prov = provenance(cfg, text);
    let mut files = write_run(out, &run, evac, &prov, outputs(cfg))?;
    let mut summary = format!(
        "{}: {} steps to t = {:.6}, mass {:.6} -> {:.6}",
        cfg.name,
        run.dts.len(),
        run.final_time,
        run.initial_mass,
        run.mass_trace.last().map_or(run.initial_mass, |m| m.1)
    );
    if let Some(t) = evac {
        summary.push_str(&format!(", evacuation time {t:.6}"));
    }
    if let Some(spec) = &cfg.cost {
        let j = cost_jt(&run, spec)?;
        #[derive(Serialize)]
        struct CostReport<'a> {
            provenance: &'a Provenance,
            horizon: f64,
            cost: f64,
        }
        let p = out.join("cost.json");
        write_json(&p, &CostReport { provenance: &prov, horizon: spec.horizon, cost: j })?;
        files.push(p);
        summary.push_str(&format!(", cost {j:.6e}"));
    }
    Ok((files, summary))
}

/// Exit times of the room with and without its obstacles.
#[derive(Debug, Clone, Serialize)]
pub struct BraessReport<'a> {
    pub provenance: &'a Provenance,
    pub evacuation_fraction: f64,
    pub open_exit_time: Option<f64>,
    pub obstacles_exit_time: Option<f64>,
    /// `open - obstacles`; positive when the obstacles help.
    pub difference: Option<f64>,
    pub obstacles_faster: bool,
    pub open_max_density: f64,
    pub obstacles_max_density: f64,
}

fn max_density(run: &RunResult) -> f64 {
    run.metrics.iter().flatten().map(|m| m.linf).fold(0.0, f64::max)
}

fn braess(cfg: &ScenarioConfig, text: &str, out: &Path) -> Result<Written> {
    if cfg.geometry.as_ref().is_none_or(|g| g.obstacles.is_empty()) {
        return Err(Error::Config("braess compares a room with obstacles against the same room without; no obstacles given".into()));
    }
    let with = cfg.build()?;
    let open = cfg.without_obstacles().build()?;
    info!("braess pair {}: open and obstructed runs", cfg.name);
    let (r_open, r_with) = rayon::join(|| run_scenario(&open), || run_scenario(&with));
    let (r_open, r_with) = (r_open?, r_with?);
    let theta = cfg.output.evacuation_fraction;
    let (t_open, t_with) = (evacuation_time(&r_open, theta)?, evacuation_time(&r_with, theta)?);
    let prov = provenance(cfg, text);
    let mut files = write_run(&out.join("open"), &r_open, t_open, &prov, outputs(cfg))?;
    files.extend(write_run(&out.join("obstacles"), &r_with, t_with, &prov, outputs(cfg))?);
    let difference = t_open.zip(t_with).map(|(a, b)| a - b);
    let report = BraessReport {
        provenance: &prov,
        evacuation_fraction: theta,
        open_exit_time: t_open,
        obstacles_exit_time: t_with,
        difference,
        obstacles_faster: difference.is_some_and(|d| d > 0.0),
        open_max_density: max_density(&r_open),
        obstacles_max_density: max_density(&r_with),
    };
    let p = out.join("braess.json");
    write_json(&p, &report)?;
    files.push(p);
    let fmt = |t: Option<f64>| t.map_or("not reached".to_string(), |t| format!("{t:.6}"));
    let summary = format!(
        "{}: exit time open {}, with obstacles {}; obstacles {}",
        cfg.name,
        fmt(t_open),
        fmt(t_with),
        if report.obstacles_faster { "faster" } else { "not faster" }
    );
    Ok((files, summary))
}

#[derive(Debug, Clone, Serialize)]
struct GateauxFile<'a> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    report: &'a GateauxReport,
}

fn gateaux(cfg: &ScenarioConfig, text: &str, out: &Path) -> Result<Written> {
    let g = cfg.gateaux.as_ref().ok_or_else(|| Error::config("missing [gateaux] table"))?;
    let scenario = cfg.build()?;
    let r0 = cfg.gateaux_direction(&scenario)?;
    info!("derivative check {} over {} perturbation sizes", cfg.name, g.hs.len());
    let report = gateaux_check(&scenario, &r0, &g.hs, g.horizon)?;
    let prov = provenance(cfg, text);
    let p = out.join("gateaux.json");
    write_json(&p, &GateauxFile { provenance: &prov, report: &report })?;
    let mut summary = format!("{}: {} steps to t = {}\n       h          e(h)\n", cfg.name, report.steps, report.horizon);
    for (h, e) in report.hs.iter().zip(&report.errors) {
        summary.push_str(&format!("{h:>10.4e}  {e:>12.4e}\n"));
    }
    summary.push_str(&format!("log-log slope {:.4}", report.slope));
    Ok((vec![p], summary))
}

/// Outcome of the reachable-set evolution and both verifiers.
#[derive(Debug, Clone, Serialize)]
pub struct ConfineReport<'a> {
    pub provenance: &'a Provenance,
    pub c: f64,
    pub initial_area: f64,
    pub confinement: Option<ConfinementReport>,
    pub confinement_verdict: Option<&'static str>,
    pub dispersal: Option<DispersalReport>,
    pub dispersal_verdict: Option<&'static str>,
    pub reach: Option<ReachSeries>,
    /// Why the evolution stopped early, if it did.
    pub abort: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReachSeries {
    pub t: Vec<f64>,
    pub area: Vec<f64>,
    pub max_radius: Vec<f64>,
    pub steps: usize,
}

fn confine(cfg: &ScenarioConfig, text: &str, out: &Path) -> Result<Written> {
    let k = cfg.confinement.as_ref().ok_or_else(|| Error::config("missing [confinement] table"))?;
    let grid = cfg.confinement_grid()?;
    let prov = provenance(cfg, text);
    let confinement = k
        .condition
        .as_ref()
        .map(|w| confinement_condition(&k.psi, k.c, w.radius, w.r_minus, w.r_plus, w.samples))
        .transpose()?;
    let initial_area = k.initial.area();
    let dispersal = k
        .dispersal
        .as_ref()
        .map(|w| dispersal_condition(&k.psi, k.c, initial_area, w.sigma_max, w.samples))
        .transpose()?;
    info!("reachable set {} to t = {}", cfg.name, k.horizon);
    let reach = reach_evolve(grid, &k.initial, &k.track, &k.psi, k.c, k.horizon, &k.params);
    let (series, abort) = match &reach {
        Ok(r) => (
            Some(ReachSeries {
                t: r.area_trace.iter().map(|p| p.0).collect(),
                area: r.area_trace.iter().map(|p| p.1).collect(),
                max_radius: r.extent_trace.iter().map(|p| p.1).collect(),
                steps: r.steps,
            }),
            None,
        ),
        Err(e) => (None, Some(e.to_string())),
    };
    let report = ConfineReport {
        provenance: &prov,
        c: k.c,
        initial_area,
        confinement_verdict: confinement.as_ref().map(|r| if r.holds { "holds" } else { "fails" }),
        confinement,
        dispersal_verdict: dispersal.as_ref().map(|r| match (r.holds, r.tail_nonnegative) {
            (true, true) => "holds",
            (true, false) => "holds on window",
            (false, _) => "fails",
        }),
        dispersal,
        reach: series,
        abort,
    };
    let mut files = vec![];
    if let Ok(r) = &reach {
        for (n, f) in r.frames.iter().enumerate() {
            let p = out.join(format!("reach_{n:04}.csv"));
            write_reach_frame(&p, f, &prov)?;
            files.push(p);
        }
    }
    let p = out.join("confine.json");
    write_json(&p, &report)?;
    files.push(p);
    let mut summary = format!("{}:", cfg.name);
    if let Some(v) = report.confinement_verdict {
        summary.push_str(&format!(" confinement {v} (margin {:.6e});", report.confinement.as_ref().unwrap().margin));
    }
    if let Some(v) = report.dispersal_verdict {
        summary.push_str(&format!(" dispersal {v} (margin {:.6e});", report.dispersal.as_ref().unwrap().margin));
    }
    if let Some(s) = &report.reach {
        summary.push_str(&format!(
            " area {:.4} -> {:.4}, max radius {:.4}",
            s.area[0],
            s.area.last().unwrap(),
            s.max_radius.iter().cloned().fold(0.0, f64::max)
        ));
    }
    reach?;
    Ok((files, summary))
}

/// Occupancy frame: `i,j,x,y,u,inside`.
fn write_reach_frame(path: &Path, f: &crate::confinement::ReachFrame, prov: &Provenance) -> Result<()> {
    use std::io::Write;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    for line in prov.header_lines() {
        writeln!(w, "{line}")?;
    }
    writeln!(w, "# t: {:.16e}", f.t)?;
    writeln!(w, "i,j,x,y,u,inside")?;
    let g = f.field.grid;
    for k in 0..g.len() {
        let (i, j) = g.cell(k);
        let c = g.center_of(k);
        writeln!(w, "{i},{j},{:.16e},{:.16e},{:.16e},{}", c[0], c[1], f.field.u[k], u8::from(f.field.inside(k)))?;
    }
    w.flush()?;
    Ok(())
}

