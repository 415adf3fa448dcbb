//! A leader walking a fixed route draws the crowd after it.
//!
//! `cargo run --release --example leader`

use crowd::config::parse_config;
use crowd::{run_scenario, Result};

const HALL: &str = include_str!("../scenarios/piper.toml");

/// Center of mass of the crowd and leader position at every snapshot.
pub fn run_example() -> Result<Vec<(f64, [f64; 2], [f64; 2])>> {
    let scenario = parse_config(HALL)?.build()?;
    let run = run_scenario(&scenario)?;
    let mut out = Vec::new();
    for s in &run.snapshots {
        let d = &s.densities[0];
        let (mut m, mut cx, mut cy) = (0.0, 0.0, 0.0);
        for (k, v) in d.values.iter().enumerate() {
            let x = d.grid.center_of(k);
            m += v;
            cx += v * x[0];
            cy += v * x[1];
        }
        let com = [cx / m, cy / m];
        println!("t = {:5.1}  leader ({:5.2}, {:5.2})  crowd center ({:5.2}, {:5.2})", s.t, s.agents[0][0], s.agents[0][1], com[0], com[1]);
        out.push((s.t, s.agents[0], com));
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
