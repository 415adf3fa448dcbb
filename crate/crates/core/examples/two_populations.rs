//! Two groups with different doors share a room; speed depends on the
//! averaged total density. Also evaluates a congestion cost near one door.
//!
//! `cargo run --release --example two_populations`

use crowd::config::{parse_config, Overrides};
use crowd::functionals::cost_jt;
use crowd::{run_scenario, Result};

const ROOM: &str = include_str!("../scenarios/panic.toml");

pub struct Outcome {
    pub final_masses: Vec<f64>,
    pub cost: f64,
    pub outflow: f64,
    pub initial_mass: f64,
}

pub fn run_example(dx: f64) -> Result<Outcome> {
    let cfg = parse_config(ROOM)?.with_overrides(&Overrides { dx: Some(dx), end_time: None })?;
    let run = run_scenario(&cfg.build()?)?;
    for (s, m) in run.snapshots.iter().zip(&run.metrics) {
        println!("t = {:5.2}  group 1 mass {:.4}  group 2 mass {:.4}", s.t, m[0].mass, m[1].mass);
    }
    let cost = cost_jt(&run, cfg.cost.as_ref().expect("the bundled file has a cost"))?;
    println!("congestion cost near the east door: {cost:.4}");
    Ok(Outcome {
        final_masses: run.metrics.last().unwrap().iter().map(|m| m.mass).collect(),
        cost,
        outflow: run.outflow,
        initial_mass: run.initial_mass,
    })
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example(0.1) {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
