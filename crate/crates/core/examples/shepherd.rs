//! Two dogs circle a flock that walks toward a door; each dog moves along
//! the level lines of the averaged density. A dog's repulsion clears the
//! crowd around it, the averaged density flattens there, and the dog comes
//! to rest once the flock has moved past.
//!
//! `cargo run --release --example shepherd`

use crowd::config::{parse_config, Overrides};
use crowd::{run_scenario, Result, RunResult};

const FIELD: &str = include_str!("../scenarios/shepherd.toml");

pub fn run_example(end_time: f64) -> Result<RunResult> {
    let cfg = parse_config(FIELD)?.with_overrides(&Overrides { dx: None, end_time: Some(end_time) })?;
    let run = run_scenario(&cfg.build()?)?;
    for (t, dogs) in run.agent_track.iter().step_by(40) {
        let p: Vec<String> = dogs.iter().map(|p| format!("({:5.2}, {:5.2})", p[0], p[1])).collect();
        println!("t = {t:6.3}  dogs {}", p.join(" "));
    }
    let (first, last) = (&run.agent_track[0].1, &run.agent_track.last().unwrap().1);
    for (a, b) in first.iter().zip(last) {
        println!("dog moved {:.3}", (b[0] - a[0]).hypot(b[1] - a[1]));
    }
    println!("mass {:.4} -> {:.4}", run.initial_mass, run.mass_trace.last().unwrap().1);
    Ok(run)
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example(15.0) {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
