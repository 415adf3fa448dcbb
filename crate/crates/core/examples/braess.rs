//! Columns in front of a door can shorten the evacuation: the bundled room
//! is run with and without its four columns.
//!
//! `cargo run --release --example braess [dx]` (default 0.1; the bundled
//! file uses 0.05)

use crowd::config::{parse_config, Overrides};
use crowd::functionals::evacuation_time;
use crowd::{run_scenario, Result};

const ROOM: &str = include_str!("../scenarios/braess_columns.toml");

pub fn run_example(dx: f64) -> Result<(f64, f64)> {
    let cfg = parse_config(ROOM)?.with_overrides(&Overrides { dx: Some(dx), end_time: None })?;
    let with_columns = cfg.build()?;
    let open = cfg.without_obstacles().build()?;
    let (a, b) = rayon::join(|| run_scenario(&open), || run_scenario(&with_columns));
    let t_open = evacuation_time(&a?, 0.999)?.unwrap_or(f64::INFINITY);
    let t_columns = evacuation_time(&b?, 0.999)?.unwrap_or(f64::INFINITY);
    println!("dx = {dx}: exit time {t_open:.3} without columns, {t_columns:.3} with columns");
    Ok((t_open, t_columns))
}

#[allow(dead_code)]
fn main() {
    let dx = std::env::args().nth(1).map_or(0.1, |s| s.parse().expect("dx must be a number"));
    if let Err(e) = run_example(dx) {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
