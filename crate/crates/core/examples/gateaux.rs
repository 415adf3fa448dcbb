//! Differentiability in the initial datum: finite differences of the
//! scheme against its linearization, for the nonlocal speed model.
//!
//! `cargo run --release --example gateaux`

use crowd::config::parse_config;
use crowd::functionals::{gateaux_check, GateauxReport};
use crowd::Result;

const NONLINEAR: &str = include_str!("../scenarios/gateaux.toml");
const LINEAR: &str = include_str!("../scenarios/gateaux_linear.toml");

pub fn run_example() -> Result<(GateauxReport, GateauxReport)> {
    let mut reports = Vec::new();
    for text in [NONLINEAR, LINEAR] {
        let cfg = parse_config(text)?;
        let scenario = cfg.build()?;
        let r0 = cfg.gateaux_direction(&scenario)?;
        let g = cfg.gateaux.as_ref().expect("the bundled files have a [gateaux] table");
        let report = gateaux_check(&scenario, &r0, &g.hs, g.horizon)?;
        println!("{}:", cfg.name);
        for (h, e) in report.hs.iter().zip(&report.errors) {
            println!("  h = {h:<8} e(h) = {e:.4e}");
        }
        println!("  log-log slope {:.3}", report.slope);
        reports.push(report);
    }
    let linear = reports.pop().unwrap();
    Ok((reports.pop().unwrap(), linear))
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
