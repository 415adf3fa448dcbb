//! An agent orbiting the origin keeps an attracted population bounded:
//! the orbit-average condition and the reachable set computed by level sets.
//!
//! `cargo run --release --example confinement`

use crowd::confinement::{confinement_condition, orbit_strategy, reach_evolve, ConfinementReport, PsiProfile, ReachParams};
use crowd::grid::{Disc, Grid2D, Rect, Shape};
use crowd::Result;

/// Condition report and the largest distance from the origin reached.
pub fn run_example(h: f64, horizon: f64) -> Result<(ConfinementReport, f64)> {
    let psi = PsiProfile::Constant(-1.0);
    let c = 0.5;
    let report = confinement_condition(&psi, c, 1.0, 0.6, 2.0, 400)?;
    println!("condition holds: {}, margin {:.6}", report.holds, report.margin);

    let grid = Grid2D::covering(&Rect::new(-3.0, -3.0, 3.0, 3.0), h)?;
    let k0 = Shape::Disc(Disc { center: [0.0, 0.0], radius: 0.6 });
    let track = orbit_strategy(1.0, 1.0, 0.0)?;
    let reach = reach_evolve(grid, &k0, &track, &psi, c, horizon, &ReachParams::default())?;
    for f in reach.frames.iter().step_by(4) {
        println!("t = {:5.2}  area {:.4}  max |x| {:.4}", f.t, f.area, f.field.max_radius([0.0, 0.0]));
    }
    let extent = reach.extent_trace.iter().map(|e| e.1).fold(0.0, f64::max);
    println!("largest |x| over the run: {extent:.4}");
    Ok((report, extent))
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example(0.05, 20.0) {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
