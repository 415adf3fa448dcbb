//! Without attraction the population cannot be confined: the area
//! condition holds and the reachable set keeps growing.
//!
//! `cargo run --release --example dispersal`

use crowd::confinement::{dispersal_condition, orbit_strategy, reach_evolve, DispersalReport, PsiProfile, ReachParams};
use crowd::grid::{Disc, Grid2D, Rect, Shape};
use crowd::Result;

/// Condition report and `(t, area)` of the reachable set.
pub fn run_example(h: f64) -> Result<Vec<(DispersalReport, Vec<(f64, f64)>)>> {
    let k0 = Shape::Disc(Disc { center: [0.0, 0.0], radius: 1.0 });
    let grid = Grid2D::covering(&Rect::new(-5.0, -5.0, 5.0, 5.0), h)?;
    let track = orbit_strategy(1.0, 1.0, 0.0)?;
    let mut out = Vec::new();
    for psi in [PsiProfile::Constant(0.0), PsiProfile::ScaledExp { a: 1.0 }] {
        let report = dispersal_condition(&psi, 1.0, k0.area(), 60.0, 4000)?;
        let reach = reach_evolve(grid, &k0, &track, &psi, 1.0, 2.0, &ReachParams::default())?;
        let areas: Vec<(f64, f64)> = reach.frames.iter().map(|f| (f.t, f.area)).collect();
        println!("{psi:?}: condition holds {}, margin {:.4}, tail nonnegative {}", report.holds, report.margin, report.tail_nonnegative);
        for (t, a) in &areas {
            println!("  t = {t:4.2}  area {a:8.4}  pi (1 + t)^2 = {:8.4}", std::f64::consts::PI * (1.0 + t).powi(2));
        }
        out.push((report, areas));
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example(0.05) {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
