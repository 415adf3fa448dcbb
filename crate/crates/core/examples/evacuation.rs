//! Evacuation of a room through one door, built directly from the library
//! types: rasterize, solve for shortest-path directions, integrate.
//!
//! `cargo run --release --example evacuation`

use crowd::dynamics::{AgentState, ModelKind, ModelSpec, SpeedLaw};
use crowd::functionals::evacuation_time;
use crowd::geometry::{geodesic_directions, solve_eikonal};
use crowd::grid::{indicator_datum, rasterize_geometry, Exit, Rect, Side};
use crowd::nonlocal::{build_kernel, KernelProfile};
use crowd::{run_scenario, Result, Scenario, SchemeParams, SimState, Simulation};

pub struct Evacuation {
    pub exit_time: f64,
    pub max_density: f64,
    pub mass_left: f64,
}

pub fn run_example() -> Result<Evacuation> {
    let h = 0.1;
    let door = Exit { side: Side::East, from: -0.5, to: 0.5 };
    let room = rasterize_geometry(Rect::new(0.0, -3.0, 10.0, 3.0), &[], &[door], h)?;
    let directions = geodesic_directions(&solve_eikonal(&room)?);

    let law = SpeedLaw::linear(6.0, 1.0)?;
    let kernel = build_kernel(KernelProfile::Poly3, 0.6, false, &room.grid)?;
    let model = ModelSpec::new(ModelKind::NonlocalRoute, law, Some(kernel))?.with_epsilon(0.2)?;

    let mut params = SchemeParams::new(0.45, 0.05, 40.0, 2.0)?;
    params.stop_at_evacuation = Some(0.999);
    let rho0 = indicator_datum(room.grid, Rect::new(2.0, -2.0, 7.0, 2.0), 0.75)?;
    let scenario = Scenario {
        name: "evacuation".into(),
        simulation: Simulation::new(model, vec![room], vec![directions], params)?,
        initial: SimState::new(vec![rho0], AgentState::none()),
    };

    let run = run_scenario(&scenario)?;
    for (s, m) in run.snapshots.iter().zip(&run.metrics) {
        println!("t = {:6.2}  mass = {:8.4}  max = {:.4}  tv = {:8.3}", s.t, m[0].mass, m[0].linf, m[0].tv);
    }
    let exit_time = evacuation_time(&run, 0.999)?.unwrap_or(f64::NAN);
    println!("99.9% of the crowd is out at t = {exit_time:.3} ({} steps)", run.dts.len());
    Ok(Evacuation {
        exit_time,
        max_density: run.metrics.iter().map(|m| m[0].linf).fold(0.0, f64::max),
        mass_left: run.mass_trace.last().map_or(f64::NAN, |m| m.1),
    })
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
