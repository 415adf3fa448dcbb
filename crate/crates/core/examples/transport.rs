//! Accuracy of the finite-volume scheme: a smooth bump carried by a
//! constant velocity, compared with the exactly shifted profile.
//!
//! `cargo run --release --example transport`

use crowd::dynamics::Transport;
use crowd::grid::{rasterize_geometry, Rect, ScalarField, VectorField};
use crowd::solver::{fv_step, SweepOrder};
use crowd::Result;

fn bump(x: [f64; 2], c: [f64; 2]) -> f64 {
    let q = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)) / 0.36;
    if q < 1.0 {
        (1.0 - q).powi(3)
    } else {
        0.0
    }
}

/// L1 error at `t = 1` on a sequence of grids.
pub fn run_example(spacings: &[f64]) -> Result<Vec<(f64, f64)>> {
    let velocity = [1.0, 0.5];
    let t_end = 1.0;
    let mut out = Vec::new();
    for &h in spacings {
        let room = rasterize_geometry(Rect::new(0.0, 0.0, 4.0, 3.0), &[], &[], h)?;
        let g = room.grid;
        let transport = Transport::frozen(VectorField::from_fn(g, |_| velocity));
        let mut rho = ScalarField::from_fn(g, |x| bump(x, [1.2, 1.2]));
        let steps = (t_end / (0.4 * h)).ceil() as usize;
        let dt = t_end / steps as f64;
        for n in 0..steps {
            rho = fv_step(&rho, &transport, dt, &room, SweepOrder::for_step(n as u64))?.density;
        }
        let exact = ScalarField::from_fn(g, |x| bump(x, [1.2 + velocity[0] * t_end, 1.2 + velocity[1] * t_end]));
        let err = rho.l1_distance(&exact)?;
        println!("h = {h:.4}: L1 error {err:.4e}");
        out.push((h, err));
    }
    for w in out.windows(2) {
        println!("rate {:.3}", (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln());
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example(&[0.1, 0.05, 0.025, 0.0125]) {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
