//! Shortest-path distance to a door around an obstacle, and the unit
//! direction field derived from it.
//!
//! `cargo run --release --example geodesic`

use crowd::geometry::{geodesic_directions, solve_eikonal, DistanceField};
use crowd::grid::{rasterize_geometry, Exit, Rect, Shape, Side};
use crowd::Result;

pub fn run_example() -> Result<DistanceField> {
    let wall = Shape::Rect(Rect::new(4.0, 1.0, 4.5, 6.0));
    let door = Exit { side: Side::East, from: 2.5, to: 3.5 };
    let room = rasterize_geometry(Rect::new(0.0, 0.0, 8.0, 6.0), &[wall], &[door], 0.1)?;
    let dist = solve_eikonal(&room)?;
    let dirs = geodesic_directions(&dist);
    for &(i, j) in &[(10, 30), (10, 55), (30, 5), (60, 30), (79, 30)] {
        let k = room.grid.index(i, j);
        let x = room.grid.center_of(k);
        let n = dirs.values[k];
        println!("({:4.2}, {:4.2}): distance {:6.3}, direction ({:+.3}, {:+.3})", x[0], x[1], dist.d[k], n[0], n[1]);
    }
    Ok(dist)
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
