//! Averaging a density with the separable kernel, compared with the direct
//! double sum over the kernel support.
//!
//! `cargo run --release --example kernel`

use crowd::grid::{Grid2D, ScalarField};
use crowd::nonlocal::{build_kernel, convolve, convolve_direct, convolve_grad, KernelProfile};
use crowd::Result;

/// Largest difference between the fast and direct averages.
pub fn run_example() -> Result<f64> {
    let grid = Grid2D::square([0.0, 0.0], 0.05, 120, 80)?;
    let rho = ScalarField::from_fn(grid, |x| if (x[0] - 3.0).hypot(x[1] - 2.0) < 1.2 { 0.8 } else { 0.1 });
    let mut worst: f64 = 0.0;
    for normalized in [false, true] {
        let kernel = build_kernel(KernelProfile::Poly3, 0.6, normalized, &grid)?;
        let fast = convolve(&rho, &kernel)?;
        let direct = convolve_direct(&rho, &kernel)?;
        let diff = fast.values.iter().zip(&direct.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let grad = convolve_grad(&rho, &kernel)?;
        println!(
            "normalized = {normalized:5}: kernel mass {:.6}, max average {:.6}, max |grad| {:.4}, fast vs direct {diff:.2e}",
            kernel.mass(),
            fast.max(),
            grad.max_norm()
        );
        worst = worst.max(diff);
    }
    Ok(worst)
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
