//! Geodesic distance to the exits and the preferred-direction field.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use log::debug;

use crate::error::{Error, Result};
use crate::grid::{neighbors4, CellClass, Grid2D, RoomGeometry, VectorField};

/// Geodesic distance (meters) from every cell to the nearest exit,
/// travelling through free cells only. Unreachable cells hold `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub grid: Grid2D,
    pub d: Vec<f64>,
    pub classes: Vec<CellClass>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Trial {
    d: f64,
    idx: usize,
}

impl Eq for Trial {}

impl Ord for Trial {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, ties by index
        other.d.total_cmp(&self.d).then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Trial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// First-order fast marching for `|grad d| = 1` on the cells where
/// `passable` holds, starting from the given `(cell, value)` seeds.
///
/// Seeds are frozen; every other passable cell receives the upwind
/// solution; impassable or unreachable cells are `+inf`.
pub fn fast_march(grid: &Grid2D, passable: &[bool], seeds: &[(usize, f64)]) -> Vec<f64> {
    let h = grid.h();
    let n = grid.len();
    let mut d = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut seeded = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &(k, v) in seeds {
        seeded[k] = true;
        if v < d[k] {
            d[k] = v;
        }
    }
    for &(k, _) in seeds {
        heap.push(Trial { d: d[k], idx: k });
    }
    while let Some(Trial { d: dk, idx }) = heap.pop() {
        if done[idx] || dk > d[idx] {
            continue;
        }
        done[idx] = true;
        for nb in neighbors4(grid, idx) {
            if done[nb] || seeded[nb] || !passable[nb] {
                continue;
            }
            let cand = upwind_update(grid, &d, &done, nb, h);
            if cand < d[nb] {
                d[nb] = cand;
                heap.push(Trial { d: cand, idx: nb });
            }
        }
    }
    d
}

fn upwind_update(grid: &Grid2D, d: &[f64], done: &[bool], idx: usize, h: f64) -> f64 {
    let (i, j) = grid.cell(idx);
    let pick = |k: usize| if done[k] { d[k] } else { f64::INFINITY };
    let mut a = f64::INFINITY;
    if i > 0 {
        a = a.min(pick(idx - 1));
    }
    if i + 1 < grid.nx {
        a = a.min(pick(idx + 1));
    }
    let mut b = f64::INFINITY;
    if j > 0 {
        b = b.min(pick(idx - grid.nx));
    }
    if j + 1 < grid.ny {
        b = b.min(pick(idx + grid.nx));
    }
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if hi - lo >= h {
        lo + h
    } else {
        let diff = a - b;
        0.5 * (a + b + (2.0 * h * h - diff * diff).sqrt())
    }
}

/// Geodesic distance to the exit set, walls impassable.
pub fn solve_eikonal(geometry: &RoomGeometry) -> Result<DistanceField> {
    if !geometry.grid.is_square() {
        return Err(Error::config("the eikonal solver requires square cells"));
    }
    let seeds: Vec<(usize, f64)> = (0..geometry.grid.len())
        .filter(|&k| geometry.class(k) == CellClass::Exit)
        .map(|k| (k, 0.0))
        .collect();
    if seeds.is_empty() {
        return Err(Error::NoExit);
    }
    let passable: Vec<bool> = geometry.classes.iter().map(|c| *c != CellClass::Wall).collect();
    let d = fast_march(&geometry.grid, &passable, &seeds);
    Ok(DistanceField { grid: geometry.grid, d, classes: geometry.classes.clone() })
}

/// Unit preferred directions `-grad d / |grad d|`.
///
/// Central differences in the interior, one-sided next to walls. A
/// component pointing into an adjacent wall (or off the grid) is removed.
/// Where the resulting vector vanishes, the direction to the 4-neighbor of
/// steepest descent is used. Walls, exits and unreachable cells get zero.
pub fn geodesic_directions(dist: &DistanceField) -> VectorField {
    let g = dist.grid;
    let h = g.h();
    let usable = |k: usize| dist.classes[k] != CellClass::Wall && dist.d[k].is_finite();
    let mut out = VectorField::zeros(g);
    let mut degenerate = 0usize;
    for idx in 0..g.len() {
        if dist.classes[idx] != CellClass::Free || !dist.d[idx].is_finite() {
            continue;
        }
        let (i, j) = g.cell(idx);
        let east = (i + 1 < g.nx).then(|| idx + 1).filter(|&k| usable(k));
        let west = (i > 0).then(|| idx - 1).filter(|&k| usable(k));
        let north = (j + 1 < g.ny).then(|| idx + g.nx).filter(|&k| usable(k));
        let south = (j > 0).then(|| idx - g.nx).filter(|&k| usable(k));
        let diff = |plus: Option<usize>, minus: Option<usize>| match (plus, minus) {
            (Some(p), Some(m)) => (dist.d[p] - dist.d[m]) / (2.0 * h),
            (Some(p), None) => (dist.d[p] - dist.d[idx]) / h,
            (None, Some(m)) => (dist.d[idx] - dist.d[m]) / h,
            (None, None) => 0.0,
        };
        let mut v = [-diff(east, west), -diff(north, south)];
        if (v[0] > 0.0 && east.is_none()) || (v[0] < 0.0 && west.is_none()) {
            v[0] = 0.0;
        }
        if (v[1] > 0.0 && north.is_none()) || (v[1] < 0.0 && south.is_none()) {
            v[1] = 0.0;
        }
        let n = v[0].hypot(v[1]);
        if n > 0.0 {
            out.values[idx] = [v[0] / n, v[1] / n];
            continue;
        }
        // steepest descent among the 4-neighbors, fixed order E, W, N, S
        let mut best: Option<([f64; 2], f64)> = None;
        for (nb, dir) in [(east, [1.0, 0.0]), (west, [-1.0, 0.0]), (north, [0.0, 1.0]), (south, [0.0, -1.0])] {
            if let Some(k) = nb {
                let drop = dist.d[idx] - dist.d[k];
                if drop > 0.0 && best.map_or(true, |(_, b)| drop > b) {
                    best = Some((dir, drop));
                }
            }
        }
        match best {
            Some((dir, _)) => out.values[idx] = dir,
            None => degenerate += 1,
        }
    }
    if degenerate > 0 {
        debug!("geodesic directions: {degenerate} free cells without a descent direction");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{rasterize_geometry, Disc, Exit, Rect, Shape, Side};

    #[test]
    fn no_exit_is_an_error() {
        let g = rasterize_geometry(Rect::new(0.0, 0.0, 1.0, 1.0), &[], &[], 0.1).unwrap();
        assert!(matches!(solve_eikonal(&g), Err(Error::NoExit)));
    }

    #[test]
    fn exit_cells_are_zero_and_enclosed_cells_infinite() {
        let dom = Rect::new(0.0, 0.0, 4.0, 2.0);
        // a closed ring of wall around (1,1)
        let ring: Vec<Shape> = vec![
            Shape::Rect(Rect::new(0.4, 0.4, 1.6, 0.55)),
            Shape::Rect(Rect::new(0.4, 1.45, 1.6, 1.6)),
            Shape::Rect(Rect::new(0.4, 0.4, 0.55, 1.6)),
            Shape::Rect(Rect::new(1.45, 0.4, 1.6, 1.6)),
        ];
        let exit = Exit { side: Side::East, from: 0.8, to: 1.2 };
        let geo = rasterize_geometry(dom, &ring, &[exit], 0.1).unwrap();
        let df = solve_eikonal(&geo).unwrap();
        for k in 0..geo.grid.len() {
            if geo.class(k) == CellClass::Exit {
                assert_eq!(df.d[k], 0.0);
            }
        }
        let inside = geo.grid.locate([1.0, 1.0]).unwrap();
        assert!(df.d[geo.grid.index(inside.0, inside.1)].is_infinite());
        let dirs = geodesic_directions(&df);
        assert_eq!(dirs.at(inside.0, inside.1), [0.0, 0.0]);
    }

    #[test]
    fn east_exit_points_east() {
        let dom = Rect::new(0.0, -2.0, 4.0, 2.0);
        let exit = Exit { side: Side::East, from: -2.0, to: 2.0 };
        let geo = rasterize_geometry(dom, &[], &[exit], 0.1).unwrap();
        let dirs = geodesic_directions(&solve_eikonal(&geo).unwrap());
        for j in 2..geo.grid.ny - 2 {
            for i in 2..geo.grid.nx - 2 {
                let v = dirs.at(i, j);
                assert!((v[0] - 1.0).abs() < 1e-6 && v[1].abs() < 1e-6, "{v:?}");
            }
        }
    }

    #[test]
    fn directions_are_unit_or_zero() {
        let dom = Rect::new(0.0, 0.0, 5.0, 3.0);
        let exit = Exit { side: Side::East, from: 1.2, to: 1.8 };
        let obstacle = Shape::Disc(Disc { center: [3.5, 1.5], radius: 0.4 });
        let geo = rasterize_geometry(dom, &[obstacle], &[exit], 0.05).unwrap();
        let dirs = geodesic_directions(&solve_eikonal(&geo).unwrap());
        for (k, v) in dirs.values.iter().enumerate() {
            let n = v[0].hypot(v[1]);
            assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
            if geo.is_free(k) {
                assert!(n > 0.0, "free cell {k} without direction");
            }
        }
    }
}
