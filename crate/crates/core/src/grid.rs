//! Uniform cell-centered grids, fields living on them, and room geometry.
//!
//! Cells are stored row-major: index `j * nx + i`, with `i` running along
//! the first coordinate. Every loop over cells in the crate follows this
//! order so that reductions are reproducible bit for bit.

use serde::Serialize;

use crate::error::{Error, Result};

/// Uniform 2D Cartesian grid of `nx * ny` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid2D {
    pub origin: [f64; 2],
    pub dx: f64,
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid2D {
    pub fn new(origin: [f64; 2], dx: f64, dy: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(dx > 0.0 && dy > 0.0) || !dx.is_finite() || !dy.is_finite() {
            return Err(Error::config(format!(
                "cell sizes must be positive, got dx = {dx}, dy = {dy}"
            )));
        }
        if nx == 0 || ny == 0 {
            return Err(Error::config(format!(
                "cell counts must be at least 1, got {nx} x {ny}"
            )));
        }
        if !origin.iter().all(|c| c.is_finite()) {
            return Err(Error::config("grid origin must be finite"));
        }
        Ok(Grid2D { origin, dx, dy, nx, ny })
    }

    /// Grid with square cells of side `h`.
    pub fn square(origin: [f64; 2], h: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::new(origin, h, h, nx, ny)
    }

    /// Smallest square-cell grid anchored at `bounds.min` that covers `bounds`.
    pub fn covering(bounds: &Rect, h: f64) -> Result<Self> {
        let w = bounds.max[0] - bounds.min[0];
        let l = bounds.max[1] - bounds.min[1];
        if !(w > 0.0 && l > 0.0) {
            return Err(Error::config(format!(
                "domain has zero area: [{}, {}] x [{}, {}]",
                bounds.min[0], bounds.max[0], bounds.min[1], bounds.max[1]
            )));
        }
        if !(h > 0.0) {
            return Err(Error::config(format!("grid spacing must be positive, got {h}")));
        }
        let nx = ((w / h) - 1e-9).ceil().max(1.0) as usize;
        let ny = ((l / h) - 1e-9).ceil().max(1.0) as usize;
        Self::square(bounds.min, h, nx, ny)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    #[inline]
    pub fn cell(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.dx,
            self.origin[1] + (j as f64 + 0.5) * self.dy,
        ]
    }

    #[inline]
    pub fn center_of(&self, idx: usize) -> [f64; 2] {
        let (i, j) = self.cell(idx);
        self.center(i, j)
    }

    /// Cell containing `p`, if any.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let fx = ((p[0] - self.origin[0]) / self.dx).floor();
        let fy = ((p[1] - self.origin[1]) / self.dy).floor();
        if fx < 0.0 || fy < 0.0 || !fx.is_finite() || !fy.is_finite() {
            return None;
        }
        let (i, j) = (fx as usize, fy as usize);
        (i < self.nx && j < self.ny).then_some((i, j))
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn is_square(&self) -> bool {
        self.dx == self.dy
    }

    /// Side of a square cell.
    ///
    /// Panics in debug builds if the cells are not square.
    #[inline]
    pub fn h(&self) -> f64 {
        debug_assert!(self.is_square());
        self.dx
    }

    pub fn bounds(&self) -> Rect {
        Rect {
            min: self.origin,
            max: [
                self.origin[0] + self.nx as f64 * self.dx,
                self.origin[1] + self.ny as f64 * self.dy,
            ],
        }
    }

    /// Same spacing and origin, possibly different extents.
    pub fn same_spacing(&self, other: &Grid2D) -> bool {
        self.dx == other.dx && self.dy == other.dy
    }

    pub(crate) fn check_same(&self, other: &Grid2D, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{what}: {}x{} (h = {}) vs {}x{} (h = {})",
                self.nx, self.ny, self.dx, other.nx, other.ny, other.dx
            )))
        }
    }
}

/// Closed axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { min: [x0.min(x1), y0.min(y1)], max: [x0.max(x1), y0.max(y1)] }
    }

    #[inline]
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }

    pub fn translated(&self, by: [f64; 2]) -> Self {
        Rect {
            min: [self.min[0] + by[0], self.min[1] + by[1]],
            max: [self.max[0] + by[0], self.max[1] + by[1]],
        }
    }
}

/// Closed disc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Disc {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Disc {
    #[inline]
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let (ex, ey) = (p[0] - self.center[0], p[1] - self.center[1]);
        ex * ex + ey * ey <= self.radius * self.radius
    }
}

/// Obstacle or region shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Shape {
    Rect(Rect),
    Disc(Disc),
}

impl Shape {
    #[inline]
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            Shape::Rect(r) => r.contains(p),
            Shape::Disc(d) => d.contains(p),
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Shape::Rect(r) => r.area(),
            Shape::Disc(d) => std::f64::consts::PI * d.radius * d.radius,
        }
    }

    pub fn translated(&self, by: [f64; 2]) -> Self {
        match self {
            Shape::Rect(r) => Shape::Rect(r.translated(by)),
            Shape::Disc(d) => Shape::Disc(Disc {
                center: [d.center[0] + by[0], d.center[1] + by[1]],
                radius: d.radius,
            }),
        }
    }
}

/// Per-cell scalar values.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid2D,
    pub values: Vec<f64>,
}

/// Cell-averaged crowd density of one population, people per square meter.
pub type DensityField = ScalarField;

impl ScalarField {
    pub fn zeros(grid: Grid2D) -> Self {
        ScalarField { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_fn(grid: Grid2D, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| f(grid.center_of(k))).collect();
        ScalarField { grid, values }
    }

    pub fn from_values(grid: Grid2D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Discrete integral, summed in storage order.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn scaled(&self, a: f64) -> Self {
        ScalarField { grid: self.grid, values: self.values.iter().map(|v| a * v).collect() }
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &ScalarField) -> Result<Self> {
        self.grid.check_same(&other.grid, "axpy")?;
        let values = self.values.iter().zip(&other.values).map(|(x, y)| x + a * y).collect();
        Ok(ScalarField { grid: self.grid, values })
    }

    /// Discrete L1 distance.
    pub fn l1_distance(&self, other: &ScalarField) -> Result<f64> {
        self.grid.check_same(&other.grid, "l1 distance")?;
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum();
        Ok(s * self.grid.cell_area())
    }

    /// Index of the first non-finite value.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }
}

/// Per-cell 2D vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub grid: Grid2D,
    pub values: Vec<[f64; 2]>,
}

impl VectorField {
    pub fn zeros(grid: Grid2D) -> Self {
        VectorField { grid, values: vec![[0.0, 0.0]; grid.len()] }
    }

    pub fn from_fn(grid: Grid2D, mut f: impl FnMut([f64; 2]) -> [f64; 2]) -> Self {
        let values = (0..grid.len()).map(|k| f(grid.center_of(k))).collect();
        VectorField { grid, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> [f64; 2] {
        self.values[self.grid.index(i, j)]
    }

    /// Largest Euclidean norm over all cells.
    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|v| norm(*v)).fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v[0].is_finite() && v[1].is_finite())
    }
}

#[inline]
pub(crate) fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Classification of a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CellClass {
    Free,
    Wall,
    Exit,
}

/// Side of the domain rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    West,
    East,
    South,
    North,
}

/// A door: the cells along one side of the domain whose tangential
/// coordinate lies in `[from, to]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exit {
    pub side: Side,
    pub from: f64,
    pub to: f64,
}

/// Room geometry rasterized on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomGeometry {
    pub grid: Grid2D,
    pub domain: Rect,
    pub classes: Vec<CellClass>,
    pub obstacles: Vec<Shape>,
    pub exits: Vec<Exit>,
}

impl RoomGeometry {
    #[inline]
    pub fn class(&self, idx: usize) -> CellClass {
        self.classes[idx]
    }

    #[inline]
    pub fn is_free(&self, idx: usize) -> bool {
        self.classes[idx] == CellClass::Free
    }

    pub fn count(&self, class: CellClass) -> usize {
        self.classes.iter().filter(|c| **c == class).count()
    }

    pub fn has_exit(&self) -> bool {
        self.classes.contains(&CellClass::Exit)
    }

    /// Zero `field` on every non-free cell.
    pub fn mask(&self, field: &mut ScalarField) {
        for (v, c) in field.values.iter_mut().zip(&self.classes) {
            if *c != CellClass::Free {
                *v = 0.0;
            }
        }
    }

    /// 4-neighbors of a cell, in the fixed order east, west, north, south.
    pub(crate) fn neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        neighbors4(&self.grid, idx)
    }
}

pub(crate) fn neighbors4(grid: &Grid2D, idx: usize) -> impl Iterator<Item = usize> {
    let (i, j) = grid.cell(idx);
    let (nx, ny) = (grid.nx, grid.ny);
    [
        (i + 1 < nx).then(|| idx + 1),
        (i > 0).then(|| idx - 1),
        (j + 1 < ny).then(|| idx + nx),
        (j > 0).then(|| idx - nx),
    ]
    .into_iter()
    .flatten()
}

/// Classify every cell of the grid covering `domain` at spacing `h`.
///
/// A cell is a wall iff its center lies in an obstacle or outside the
/// domain. Exit cells are the outermost in-domain cells along each exit's
/// side; an exit cell inside an obstacle is rejected.
pub fn rasterize_geometry(
    domain: Rect,
    obstacles: &[Shape],
    exits: &[Exit],
    h: f64,
) -> Result<RoomGeometry> {
    let grid = Grid2D::covering(&domain, h)?;
    let in_domain: Vec<bool> = (0..grid.len()).map(|k| domain.contains(grid.center_of(k))).collect();
    let mut classes: Vec<CellClass> = (0..grid.len())
        .map(|k| {
            let c = grid.center_of(k);
            if !in_domain[k] || obstacles.iter().any(|o| o.contains(c)) {
                CellClass::Wall
            } else {
                CellClass::Free
            }
        })
        .collect();

    for (n, exit) in exits.iter().enumerate() {
        if !(exit.from <= exit.to) {
            return Err(Error::config(format!("exit #{n}: empty interval [{}, {}]", exit.from, exit.to)));
        }
        let mut selected = 0usize;
        for k in 0..grid.len() {
            if !in_domain[k] {
                continue;
            }
            let (i, j) = grid.cell(k);
            let c = grid.center(i, j);
            // outermost in-domain cell along the side
            let (outer, tangential) = match exit.side {
                Side::East => (i + 1 == grid.nx || !in_domain[k + 1], c[1]),
                Side::West => (i == 0 || !in_domain[k - 1], c[1]),
                Side::North => (j + 1 == grid.ny || !in_domain[k + grid.nx], c[0]),
                Side::South => (j == 0 || !in_domain[k - grid.nx], c[0]),
            };
            if !outer || tangential < exit.from || tangential > exit.to {
                continue;
            }
            if obstacles.iter().any(|o| o.contains(c)) {
                return Err(Error::config(format!(
                    "exit #{n}: cell ({i}, {j}) at ({:.4}, {:.4}) lies inside a wall",
                    c[0], c[1]
                )));
            }
            classes[k] = CellClass::Exit;
            selected += 1;
        }
        if selected == 0 {
            return Err(Error::config(format!(
                "exit #{n} on the {:?} side selects no cell at h = {h}",
                exit.side
            )));
        }
    }

    let geometry = RoomGeometry {
        grid,
        domain,
        classes,
        obstacles: obstacles.to_vec(),
        exits: exits.to_vec(),
    };
    for k in 0..grid.len() {
        if geometry.classes[k] == CellClass::Exit
            && !geometry.neighbors(k).any(|n| geometry.classes[n] == CellClass::Free)
        {
            let (i, j) = grid.cell(k);
            return Err(Error::config(format!(
                "exit cell ({i}, {j}) is not adjacent to any free cell"
            )));
        }
    }
    Ok(geometry)
}

/// `level` on every cell whose center lies in `rect`, zero elsewhere.
pub fn indicator_datum(grid: Grid2D, rect: Rect, level: f64) -> Result<DensityField> {
    if !(level >= 0.0) || !level.is_finite() {
        return Err(Error::config(format!("datum level must be finite and >= 0, got {level}")));
    }
    Ok(ScalarField::from_fn(grid, |c| if rect.contains(c) { level } else { 0.0 }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_center_round_trip() {
        let g = Grid2D::square([-1.0, 2.0], 0.1, 37, 23).unwrap();
        for k in 0..g.len() {
            let (i, j) = g.cell(k);
            assert_eq!(g.index(i, j), k);
            assert_eq!(g.locate(g.center(i, j)), Some((i, j)));
        }
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(Grid2D::square([0.0, 0.0], 0.0, 4, 4).is_err());
        assert!(Grid2D::square([0.0, 0.0], 0.1, 0, 4).is_err());
        assert!(Grid2D::covering(&Rect::new(0.0, 0.0, 0.0, 1.0), 0.1).is_err());
    }

    #[test]
    fn empty_room_is_free() {
        let g = rasterize_geometry(Rect::new(0.0, 0.0, 2.0, 1.0), &[], &[], 0.1).unwrap();
        assert_eq!(g.count(CellClass::Free), g.grid.len());
        assert_eq!(g.grid.nx, 20);
        assert_eq!(g.grid.ny, 10);
    }

    #[test]
    fn full_cover_is_all_wall() {
        let dom = Rect::new(0.0, 0.0, 2.0, 1.0);
        let g = rasterize_geometry(dom, &[Shape::Rect(Rect::new(-1.0, -1.0, 3.0, 3.0))], &[], 0.1)
            .unwrap();
        assert_eq!(g.count(CellClass::Wall), g.grid.len());
    }

    #[test]
    fn exit_inside_wall_rejected() {
        let dom = Rect::new(0.0, 0.0, 2.0, 1.0);
        let obstacle = Shape::Rect(Rect::new(1.8, 0.0, 2.0, 1.0));
        let exit = Exit { side: Side::East, from: 0.4, to: 0.6 };
        assert!(rasterize_geometry(dom, &[obstacle], &[exit], 0.1).is_err());
    }

    #[test]
    fn exit_cells_on_the_side() {
        let dom = Rect::new(0.0, -1.0, 2.0, 1.0);
        let exit = Exit { side: Side::East, from: -0.2, to: 0.2 };
        let g = rasterize_geometry(dom, &[], &[exit], 0.1).unwrap();
        let exits: Vec<_> = (0..g.grid.len()).filter(|&k| g.class(k) == CellClass::Exit).collect();
        assert_eq!(exits.len(), 4);
        assert!(exits.iter().all(|&k| g.grid.cell(k).0 == g.grid.nx - 1));
    }

    #[test]
    fn zero_level_gives_zero_field() {
        let g = Grid2D::square([0.0, 0.0], 0.1, 10, 10).unwrap();
        let d = indicator_datum(g, Rect::new(0.2, 0.2, 0.8, 0.8), 0.0).unwrap();
        assert!(d.values.iter().all(|v| *v == 0.0));
        assert!(indicator_datum(g, Rect::new(0.2, 0.2, 0.8, 0.8), -1.0).is_err());
        let outside = indicator_datum(g, Rect::new(5.0, 5.0, 6.0, 6.0), 1.0).unwrap();
        assert_eq!(outside.max(), 0.0);
    }

    #[test]
    fn evacuation_datum_mass() {
        // 0.75 on [2,7]x[-2,2]: analytic mass 0.75 * 20 = 15.
        let h = 0.05;
        let g = Grid2D::covering(&Rect::new(0.0, -3.0, 10.0, 3.0), h).unwrap();
        let d = indicator_datum(g, Rect::new(2.0, -2.0, 7.0, 2.0), 0.75).unwrap();
        let layer = 0.75 * 18.0 * h;
        assert!((d.integral() - 15.0).abs() <= layer, "mass {}", d.integral());
    }
}
