//! Compactly supported mollifiers and the discrete convolutions `rho * eta`
//! and `rho * grad eta`.
//!
//! Stencil weights are midpoint samples of the kernel times the cell area.
//! Density outside the grid counts as zero. Product-form kernels are
//! convolved as two 1D passes; other kernels use the full 2D stencil.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarField, VectorField};

/// Shape of the mollifier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum KernelProfile {
    /// `[1-(x1/r)^2]^3 [1-(x2/r)^2]^3` on `[-r,r]^2`.
    Poly3,
    /// Radial profile `eta(|x|)` tabulated at uniformly spaced radii from 0
    /// to `r`, linearly interpolated, zero beyond `r`.
    Tabulated(Vec<f64>),
}

#[derive(Debug, Clone)]
struct Separable {
    /// 1D profile samples at offsets `-m..=m`.
    p: Vec<f64>,
    /// Derivative samples at the same offsets.
    dp: Vec<f64>,
    /// Multiplier of `p(a) p(b)` in the 2D weights (includes the cell area).
    scale: f64,
    /// Multiplier of `p'(a) p(b)` in the gradient weights.
    grad_scale: f64,
}

/// Discrete mollifier on a square grid.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub radius: f64,
    pub profile: KernelProfile,
    pub normalized: bool,
    /// Grid spacing the stencil was built for.
    pub h: f64,
    /// Stencil half width `m`; the stencil is `(2m+1)^2`.
    pub half_width: usize,
    weights: Vec<f64>,
    grad_weights: [Vec<f64>; 2],
    separable: Option<Separable>,
}

#[inline]
fn poly3(u: f64, r: f64) -> f64 {
    let s = u / r;
    if s.abs() >= 1.0 {
        0.0
    } else {
        let q = 1.0 - s * s;
        q * q * q
    }
}

#[inline]
fn poly3_deriv(u: f64, r: f64) -> f64 {
    let s = u / r;
    if s.abs() >= 1.0 {
        0.0
    } else {
        let q = 1.0 - s * s;
        -6.0 * s * q * q / r
    }
}

fn tabulated(table: &[f64], r: f64, s: f64) -> (f64, f64) {
    if s >= r {
        return (0.0, 0.0);
    }
    let n = table.len() - 1;
    let step = r / n as f64;
    let x = s / step;
    let k = (x.floor() as usize).min(n - 1);
    let t = x - k as f64;
    let slope = (table[k + 1] - table[k]) / step;
    (table[k] + t * (table[k + 1] - table[k]), slope)
}

/// Build the discrete kernel for spacing `grid.dx`.
pub fn build_kernel(profile: KernelProfile, radius: f64, normalized: bool, grid: &Grid2D) -> Result<Kernel> {
    if !grid.is_square() {
        return Err(Error::config("convolution kernels require square cells (dx = dy)"));
    }
    let h = grid.dx;
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::config(format!("kernel radius must be positive, got {radius}")));
    }
    if radius < 2.0 * h {
        return Err(Error::config(format!(
            "kernel radius {radius} is under-resolved: it must be at least 2 dx = {}",
            2.0 * h
        )));
    }
    if let KernelProfile::Tabulated(t) = &profile {
        if t.len() < 2 || t.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("tabulated kernel needs at least 2 finite samples"));
        }
    }
    let m = ((radius / h) - 1e-12).ceil() as usize;
    let w = 2 * m + 1;
    let area = h * h;
    let offset = |a: usize| (a as f64 - m as f64) * h;

    let kernel = match &profile {
        KernelProfile::Poly3 => {
            let p: Vec<f64> = (0..w).map(|a| poly3(offset(a), radius)).collect();
            let dp: Vec<f64> = (0..w).map(|a| poly3_deriv(offset(a), radius)).collect();
            let mass_1d: f64 = p.iter().sum::<f64>() * h;
            let scale = if normalized { area / (mass_1d * mass_1d) } else { area };
            // first moment of p' matched to the mass of p: exact on linear densities
            let moment_1d: f64 = -(0..w).map(|a| offset(a) * dp[a]).sum::<f64>() * h;
            let grad_scale = scale * mass_1d / moment_1d;
            let mut weights = vec![0.0; w * w];
            let mut gx = vec![0.0; w * w];
            let mut gy = vec![0.0; w * w];
            for b in 0..w {
                for a in 0..w {
                    weights[b * w + a] = scale * (p[a] * p[b]);
                    gx[b * w + a] = grad_scale * (dp[a] * p[b]);
                    gy[b * w + a] = grad_scale * (p[a] * dp[b]);
                }
            }
            Kernel {
                radius,
                profile: profile.clone(),
                normalized,
                h,
                half_width: m,
                weights,
                grad_weights: [gx, gy],
                separable: Some(Separable { p, dp, scale, grad_scale }),
            }
        }
        KernelProfile::Tabulated(table) => {
            let mut weights = vec![0.0; w * w];
            let mut gx = vec![0.0; w * w];
            let mut gy = vec![0.0; w * w];
            for b in 0..w {
                for a in 0..w {
                    let (y1, y2) = (offset(a), offset(b));
                    let s = y1.hypot(y2);
                    let (eta, deta) = tabulated(table, radius, s);
                    weights[b * w + a] = eta * area;
                    if s > 0.0 {
                        gx[b * w + a] = deta * y1 / s * area;
                        gy[b * w + a] = deta * y2 / s * area;
                    }
                }
            }
            let mass: f64 = weights.iter().sum();
            if normalized {
                if !(mass > 0.0) {
                    return Err(Error::config("cannot normalize a kernel with non-positive mass"));
                }
                weights.iter_mut().for_each(|x| *x /= mass);
            }
            let target: f64 = weights.iter().sum();
            let moment: f64 = -(0..w * w).map(|k| offset(k % w) * gx[k]).sum::<f64>();
            if moment != 0.0 {
                let g = target / moment;
                gx.iter_mut().for_each(|x| *x *= g);
                gy.iter_mut().for_each(|x| *x *= g);
            }
            Kernel {
                radius,
                profile: profile.clone(),
                normalized,
                h,
                half_width: m,
                weights,
                grad_weights: [gx, gy],
                separable: None,
            }
        }
    };
    Ok(kernel)
}

impl Kernel {
    #[inline]
    fn width(&self) -> usize {
        2 * self.half_width + 1
    }

    /// Weight of the stencil entry at offset `(a, b)` cells, `|a|, |b| <= m`.
    pub fn weight(&self, a: isize, b: isize) -> f64 {
        self.entry(&self.weights, a, b)
    }

    /// Gradient weights `(d1 eta, d2 eta) * cell area` at offset `(a, b)`.
    pub fn grad_weight(&self, a: isize, b: isize) -> [f64; 2] {
        [self.entry(&self.grad_weights[0], a, b), self.entry(&self.grad_weights[1], a, b)]
    }

    fn entry(&self, table: &[f64], a: isize, b: isize) -> f64 {
        let m = self.half_width as isize;
        if a.abs() > m || b.abs() > m {
            return 0.0;
        }
        table[((b + m) as usize) * self.width() + (a + m) as usize]
    }

    /// Discrete integral of the kernel.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_separable(&self) -> bool {
        self.separable.is_some()
    }

    fn check(&self, grid: &Grid2D) -> Result<()> {
        if !grid.is_square() || grid.dx != self.h {
            return Err(Error::GridMismatch(format!(
                "kernel built for h = {}, field has dx = {}, dy = {}",
                self.h, grid.dx, grid.dy
            )));
        }
        Ok(())
    }
}

/// Direct stencil sum at one cell, sources visited row-major.
fn stencil_at(values: &[f64], grid: &Grid2D, kernel: &Kernel, table: &[f64], i: usize, j: usize) -> f64 {
    let m = kernel.half_width as isize;
    let w = kernel.width();
    let (i, j) = (i as isize, j as isize);
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let mut acc = 0.0;
    for l in (j - m).max(0)..=(j + m).min(ny - 1) {
        let b = j - l;
        let row = (l * nx) as usize;
        let trow = ((b + m) as usize) * w;
        for k in (i - m).max(0)..=(i + m).min(nx - 1) {
            let a = i - k;
            acc += values[row + k as usize] * table[trow + (a + m) as usize];
        }
    }
    acc
}

/// `(rho * eta)` at one cell by the direct stencil.
pub fn convolve_at(field: &ScalarField, kernel: &Kernel, i: usize, j: usize) -> Result<f64> {
    kernel.check(&field.grid)?;
    Ok(stencil_at(&field.values, &field.grid, kernel, &kernel.weights, i, j))
}

/// `(rho * grad eta)` at one cell by the direct stencil.
pub fn convolve_grad_at(field: &ScalarField, kernel: &Kernel, i: usize, j: usize) -> Result<[f64; 2]> {
    kernel.check(&field.grid)?;
    Ok([
        stencil_at(&field.values, &field.grid, kernel, &kernel.grad_weights[0], i, j),
        stencil_at(&field.values, &field.grid, kernel, &kernel.grad_weights[1], i, j),
    ])
}

fn direct(field: &ScalarField, kernel: &Kernel, table: &[f64]) -> Vec<f64> {
    let g = field.grid;
    let mut out = vec![0.0; g.len()];
    out.par_chunks_mut(g.nx).enumerate().for_each(|(j, row)| {
        for (i, o) in row.iter_mut().enumerate() {
            *o = stencil_at(&field.values, &g, kernel, table, i, j);
        }
    });
    out
}

/// `rho * eta` by the full 2D stencil, regardless of kernel structure.
pub fn convolve_direct(field: &ScalarField, kernel: &Kernel) -> Result<ScalarField> {
    kernel.check(&field.grid)?;
    Ok(ScalarField { grid: field.grid, values: direct(field, kernel, &kernel.weights) })
}

/// `rho * grad eta` by the full 2D stencil.
pub fn convolve_grad_direct(field: &ScalarField, kernel: &Kernel) -> Result<VectorField> {
    kernel.check(&field.grid)?;
    let gx = direct(field, kernel, &kernel.grad_weights[0]);
    let gy = direct(field, kernel, &kernel.grad_weights[1]);
    Ok(VectorField { grid: field.grid, values: gx.into_iter().zip(gy).map(|(a, b)| [a, b]).collect() })
}

/// Which rows of a row-major array contain a nonzero value.
fn nonzero_rows(values: &[f64], nx: usize) -> Vec<bool> {
    values.chunks(nx).map(|r| r.iter().any(|v| *v != 0.0)).collect()
}

/// `1` for an even filter, `-1` for an odd one, `0` otherwise.
fn parity(f: &[f64]) -> f64 {
    let w = f.len();
    if (0..w).all(|t| f[t] == f[w - 1 - t]) {
        1.0
    } else if (0..w).all(|t| f[t] == -f[w - 1 - t]) {
        -1.0
    } else {
        0.0
    }
}

/// 1D passes along the first coordinate, one output per filter:
/// `out[i] = sum_a src[i - a] f(a)`. Each tap is applied to a zero-padded
/// copy of the row as a shifted axpy, which vectorizes.
fn row_passes<const N: usize>(values: &[f64], grid: &Grid2D, filters: [&[f64]; N], live: &[bool]) -> [Vec<f64>; N] {
    let (nx, m) = (grid.nx, filters[0].len() / 2);
    let signs: [f64; N] = std::array::from_fn(|q| parity(filters[q]));
    let mut outs: [Vec<f64>; N] = std::array::from_fn(|_| vec![0.0; values.len()]);
    let mut rows: Vec<[&mut [f64]; N]> = Vec::with_capacity(grid.ny);
    {
        let mut iters: Vec<std::slice::ChunksMut<'_, f64>> = outs.iter_mut().map(|o| o.chunks_mut(nx)).collect();
        for _ in 0..grid.ny {
            rows.push(std::array::from_fn(|q| iters[q].next().expect("row count")));
        }
    }
    rows.into_par_iter().enumerate().for_each(|(j, mut out)| {
        if !live[j] {
            return;
        }
        let mut pad = vec![0.0; nx + 2 * m];
        pad[m..m + nx].copy_from_slice(&values[j * nx..(j + 1) * nx]);
        for ((f, o), sign) in filters.iter().zip(out.iter_mut()).zip(signs) {
            if sign == 0.0 {
                for (t, c) in f.iter().enumerate() {
                    let src = &pad[2 * m - t..2 * m - t + nx];
                    for (x, s) in o.iter_mut().zip(src) {
                        *x += c * s;
                    }
                }
                continue;
            }
            // taps t and 2m - t share a coefficient up to the sign
            for t in 0..m {
                let c = f[t];
                let a = &pad[2 * m - t..2 * m - t + nx];
                let b = &pad[t..t + nx];
                for ((x, u), v) in o.iter_mut().zip(a).zip(b) {
                    *x += c * (u + sign * v);
                }
            }
            let c = f[m];
            if c != 0.0 {
                for (x, s) in o.iter_mut().zip(&pad[m..m + nx]) {
                    *x += c * s;
                }
            }
        }
    });
    outs
}

/// 1D pass along the second coordinate, then multiplied by `scale`.
fn column_pass(values: &[f64], grid: &Grid2D, g: &[f64], live: &[bool], scale: f64) -> Vec<f64> {
    let (nx, ny, m) = (grid.nx, grid.ny, g.len() / 2);
    let sign = parity(g);
    let row_of = |l: isize| -> Option<&[f64]> {
        (l >= 0 && (l as usize) < ny && live[l as usize]).then(|| &values[l as usize * nx..(l as usize + 1) * nx])
    };
    let mut out = vec![0.0; values.len()];
    out.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
        let mut any = false;
        if sign == 0.0 {
            for t in 0..g.len() {
                if let Some(src) = row_of(j as isize + m as isize - t as isize) {
                    any = true;
                    for (o, s) in row.iter_mut().zip(src) {
                        *o += s * g[t];
                    }
                }
            }
        } else {
            // rows j + m - t and j - m + t share a coefficient up to the sign
            for t in 0..=m {
                let c = g[t];
                let upper = row_of(j as isize + m as isize - t as isize);
                let lower = if t < m { row_of(j as isize - m as isize + t as isize) } else { None };
                match (upper, lower) {
                    (Some(a), Some(b)) => {
                        for ((o, u), v) in row.iter_mut().zip(a).zip(b) {
                            *o += c * (u + sign * v);
                        }
                    }
                    (Some(a), None) => {
                        for (o, u) in row.iter_mut().zip(a) {
                            *o += c * u;
                        }
                    }
                    (None, Some(b)) => {
                        let c = sign * c;
                        for (o, v) in row.iter_mut().zip(b) {
                            *o += c * v;
                        }
                    }
                    (None, None) => continue,
                }
                any = true;
            }
        }
        if any {
            row.iter_mut().for_each(|o| *o *= scale);
        }
    });
    out
}

/// `rho * eta` on every cell.
pub fn convolve(field: &ScalarField, kernel: &Kernel) -> Result<ScalarField> {
    kernel.check(&field.grid)?;
    let Some(sep) = &kernel.separable else {
        return convolve_direct(field, kernel);
    };
    let g = field.grid;
    let live = nonzero_rows(&field.values, g.nx);
    let [rows] = row_passes(&field.values, &g, [&sep.p], &live);
    let values = column_pass(&rows, &g, &sep.p, &live, sep.scale);
    Ok(ScalarField { grid: g, values })
}

/// `rho * grad eta` on every cell, i.e. the gradient of the averaged density.
pub fn convolve_grad(field: &ScalarField, kernel: &Kernel) -> Result<VectorField> {
    kernel.check(&field.grid)?;
    let Some(sep) = &kernel.separable else {
        return convolve_grad_direct(field, kernel);
    };
    let g = field.grid;
    let live = nonzero_rows(&field.values, g.nx);
    let [rows_p, rows_dp] = row_passes(&field.values, &g, [&sep.p, &sep.dp], &live);
    let gx = column_pass(&rows_dp, &g, &sep.p, &live, sep.grad_scale);
    let gy = column_pass(&rows_p, &g, &sep.dp, &live, sep.grad_scale);
    Ok(VectorField { grid: g, values: gx.into_iter().zip(gy).map(|(a, b)| [a, b]).collect() })
}
