//! Independent reference computations shared by the oracle tests and the
//! acceptance run. Each `check_*` returns a one-line summary or the first
//! discrepancy found.
#![allow(dead_code)]

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use crowd::config::parse_config;
use crowd::confinement::{
    confinement_condition, orbit_strategy, reach_evolve, rearrange, AgentTrack, PsiProfile, ReachParams,
};
use crowd::geometry::solve_eikonal;
use crowd::grid::{rasterize_geometry, CellClass, Disc, Exit, Grid2D, Rect, ScalarField, Shape, Side};
use crowd::nonlocal::{build_kernel, convolve, convolve_direct, convolve_grad, Kernel, KernelProfile};

fn wavy(grid: Grid2D) -> ScalarField {
    ScalarField::from_fn(grid, |x| {
        let bump = if (x[0] - 2.0).hypot(x[1] - 1.5) < 1.0 { 0.6 } else { 0.0 };
        bump + 0.3 * (1.7 * x[0]).sin().abs() * (0.9 * x[1]).cos().abs()
    })
}

fn poly3(u: f64, r: f64) -> f64 {
    let s = u / r;
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - s * s).powi(3)
    }
}

/// Stencil weights from the kernel formula: `h^2 eta(a h, b h)`, rescaled
/// to unit sum when normalized.
fn reference_weights(r: f64, h: f64, normalized: bool) -> (isize, Vec<f64>) {
    let m = (r / h).ceil() as isize;
    let mut w = Vec::new();
    for b in -m..=m {
        for a in -m..=m {
            w.push(h * h * poly3(a as f64 * h, r) * poly3(b as f64 * h, r));
        }
    }
    if normalized {
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
    }
    (m, w)
}

/// Zero-padded double sum over the stencil.
fn double_sum(rho: &ScalarField, m: isize, w: &[f64]) -> Vec<f64> {
    let g = rho.grid;
    let n = 2 * m + 1;
    let mut out = vec![0.0; g.len()];
    for j in 0..g.ny as isize {
        for i in 0..g.nx as isize {
            let mut acc = 0.0;
            for b in -m..=m {
                for a in -m..=m {
                    let (p, q) = (i - a, j - b);
                    if p >= 0 && q >= 0 && p < g.nx as isize && q < g.ny as isize {
                        acc += rho.at(p as usize, q as usize) * w[((b + m) * n + a + m) as usize];
                    }
                }
            }
            out[g.index(i as usize, j as usize)] = acc;
        }
    }
    out
}

/// Rounding-level agreement: `|a - b| <= 64 eps sum|w| max|rho|`.
fn rounding_close(a: &[f64], b: &[f64], scale: f64) -> Result<f64, String> {
    let tol = 64.0 * f64::EPSILON * scale;
    let mut worst: f64 = 0.0;
    for (k, (x, y)) in a.iter().zip(b).enumerate() {
        ensure!((x - y).abs() <= tol, "cell {k}: {x} vs {y}, tol {tol:e}");
        worst = worst.max((x - y).abs());
    }
    Ok(worst)
}

pub fn check_convolution_matches_double_sum() -> Result<String, String> {
    let grid = Grid2D::square([0.0, 0.0], 0.05, 90, 70).map_err(|e| e.to_string())?;
    let rho = wavy(grid);
    let mut worst: f64 = 0.0;
    for normalized in [false, true] {
        let kernel = build_kernel(KernelProfile::Poly3, 0.6, normalized, &grid).map_err(|e| e.to_string())?;
        let (m, w) = reference_weights(0.6, 0.05, normalized);
        ensure!(m as usize == kernel.half_width, "stencil half width {} vs {m}", kernel.half_width);
        let scale = w.iter().map(|v| v.abs()).sum::<f64>() * rho.max();
        let oracle = double_sum(&rho, m, &w);
        worst = worst.max(rounding_close(&convolve(&rho, &kernel).map_err(|e| e.to_string())?.values, &oracle, scale)?);
        worst = worst.max(rounding_close(&convolve_direct(&rho, &kernel).map_err(|e| e.to_string())?.values, &oracle, scale)?);
    }
    Ok(format!("averages differ by at most {worst:.1e}"))
}

fn gradient_double_sum(rho: &ScalarField, kernel: &Kernel) -> Vec<[f64; 2]> {
    let g = rho.grid;
    let m = kernel.half_width as isize;
    let mut out = vec![[0.0, 0.0]; g.len()];
    for j in 0..g.ny as isize {
        for i in 0..g.nx as isize {
            let mut acc = [0.0, 0.0];
            for b in -m..=m {
                for a in -m..=m {
                    let (p, q) = (i - a, j - b);
                    if p >= 0 && q >= 0 && p < g.nx as isize && q < g.ny as isize {
                        let w = kernel.grad_weight(a, b);
                        let v = rho.at(p as usize, q as usize);
                        acc[0] += v * w[0];
                        acc[1] += v * w[1];
                    }
                }
            }
            out[g.index(i as usize, j as usize)] = acc;
        }
    }
    out
}

pub fn check_gradient_convolution_matches_double_sum() -> Result<String, String> {
    let grid = Grid2D::square([0.0, 0.0], 0.05, 80, 60).map_err(|e| e.to_string())?;
    let rho = wavy(grid);
    let kernel = build_kernel(KernelProfile::Poly3, 0.5, false, &grid).map_err(|e| e.to_string())?;
    let oracle = gradient_double_sum(&rho, &kernel);
    let m = kernel.half_width as isize;
    let scale = (-m..=m)
        .flat_map(|b| (-m..=m).map(move |a| (a, b)))
        .map(|(a, b)| kernel.grad_weight(a, b)[0].abs().max(kernel.grad_weight(a, b)[1].abs()))
        .sum::<f64>()
        * rho.max();
    let fast = convolve_grad(&rho, &kernel).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for c in 0..2 {
        let a: Vec<f64> = fast.values.iter().map(|v| v[c]).collect();
        let b: Vec<f64> = oracle.iter().map(|v| v[c]).collect();
        worst = worst.max(rounding_close(&a, &b, scale)?);
    }
    Ok(format!("gradients differ by at most {worst:.1e}"))
}

pub fn check_tabulated_radial_kernel_matches_double_sum() -> Result<String, String> {
    let grid = Grid2D::square([0.0, 0.0], 0.1, 40, 30).map_err(|e| e.to_string())?;
    let rho = wavy(grid);
    let samples = vec![1.0, 0.9, 0.6, 0.3, 0.0];
    let kernel = build_kernel(KernelProfile::Tabulated(samples.clone()), 0.45, false, &grid).map_err(|e| e.to_string())?;
    let m = kernel.half_width as isize;
    let eta = |d: f64| {
        let s = d / 0.45 * (samples.len() - 1) as f64;
        if s >= (samples.len() - 1) as f64 {
            return 0.0;
        }
        let k = s.floor() as usize;
        samples[k] + (s - k as f64) * (samples[k + 1] - samples[k])
    };
    let mut w = Vec::new();
    for b in -m..=m {
        for a in -m..=m {
            w.push(0.01 * eta(0.1 * (a as f64).hypot(b as f64)));
        }
    }
    let oracle = double_sum(&rho, m, &w);
    let scale = w.iter().sum::<f64>() * rho.max();
    let worst = rounding_close(&convolve(&rho, &kernel).map_err(|e| e.to_string())?.values, &oracle, scale)?;
    Ok(format!("radial kernel averages differ by at most {worst:.1e}"))
}

#[derive(PartialEq)]
struct Node(f64, usize);

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest paths between cell centers with moves to the 16 neighbors
/// `(1,0), (1,1), (2,1)` and their symmetric images; a move is allowed
/// when every cell its segment crosses is passable.
fn dijkstra16(grid: &Grid2D, passable: &[bool], seeds: &[usize]) -> Vec<f64> {
    let h = grid.h();
    let mut moves = Vec::new();
    for (a, b) in [(1, 0), (1, 1), (2, 1), (1, 2)] {
        for (sa, sb) in [(1, 1), (-1, 1), (1, -1), (-1, -1)] {
            let m = (a * sa, b * sb);
            if !moves.contains(&m) {
                moves.push(m);
            }
            let r = (-m.1, m.0);
            if !moves.contains(&r) {
                moves.push(r);
            }
        }
    }
    debug_assert_eq!(moves.len(), 16);
    let mut d = vec![f64::INFINITY; grid.len()];
    let mut heap = BinaryHeap::new();
    for &s in seeds {
        d[s] = 0.0;
        heap.push(Node(0.0, s));
    }
    while let Some(Node(dk, k)) = heap.pop() {
        if dk > d[k] {
            continue;
        }
        let (i, j) = grid.cell(k);
        for &(a, b) in &moves {
            let (p, q) = (i as isize + a, j as isize + b);
            if p < 0 || q < 0 || p >= grid.nx as isize || q >= grid.ny as isize {
                continue;
            }
            // cells crossed by the segment, sampled finely
            let clear = (1..=8).all(|s| {
                let f = s as f64 / 8.0;
                let x = i as f64 + f * a as f64;
                let y = j as f64 + f * b as f64;
                passable[grid.index(x.round() as usize, y.round() as usize)]
            });
            if !clear {
                continue;
            }
            let nb = grid.index(p as usize, q as usize);
            let cand = dk + h * (a as f64).hypot(b as f64);
            if cand < d[nb] {
                d[nb] = cand;
                heap.push(Node(cand, nb));
            }
        }
    }
    d
}

pub fn check_eikonal_matches_graph_shortest_paths() -> Result<String, String> {
    let h = 0.05;
    let obstacles = [
        Shape::Rect(Rect::new(3.0, 1.0, 3.5, 5.0)),
        Shape::Disc(Disc { center: [6.0, 2.0], radius: 0.8 }),
    ];
    let exits = [Exit { side: Side::East, from: 2.5, to: 3.5 }, Exit { side: Side::South, from: 1.0, to: 1.5 }];
    let room = rasterize_geometry(Rect::new(0.0, 0.0, 8.0, 6.0), &obstacles, &exits, h).map_err(|e| e.to_string())?;
    let dist = solve_eikonal(&room).map_err(|e| e.to_string())?;
    let passable: Vec<bool> = room.classes.iter().map(|c| *c != CellClass::Wall).collect();
    let seeds: Vec<usize> = (0..room.grid.len()).filter(|&k| room.class(k) == CellClass::Exit).collect();
    let oracle = dijkstra16(&room.grid, &passable, &seeds);
    let mut worst: f64 = 0.0;
    let mut worst_share: f64 = 0.0;
    let mut checked = 0;
    for k in 0..room.grid.len() {
        if room.class(k) != CellClass::Free {
            continue;
        }
        ensure!(dist.d[k].is_finite() == oracle[k].is_finite(), "reachability differs at cell {k}");
        if oracle[k].is_finite() {
            let err = (dist.d[k] - oracle[k]).abs();
            ensure!(err <= 2.0 * h + 0.05 * oracle[k], "cell {k}: {} vs {}", dist.d[k], oracle[k]);
            worst = worst.max(err);
            worst_share = worst_share.max(err / (2.0 * h + 0.05 * oracle[k]));
            checked += 1;
        }
    }
    ensure!(checked > 15_000, "only {checked} cells compared");
    Ok(format!(
        "largest distance deviation {worst:.4} over {checked} cells, at most {:.0}% of the 2dx + 5% allowance",
        100.0 * worst_share
    ))
}

/// `x' = f(x, t) + c n` with the outward normal carried along
/// `n' = -(Df)^T n + (n . (Df)^T n) n`; every endpoint is reachable and
/// the boundary of the reachable set is covered by endpoints.
fn characteristic_cloud(a: f64, c: f64, k0_radius: f64, track: &AgentTrack, horizon: f64, count: usize) -> Vec<[f64; 2]> {
    let rhs = |t: f64, s: [f64; 4]| -> [f64; 4] {
        let (x, n) = ([s[0], s[1]], [s[2], s[3]]);
        let mut f = [0.0, 0.0];
        let mut jac = [[0.0; 2]; 2];
        for p in track.positions(t) {
            let e = [x[0] - p[0], x[1] - p[1]];
            let r = e[0].hypot(e[1]);
            let psi = a * (-r).exp();
            f[0] += psi * e[0];
            f[1] += psi * e[1];
            // D(psi(r) e) = psi I + psi'(r) e e^T / r
            let dpsi_over_r = if r > 0.0 { -psi / r } else { 0.0 };
            for (u, row) in jac.iter_mut().enumerate() {
                for (v, entry) in row.iter_mut().enumerate() {
                    *entry += if u == v { psi } else { 0.0 } + dpsi_over_r * e[u] * e[v];
                }
            }
        }
        let jtn = [jac[0][0] * n[0] + jac[1][0] * n[1], jac[0][1] * n[0] + jac[1][1] * n[1]];
        let proj = n[0] * jtn[0] + n[1] * jtn[1];
        [f[0] + c * n[0], f[1] + c * n[1], -jtn[0] + proj * n[0], -jtn[1] + proj * n[1]]
    };
    let steps = 2000;
    let dt = horizon / steps as f64;
    (0..count)
        .map(|k| {
            let th = 2.0 * PI * k as f64 / count as f64;
            let mut s = [k0_radius * th.cos(), k0_radius * th.sin(), th.cos(), th.sin()];
            let mut t = 0.0;
            for _ in 0..steps {
                let add = |s: [f64; 4], k: [f64; 4], w: f64| [s[0] + w * k[0], s[1] + w * k[1], s[2] + w * k[2], s[3] + w * k[3]];
                let k1 = rhs(t, s);
                let k2 = rhs(t + 0.5 * dt, add(s, k1, 0.5 * dt));
                let k3 = rhs(t + 0.5 * dt, add(s, k2, 0.5 * dt));
                let k4 = rhs(t + dt, add(s, k3, dt));
                for q in 0..4 {
                    s[q] += dt / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
                }
                t += dt;
            }
            [s[0], s[1]]
        })
        .collect()
}

pub fn check_reachable_set_matches_characteristic_cloud() -> Result<String, String> {
    let h = 0.1;
    let (a, c, horizon) = (1.0, 0.5, 1.5);
    let grid = Grid2D::covering(&Rect::new(-4.0, -4.0, 4.0, 4.0), h).map_err(|e| e.to_string())?;
    let track = orbit_strategy(1.0, 1.0, 0.0).map_err(|e| e.to_string())?;
    let k0 = Shape::Disc(Disc { center: [0.0, 0.0], radius: 1.0 });
    let reach = reach_evolve(grid, &k0, &track, &PsiProfile::ScaledExp { a }, c, horizon, &ReachParams::default()).map_err(|e| e.to_string())?;
    let field = &reach.frames.last().ok_or("no frames")?.field;
    let cloud = characteristic_cloud(a, c, 1.0, &track, horizon, 4000);

    let occupied = field.occupied_centers();
    let boundary: Vec<[f64; 2]> = (0..grid.len())
        .filter(|&k| field.inside(k))
        .filter(|&k| {
            let (i, j) = grid.cell(k);
            [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)].iter().any(|&(p, q)| !field.inside(grid.index(p, q)))
        })
        .map(|k| grid.center_of(k))
        .collect();
    // the mask is a union of closed cells, so distances are to cell squares
    let to_square = |p: [f64; 2], c: [f64; 2]| {
        ((p[0] - c[0]).abs() - 0.5 * h).max(0.0).hypot(((p[1] - c[1]).abs() - 0.5 * h).max(0.0))
    };
    let nearest = |p: [f64; 2], cells: &[[f64; 2]]| cells.iter().map(|c| to_square(p, *c)).fold(f64::INFINITY, f64::min);
    let cloud_to_set = cloud.iter().map(|p| nearest(*p, &occupied)).fold(0.0, f64::max);
    let boundary_to_cloud = boundary
        .iter()
        .map(|c| cloud.iter().map(|p| to_square(*p, *c)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    ensure!(cloud_to_set <= h, "a trajectory endpoint lies {cloud_to_set} from the set");
    ensure!(boundary_to_cloud <= h, "a boundary cell lies {boundary_to_cloud} from every endpoint");
    Ok(format!("Hausdorff distances {cloud_to_set:.4} and {boundary_to_cloud:.4} (cell {h})"))
}

pub fn check_rearrangement_is_a_sort() -> Result<String, String> {
    let samples: Vec<f64> = (0..5000).map(|k| ((k as f64 * 0.37).sin() * 3.0).tan().clamp(-50.0, 50.0)).collect();
    let got = rearrange(&samples);
    // insertion sort into buckets by bit pattern order
    let mut oracle: Vec<f64> = Vec::with_capacity(samples.len());
    for v in &samples {
        let pos = oracle.partition_point(|x| x.total_cmp(v) == Ordering::Less);
        oracle.insert(pos, *v);
    }
    ensure!(got.len() == oracle.len(), "length {} vs {}", got.len(), oracle.len());
    for (k, (a, b)) in got.iter().zip(&oracle).enumerate() {
        ensure!(a.to_bits() == b.to_bits(), "position {k}: {a} vs {b}");
    }
    Ok(format!("{} samples identical to insertion sort", got.len()))
}

/// Periodic trapezoid rule over the full circle, exact to rounding for
/// smooth integrands.
fn orbit_average_reference(psi: &dyn Fn(f64) -> f64, radius: f64, s: f64, n: usize) -> f64 {
    (0..n)
        .map(|k| {
            let th = 2.0 * PI * k as f64 / n as f64;
            let d = (radius * radius + s * s - 2.0 * s * radius * th.cos()).max(0.0).sqrt();
            psi(d) * (s - radius * th.cos())
        })
        .sum::<f64>()
        / n as f64
}

pub fn check_confinement_margin_matches_dense_quadrature() -> Result<String, String> {
    let cases: Vec<(PsiProfile, Box<dyn Fn(f64) -> f64>, f64)> = vec![
        (PsiProfile::Constant(-1.0), Box::new(|_| -1.0), 0.5),
        (PsiProfile::ScaledExp { a: -2.0 }, Box::new(|r: f64| -2.0 * (-r).exp()), 0.1),
    ];
    let mut worst: f64 = 0.0;
    for (psi, f, c) in cases {
        let report = confinement_condition(&psi, c, 1.0, 0.6, 2.0, 200).map_err(|e| e.to_string())?;
        let n = 2000;
        let best = (0..n)
            .map(|k| 0.6 + 1.4 * k as f64 / (n - 1) as f64)
            .map(|s| orbit_average_reference(&*f, 1.0, s, 1024))
            .fold(f64::NEG_INFINITY, f64::max);
        let margin = -c - best;
        ensure!((report.margin - margin).abs() < 1e-6, "{psi:?}: {} vs {margin}", report.margin);
        ensure!(report.holds == (margin > 0.0), "{psi:?}: verdict differs");
        worst = worst.max((report.margin - margin).abs());
    }
    Ok(format!("margins agree to {worst:.1e}"))
}

pub fn check_column_room_walls_match_point_in_shape_count() -> Result<String, String> {
    let cfg = parse_config(include_str!("../../scenarios/braess_columns.toml")).map_err(|e| e.to_string())?;
    let scenario = cfg.build().map_err(|e| e.to_string())?;
    let room = &scenario.simulation.geometries[0];
    let columns = [[9.0, 0.6], [9.0, -0.6], [8.3, 1.2], [8.3, -1.2]];
    let mut expected = 0;
    for k in 0..room.grid.len() {
        let x = room.grid.center_of(k);
        let in_room = (0.0..=10.0).contains(&x[0]) && (-3.0..=3.0).contains(&x[1]);
        let in_column = columns.iter().any(|c| (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) <= 0.04);
        if !in_room || in_column {
            expected += 1;
        }
    }
    ensure!(room.count(CellClass::Wall) == expected, "{} wall cells, expected {expected}", room.count(CellClass::Wall));
    let open = cfg.without_obstacles().build().map_err(|e| e.to_string())?;
    ensure!(open.simulation.geometries[0].count(CellClass::Wall) == 0, "open room has walls");
    Ok(format!("{expected} wall cells"))
}
