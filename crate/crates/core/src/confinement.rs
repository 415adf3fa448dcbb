//! Reachable sets of `x' in psi(|x - xi|)(x - xi) + B(0, c)` and checks of
//! when an agent moving along `xi(t)` can confine them.
//!
//! The reachable set is the sublevel set `{u < 0}` of a level-set function
//! evolved by `u_t + f . grad u + c |grad u| = 0`, `f` the agent drift,
//! with periodic reinitialization to a signed distance.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::fast_march;
use crate::grid::{Grid2D, Shape};

/// Radial profile `psi` of the drift `psi(|x - xi|)(x - xi)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PsiProfile {
    Constant(f64),
    /// `a e^{-r}`.
    ScaledExp { a: f64 },
    /// Cubic Hermite through `(r[k], psi[k])` with slopes `dpsi[k]` if given,
    /// piecewise linear otherwise; constant beyond the table.
    Tabulated { r: Vec<f64>, psi: Vec<f64>, dpsi: Option<Vec<f64>> },
    /// `a r`; unbounded, so rejected by the checkers.
    Linear { a: f64 },
}

impl PsiProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            PsiProfile::Constant(a) | PsiProfile::ScaledExp { a } | PsiProfile::Linear { a } if !a.is_finite() => {
                Err(Error::config("psi parameter must be finite"))
            }
            PsiProfile::Tabulated { r, psi, dpsi } => {
                if r.len() < 2 || r.len() != psi.len() || dpsi.as_ref().is_some_and(|d| d.len() != r.len()) {
                    return Err(Error::config("tabulated psi needs equally long tables of at least 2 points"));
                }
                if r[0] != 0.0 || r.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::config("tabulated psi: radii must start at 0 and increase"));
                }
                if psi.iter().chain(dpsi.iter().flatten()).any(|x| !x.is_finite()) {
                    return Err(Error::config("tabulated psi must be finite"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn is_bounded(&self) -> bool {
        match self {
            PsiProfile::Linear { a } => *a == 0.0,
            _ => true,
        }
    }

    pub fn has_derivative(&self) -> bool {
        !matches!(self, PsiProfile::Tabulated { dpsi: None, .. })
    }

    /// `psi(r)`, `r >= 0`.
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            PsiProfile::Constant(a) => *a,
            PsiProfile::ScaledExp { a } => a * (-r).exp(),
            PsiProfile::Linear { a } => a * r,
            PsiProfile::Tabulated { r: rs, psi, dpsi } => {
                let n = rs.len();
                if r >= rs[n - 1] {
                    return psi[n - 1];
                }
                let k = rs.partition_point(|x| *x <= r).saturating_sub(1);
                let h = rs[k + 1] - rs[k];
                let t = (r - rs[k]) / h;
                match dpsi {
                    None => psi[k] + t * (psi[k + 1] - psi[k]),
                    Some(d) => {
                        let (t2, t3) = (t * t, t * t * t);
                        (2.0 * t3 - 3.0 * t2 + 1.0) * psi[k]
                            + (t3 - 2.0 * t2 + t) * h * d[k]
                            + (-2.0 * t3 + 3.0 * t2) * psi[k + 1]
                            + (t3 - t2) * h * d[k + 1]
                    }
                }
            }
        }
    }

    /// `psi'(r)`, if the profile carries one.
    pub fn derivative(&self, r: f64) -> Option<f64> {
        Some(match self {
            PsiProfile::Constant(_) => 0.0,
            PsiProfile::ScaledExp { a } => -a * (-r).exp(),
            PsiProfile::Linear { a } => *a,
            PsiProfile::Tabulated { dpsi: None, .. } => return None,
            PsiProfile::Tabulated { r: rs, psi, dpsi: Some(d) } => {
                let n = rs.len();
                if r >= rs[n - 1] {
                    return Some(0.0);
                }
                let k = rs.partition_point(|x| *x <= r).saturating_sub(1);
                let h = rs[k + 1] - rs[k];
                let t = (r - rs[k]) / h;
                let t2 = t * t;
                ((6.0 * t2 - 6.0 * t) * psi[k] + (-6.0 * t2 + 6.0 * t) * psi[k + 1]) / h
                    + (3.0 * t2 - 4.0 * t + 1.0) * d[k]
                    + (3.0 * t2 - 2.0 * t) * d[k + 1]
            }
        })
    }
}

/// `sum_i psi(|x - xi_i|)(x - xi_i)`.
pub fn drift(psi: &PsiProfile, x: [f64; 2], agents: &[[f64; 2]]) -> [f64; 2] {
    let mut v = [0.0, 0.0];
    for p in agents {
        let (ex, ey) = (x[0] - p[0], x[1] - p[1]);
        let s = psi.eval(ex.hypot(ey));
        v[0] += s * ex;
        v[1] += s * ey;
    }
    v
}

/// Path of one agent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum AgentPath {
    Fixed { point: [f64; 2] },
    /// `center + radius (cos(omega t + phase), sin(omega t + phase))`.
    Orbit { center: [f64; 2], radius: f64, omega: f64, phase: f64 },
}

impl AgentPath {
    pub fn position(&self, t: f64) -> [f64; 2] {
        match self {
            AgentPath::Fixed { point } => *point,
            AgentPath::Orbit { center, radius, omega, phase } => {
                let a = omega * t + phase;
                [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
            }
        }
    }

    /// Speed along the path (m/s).
    pub fn speed(&self) -> f64 {
        match self {
            AgentPath::Fixed { .. } => 0.0,
            AgentPath::Orbit { radius, omega, .. } => (omega * radius).abs(),
        }
    }
}

/// Paths of all agents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentTrack {
    pub paths: Vec<AgentPath>,
}

impl AgentTrack {
    pub fn positions(&self, t: f64) -> Vec<[f64; 2]> {
        self.paths.iter().map(|p| p.position(t)).collect()
    }
}

/// A single agent on the circle of radius `radius` about the origin.
pub fn orbit_strategy(radius: f64, omega: f64, phase: f64) -> Result<AgentTrack> {
    if !(radius > 0.0 && radius.is_finite()) || !omega.is_finite() || !phase.is_finite() {
        return Err(Error::config(format!("orbit needs a positive radius and finite rate, got R = {radius}, omega = {omega}")));
    }
    Ok(AgentTrack { paths: vec![AgentPath::Orbit { center: [0.0, 0.0], radius, omega, phase }] })
}

/// Level-set representation of a reachable set; `u < 0` inside.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyField {
    pub grid: Grid2D,
    pub u: Vec<f64>,
}

impl OccupancyField {
    /// Signed distance to a disc or rectangle.
    pub fn from_shape(grid: Grid2D, shape: &Shape) -> Self {
        let u = (0..grid.len())
            .map(|k| {
                let x = grid.center_of(k);
                match shape {
                    Shape::Disc(d) => (x[0] - d.center[0]).hypot(x[1] - d.center[1]) - d.radius,
                    Shape::Rect(r) => {
                        let qx = (r.min[0] - x[0]).max(x[0] - r.max[0]);
                        let qy = (r.min[1] - x[1]).max(x[1] - r.max[1]);
                        if qx > 0.0 || qy > 0.0 {
                            qx.max(0.0).hypot(qy.max(0.0))
                        } else {
                            qx.max(qy)
                        }
                    }
                }
            })
            .collect();
        OccupancyField { grid, u }
    }

    pub fn inside(&self, k: usize) -> bool {
        self.u[k] < 0.0
    }

    pub fn area(&self) -> f64 {
        self.u.iter().filter(|v| **v < 0.0).count() as f64 * self.grid.cell_area()
    }

    /// Largest distance from `center` of an occupied cell center.
    pub fn max_radius(&self, center: [f64; 2]) -> f64 {
        (0..self.grid.len())
            .filter(|&k| self.inside(k))
            .map(|k| {
                let x = self.grid.center_of(k);
                (x[0] - center[0]).hypot(x[1] - center[1])
            })
            .fold(0.0, f64::max)
    }

    /// Centers of the occupied cells.
    pub fn occupied_centers(&self) -> Vec<[f64; 2]> {
        (0..self.grid.len()).filter(|&k| self.inside(k)).map(|k| self.grid.center_of(k)).collect()
    }

    /// Replace `u` by the signed distance to its zero level set.
    pub fn reinitialize(&mut self) {
        let g = self.grid;
        let h = g.h();
        let u = &self.u;
        let mut seeds = Vec::new();
        for k in 0..g.len() {
            let mut best = f64::INFINITY;
            for nb in crate::grid::neighbors4(&g, k) {
                if (u[k] < 0.0) != (u[nb] < 0.0) {
                    let denom = u[k] - u[nb];
                    let s = if denom != 0.0 { (u[k] / denom).clamp(0.0, 1.0) } else { 0.5 };
                    best = best.min(s * h);
                }
            }
            if best.is_finite() {
                seeds.push((k, best));
            }
        }
        if seeds.is_empty() {
            return;
        }
        let d = fast_march(&g, &vec![true; g.len()], &seeds);
        for (v, dist) in self.u.iter_mut().zip(d) {
            *v = if *v < 0.0 { -dist } else { dist };
        }
    }
}

/// Numerical parameters of [`reach_evolve`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReachParams {
    pub cfl: f64,
    /// Reinitialize every this many steps (0 = never).
    pub reinit_every: usize,
    /// Cadence of the stored frames, seconds.
    pub snapshot_every: f64,
}

impl Default for ReachParams {
    fn default() -> Self {
        ReachParams { cfl: 0.4, reinit_every: 10, snapshot_every: 0.5 }
    }
}

/// Stored state of a reachable-set evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachFrame {
    pub t: f64,
    pub area: f64,
    pub field: OccupancyField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachResult {
    pub frames: Vec<ReachFrame>,
    /// `(t, area)` after every step.
    pub area_trace: Vec<(f64, f64)>,
    /// `(t, max |x|)` over occupied cell centers after every step.
    pub extent_trace: Vec<(f64, f64)>,
    pub steps: usize,
}

fn touches_boundary(f: &OccupancyField) -> bool {
    let g = f.grid;
    (0..g.nx).any(|i| f.inside(g.index(i, 0)) || f.inside(g.index(i, g.ny - 1)))
        || (0..g.ny).any(|j| f.inside(g.index(0, j)) || f.inside(g.index(g.nx - 1, j)))
}

/// One explicit upwind step of `u_t + f . grad u + c |grad u| = 0`.
fn level_set_step(f: &OccupancyField, vel: &[[f64; 2]], c: f64, dt: f64) -> Vec<f64> {
    let g = f.grid;
    let h = g.h();
    let u = &f.u;
    (0..g.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = g.cell(k);
            let w = if i > 0 { u[k - 1] } else { u[k] };
            let e = if i + 1 < g.nx { u[k + 1] } else { u[k] };
            let s = if j > 0 { u[k - g.nx] } else { u[k] };
            let n = if j + 1 < g.ny { u[k + g.nx] } else { u[k] };
            let (dxm, dxp) = ((u[k] - w) / h, (e - u[k]) / h);
            let (dym, dyp) = ((u[k] - s) / h, (n - u[k]) / h);
            let v = vel[k];
            let adv = v[0] * if v[0] > 0.0 { dxm } else { dxp } + v[1] * if v[1] > 0.0 { dym } else { dyp };
            // Godunov norm for an outward normal speed
            let grad = (dxm.max(0.0).powi(2) + dxp.min(0.0).powi(2) + dym.max(0.0).powi(2) + dyp.min(0.0).powi(2)).sqrt();
            u[k] - dt * (adv + c * grad)
        })
        .collect()
}

/// Evolve the reachable set from `k0` up to `horizon`.
///
/// Fails with [`Error::DomainTooSmall`] once the set reaches the outermost
/// ring of cells.
pub fn reach_evolve(
    grid: Grid2D,
    k0: &Shape,
    track: &AgentTrack,
    psi: &PsiProfile,
    c: f64,
    horizon: f64,
    params: &ReachParams,
) -> Result<ReachResult> {
    psi.validate()?;
    if !grid.is_square() {
        return Err(Error::config("reachable sets need square cells"));
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::config(format!("c must be finite and >= 0, got {c}")));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::config(format!("horizon must be finite and >= 0, got {horizon}")));
    }
    if !(params.cfl > 0.0 && params.cfl <= 0.5) || !(params.snapshot_every > 0.0) {
        return Err(Error::config("reach params: cfl in (0, 0.5] and a positive snapshot cadence required"));
    }
    let mut field = OccupancyField::from_shape(grid, k0);
    if field.area() == 0.0 {
        return Err(Error::config("initial set contains no cell center"));
    }
    if touches_boundary(&field) {
        return Err(Error::DomainTooSmall { t: 0.0 });
    }
    let h = grid.h();
    let centers: Vec<[f64; 2]> = (0..grid.len()).map(|k| grid.center_of(k)).collect();
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut frames = vec![ReachFrame { t, area: field.area(), field: field.clone() }];
    let mut area_trace = vec![(t, field.area())];
    let mut extent_trace = vec![(t, field.max_radius([0.0, 0.0]))];
    let mut next_frame = 1usize;
    let eps = 1e-12 * horizon.max(1.0);
    while t < horizon - eps {
        let agents = track.positions(t);
        let vel: Vec<[f64; 2]> = centers.par_iter().map(|x| drift(psi, *x, &agents)).collect();
        let vmax = vel.iter().map(|v| v[0].abs() + v[1].abs()).fold(0.0, f64::max) + c * std::f64::consts::SQRT_2;
        let target = (next_frame as f64 * params.snapshot_every).min(horizon);
        let mut dt = target - t;
        if vmax > 0.0 {
            dt = dt.min(params.cfl * h / vmax);
        }
        field.u = level_set_step(&field, &vel, c, dt);
        t += dt;
        steps += 1;
        if let Some(k) = field.u.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t, cell: k, last_good: None });
        }
        if params.reinit_every > 0 && steps % params.reinit_every == 0 {
            field.reinitialize();
        }
        if touches_boundary(&field) {
            return Err(Error::DomainTooSmall { t });
        }
        area_trace.push((t, field.area()));
        extent_trace.push((t, field.max_radius([0.0, 0.0])));
        if t >= target - eps {
            frames.push(ReachFrame { t, area: field.area(), field: field.clone() });
            while next_frame as f64 * params.snapshot_every <= t + eps {
                next_frame += 1;
            }
        }
    }
    Ok(ReachResult { frames, area_trace, extent_trace, steps })
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// `(1/pi) int_0^pi psi(sqrt(R^2 + s^2 - 2 s R cos th)) (s - R cos th) dth`.
pub fn orbit_average(psi: &PsiProfile, radius: f64, s: f64, tol: f64) -> f64 {
    let f = |th: f64| {
        let c = th.cos();
        let d = (radius * radius + s * s - 2.0 * s * radius * c).max(0.0).sqrt();
        psi.eval(d) * (s - radius * c)
    };
    adaptive_simpson(&f, 0.0, std::f64::consts::PI, tol * std::f64::consts::PI) / std::f64::consts::PI
}

/// Verdict of [`confinement_condition`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfinementReport {
    pub holds: bool,
    /// `-c - max_{R_*} I(R_*)`; positive iff the condition holds.
    pub margin: f64,
    /// Radius at which the margin is attained.
    pub worst_radius: f64,
    pub samples: usize,
    pub tolerance: f64,
}

/// Check `I(R_*) < -c` for all `R_*` in `[r_minus, r_plus]`, with `I` the
/// orbit average of the drift of an agent on the circle of radius `radius`.
pub fn confinement_condition(
    psi: &PsiProfile,
    c: f64,
    radius: f64,
    r_minus: f64,
    r_plus: f64,
    samples: usize,
) -> Result<ConfinementReport> {
    psi.validate()?;
    if !psi.is_bounded() {
        return Err(Error::config("confinement condition needs a bounded psi"));
    }
    if !(0.0 < r_minus && r_minus <= r_plus) || !(radius > 0.0) || !(c >= 0.0) {
        return Err(Error::config(format!(
            "confinement condition needs 0 < R- <= R+, R > 0, c >= 0; got R- = {r_minus}, R+ = {r_plus}, R = {radius}, c = {c}"
        )));
    }
    let tol = 1e-8;
    let n = samples.max(200);
    let grid: Vec<f64> = (0..n)
        .map(|k| if n == 1 { r_minus } else { r_minus + (r_plus - r_minus) * k as f64 / (n - 1) as f64 })
        .collect();
    let values: Vec<f64> = grid.par_iter().map(|s| orbit_average(psi, radius, *s, tol)).collect();
    let (mut kbest, mut best) = (0usize, f64::NEG_INFINITY);
    for (k, v) in values.iter().enumerate() {
        if *v > best {
            best = *v;
            kbest = k;
        }
    }
    let mut worst_radius = grid[kbest];
    // golden-section refinement on the neighbouring cells
    let (mut a, mut b) = (grid[kbest.saturating_sub(1)], grid[(kbest + 1).min(n - 1)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        if b - a <= 1e-12 * r_plus {
            break;
        }
        let (x1, x2) = (b - g * (b - a), a + g * (b - a));
        let (f1, f2) = (orbit_average(psi, radius, x1, tol), orbit_average(psi, radius, x2, tol));
        for (x, f) in [(x1, f1), (x2, f2)] {
            if f > best {
                best = f;
                worst_radius = x;
            }
        }
        if f1 > f2 {
            b = x2;
        } else {
            a = x1;
        }
    }
    let margin = -c - best;
    Ok(ConfinementReport { holds: margin > 0.0, margin, worst_radius, samples: n, tolerance: tol })
}

/// `psi'(q) q + 2 psi(q)` with `q = sqrt(s / pi)`.
pub fn dispersal_phi(psi: &PsiProfile, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::config(format!("dispersal phi needs s >= 0, got {s}")));
    }
    let q = (s / std::f64::consts::PI).sqrt();
    let d = psi
        .derivative(q)
        .ok_or_else(|| Error::config("psi profile has no derivative"))?;
    Ok(d * q + 2.0 * psi.eval(q))
}

/// Non-decreasing rearrangement of uniformly spaced samples.
pub fn rearrange(samples: &[f64]) -> Vec<f64> {
    let mut out = samples.to_vec();
    out.sort_by(f64::total_cmp);
    out
}

/// Verdict of [`dispersal_condition`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersalReport {
    pub holds: bool,
    /// Minimum of `2 c sqrt(pi sigma) + int_0^sigma phi_*` over the window.
    pub margin: f64,
    /// First `sigma` in the window where the condition fails.
    pub first_violation: Option<f64>,
    /// `phi >= 0` on the last tenth of the window, so that the integral is
    /// non-decreasing past it and a pass extends to all larger `sigma`.
    pub tail_nonnegative: bool,
    pub window: [f64; 2],
    pub samples: usize,
}

/// Check `2 c sqrt(pi sigma) + int_0^sigma phi_*(s) ds > 0` for `sigma` in
/// `[area0, sigma_max]`, `phi_*` the rearrangement of [`dispersal_phi`] on
/// `[0, sigma_max]`.
pub fn dispersal_condition(psi: &PsiProfile, c: f64, area0: f64, sigma_max: f64, samples: usize) -> Result<DispersalReport> {
    psi.validate()?;
    if !psi.is_bounded() {
        return Err(Error::config("dispersal condition needs a bounded psi"));
    }
    if !(area0 >= 0.0 && sigma_max >= area0 && sigma_max > 0.0) || !(c >= 0.0) {
        return Err(Error::config(format!(
            "dispersal condition needs 0 <= area0 <= sigma_max, c >= 0; got area0 = {area0}, sigma_max = {sigma_max}, c = {c}"
        )));
    }
    let n = samples.max(2);
    let ds = sigma_max / n as f64;
    let phi = (0..=n).map(|k| dispersal_phi(psi, k as f64 * ds)).collect::<Result<Vec<f64>>>()?;
    let sorted = rearrange(&phi);
    let mut cum = vec![0.0; n + 1];
    for k in 1..=n {
        cum[k] = cum[k - 1] + 0.5 * ds * (sorted[k - 1] + sorted[k]);
    }
    let g = |k: usize| 2.0 * c * (std::f64::consts::PI * k as f64 * ds).sqrt() + cum[k];
    // value at area0 by linear interpolation of the cumulative integral
    let k0 = ((area0 / ds).floor() as usize).min(n);
    let at_area0 = {
        let frac = if k0 < n { area0 / ds - k0 as f64 } else { 0.0 };
        let integral = if k0 < n { cum[k0] + frac * (cum[k0 + 1] - cum[k0]) } else { cum[n] };
        2.0 * c * (std::f64::consts::PI * area0).sqrt() + integral
    };
    let mut margin = at_area0;
    let mut first_violation = (at_area0 <= 0.0).then_some(area0);
    let mut prev = (area0, at_area0);
    for k in (k0 + 1)..=n {
        let s = k as f64 * ds;
        let v = g(k);
        margin = margin.min(v);
        if first_violation.is_none() && v <= 0.0 {
            let (s0, v0) = prev;
            first_violation = Some(if v0 > 0.0 { s0 + (s - s0) * v0 / (v0 - v) } else { s });
        }
        prev = (s, v);
    }
    let tail_nonnegative = phi[n - n / 10..].iter().all(|v| *v >= 0.0);
    Ok(DispersalReport {
        holds: first_violation.is_none(),
        margin,
        first_violation,
        tail_nonnegative,
        window: [area0, sigma_max],
        samples: n,
    })
}
