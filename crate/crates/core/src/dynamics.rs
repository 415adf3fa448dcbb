//! Velocity laws of the crowd and the drift laws of the coupled agents.
//!
//! Every crowd model is assembled into a [`Transport`]: a velocity of the
//! form `V(x) = v(rho(x)) * steer(x) + drift(x)`, where `steer` and `drift`
//! are frozen over a time step and `v` is evaluated at the current local
//! density. Models whose speed depends on the local density (local, route
//! choice, piper, sheep) use `steer`; the nonlocal speed model puts its whole
//! velocity in `drift`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{DensityField, Grid2D, ScalarField, VectorField};
use crate::nonlocal::{convolve, convolve_at, convolve_grad, convolve_grad_at, Kernel};

/// Scalar speed law `v(rho)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SpeedLaw {
    /// `v(rho) = vmax (1 - rho / jam)`.
    Linear { vmax: f64, jam: f64 },
    /// Piecewise linear through `(rho[k], v[k])`, with `rho[0] = 0` and
    /// `v(rho.last()) = 0`.
    Tabulated { rho: Vec<f64>, v: Vec<f64> },
    /// Density independent speed. Has no jam density; used for pure
    /// transport and for linear sensitivity checks.
    Constant { v: f64 },
}

impl SpeedLaw {
    pub fn linear(vmax: f64, jam: f64) -> Result<Self> {
        if !(vmax > 0.0 && vmax.is_finite()) || !(jam > 0.0 && jam.is_finite()) {
            return Err(Error::config(format!(
                "linear speed law needs vmax > 0 and jam > 0, got vmax = {vmax}, jam = {jam}"
            )));
        }
        Ok(SpeedLaw::Linear { vmax, jam })
    }

    pub fn tabulated(rho: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if rho.len() != v.len() || rho.len() < 2 {
            return Err(Error::config("tabulated speed law needs two equally long tables of at least 2 points"));
        }
        if rho[0] != 0.0 {
            return Err(Error::config("tabulated speed law must start at rho = 0"));
        }
        if rho.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("tabulated speed law: densities must be strictly increasing"));
        }
        if let Some(k) = v.windows(2).position(|w| w[1] > w[0]) {
            return Err(Error::config(format!(
                "tabulated speed law must be non increasing: v rises from {} to {} between rho = {} and {}",
                v[k], v[k + 1], rho[k], rho[k + 1]
            )));
        }
        if *v.last().unwrap() != 0.0 {
            return Err(Error::config("tabulated speed law must vanish at the jam density (last point)"));
        }
        if !(v[0] > 0.0) || v.iter().chain(&rho).any(|x| !x.is_finite()) {
            return Err(Error::config("tabulated speed law needs finite values and v(0) > 0"));
        }
        Ok(SpeedLaw::Tabulated { rho, v })
    }

    pub fn constant(v: f64) -> Result<Self> {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::config(format!("constant speed must be finite and >= 0, got {v}")));
        }
        Ok(SpeedLaw::Constant { v })
    }

    /// Jam density `R` (infinite for a constant law).
    pub fn jam(&self) -> f64 {
        match self {
            SpeedLaw::Linear { jam, .. } => *jam,
            SpeedLaw::Tabulated { rho, .. } => *rho.last().unwrap(),
            SpeedLaw::Constant { .. } => f64::INFINITY,
        }
    }

    /// `v(0)`.
    pub fn vmax(&self) -> f64 {
        match self {
            SpeedLaw::Linear { vmax, .. } => *vmax,
            SpeedLaw::Tabulated { v, .. } => v[0],
            SpeedLaw::Constant { v } => *v,
        }
    }

    /// `v(rho)`; densities above the jam density give zero speed.
    #[inline]
    pub fn speed(&self, rho: f64) -> f64 {
        let rho = rho.max(0.0);
        match self {
            SpeedLaw::Linear { vmax, jam } => {
                if rho >= *jam {
                    0.0
                } else {
                    vmax * (1.0 - rho / jam)
                }
            }
            SpeedLaw::Tabulated { rho: r, v } => {
                if rho >= *r.last().unwrap() {
                    return 0.0;
                }
                let k = r.partition_point(|x| *x <= rho) - 1;
                let t = (rho - r[k]) / (r[k + 1] - r[k]);
                v[k] + t * (v[k + 1] - v[k])
            }
            SpeedLaw::Constant { v } => *v,
        }
    }

    /// `v'(rho)` (right derivative at the table nodes, zero above jam).
    #[inline]
    pub fn derivative(&self, rho: f64) -> f64 {
        let rho = rho.max(0.0);
        match self {
            SpeedLaw::Linear { vmax, jam } => {
                if rho >= *jam {
                    0.0
                } else {
                    -vmax / jam
                }
            }
            SpeedLaw::Tabulated { rho: r, v } => {
                if rho >= *r.last().unwrap() {
                    return 0.0;
                }
                let k = r.partition_point(|x| *x <= rho) - 1;
                (v[k + 1] - v[k]) / (r[k + 1] - r[k])
            }
            SpeedLaw::Constant { .. } => 0.0,
        }
    }

    /// `sup |d(rho v(rho))/d rho|` over `[0, jam]`: bounds the wave speed of
    /// the flux `rho v(rho)`.
    pub fn max_flux_slope(&self) -> f64 {
        match self {
            SpeedLaw::Linear { vmax, .. } => *vmax,
            SpeedLaw::Tabulated { rho, v } => {
                let mut best: f64 = 0.0;
                for k in 0..rho.len() - 1 {
                    let slope = (v[k + 1] - v[k]) / (rho[k + 1] - rho[k]);
                    // v + rho v' is affine on each segment
                    best = best.max((v[k] + rho[k] * slope).abs());
                    best = best.max((v[k + 1] + rho[k + 1] * slope).abs());
                }
                best
            }
            SpeedLaw::Constant { v } => *v,
        }
    }
}

impl SpeedLaw {
    /// Densities in `(0, inf)` where `v` changes its affine expression.
    fn breakpoints(&self) -> Vec<f64> {
        match self {
            SpeedLaw::Linear { jam, .. } => vec![*jam],
            SpeedLaw::Tabulated { rho, .. } => rho[1..].to_vec(),
            SpeedLaw::Constant { .. } => vec![],
        }
    }
}

/// `v(rho)` for a single density value.
pub fn speed(law: &SpeedLaw, rho: f64) -> f64 {
    law.speed(rho)
}

/// Which crowd model drives the density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModelKind {
    /// `V = v(rho) nu`.
    Local,
    /// `V = v(rho * eta) nu`.
    NonlocalSpeed,
    /// `V = v(rho) (nu + I(rho))` with `I = -eps grad(rho*eta) / sqrt(1 + |grad(rho*eta)|^2)`.
    NonlocalRoute,
    /// Followers attracted by a single leader.
    Piper,
    /// Sheep repelled by dogs.
    Shepherd,
}

/// Complete description of the crowd model.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub law: SpeedLaw,
    pub kernel: Option<Kernel>,
    /// Strength of the route deviation (route-choice model).
    pub epsilon: f64,
    pub populations: usize,
    /// Orientation of the dogs' perpendicular: `+1` counterclockwise.
    pub perp_sign: f64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, law: SpeedLaw, kernel: Option<Kernel>) -> Result<Self> {
        let spec = ModelSpec { kind, law, kernel, epsilon: 0.0, populations: 1, perp_sign: 1.0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        self.epsilon = epsilon;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::config(format!("epsilon must be finite and >= 0, got {}", self.epsilon)));
        }
        if self.populations == 0 {
            return Err(Error::config("at least one population is required"));
        }
        if self.perp_sign != 1.0 && self.perp_sign != -1.0 {
            return Err(Error::config("perpendicular orientation must be +1 or -1"));
        }
        let needs_kernel = !matches!(self.kind, ModelKind::Local);
        if needs_kernel && self.kernel.is_none() {
            return Err(Error::config(format!("model {:?} requires a kernel", self.kind)));
        }
        Ok(())
    }

    fn kernel(&self) -> Result<&Kernel> {
        self.kernel
            .as_ref()
            .ok_or_else(|| Error::config(format!("model {:?} requires a kernel", self.kind)))
    }
}

/// Role of a discrete individual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AgentRole {
    Leader,
    Dog,
}

/// Polyline followed at unit speed; its tangent is the leader's a priori
/// direction as a function of time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaypointTrack {
    points: Vec<[f64; 2]>,
    arc: Vec<f64>,
}

impl WaypointTrack {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::config("a waypoint track needs at least two points"));
        }
        let mut arc = vec![0.0];
        for w in points.windows(2) {
            let len = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            if !(len > 0.0) {
                return Err(Error::config("waypoint track has a zero-length segment"));
            }
            arc.push(arc.last().unwrap() + len);
        }
        Ok(WaypointTrack { points, arc })
    }

    pub fn length(&self) -> f64 {
        *self.arc.last().unwrap()
    }

    /// Unit tangent at arc length `t`; zero once the track is exhausted.
    pub fn direction(&self, t: f64) -> [f64; 2] {
        if !(t >= 0.0) || t >= self.length() {
            return [0.0, 0.0];
        }
        let k = self.arc.partition_point(|s| *s <= t) - 1;
        let (a, b) = (self.points[k], self.points[k + 1]);
        let len = self.arc[k + 1] - self.arc[k];
        [(b[0] - a[0]) / len, (b[1] - a[1]) / len]
    }
}

/// Positions of the discrete individuals coupled to the crowd.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentState {
    pub positions: Vec<[f64; 2]>,
    pub roles: Vec<AgentRole>,
    pub track: Option<WaypointTrack>,
}

impl AgentState {
    pub fn none() -> Self {
        AgentState { positions: vec![], roles: vec![], track: None }
    }

    pub fn leader(position: [f64; 2], track: WaypointTrack) -> Self {
        AgentState { positions: vec![position], roles: vec![AgentRole::Leader], track: Some(track) }
    }

    pub fn dogs(positions: Vec<[f64; 2]>) -> Self {
        let roles = vec![AgentRole::Dog; positions.len()];
        AgentState { positions, roles, track: None }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Velocity field `v(rho) * steer + drift` with `steer` and `drift` frozen.
#[derive(Debug, Clone)]
pub struct Transport {
    pub grid: Grid2D,
    pub law: SpeedLaw,
    pub steer: Vec<[f64; 2]>,
    pub drift: Vec<[f64; 2]>,
}

impl Transport {
    /// Density independent velocity field.
    pub fn frozen(velocity: VectorField) -> Self {
        let n = velocity.grid.len();
        Transport {
            grid: velocity.grid,
            law: SpeedLaw::Constant { v: 0.0 },
            steer: vec![[0.0, 0.0]; n],
            drift: velocity.values,
        }
    }

    /// Velocity at one cell given its density.
    #[inline]
    pub fn velocity_at(&self, idx: usize, rho: f64) -> [f64; 2] {
        let s = self.steer[idx];
        let d = self.drift[idx];
        if s == [0.0, 0.0] {
            return d;
        }
        let v = self.law.speed(rho);
        [v * s[0] + d[0], v * s[1] + d[1]]
    }

    pub fn velocity(&self, rho: &DensityField) -> Result<VectorField> {
        self.grid.check_same(&rho.grid, "velocity")?;
        let values = (0..self.grid.len()).map(|k| self.velocity_at(k, rho.values[k])).collect();
        Ok(VectorField { grid: self.grid, values })
    }

    /// Flux `rho V_c(rho)` along axis `c` at one cell.
    #[inline]
    pub fn flux(&self, idx: usize, rho: f64, c: usize) -> f64 {
        rho * self.velocity_at(idx, rho)[c]
    }

    /// `(min, max)` of the flux along axis `c` over densities in `[0, rho]`.
    ///
    /// These are the Godunov fluxes between a cell of density `rho` and an
    /// empty neighbor: the max toward a neighbor on the positive side, the
    /// min toward one on the negative side.
    pub fn flux_range(&self, idx: usize, rho: f64, c: usize) -> (f64, f64) {
        let f = self.flux(idx, rho, c);
        let (mut lo, mut hi) = (f.min(0.0), f.max(0.0));
        let a = self.steer[idx][c];
        if a == 0.0 || !(rho > 0.0) {
            // linear in rho: the extremes are at the ends
            return (lo, hi);
        }
        let b = self.drift[idx][c];
        let mut take = |x: f64| {
            let g = self.flux(idx, x, c);
            lo = lo.min(g);
            hi = hi.max(g);
        };
        // v is affine between consecutive breakpoints, so the flux is
        // quadratic there: check the piece ends and the vertex
        let mut start = 0.0;
        for end in self.law.breakpoints().into_iter().chain([f64::INFINITY]) {
            let stop = end.min(rho);
            if stop > start {
                let v0 = self.law.speed(start);
                let m = self.law.derivative(start);
                // g(x) = a m x^2 + (a (v0 - m start) + b) x
                let (q2, q1) = (a * m, a * (v0 - m * start) + b);
                if q2 != 0.0 {
                    let x = -q1 / (2.0 * q2);
                    if x > start && x < stop {
                        take(x);
                    }
                }
                take(stop);
            }
            if end >= rho {
                break;
            }
            start = end;
        }
        (lo, hi)
    }

    /// Per-axis bound on the wave speed of the flux `rho V` at each cell.
    pub fn wave_speeds(&self) -> VectorField {
        let l = self.law.max_flux_slope();
        let values = self
            .steer
            .iter()
            .zip(&self.drift)
            .map(|(s, d)| [l * s[0].abs() + d[0].abs(), l * s[1].abs() + d[1].abs()])
            .collect();
        VectorField { grid: self.grid, values }
    }
}

fn steered(law: &SpeedLaw, steer: VectorField) -> Transport {
    let n = steer.grid.len();
    Transport { grid: steer.grid, law: law.clone(), steer: steer.values, drift: vec![[0.0, 0.0]; n] }
}

/// Local model: `V = v(rho) nu`.
pub fn transport_local(law: &SpeedLaw, directions: &VectorField) -> Transport {
    steered(law, directions.clone())
}

pub fn velocity_local(rho: &DensityField, law: &SpeedLaw, directions: &VectorField) -> Result<VectorField> {
    rho.grid.check_same(&directions.grid, "velocity_local")?;
    transport_local(law, directions).velocity(rho)
}

/// Nonlocal speed model: `V = v(rho * eta) nu`, independent of the local density.
pub fn transport_nonlocal_speed(
    rho: &DensityField,
    kernel: &Kernel,
    law: &SpeedLaw,
    directions: &VectorField,
) -> Result<Transport> {
    rho.grid.check_same(&directions.grid, "velocity_nonlocal_speed")?;
    let avg = convolve(rho, kernel)?;
    Ok(Transport::frozen(nonlocal_speed_from_average(&avg, law, directions)))
}

pub(crate) fn nonlocal_speed_from_average(avg: &ScalarField, law: &SpeedLaw, directions: &VectorField) -> VectorField {
    let values = avg
        .values
        .iter()
        .zip(&directions.values)
        .map(|(a, n)| {
            let v = law.speed(*a);
            [v * n[0], v * n[1]]
        })
        .collect();
    VectorField { grid: avg.grid, values }
}

pub fn velocity_nonlocal_speed(
    rho: &DensityField,
    kernel: &Kernel,
    law: &SpeedLaw,
    directions: &VectorField,
) -> Result<VectorField> {
    Ok(VectorField {
        grid: rho.grid,
        values: transport_nonlocal_speed(rho, kernel, law, directions)?.drift,
    })
}

/// Route deviation `I(rho) = -eps g / sqrt(1 + |g|^2)`, `g = grad(rho * eta)`.
pub fn deviation(rho: &DensityField, kernel: &Kernel, epsilon: f64) -> Result<VectorField> {
    let g = convolve_grad(rho, kernel)?;
    let values = g
        .values
        .iter()
        .map(|g| {
            let s = epsilon / (1.0 + g[0] * g[0] + g[1] * g[1]).sqrt();
            [-s * g[0], -s * g[1]]
        })
        .collect();
    Ok(VectorField { grid: g.grid, values })
}

/// Route-choice model: `V = v(rho) (nu + I(rho))`.
pub fn transport_route(
    rho: &DensityField,
    kernel: &Kernel,
    law: &SpeedLaw,
    directions: &VectorField,
    epsilon: f64,
) -> Result<Transport> {
    rho.grid.check_same(&directions.grid, "velocity_route")?;
    let dev = deviation(rho, kernel, epsilon)?;
    let values = directions
        .values
        .iter()
        .zip(&dev.values)
        .map(|(n, i)| [n[0] + i[0], n[1] + i[1]])
        .collect();
    Ok(steered(law, VectorField { grid: rho.grid, values }))
}

pub fn velocity_route(
    rho: &DensityField,
    kernel: &Kernel,
    law: &SpeedLaw,
    directions: &VectorField,
    epsilon: f64,
) -> Result<VectorField> {
    transport_route(rho, kernel, law, directions, epsilon)?.velocity(rho)
}

/// `(p - x) e^{-|p - x|}`.
#[inline]
fn attraction(x: [f64; 2], p: [f64; 2]) -> [f64; 2] {
    let (ex, ey) = (p[0] - x[0], p[1] - x[1]);
    let w = (-ex.hypot(ey)).exp();
    [ex * w, ey * w]
}

/// Followers of a leader at `p`: `V = v(rho) (p - x) e^{-|p-x|}`.
pub fn transport_piper(grid: Grid2D, law: &SpeedLaw, leader: [f64; 2]) -> Transport {
    steered(law, VectorField::from_fn(grid, |x| attraction(x, leader)))
}

pub fn velocity_piper(rho: &DensityField, agents: &AgentState, law: &SpeedLaw) -> Result<VectorField> {
    if agents.len() != 1 {
        return Err(Error::config(format!("the piper model needs exactly one leader, got {}", agents.len())));
    }
    transport_piper(rho.grid, law, agents.positions[0]).velocity(rho)
}

/// Sheep: `V = v(rho) nu + sum_i (x - p_i) e^{-|p_i - x|}`.
pub fn transport_sheep(law: &SpeedLaw, directions: &VectorField, dogs: &[[f64; 2]]) -> Transport {
    let grid = directions.grid;
    let drift = VectorField::from_fn(grid, |x| {
        let mut acc = [0.0, 0.0];
        for p in dogs {
            let a = attraction(x, *p);
            acc[0] -= a[0];
            acc[1] -= a[1];
        }
        acc
    });
    Transport { grid, law: law.clone(), steer: directions.values.clone(), drift: drift.values }
}

pub fn velocity_sheep(
    rho: &DensityField,
    agents: &AgentState,
    law: &SpeedLaw,
    directions: &VectorField,
) -> Result<VectorField> {
    rho.grid.check_same(&directions.grid, "velocity_sheep")?;
    transport_sheep(law, directions, &agents.positions).velocity(rho)
}

/// Bilinear interpolation of cell-centered data at `p`, constant
/// extrapolation within half a cell of the grid edge; `None` outside the grid.
pub(crate) fn bilinear(grid: &Grid2D, p: [f64; 2]) -> Option<[(usize, usize, f64); 4]> {
    let b = grid.bounds();
    if !(p[0] >= b.min[0] && p[0] <= b.max[0] && p[1] >= b.min[1] && p[1] <= b.max[1]) {
        return None;
    }
    let fx = ((p[0] - grid.origin[0]) / grid.dx - 0.5).clamp(0.0, (grid.nx - 1) as f64);
    let fy = ((p[1] - grid.origin[1]) / grid.dy - 0.5).clamp(0.0, (grid.ny - 1) as f64);
    let i0 = (fx.floor() as usize).min(grid.nx.saturating_sub(2));
    let j0 = (fy.floor() as usize).min(grid.ny.saturating_sub(2));
    let i1 = (i0 + 1).min(grid.nx - 1);
    let j1 = (j0 + 1).min(grid.ny - 1);
    let tx = (fx - i0 as f64).clamp(0.0, 1.0);
    let ty = (fy - j0 as f64).clamp(0.0, 1.0);
    Some([
        (i0, j0, (1.0 - tx) * (1.0 - ty)),
        (i1, j0, tx * (1.0 - ty)),
        (i0, j1, (1.0 - tx) * ty),
        (i1, j1, tx * ty),
    ])
}

/// Bilinear sample of `rho * eta` at `p`; `None` outside the grid.
pub fn sample_average(rho: &DensityField, kernel: &Kernel, p: [f64; 2]) -> Result<Option<f64>> {
    let Some(stencil) = bilinear(&rho.grid, p) else {
        return Ok(None);
    };
    let mut acc = 0.0;
    for (i, j, w) in stencil {
        if w != 0.0 {
            acc += w * convolve_at(rho, kernel, i, j)?;
        }
    }
    Ok(Some(acc))
}

/// Bilinear sample of `rho * grad eta` at `p`; `None` outside the grid.
pub fn sample_average_gradient(rho: &DensityField, kernel: &Kernel, p: [f64; 2]) -> Result<Option<[f64; 2]>> {
    let Some(stencil) = bilinear(&rho.grid, p) else {
        return Ok(None);
    };
    let mut acc = [0.0, 0.0];
    for (i, j, w) in stencil {
        if w != 0.0 {
            let g = convolve_grad_at(rho, kernel, i, j)?;
            acc[0] += w * g[0];
            acc[1] += w * g[1];
        }
    }
    Ok(Some(acc))
}

/// Leader velocity `(1 + (rho * eta)(p)) psi(t)`.
pub fn leader_velocity(
    rho: &DensityField,
    p: [f64; 2],
    kernel: &Kernel,
    t: f64,
    track: &WaypointTrack,
) -> Result<[f64; 2]> {
    let avg = match sample_average(rho, kernel, p)? {
        Some(a) => a,
        None => {
            log::warn!("leader at ({}, {}) is outside the grid; averaged density taken as 0", p[0], p[1]);
            0.0
        }
    };
    let psi = track.direction(t);
    Ok([(1.0 + avg) * psi[0], (1.0 + avg) * psi[1]])
}

/// Dog velocities `g_perp / sqrt(1 + |g|^2)`, `g = (rho * grad eta)(p_i)`,
/// with `(a, b)_perp = sign * (-b, a)`.
pub fn dog_velocities(rho: &DensityField, dogs: &[[f64; 2]], kernel: &Kernel, perp_sign: f64) -> Result<Vec<[f64; 2]>> {
    dogs.iter()
        .map(|p| {
            Ok(match sample_average_gradient(rho, kernel, *p)? {
                Some(g) => {
                    let s = perp_sign / (1.0 + g[0] * g[0] + g[1] * g[1]).sqrt();
                    [-s * g[1], s * g[0]]
                }
                None => {
                    log::warn!("dog at ({}, {}) is outside the grid; it stays put", p[0], p[1]);
                    [0.0, 0.0]
                }
            })
        })
        .collect()
}

/// Velocities of all agents for the given model, at time `t`.
pub fn agent_velocities(model: &ModelSpec, rho: &DensityField, agents: &AgentState, t: f64) -> Result<Vec<[f64; 2]>> {
    match model.kind {
        ModelKind::Piper => {
            let track = agents
                .track
                .as_ref()
                .ok_or_else(|| Error::config("the piper model needs a leader track"))?;
            agents
                .positions
                .iter()
                .zip(&agents.roles)
                .map(|(p, role)| match role {
                    AgentRole::Leader => leader_velocity(rho, *p, model.kernel()?, t, track),
                    AgentRole::Dog => Ok([0.0, 0.0]),
                })
                .collect()
        }
        ModelKind::Shepherd => dog_velocities(rho, &agents.positions, model.kernel()?, model.perp_sign),
        _ => Ok(vec![[0.0, 0.0]; agents.len()]),
    }
}

/// Assemble the transport field of one population.
pub fn assemble_transport(
    model: &ModelSpec,
    rho: &DensityField,
    directions: &VectorField,
    agents: &AgentState,
) -> Result<Transport> {
    match model.kind {
        ModelKind::Local => Ok(transport_local(&model.law, directions)),
        ModelKind::NonlocalSpeed => transport_nonlocal_speed(rho, model.kernel()?, &model.law, directions),
        ModelKind::NonlocalRoute => transport_route(rho, model.kernel()?, &model.law, directions, model.epsilon),
        ModelKind::Piper => {
            if agents.len() != 1 {
                return Err(Error::config(format!("the piper model needs exactly one leader, got {}", agents.len())));
            }
            Ok(transport_piper(rho.grid, &model.law, agents.positions[0]))
        }
        ModelKind::Shepherd => Ok(transport_sheep(&model.law, directions, &agents.positions)),
    }
}
