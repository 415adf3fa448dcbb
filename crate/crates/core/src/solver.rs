//! Explicit time integration of the crowd densities and the coupled agents.
//!
//! Densities are advanced by a first-order finite-volume scheme with local
//! Lax-Friedrichs fluxes and dimensional splitting; the sweep order
//! alternates between steps. Walls carry no flux, exits absorb whatever
//! leaves the adjacent free cell. Agents use the explicit midpoint rule
//! with the density at the start of the step.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{agent_velocities, assemble_transport, AgentState, ModelSpec, Transport};
use crate::error::{Error, Result};
use crate::functionals::{metrics, Metrics};
use crate::grid::{CellClass, DensityField, RoomGeometry, ScalarField, VectorField};

/// Time stepping parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeParams {
    /// Courant number, in `(0, 0.5]`.
    pub cfl: f64,
    pub dt_max: f64,
    pub end_time: f64,
    /// Snapshot cadence in seconds.
    pub snapshot_every: f64,
    /// Stop once this fraction of the initial mass has left the domain.
    pub stop_at_evacuation: Option<f64>,
}

impl SchemeParams {
    pub fn new(cfl: f64, dt_max: f64, end_time: f64, snapshot_every: f64) -> Result<Self> {
        let p = SchemeParams { cfl, dt_max, end_time, snapshot_every, stop_at_evacuation: None };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl <= 0.5) {
            return Err(Error::config(format!("cfl must lie in (0, 0.5], got {}", self.cfl)));
        }
        if !(self.dt_max > 0.0) || !self.dt_max.is_finite() {
            return Err(Error::config(format!("dt_max must be positive, got {}", self.dt_max)));
        }
        if !(self.end_time >= 0.0) || !self.end_time.is_finite() {
            return Err(Error::config(format!("end_time must be finite and >= 0, got {}", self.end_time)));
        }
        if !(self.snapshot_every > 0.0) {
            return Err(Error::config(format!("snapshot cadence must be positive, got {}", self.snapshot_every)));
        }
        if let Some(theta) = self.stop_at_evacuation {
            if !(theta > 0.0 && theta <= 1.0) {
                return Err(Error::config(format!("evacuation fraction must lie in (0, 1], got {theta}")));
            }
        }
        Ok(())
    }
}

/// `min(dt_max, cfl * min(dx, dy) / max |V|)`, or `dt_max` for a quiescent field.
pub fn cfl_dt(speeds: &VectorField, params: &SchemeParams) -> f64 {
    let vmax = speeds.max_norm();
    let h = speeds.grid.dx.min(speeds.grid.dy);
    if vmax > 0.0 {
        params.dt_max.min(params.cfl * h / vmax)
    } else {
        params.dt_max
    }
}

/// Order of the two directional sweeps within a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepOrder {
    XThenY,
    YThenX,
}

impl SweepOrder {
    pub fn for_step(step: u64) -> Self {
        if step % 2 == 0 {
            SweepOrder::XThenY
        } else {
            SweepOrder::YThenX
        }
    }
}

/// Result of one finite-volume step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub density: DensityField,
    /// Mass that left through the exits during the step.
    pub outflow: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Axis {
    X,
    Y,
}

/// Numerical flux through a face between cells `l` and `r` (in the
/// positive axis direction). The exit arms are exact only for a flux
/// linear in the density; see [`Transport::flux_range`].
#[inline]
fn face_flux(cl: CellClass, cr: CellClass, rl: f64, rr: f64, fl: f64, fr: f64, al: f64, ar: f64) -> f64 {
    match (cl, cr) {
        (CellClass::Free, CellClass::Free) => 0.5 * (fl + fr) - 0.5 * al.max(ar) * (rr - rl),
        (CellClass::Free, CellClass::Exit) => fl.max(0.0),
        (CellClass::Exit, CellClass::Free) => fr.min(0.0),
        _ => 0.0,
    }
}

/// One directional sweep in place; returns the mass leaving through exits.
fn sweep(
    values: &mut [f64],
    transport: &Transport,
    waves: &VectorField,
    geometry: &RoomGeometry,
    axis: Axis,
    dt: f64,
) -> f64 {
    let g = geometry.grid;
    let (nx, ny) = (g.nx, g.ny);
    let c = match axis {
        Axis::X => 0,
        Axis::Y => 1,
    };
    let h = if axis == Axis::X { g.dx } else { g.dy };
    let lambda = dt / h;
    let classes = &geometry.classes;
    let is_exit = |l: usize, r: usize| classes[l] == CellClass::Exit || classes[r] == CellClass::Exit;
    // flux density f = rho V_axis, per cell
    let mut flux = vec![0.0; values.len()];
    flux.par_chunks_mut(nx).zip(values.par_chunks(nx)).enumerate().for_each(|(j, (f, row))| {
        for (i, (f, r)) in f.iter_mut().zip(row).enumerate() {
            *f = r * transport.velocity_at(j * nx + i, *r)[c];
        }
    });
    let face = |l: usize, r: usize, vl: f64, vr: f64| match (classes[l], classes[r]) {
        // an exit is an empty neighbor: the Godunov flux lets a jammed cell
        // drain at capacity
        (CellClass::Free, CellClass::Exit) => transport.flux_range(l, vl, c).1,
        (CellClass::Exit, CellClass::Free) => transport.flux_range(r, vr, c).0,
        _ => face_flux(classes[l], classes[r], vl, vr, flux[l], flux[r], waves.values[l][c], waves.values[r][c]),
    };
    let outflow = match axis {
        Axis::X => {
            // rows are independent; the grid edge is a wall
            let mut per_row = vec![0.0; ny];
            values.par_chunks_mut(nx).zip(per_row.par_iter_mut()).enumerate().for_each(|(j, (row, out))| {
                let mut faces = vec![0.0; nx + 1];
                for i in 1..nx {
                    let (l, r) = (j * nx + i - 1, j * nx + i);
                    faces[i] = face(l, r, row[i - 1], row[i]);
                    if is_exit(l, r) {
                        *out += faces[i].abs();
                    }
                }
                for (i, r) in row.iter_mut().enumerate() {
                    if classes[j * nx + i] == CellClass::Free {
                        *r -= lambda * (faces[i + 1] - faces[i]);
                    }
                }
            });
            per_row.iter().sum::<f64>()
        }
        Axis::Y => {
            // face row j separates cell rows j-1 and j; rows 0 and ny are walls
            let mut faces = vec![0.0; (ny + 1) * nx];
            let mut per_row = vec![0.0; ny + 1];
            {
                let vals: &[f64] = values;
                faces[nx..ny * nx].par_chunks_mut(nx).zip(per_row[1..ny].par_iter_mut()).enumerate().for_each(
                    |(jm, (fr, out))| {
                        let j = jm + 1;
                        for (i, f) in fr.iter_mut().enumerate() {
                            let (l, r) = ((j - 1) * nx + i, j * nx + i);
                            *f = face(l, r, vals[l], vals[r]);
                            if is_exit(l, r) {
                                *out += f.abs();
                            }
                        }
                    },
                );
            }
            values.par_chunks_mut(nx).enumerate().for_each(|(j, row)| {
                let below = &faces[j * nx..(j + 1) * nx];
                let above = &faces[(j + 1) * nx..(j + 2) * nx];
                for (i, r) in row.iter_mut().enumerate() {
                    if classes[j * nx + i] == CellClass::Free {
                        *r -= lambda * (above[i] - below[i]);
                    }
                }
            });
            per_row.iter().sum::<f64>()
        }
    };
    let face_len = if axis == Axis::X { g.dy } else { g.dx };
    outflow * dt * face_len
}

/// Largest step allowed by the per-sweep monotonicity bound `dt * a / h <= 1/2`.
fn sweep_limit(waves: &VectorField) -> f64 {
    let (mut ax, mut ay) = (0.0f64, 0.0f64);
    for w in &waves.values {
        ax = ax.max(w[0]);
        ay = ay.max(w[1]);
    }
    let lx = if ax > 0.0 { 0.5 * waves.grid.dx / ax } else { f64::INFINITY };
    let ly = if ay > 0.0 { 0.5 * waves.grid.dy / ay } else { f64::INFINITY };
    lx.min(ly)
}

/// Densities below this are set to zero after each step. Numerical
/// diffusion otherwise leaves subnormal values over the whole domain, which
/// are slower to operate on by orders of magnitude.
pub const NEGLIGIBLE_DENSITY: f64 = 1e-150;

fn flush_negligible(values: &mut [f64]) {
    for v in values {
        if v.abs() < NEGLIGIBLE_DENSITY {
            *v = 0.0;
        }
    }
}

/// One dimensionally split finite-volume step of `rho_t + div(rho V) = 0`.
pub fn fv_step(
    rho: &DensityField,
    transport: &Transport,
    dt: f64,
    geometry: &RoomGeometry,
    order: SweepOrder,
) -> Result<StepOutcome> {
    rho.grid.check_same(&geometry.grid, "fv_step density/geometry")?;
    rho.grid.check_same(&transport.grid, "fv_step density/velocity")?;
    let waves = transport.wave_speeds();
    let limit = sweep_limit(&waves);
    if !(dt >= 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt, limit });
    }
    let mut values = rho.values.clone();
    let mut outflow = 0.0;
    let axes = match order {
        SweepOrder::XThenY => [Axis::X, Axis::Y],
        SweepOrder::YThenX => [Axis::Y, Axis::X],
    };
    for axis in axes {
        outflow += sweep(&mut values, transport, &waves, geometry, axis, dt);
    }
    flush_negligible(&mut values);
    Ok(StepOutcome { density: ScalarField { grid: rho.grid, values }, outflow })
}

/// Directional derivative of `max(a, b)` given the derivatives at `a`, `b`.
#[inline]
fn dmax(a: f64, b: f64, da: f64, db: f64) -> f64 {
    if a > b {
        da
    } else if b > a {
        db
    } else {
        da.max(db)
    }
}

/// Directional derivative of `|v|`.
#[inline]
fn dabs(v: f64, dv: f64) -> f64 {
    if v > 0.0 {
        dv
    } else if v < 0.0 {
        -dv
    } else {
        dv.abs()
    }
}

/// One step of [`fv_step`] for a purely advective velocity `v` together with
/// its tangent: `r` is the perturbation of the density, `dv` the induced
/// perturbation of the velocity. Both densities use the same fluxes, so the
/// base update is bit-identical to `fv_step` with `Transport::frozen(v)`.
pub(crate) fn tangent_step(
    rho: &DensityField,
    r: &DensityField,
    v: &[[f64; 2]],
    dv: &[[f64; 2]],
    dt: f64,
    geometry: &RoomGeometry,
    order: SweepOrder,
) -> Result<(DensityField, DensityField)> {
    let g = geometry.grid;
    rho.grid.check_same(&g, "tangent density/geometry")?;
    r.grid.check_same(&g, "tangent perturbation/geometry")?;
    let waves = VectorField { grid: g, values: v.iter().map(|x| [x[0].abs(), x[1].abs()]).collect() };
    let limit = sweep_limit(&waves);
    if !(dt >= 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt, limit });
    }
    let classes = &geometry.classes;
    let (nx, ny) = (g.nx, g.ny);
    let mut a = rho.values.clone();
    let mut b = r.values.clone();
    let axes = match order {
        SweepOrder::XThenY => [Axis::X, Axis::Y],
        SweepOrder::YThenX => [Axis::Y, Axis::X],
    };
    for axis in axes {
        let (c, h, stride, n_faces) = match axis {
            Axis::X => (0, g.dx, 1, nx),
            Axis::Y => (1, g.dy, nx, ny),
        };
        let lambda = dt / h;
        let f: Vec<f64> = a.iter().zip(v).map(|(x, w)| x * w[c]).collect();
        let df: Vec<f64> = (0..a.len()).map(|k| b[k] * v[k][c] + a[k] * dv[k][c]).collect();
        // face q along the axis separates cells q-1 and q
        let mut flux = vec![0.0; a.len() + if axis == Axis::X { ny } else { nx }];
        let mut dflux = flux.clone();
        let face_index = |k: usize| match axis {
            Axis::X => k + k / nx,
            Axis::Y => k,
        };
        for k in 0..a.len() {
            let q = match axis {
                Axis::X => k % nx,
                Axis::Y => k / nx,
            };
            if q == 0 || q == n_faces {
                continue;
            }
            let (l, rr) = (k - stride, k);
            let (fl, fr) = (f[l], f[rr]);
            let (dfl, dfr) = (df[l], df[rr]);
            let (al, ar) = (waves.values[l][c], waves.values[rr][c]);
            let (face_f, face_df) = match (classes[l], classes[rr]) {
                (CellClass::Free, CellClass::Free) => {
                    let dal = dabs(v[l][c], dv[l][c]);
                    let dar = dabs(v[rr][c], dv[rr][c]);
                    let alpha = al.max(ar);
                    (
                        face_flux(classes[l], classes[rr], a[l], a[rr], fl, fr, al, ar),
                        0.5 * (dfl + dfr) - 0.5 * alpha * (b[rr] - b[l]) - 0.5 * dmax(al, ar, dal, dar) * (a[rr] - a[l]),
                    )
                }
                (CellClass::Free, CellClass::Exit) => (fl.max(0.0), dmax(fl, 0.0, dfl, 0.0)),
                (CellClass::Exit, CellClass::Free) => (fr.min(0.0), -dmax(-fr, 0.0, -dfr, 0.0)),
                _ => (0.0, 0.0),
            };
            flux[face_index(k)] = face_f;
            dflux[face_index(k)] = face_df;
        }
        for k in 0..a.len() {
            if classes[k] != CellClass::Free {
                continue;
            }
            let (lo, hi) = match axis {
                Axis::X => (face_index(k), face_index(k) + 1),
                Axis::Y => (k, k + nx),
            };
            a[k] -= lambda * (flux[hi] - flux[lo]);
            b[k] -= lambda * (dflux[hi] - dflux[lo]);
        }
    }
    flush_negligible(&mut a);
    flush_negligible(&mut b);
    Ok((ScalarField { grid: g, values: a }, ScalarField { grid: g, values: b }))
}

/// Densities, agents and clock.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub step: u64,
    pub densities: Vec<DensityField>,
    pub agents: AgentState,
}

impl SimState {
    pub fn new(densities: Vec<DensityField>, agents: AgentState) -> Self {
        SimState { t: 0.0, step: 0, densities, agents }
    }

    /// Pointwise sum of all populations.
    pub fn total_density(&self) -> DensityField {
        let mut total = self.densities[0].clone();
        for d in &self.densities[1..] {
            for (a, b) in total.values.iter_mut().zip(&d.values) {
                *a += b;
            }
        }
        total
    }
}

/// Everything needed to advance a state: model, geometry and the cached
/// preferred directions, one per population.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub model: ModelSpec,
    pub geometries: Vec<RoomGeometry>,
    pub directions: Vec<VectorField>,
    pub params: SchemeParams,
}

impl Simulation {
    pub fn new(
        model: ModelSpec,
        geometries: Vec<RoomGeometry>,
        directions: Vec<VectorField>,
        params: SchemeParams,
    ) -> Result<Self> {
        model.validate()?;
        params.validate()?;
        if geometries.len() != model.populations || directions.len() != model.populations {
            return Err(Error::config(format!(
                "{} populations but {} geometries and {} direction fields",
                model.populations,
                geometries.len(),
                directions.len()
            )));
        }
        let grid = geometries[0].grid;
        for (g, d) in geometries.iter().zip(&directions) {
            grid.check_same(&g.grid, "population geometry")?;
            grid.check_same(&d.grid, "population directions")?;
        }
        if let Some(k) = &model.kernel {
            if k.h != grid.dx || !grid.is_square() {
                return Err(Error::GridMismatch(format!("kernel built for h = {}, grid has h = {}", k.h, grid.dx)));
            }
        }
        Ok(Simulation { model, geometries, directions, params })
    }

    /// Transport fields of every population at the given state.
    pub fn transports(&self, state: &SimState) -> Result<Vec<Transport>> {
        state
            .densities
            .iter()
            .zip(&self.directions)
            .map(|(rho, dirs)| assemble_transport(&self.model, rho, dirs, &state.agents))
            .collect()
    }

    /// Stable step for the given transports.
    pub fn stable_dt(&self, transports: &[Transport]) -> f64 {
        transports
            .iter()
            .map(|t| cfl_dt(&t.wave_speeds(), &self.params))
            .fold(self.params.dt_max, f64::min)
    }

    /// Velocities of the agents at time `t` with the given positions.
    fn agent_rates(&self, total: &DensityField, agents: &AgentState, t: f64) -> Result<Vec<[f64; 2]>> {
        agent_velocities(&self.model, total, agents, t)
    }

    /// Advance by `dt` using precomputed transports (assembled at `state`).
    pub fn advance_with(&self, state: &SimState, transports: &[Transport], dt: f64) -> Result<(SimState, f64)> {
        let order = SweepOrder::for_step(state.step);
        let mut densities = Vec::with_capacity(state.densities.len());
        let mut outflow = 0.0;
        for ((rho, tr), geo) in state.densities.iter().zip(transports).zip(&self.geometries) {
            let out = fv_step(rho, tr, dt, geo, order)?;
            outflow += out.outflow;
            densities.push(out.density);
        }
        let agents = if state.agents.is_empty() {
            state.agents.clone()
        } else {
            let total = state.total_density();
            let k1 = self.agent_rates(&total, &state.agents, state.t)?;
            let mut mid = state.agents.clone();
            for (p, v) in mid.positions.iter_mut().zip(&k1) {
                p[0] += 0.5 * dt * v[0];
                p[1] += 0.5 * dt * v[1];
            }
            let k2 = self.agent_rates(&total, &mid, state.t + 0.5 * dt)?;
            let mut next = state.agents.clone();
            for (p, v) in next.positions.iter_mut().zip(&k2) {
                p[0] += dt * v[0];
                p[1] += dt * v[1];
            }
            next
        };
        Ok((SimState { t: state.t + dt, step: state.step + 1, densities, agents }, outflow))
    }

    /// Assemble the velocities at `state` and advance by `dt`.
    pub fn advance(&self, state: &SimState, dt: f64) -> Result<SimState> {
        let transports = self.transports(state)?;
        Ok(self.advance_with(state, &transports, dt)?.0)
    }
}

/// Assemble, then step by `dt` (free function form of [`Simulation::advance`]).
pub fn advance(state: &SimState, dt: f64, simulation: &Simulation) -> Result<SimState> {
    simulation.advance(state, dt)
}

/// Stored state at an output time.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub densities: Vec<DensityField>,
    pub agents: Vec<[f64; 2]>,
}

/// Output of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub snapshots: Vec<Snapshot>,
    /// Metrics of every population at every snapshot.
    pub metrics: Vec<Vec<Metrics>>,
    /// `(t, total mass)` after every step, starting at `t = 0`.
    pub mass_trace: Vec<(f64, f64)>,
    /// `[min, max]` over all populations and cells, after every step.
    pub density_range: Vec<[f64; 2]>,
    /// `(t, positions)` of the agents after every step.
    pub agent_track: Vec<(f64, Vec<[f64; 2]>)>,
    pub dts: Vec<f64>,
    pub initial_mass: f64,
    /// Total mass that left through the exits.
    pub outflow: f64,
    pub final_time: f64,
}

/// A fully specified run: simulation plus initial state.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub simulation: Simulation,
    pub initial: SimState,
}

/// Time step policy for a run.
#[derive(Debug, Clone, Copy)]
pub enum DtPolicy<'a> {
    Adaptive,
    /// Replay the given sequence of steps, regardless of stability.
    Replay(&'a [f64]),
}

fn record(state: &SimState) -> (Snapshot, Vec<Metrics>) {
    let m = state.densities.iter().map(metrics).collect();
    (
        Snapshot { t: state.t, densities: state.densities.clone(), agents: state.agents.positions.clone() },
        m,
    )
}

fn total_mass(state: &SimState) -> f64 {
    state.densities.iter().map(|d| metrics(d).mass).sum()
}

fn range_of(state: &SimState) -> [f64; 2] {
    state.densities.iter().fold([f64::INFINITY, f64::NEG_INFINITY], |r, d| [r[0].min(d.min()), r[1].max(d.max())])
}

/// Integrate until the end time (or until the evacuation threshold).
pub fn run_scenario(scenario: &Scenario) -> Result<RunResult> {
    run_with_policy(scenario, DtPolicy::Adaptive)
}

pub fn run_with_policy(scenario: &Scenario, policy: DtPolicy<'_>) -> Result<RunResult> {
    let sim = &scenario.simulation;
    let p = &sim.params;
    let mut state = scenario.initial.clone();
    for (d, g) in state.densities.iter_mut().zip(&sim.geometries) {
        g.mask(d);
    }
    let initial_mass = total_mass(&state);
    let end = match policy {
        DtPolicy::Adaptive => p.end_time,
        DtPolicy::Replay(dts) => dts.iter().sum::<f64>(),
    };
    let (snap, m) = record(&state);
    let mut snapshots = vec![snap];
    let mut metric_rows = vec![m];
    let mut mass_trace = vec![(0.0, initial_mass)];
    let mut density_range = vec![range_of(&state)];
    let mut agent_track = vec![(0.0, state.agents.positions.clone())];
    let mut dts = Vec::new();
    let mut outflow = 0.0;
    let mut next_snapshot = 1usize;
    let threshold = p.stop_at_evacuation.map(|theta| (1.0 - theta) * initial_mass);
    let eps = 1e-12 * end.max(1.0);

    loop {
        let replay_done = matches!(policy, DtPolicy::Replay(d) if dts.len() == d.len());
        if state.t >= end - eps || replay_done {
            break;
        }
        let transports = sim.transports(&state)?;
        let dt = match policy {
            DtPolicy::Adaptive => {
                let target = (next_snapshot as f64 * p.snapshot_every).min(end);
                sim.stable_dt(&transports).min(target - state.t)
            }
            DtPolicy::Replay(d) => d[dts.len()],
        };
        let (next, out) = sim.advance_with(&state, &transports, dt)?;
        if let Some((k, cell)) = next
            .densities
            .iter()
            .enumerate()
            .find_map(|(k, d)| d.first_non_finite().map(|c| (k, c)))
        {
            log::error!("population {k}: non-finite density at t = {} in cell {cell}", next.t);
            let (last_good, _) = record(&state);
            return Err(Error::NonFinite { t: next.t, cell, last_good: Some(Box::new(last_good)) });
        }
        state = next;
        dts.push(dt);
        outflow += out;
        let mass = total_mass(&state);
        mass_trace.push((state.t, mass));
        density_range.push(range_of(&state));
        agent_track.push((state.t, state.agents.positions.clone()));

        let snapshot_due = (state.t - next_snapshot as f64 * p.snapshot_every).abs() <= eps
            || state.t >= next_snapshot as f64 * p.snapshot_every;
        let evacuated = threshold.is_some_and(|th| mass <= th);
        let finished = state.t >= end - eps;
        if snapshot_due || evacuated || finished {
            let (snap, m) = record(&state);
            snapshots.push(snap);
            metric_rows.push(m);
            while next_snapshot as f64 * p.snapshot_every <= state.t + eps {
                next_snapshot += 1;
            }
        }
        if evacuated {
            break;
        }
    }

    Ok(RunResult {
        snapshots,
        metrics: metric_rows,
        mass_trace,
        density_range,
        agent_track,
        dts,
        initial_mass,
        outflow,
        final_time: state.t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SpeedLaw;
    use crate::grid::{rasterize_geometry, Rect};

    fn walled(n: usize, h: f64) -> RoomGeometry {
        rasterize_geometry(Rect::new(0.0, 0.0, n as f64 * h, n as f64 * h), &[], &[], h).unwrap()
    }

    #[test]
    fn cfl_formula() {
        let g = walled(10, 0.1).grid;
        let p = SchemeParams::new(0.45, 1.0, 1.0, 1.0).unwrap();
        let v = VectorField::from_fn(g, |_| [6.0, 0.0]);
        assert!((cfl_dt(&v, &p) - 0.0075).abs() < 1e-15);
        assert_eq!(cfl_dt(&VectorField::zeros(g), &p), 1.0);
    }

    #[test]
    fn zero_velocity_leaves_density_untouched() {
        let geo = walled(20, 0.1);
        let rho = ScalarField::from_fn(geo.grid, |x| (x[0] * 3.0).sin().abs() + x[1]);
        let tr = Transport::frozen(VectorField::zeros(geo.grid));
        for order in [SweepOrder::XThenY, SweepOrder::YThenX] {
            let out = fv_step(&rho, &tr, 0.3, &geo, order).unwrap();
            assert_eq!(out.density.values, rho.values);
        }
    }

    #[test]
    fn cfl_violation_rejected() {
        let geo = walled(10, 0.1);
        let rho = ScalarField::zeros(geo.grid);
        let tr = Transport::frozen(VectorField::from_fn(geo.grid, |_| [1.0, 0.0]));
        assert!(matches!(fv_step(&rho, &tr, 0.06, &geo, SweepOrder::XThenY), Err(Error::Cfl { .. })));
        assert!(fv_step(&rho, &tr, 0.05, &geo, SweepOrder::XThenY).is_ok());
    }

    #[test]
    fn jammed_cell_drains_into_exit() {
        use crate::grid::{Exit, Side};
        let h = 0.1;
        let exit = Exit { side: Side::East, from: 0.0, to: 0.1 };
        let geo = rasterize_geometry(Rect::new(0.0, 0.0, 0.3, 0.1), &[], &[exit], h).unwrap();
        assert_eq!(geo.classes, vec![CellClass::Free, CellClass::Free, CellClass::Exit]);
        let rho = ScalarField::from_values(geo.grid, vec![1.0, 1.0, 0.0]).unwrap();
        let law = SpeedLaw::linear(6.0, 1.0).unwrap();
        let tr = crate::dynamics::transport_local(&law, &VectorField::from_fn(geo.grid, |_| [1.0, 0.0]));
        let dt = 0.005;
        let out = fv_step(&rho, &tr, dt, &geo, SweepOrder::XThenY).unwrap();
        // capacity max rho v(rho) = 1.5 leaves through the exit face
        assert!((out.outflow - 1.5 * dt * h).abs() < 1e-15);
        assert!((out.density.values[1] - (1.0 - 1.5 * dt / h)).abs() < 1e-15);
        assert_eq!(out.density.values[0], 1.0);
    }

    #[test]
    fn walled_step_conserves_mass() {
        let geo = walled(30, 0.1);
        let law = SpeedLaw::linear(2.0, 1.0).unwrap();
        let dirs = VectorField::from_fn(geo.grid, |x| {
            let (a, b) = (x[1] - 1.5, 1.5 - x[0]);
            let n = a.hypot(b).max(1e-9);
            [a / n, b / n]
        });
        let rho = ScalarField::from_fn(geo.grid, |x| if (x[0] - 1.0).abs() < 0.5 { 0.8 } else { 0.1 });
        let tr = crate::dynamics::transport_local(&law, &dirs);
        let m0: f64 = rho.values.iter().sum();
        let out = fv_step(&rho, &tr, 0.02, &geo, SweepOrder::XThenY).unwrap();
        let m1: f64 = out.density.values.iter().sum();
        assert!(((m1 - m0) / m0).abs() < 1e-12);
        assert!(out.density.min() >= 0.0);
        assert_eq!(out.outflow, 0.0);
    }
}
