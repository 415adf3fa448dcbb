//! Diagnostics and functionals of the density: mass, sup norm, total
//! variation, the running cost `J_T`, evacuation times, and the directional
//! (Gateaux) derivative of the solution map of the nonlocal speed model.

use serde::Serialize;

use crate::dynamics::ModelKind;
use crate::error::{Error, Result};
use crate::grid::{DensityField, Rect};
use crate::nonlocal::convolve;
use crate::solver::{cfl_dt, run_with_policy, tangent_step, DtPolicy, RunResult, Scenario, SweepOrder};

/// Mass (people), sup norm (people/m^2) and discrete total variation (people/m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub mass: f64,
    pub linf: f64,
    pub tv: f64,
}

/// Mass, sup norm and total variation over interior faces.
pub fn metrics(rho: &DensityField) -> Metrics {
    let g = rho.grid;
    let v = &rho.values;
    let mass = v.iter().sum::<f64>() * g.cell_area();
    let linf = v.iter().copied().fold(0.0, f64::max);
    let mut jx = 0.0;
    let mut jy = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.index(i, j);
            if i + 1 < g.nx {
                jx += (v[k + 1] - v[k]).abs();
            }
            if j + 1 < g.ny {
                jy += (v[k + g.nx] - v[k]).abs();
            }
        }
    }
    Metrics { mass, linf, tv: jx * g.dy + jy * g.dx }
}

/// Penalty `f` of the running cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Penalty {
    /// `max(0, rho - threshold)^2`.
    QuadraticExcess { threshold: f64 },
    /// Piecewise linear through `(rho[k], f[k])`, constant beyond the table.
    Tabulated { rho: Vec<f64>, f: Vec<f64> },
}

impl Penalty {
    pub fn validate(&self) -> Result<()> {
        match self {
            Penalty::QuadraticExcess { threshold } if !threshold.is_finite() => {
                Err(Error::config("penalty threshold must be finite"))
            }
            Penalty::Tabulated { rho, f } => {
                if rho.is_empty() || rho.len() != f.len() {
                    return Err(Error::config("tabulated penalty needs two equally long, non-empty tables"));
                }
                if rho.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::config("tabulated penalty: densities must be increasing"));
                }
                if f.iter().any(|x| !(*x >= 0.0)) {
                    return Err(Error::config("tabulated penalty must be non-negative"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, rho: f64) -> f64 {
        match self {
            Penalty::QuadraticExcess { threshold } => {
                let e = (rho - threshold).max(0.0);
                e * e
            }
            Penalty::Tabulated { rho: r, f } => {
                if rho <= r[0] {
                    return f[0];
                }
                if rho >= *r.last().unwrap() {
                    return *f.last().unwrap();
                }
                let k = r.partition_point(|x| *x <= rho) - 1;
                let t = (rho - r[k]) / (r[k + 1] - r[k]);
                f[k] + t * (f[k + 1] - f[k])
            }
        }
    }
}

/// Running cost `int_0^T int_Omega f(rho) dx dt`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostSpec {
    pub region: Vec<Rect>,
    pub horizon: f64,
    pub penalty: Penalty,
}

fn spatial_cost(rho: &DensityField, spec: &CostSpec) -> f64 {
    let g = rho.grid;
    let mut acc = 0.0;
    for (k, v) in rho.values.iter().enumerate() {
        let c = g.center_of(k);
        if spec.region.iter().any(|r| r.contains(c)) {
            acc += spec.penalty.eval(*v);
        }
    }
    acc * g.cell_area()
}

/// `J_T` by the trapezoid rule in time over the stored snapshots (density
/// summed over populations) and midpoint quadrature in space.
pub fn cost_jt(run: &RunResult, spec: &CostSpec) -> Result<f64> {
    spec.penalty.validate()?;
    let horizon = spec.horizon;
    if !(horizon >= 0.0) {
        return Err(Error::config(format!("cost horizon must be >= 0, got {horizon}")));
    }
    let last = run.snapshots.last().map_or(0.0, |s| s.t);
    if horizon > last * (1.0 + 1e-12) + 1e-12 {
        return Err(Error::config(format!("cost horizon {horizon} exceeds the run horizon {last}")));
    }
    let samples: Vec<(f64, f64)> = run
        .snapshots
        .iter()
        .map(|s| {
            let mut total = s.densities[0].clone();
            for d in &s.densities[1..] {
                total.values.iter_mut().zip(&d.values).for_each(|(a, b)| *a += b);
            }
            (s.t, spatial_cost(&total, spec))
        })
        .collect();
    let mut acc = 0.0;
    for w in samples.windows(2) {
        let ((t0, c0), (t1, c1)) = (w[0], w[1]);
        if t0 >= horizon {
            break;
        }
        if t1 <= horizon {
            acc += 0.5 * (t1 - t0) * (c0 + c1);
        } else {
            let cm = c0 + (c1 - c0) * (horizon - t0) / (t1 - t0);
            acc += 0.5 * (horizon - t0) * (c0 + cm);
        }
    }
    Ok(acc)
}

/// First time at which at most `(1 - theta)` of the initial mass remains,
/// interpolated linearly between steps. `None` if never reached.
pub fn evacuation_time(run: &RunResult, theta: f64) -> Result<Option<f64>> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::config(format!("evacuation fraction must lie in (0, 1], got {theta}")));
    }
    if run.initial_mass <= 0.0 {
        return Ok(Some(0.0));
    }
    let target = (1.0 - theta) * run.initial_mass;
    let trace = &run.mass_trace;
    for (k, &(t, m)) in trace.iter().enumerate() {
        if m <= target {
            if k == 0 {
                return Ok(Some(t));
            }
            let (t0, m0) = trace[k - 1];
            let s = (m0 - target) / (m0 - m);
            return Ok(Some(t0 + s * (t - t0)));
        }
    }
    Ok(None)
}

/// Base density and its directional derivative at the final time.
#[derive(Debug, Clone)]
pub struct LinearizedRun {
    pub rho: DensityField,
    pub r: DensityField,
    /// The steps taken, replayable by [`run_with_policy`].
    pub dts: Vec<f64>,
}

fn check_speed_model(scenario: &Scenario) -> Result<()> {
    let sim = &scenario.simulation;
    if sim.model.kind != ModelKind::NonlocalSpeed {
        return Err(Error::config(format!(
            "the linearized equation is available for the nonlocal speed model only, got {:?}",
            sim.model.kind
        )));
    }
    if sim.model.populations != 1 || scenario.initial.densities.len() != 1 {
        return Err(Error::config("the linearized equation needs a single population"));
    }
    Ok(())
}

/// Co-evolve the density and its perturbation `r` up to `horizon`.
///
/// `r` solves the linearization of the discrete scheme,
/// `r_t + div(r v(rho*eta) nu) = -div(rho v'(rho*eta) (r*eta) nu)`, with the
/// same fluxes, splitting and time steps as the nonlinear run.
pub fn solve_linearized(scenario: &Scenario, r0: &DensityField, horizon: f64) -> Result<LinearizedRun> {
    check_speed_model(scenario)?;
    let sim = &scenario.simulation;
    let geo = &sim.geometries[0];
    let dirs = &sim.directions[0];
    let law = &sim.model.law;
    let kernel = sim.model.kernel.as_ref().expect("validated model has a kernel");
    scenario.initial.densities[0].grid.check_same(&r0.grid, "linearized datum")?;

    let mut rho = scenario.initial.densities[0].clone();
    let mut r = r0.clone();
    geo.mask(&mut rho);
    geo.mask(&mut r);
    let mut t = 0.0;
    let mut step = scenario.initial.step;
    let mut dts = Vec::new();
    let eps = 1e-12 * horizon.max(1.0);
    while t < horizon - eps {
        let avg = convolve(&rho, kernel)?;
        let davg = convolve(&r, kernel)?;
        let mut v = Vec::with_capacity(rho.values.len());
        let mut dv = Vec::with_capacity(rho.values.len());
        for k in 0..rho.values.len() {
            let n = dirs.values[k];
            let s = law.speed(avg.values[k]);
            let ds = law.derivative(avg.values[k]) * davg.values[k];
            v.push([s * n[0], s * n[1]]);
            dv.push([ds * n[0], ds * n[1]]);
        }
        let waves = crate::grid::VectorField {
            grid: rho.grid,
            values: v.iter().map(|x| [x[0].abs(), x[1].abs()]).collect(),
        };
        let dt = cfl_dt(&waves, &sim.params).min(horizon - t);
        let (nr, nd) = tangent_step(&rho, &r, &v, &dv, dt, geo, SweepOrder::for_step(step))?;
        rho = nr;
        r = nd;
        t += dt;
        step += 1;
        dts.push(dt);
    }
    Ok(LinearizedRun { rho, r, dts })
}

/// Finite-difference check of the directional derivative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateauxReport {
    pub hs: Vec<f64>,
    /// `|| (rho_h(T) - rho(T)) / h - r(T) ||_L1` per `h`.
    pub errors: Vec<f64>,
    /// Least-squares slope of `log e` against `log h`.
    pub slope: f64,
    pub horizon: f64,
    pub steps: usize,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// `e(h)` for each `h`, comparing perturbed nonlinear runs with the
/// linearized solution. All runs replay the same time steps.
pub fn gateaux_check(scenario: &Scenario, r0: &DensityField, hs: &[f64], horizon: f64) -> Result<GateauxReport> {
    check_speed_model(scenario)?;
    if hs.is_empty() || hs.iter().any(|h| !(*h > 0.0)) || hs.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::config("perturbation sizes must be positive and strictly decreasing"));
    }
    let lin = solve_linearized(scenario, r0, horizon)?;
    let base = {
        let mut s = scenario.clone();
        s.simulation.params.stop_at_evacuation = None;
        s
    };
    let final_density = |sc: &Scenario| -> Result<DensityField> {
        let run = run_with_policy(sc, DtPolicy::Replay(&lin.dts))?;
        Ok(run.snapshots.last().expect("a run has snapshots").densities[0].clone())
    };
    let rho_t = final_density(&base)?;
    let mut errors = Vec::with_capacity(hs.len());
    for &h in hs {
        let mut perturbed = base.clone();
        perturbed.initial.densities[0] = base.initial.densities[0].axpy(h, r0)?;
        let rho_h = final_density(&perturbed)?;
        let g = rho_t.grid;
        let e: f64 = rho_h
            .values
            .iter()
            .zip(&rho_t.values)
            .zip(&lin.r.values)
            .map(|((a, b), r)| ((a - b) / h - r).abs())
            .sum::<f64>()
            * g.cell_area();
        errors.push(e);
    }
    let slope = if errors.iter().all(|e| *e > 0.0) && hs.len() > 1 { loglog_slope(hs, &errors) } else { f64::NAN };
    Ok(GateauxReport { hs: hs.to_vec(), errors, slope, horizon, steps: lin.dts.len() })
}
