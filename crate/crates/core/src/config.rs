//! TOML scenario files.
//!
//! A file is parsed into raw tables (unknown keys rejected), then validated
//! into a [`ScenarioConfig`]. Validation errors name the offending line when
//! it can be located.
//!
//! ```toml
//! name = "corridor"
//!
//! [model]
//! kind = "route_choice"        # local | nonlocal_speed | route_choice | piper | shepherd
//! epsilon = 0.2
//! speed = { law = "linear", vmax = 6.0, jam = 1.0 }
//! kernel = { profile = "poly3", radius = 0.6, normalized = false }
//!
//! [geometry]
//! domain = [0.0, -3.0, 10.0, 3.0]
//! dx = 0.05
//! exits = [{ side = "east", from = -0.5, to = 0.5 }]
//! obstacles = [{ disc = { center = [8.5, 0.0], radius = 0.3 } }]
//!
//! [[populations]]
//! direction = "geodesic"
//! initial = [{ rect = [2.0, -2.0, 7.0, 2.0], level = 0.75 }]
//!
//! [scheme]
//! cfl = 0.45
//! dt_max = 0.05
//! end_time = 60.0
//! snapshot_every = 1.0
//! stop_at_evacuation = 0.999
//! ```

use serde::{Deserialize, Serialize};

use crate::confinement::{AgentPath, AgentTrack, PsiProfile, ReachParams};
use crate::dynamics::{AgentState, ModelKind, ModelSpec, SpeedLaw, WaypointTrack};
use crate::error::{Error, Result};
use crate::functionals::{CostSpec, Penalty};
use crate::geometry::{geodesic_directions, solve_eikonal};
use crate::grid::{indicator_datum, rasterize_geometry, Disc, Exit, Grid2D, Rect, ScalarField, Shape, Side, VectorField};
use crate::nonlocal::{build_kernel, KernelProfile};
use crate::solver::{Scenario, SchemeParams, SimState, Simulation};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    model: Option<RawModel>,
    geometry: Option<RawGeometry>,
    #[serde(default)]
    populations: Vec<RawPopulation>,
    agents: Option<RawAgents>,
    scheme: Option<RawScheme>,
    output: Option<RawOutput>,
    cost: Option<RawCost>,
    gateaux: Option<RawGateaux>,
    confinement: Option<RawConfinement>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: String,
    speed: RawSpeed,
    kernel: Option<RawKernel>,
    epsilon: Option<f64>,
    perp_sign: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpeed {
    law: String,
    vmax: Option<f64>,
    jam: Option<f64>,
    rho: Option<Vec<f64>>,
    v: Option<Vec<f64>>,
    value: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    profile: String,
    radius: f64,
    normalized: bool,
    samples: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    domain: [f64; 4],
    dx: f64,
    #[serde(default)]
    exits: Vec<RawExit>,
    #[serde(default)]
    obstacles: Vec<RawShape>,
}

#[derive(Debug, Clone, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct RawExit {
    side: String,
    from: f64,
    to: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct RawShape {
    rect: Option<[f64; 4]>,
    disc: Option<RawDisc>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
struct RawDisc {
    center: [f64; 2],
    radius: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPopulation {
    direction: String,
    vector: Option<[f64; 2]>,
    point: Option<[f64; 2]>,
    exits: Option<Vec<RawExit>>,
    #[serde(default)]
    initial: Vec<RawPiece>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPiece {
    rect: Option<[f64; 4]>,
    level: Option<f64>,
    bump: Option<RawBump>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBump {
    center: [f64; 2],
    radius: f64,
    height: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgents {
    leader: Option<RawLeader>,
    #[serde(default)]
    dogs: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLeader {
    position: [f64; 2],
    waypoints: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScheme {
    cfl: f64,
    dt_max: f64,
    end_time: f64,
    snapshot_every: f64,
    stop_at_evacuation: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    snapshots: Option<bool>,
    pgm: Option<bool>,
    pgm_max: Option<f64>,
    evacuation_fraction: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    region: Vec<[f64; 4]>,
    horizon: f64,
    penalty: String,
    threshold: Option<f64>,
    rho: Option<Vec<f64>>,
    f: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGateaux {
    hs: Vec<f64>,
    horizon: f64,
    perturbation: Vec<RawPiece>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfinement {
    psi: RawPsi,
    c: f64,
    initial: RawShape,
    grid: [f64; 4],
    dx: f64,
    horizon: f64,
    #[serde(default)]
    agents: Vec<RawAgentPath>,
    cfl: Option<f64>,
    reinit_every: Option<usize>,
    snapshot_every: Option<f64>,
    condition: Option<RawCondition>,
    dispersal: Option<RawDispersal>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPsi {
    kind: String,
    value: Option<f64>,
    a: Option<f64>,
    r: Option<Vec<f64>>,
    psi: Option<Vec<f64>>,
    dpsi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgentPath {
    fixed: Option<[f64; 2]>,
    orbit: Option<RawOrbit>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOrbit {
    center: Option<[f64; 2]>,
    radius: f64,
    omega: f64,
    phase: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCondition {
    radius: f64,
    r_minus: f64,
    r_plus: f64,
    samples: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDispersal {
    sigma_max: f64,
    samples: Option<usize>,
}

/// Speed law as written in the file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SpeedSpec {
    Linear { vmax: f64, jam: f64 },
    Tabulated { rho: Vec<f64>, v: Vec<f64> },
    Constant { v: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelSpec {
    pub profile: KernelProfile,
    pub radius: f64,
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub law: SpeedLaw,
    pub kernel: Option<KernelSpec>,
    pub epsilon: f64,
    pub perp_sign: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryConfig {
    pub domain: Rect,
    pub dx: f64,
    pub exits: Vec<Exit>,
    pub obstacles: Vec<Shape>,
}

/// Preferred direction field of a population.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DirectionSpec {
    /// Along shortest paths to the population's exits.
    Geodesic,
    /// A fixed unit vector.
    Constant([f64; 2]),
    /// Unit vector toward a point.
    Toward([f64; 2]),
    /// Zero everywhere.
    None,
}

/// One additive piece of an initial density.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DensityPiece {
    /// `level` on cells whose center is in the rectangle.
    Indicator { rect: Rect, level: f64 },
    /// `height (1 - |x - center|^2 / radius^2)^3` inside the disc.
    Bump { center: [f64; 2], radius: f64, height: f64 },
}

impl DensityPiece {
    fn eval(&self, x: [f64; 2]) -> f64 {
        match self {
            DensityPiece::Indicator { rect, level } => {
                if rect.contains(x) {
                    *level
                } else {
                    0.0
                }
            }
            DensityPiece::Bump { center, radius, height } => {
                let q = ((x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2)) / (radius * radius);
                if q < 1.0 {
                    height * (1.0 - q).powi(3)
                } else {
                    0.0
                }
            }
        }
    }
}

/// Sum of the pieces, sampled at cell centers.
pub fn sample_density(grid: Grid2D, pieces: &[DensityPiece]) -> Result<ScalarField> {
    let mut out = ScalarField::zeros(grid);
    for p in pieces {
        let f = match p {
            DensityPiece::Indicator { rect, level } => indicator_datum(grid, *rect, *level)?,
            _ => ScalarField::from_fn(grid, |x| p.eval(x)),
        };
        out.values.iter_mut().zip(&f.values).for_each(|(a, b)| *a += b);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationConfig {
    pub direction: DirectionSpec,
    /// Overrides the geometry's exits for this population.
    pub exits: Option<Vec<Exit>>,
    pub initial: Vec<DensityPiece>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentsConfig {
    pub leader: Option<([f64; 2], Vec<[f64; 2]>)>,
    pub dogs: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputConfig {
    pub snapshots: bool,
    pub pgm: bool,
    /// Density mapped to white in PGM images.
    pub pgm_max: f64,
    pub evacuation_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateauxConfig {
    pub hs: Vec<f64>,
    pub horizon: f64,
    pub perturbation: Vec<DensityPiece>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionConfig {
    pub radius: f64,
    pub r_minus: f64,
    pub r_plus: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersalConfig {
    pub sigma_max: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfinementConfig {
    pub psi: PsiProfile,
    pub c: f64,
    pub initial: Shape,
    pub bounds: Rect,
    pub dx: f64,
    pub horizon: f64,
    pub track: AgentTrack,
    pub params: ReachParams,
    pub condition: Option<ConditionConfig>,
    pub dispersal: Option<DispersalConfig>,
}

/// A validated scenario file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub model: Option<ModelConfig>,
    pub geometry: Option<GeometryConfig>,
    pub populations: Vec<PopulationConfig>,
    pub agents: AgentsConfig,
    pub scheme: Option<SchemeParams>,
    pub output: OutputConfig,
    pub cost: Option<CostSpec>,
    pub gateaux: Option<GateauxConfig>,
    pub confinement: Option<ConfinementConfig>,
}

/// Command-line overrides applied before building a scenario.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Overrides {
    pub dx: Option<f64>,
    pub end_time: Option<f64>,
}

/// Locates `key` inside `[table]` (or `[[table]]`, dotted inline keys
/// included) for error messages.
struct Locator<'a> {
    text: &'a str,
}

impl Locator<'_> {
    fn line_of(&self, table: &str, key: &str) -> Option<usize> {
        let mut current = String::new();
        let mut header_line = None;
        for (n, raw) in self.text.lines().enumerate() {
            let line = raw.trim();
            if line.starts_with('[') {
                current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
                if current == table {
                    header_line.get_or_insert(n + 1);
                }
                continue;
            }
            let in_table = current == table || (table.is_empty() && current.is_empty());
            if in_table {
                if let Some(rest) = line.strip_prefix(key) {
                    if rest.trim_start().starts_with('=') {
                        return Some(n + 1);
                    }
                }
            }
        }
        if key.is_empty() {
            header_line
        } else {
            self.line_of(table, "").or(header_line)
        }
    }

    fn err(&self, table: &str, key: &str, msg: impl std::fmt::Display) -> Error {
        let what = if key.is_empty() { table.to_string() } else if table.is_empty() { key.to_string() } else { format!("{table}.{key}") };
        match self.line_of(table, key) {
            Some(n) => Error::Config(format!("line {n}: {what}: {msg}")),
            None => Error::Config(format!("{what}: {msg}")),
        }
    }

    /// Re-anchor an error raised by a library constructor.
    fn wrap(&self, table: &str, key: &str, e: Error) -> Error {
        match e {
            Error::Config(msg) => self.err(table, key, msg),
            other => other,
        }
    }
}

fn finite(loc: &Locator, table: &str, key: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(loc.err(table, key, format!("must be finite, got {v}")))
    }
}

fn rect(loc: &Locator, table: &str, key: &str, r: [f64; 4]) -> Result<Rect> {
    if r.iter().any(|v| !v.is_finite()) || !(r[2] > r[0] && r[3] > r[1]) {
        return Err(loc.err(table, key, format!("rectangle [x0, y0, x1, y1] needs x1 > x0 and y1 > y0, got {r:?}")));
    }
    Ok(Rect::new(r[0], r[1], r[2], r[3]))
}

fn shape(loc: &Locator, table: &str, key: &str, s: &RawShape) -> Result<Shape> {
    match (&s.rect, &s.disc) {
        (Some(r), None) => Ok(Shape::Rect(rect(loc, table, key, *r)?)),
        (None, Some(d)) => {
            if !(d.radius > 0.0 && d.radius.is_finite()) || d.center.iter().any(|v| !v.is_finite()) {
                return Err(loc.err(table, key, format!("disc needs a finite center and positive radius, got {d:?}")));
            }
            Ok(Shape::Disc(Disc { center: d.center, radius: d.radius }))
        }
        _ => Err(loc.err(table, key, "a shape is exactly one of `rect` or `disc`")),
    }
}

fn exit(loc: &Locator, table: &str, key: &str, e: &RawExit) -> Result<Exit> {
    let side = match e.side.as_str() {
        "west" => Side::West,
        "east" => Side::East,
        "south" => Side::South,
        "north" => Side::North,
        other => return Err(loc.err(table, key, format!("unknown side `{other}` (west, east, south, north)"))),
    };
    if !(e.from.is_finite() && e.to.is_finite() && e.from <= e.to) {
        return Err(loc.err(table, key, format!("exit interval needs from <= to, got [{}, {}]", e.from, e.to)));
    }
    Ok(Exit { side, from: e.from, to: e.to })
}

fn pieces(loc: &Locator, table: &str, key: &str, raw: &[RawPiece]) -> Result<Vec<DensityPiece>> {
    raw.iter()
        .map(|p| match (&p.rect, p.level, &p.bump) {
            (Some(r), Some(level), None) => {
                if !(level >= 0.0 && level.is_finite()) {
                    return Err(loc.err(table, key, format!("density level must be >= 0, got {level}")));
                }
                Ok(DensityPiece::Indicator { rect: rect(loc, table, key, *r)?, level })
            }
            (None, None, Some(b)) => {
                if !(b.radius > 0.0) || !(b.height.is_finite()) || b.center.iter().any(|v| !v.is_finite()) {
                    return Err(loc.err(table, key, "bump needs a finite center and height and a positive radius"));
                }
                Ok(DensityPiece::Bump { center: b.center, radius: b.radius, height: b.height })
            }
            _ => Err(loc.err(table, key, "a density piece is either `rect` with `level`, or `bump`")),
        })
        .collect()
}

fn speed_law(loc: &Locator, s: &RawSpeed) -> Result<SpeedLaw> {
    let t = "model";
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| loc.err(t, "speed", format!("law `{}` needs `{name}`", s.law)));
    let law = match s.law.as_str() {
        "linear" => SpeedLaw::linear(need(s.vmax, "vmax")?, need(s.jam, "jam")?),
        "tabulated" => {
            let rho = s.rho.clone().ok_or_else(|| loc.err(t, "speed", "tabulated law needs `rho`"))?;
            let v = s.v.clone().ok_or_else(|| loc.err(t, "speed", "tabulated law needs `v`"))?;
            SpeedLaw::tabulated(rho, v)
        }
        "constant" => SpeedLaw::constant(need(s.value, "value")?),
        other => return Err(loc.err(t, "speed", format!("unknown speed law `{other}` (linear, tabulated, constant)"))),
    };
    law.map_err(|e| loc.wrap(t, "speed", e))
}

fn psi_profile(loc: &Locator, p: &RawPsi) -> Result<PsiProfile> {
    let t = "confinement";
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| loc.err(t, "psi", format!("psi `{}` needs `{name}`", p.kind)));
    let psi = match p.kind.as_str() {
        "constant" => PsiProfile::Constant(need(p.value, "value")?),
        "scaled_exp" => PsiProfile::ScaledExp { a: need(p.a, "a")? },
        "linear" => PsiProfile::Linear { a: need(p.a, "a")? },
        "tabulated" => PsiProfile::Tabulated {
            r: p.r.clone().ok_or_else(|| loc.err(t, "psi", "tabulated psi needs `r`"))?,
            psi: p.psi.clone().ok_or_else(|| loc.err(t, "psi", "tabulated psi needs `psi`"))?,
            dpsi: p.dpsi.clone(),
        },
        other => {
            return Err(loc.err(t, "psi", format!("unknown psi `{other}` (constant, scaled_exp, tabulated, linear)")));
        }
    };
    psi.validate().map_err(|e| loc.wrap(t, "psi", e))?;
    Ok(psi)
}

/// Parse and validate a scenario file.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
    let loc = Locator { text };
    if raw.model.is_none() && raw.confinement.is_none() {
        return Err(Error::Config("missing model".into()));
    }

    let model = raw
        .model
        .as_ref()
        .map(|m| -> Result<ModelConfig> {
            let kind = match m.kind.as_str() {
                "local" => ModelKind::Local,
                "nonlocal_speed" => ModelKind::NonlocalSpeed,
                "route_choice" => ModelKind::NonlocalRoute,
                "piper" => ModelKind::Piper,
                "shepherd" => ModelKind::Shepherd,
                other => {
                    return Err(loc.err(
                        "model",
                        "kind",
                        format!("unknown model `{other}` (local, nonlocal_speed, route_choice, piper, shepherd)"),
                    ))
                }
            };
            let law = speed_law(&loc, &m.speed)?;
            let kernel = m
                .kernel
                .as_ref()
                .map(|k| -> Result<KernelSpec> {
                    let profile = match (k.profile.as_str(), &k.samples) {
                        ("poly3", None) => KernelProfile::Poly3,
                        ("tabulated", Some(s)) => KernelProfile::Tabulated(s.clone()),
                        _ => {
                            return Err(loc.err("model", "kernel", "profile is `poly3`, or `tabulated` with `samples`"))
                        }
                    };
                    if !(k.radius > 0.0 && k.radius.is_finite()) {
                        return Err(loc.err("model", "kernel", format!("radius must be positive, got {}", k.radius)));
                    }
                    Ok(KernelSpec { profile, radius: k.radius, normalized: k.normalized })
                })
                .transpose()?;
            if kind != ModelKind::Local && kernel.is_none() {
                return Err(loc.err("model", "kind", format!("model `{}` requires a kernel", m.kind)));
            }
            let epsilon = finite(&loc, "model", "epsilon", m.epsilon.unwrap_or(0.0))?;
            if epsilon < 0.0 {
                return Err(loc.err("model", "epsilon", format!("must be >= 0, got {epsilon}")));
            }
            if m.epsilon.is_some() && kind != ModelKind::NonlocalRoute {
                return Err(loc.err("model", "epsilon", "only the route_choice model uses epsilon"));
            }
            let perp_sign = m.perp_sign.unwrap_or(1.0);
            if perp_sign != 1.0 && perp_sign != -1.0 {
                return Err(loc.err("model", "perp_sign", format!("must be 1 or -1, got {perp_sign}")));
            }
            Ok(ModelConfig { kind, law, kernel, epsilon, perp_sign })
        })
        .transpose()?;

    let geometry = raw
        .geometry
        .as_ref()
        .map(|g| -> Result<GeometryConfig> {
            let domain = rect(&loc, "geometry", "domain", g.domain)?;
            if !(g.dx > 0.0 && g.dx.is_finite()) {
                return Err(loc.err("geometry", "dx", format!("must be positive, got {}", g.dx)));
            }
            let exits = g.exits.iter().map(|e| exit(&loc, "geometry", "exits", e)).collect::<Result<_>>()?;
            let obstacles = g.obstacles.iter().map(|s| shape(&loc, "geometry", "obstacles", s)).collect::<Result<_>>()?;
            Ok(GeometryConfig { domain, dx: g.dx, exits, obstacles })
        })
        .transpose()?;

    let populations = raw
        .populations
        .iter()
        .map(|p| -> Result<PopulationConfig> {
            let t = "populations";
            let direction = match (p.direction.as_str(), p.vector, p.point) {
                ("geodesic", None, None) => DirectionSpec::Geodesic,
                ("none", None, None) => DirectionSpec::None,
                ("constant", Some(v), None) => {
                    let n = v[0].hypot(v[1]);
                    if !(n > 0.0 && n.is_finite()) {
                        return Err(loc.err(t, "vector", "must be a finite nonzero vector"));
                    }
                    DirectionSpec::Constant([v[0] / n, v[1] / n])
                }
                ("toward", None, Some(q)) => DirectionSpec::Toward(q),
                _ => {
                    return Err(loc.err(
                        t,
                        "direction",
                        "is `geodesic`, `none`, `constant` with `vector`, or `toward` with `point`",
                    ))
                }
            };
            let exits = p
                .exits
                .as_ref()
                .map(|es| es.iter().map(|e| exit(&loc, t, "exits", e)).collect::<Result<Vec<_>>>())
                .transpose()?;
            Ok(PopulationConfig { direction, exits, initial: pieces(&loc, t, "initial", &p.initial)? })
        })
        .collect::<Result<Vec<_>>>()?;

    let agents = match &raw.agents {
        None => AgentsConfig { leader: None, dogs: vec![] },
        Some(a) => {
            let leader = a.leader.as_ref().map(|l| (l.position, l.waypoints.clone()));
            if let Some((_, w)) = &leader {
                WaypointTrack::new(w.clone()).map_err(|e| loc.wrap("agents", "leader", e))?;
            }
            AgentsConfig { leader, dogs: a.dogs.clone() }
        }
    };

    let scheme = raw
        .scheme
        .as_ref()
        .map(|s| -> Result<SchemeParams> {
            let p = SchemeParams {
                cfl: s.cfl,
                dt_max: s.dt_max,
                end_time: s.end_time,
                snapshot_every: s.snapshot_every,
                stop_at_evacuation: s.stop_at_evacuation,
            };
            p.validate().map_err(|e| loc.wrap("scheme", "", e))?;
            Ok(p)
        })
        .transpose()?;

    let output = {
        let o = raw.output.as_ref();
        let jam = model.as_ref().map_or(1.0, |m| m.law.jam());
        let out = OutputConfig {
            snapshots: o.and_then(|o| o.snapshots).unwrap_or(true),
            pgm: o.and_then(|o| o.pgm).unwrap_or(false),
            pgm_max: o.and_then(|o| o.pgm_max).unwrap_or(if jam.is_finite() { jam } else { 1.0 }),
            evacuation_fraction: o.and_then(|o| o.evacuation_fraction).unwrap_or(0.999),
        };
        if !(out.pgm_max > 0.0 && out.pgm_max.is_finite()) {
            return Err(loc.err("output", "pgm_max", "must be positive"));
        }
        if !(out.evacuation_fraction > 0.0 && out.evacuation_fraction <= 1.0) {
            return Err(loc.err("output", "evacuation_fraction", "must lie in (0, 1]"));
        }
        out
    };

    let cost = raw
        .cost
        .as_ref()
        .map(|c| -> Result<CostSpec> {
            let region = c.region.iter().map(|r| rect(&loc, "cost", "region", *r)).collect::<Result<_>>()?;
            let penalty = match c.penalty.as_str() {
                "quadratic_excess" => Penalty::QuadraticExcess {
                    threshold: c.threshold.ok_or_else(|| loc.err("cost", "penalty", "quadratic_excess needs `threshold`"))?,
                },
                "tabulated" => Penalty::Tabulated {
                    rho: c.rho.clone().ok_or_else(|| loc.err("cost", "penalty", "tabulated penalty needs `rho`"))?,
                    f: c.f.clone().ok_or_else(|| loc.err("cost", "penalty", "tabulated penalty needs `f`"))?,
                },
                other => return Err(loc.err("cost", "penalty", format!("unknown penalty `{other}`"))),
            };
            penalty.validate().map_err(|e| loc.wrap("cost", "penalty", e))?;
            if !(c.horizon >= 0.0 && c.horizon.is_finite()) {
                return Err(loc.err("cost", "horizon", "must be finite and >= 0"));
            }
            Ok(CostSpec { region, horizon: c.horizon, penalty })
        })
        .transpose()?;

    let gateaux = raw
        .gateaux
        .as_ref()
        .map(|g| -> Result<GateauxConfig> {
            if g.hs.is_empty() || g.hs.iter().any(|h| !(*h > 0.0)) || g.hs.windows(2).any(|w| !(w[1] < w[0])) {
                return Err(loc.err("gateaux", "hs", "must be positive and strictly decreasing"));
            }
            if !(g.horizon > 0.0 && g.horizon.is_finite()) {
                return Err(loc.err("gateaux", "horizon", "must be positive"));
            }
            if model.as_ref().is_some_and(|m| m.kind != ModelKind::NonlocalSpeed) {
                return Err(loc.err("gateaux", "", "the derivative check needs the nonlocal_speed model"));
            }
            Ok(GateauxConfig {
                hs: g.hs.clone(),
                horizon: g.horizon,
                perturbation: pieces(&loc, "gateaux", "perturbation", &g.perturbation)?,
            })
        })
        .transpose()?;

    let confinement = raw
        .confinement
        .as_ref()
        .map(|c| -> Result<ConfinementConfig> {
            let t = "confinement";
            let psi = psi_profile(&loc, &c.psi)?;
            if !(c.c >= 0.0 && c.c.is_finite()) {
                return Err(loc.err(t, "c", format!("must be finite and >= 0, got {}", c.c)));
            }
            let initial = shape(&loc, t, "initial", &c.initial)?;
            let bounds = rect(&loc, t, "grid", c.grid)?;
            if !(c.dx > 0.0) {
                return Err(loc.err(t, "dx", "must be positive"));
            }
            if !(c.horizon >= 0.0 && c.horizon.is_finite()) {
                return Err(loc.err(t, "horizon", "must be finite and >= 0"));
            }
            let paths = c
                .agents
                .iter()
                .map(|a| match (&a.fixed, &a.orbit) {
                    (Some(p), None) => Ok(AgentPath::Fixed { point: *p }),
                    (None, Some(o)) => {
                        if !(o.radius > 0.0) || !o.omega.is_finite() {
                            return Err(loc.err(t, "agents", "orbit needs a positive radius and finite omega"));
                        }
                        Ok(AgentPath::Orbit {
                            center: o.center.unwrap_or([0.0, 0.0]),
                            radius: o.radius,
                            omega: o.omega,
                            phase: o.phase.unwrap_or(0.0),
                        })
                    }
                    _ => Err(loc.err(t, "agents", "an agent is exactly one of `fixed` or `orbit`")),
                })
                .collect::<Result<Vec<_>>>()?;
            let d = ReachParams::default();
            let params = ReachParams {
                cfl: c.cfl.unwrap_or(d.cfl),
                reinit_every: c.reinit_every.unwrap_or(d.reinit_every),
                snapshot_every: c.snapshot_every.unwrap_or(d.snapshot_every),
            };
            if !(params.cfl > 0.0 && params.cfl <= 0.5) || !(params.snapshot_every > 0.0) {
                return Err(loc.err(t, "cfl", "cfl must lie in (0, 0.5] and snapshot_every be positive"));
            }
            let condition = c
                .condition
                .as_ref()
                .map(|k| -> Result<ConditionConfig> {
                    if !(k.radius > 0.0 && 0.0 < k.r_minus && k.r_minus <= k.r_plus) {
                        return Err(loc.err(t, "condition", "needs radius > 0 and 0 < r_minus <= r_plus"));
                    }
                    Ok(ConditionConfig { radius: k.radius, r_minus: k.r_minus, r_plus: k.r_plus, samples: k.samples.unwrap_or(200) })
                })
                .transpose()?;
            let dispersal = c
                .dispersal
                .as_ref()
                .map(|k| -> Result<DispersalConfig> {
                    if !(k.sigma_max > 0.0) {
                        return Err(loc.err(t, "dispersal", "sigma_max must be positive"));
                    }
                    Ok(DispersalConfig { sigma_max: k.sigma_max, samples: k.samples.unwrap_or(4000) })
                })
                .transpose()?;
            Ok(ConfinementConfig {
                psi,
                c: c.c,
                initial,
                bounds,
                dx: c.dx,
                horizon: c.horizon,
                track: AgentTrack { paths },
                params,
                condition,
                dispersal,
            })
        })
        .transpose()?;

    if let Some(m) = &model {
        if geometry.is_none() {
            return Err(loc.err("geometry", "", "missing geometry"));
        }
        if scheme.is_none() {
            return Err(loc.err("scheme", "", "missing scheme"));
        }
        if populations.is_empty() {
            return Err(Error::Config("missing populations: at least one [[populations]] table is required".into()));
        }
        match m.kind {
            ModelKind::Piper if agents.leader.is_none() || !agents.dogs.is_empty() => {
                return Err(loc.err("agents", "leader", "the piper model needs exactly one leader and no dogs"));
            }
            ModelKind::Shepherd if agents.leader.is_some() => {
                return Err(loc.err("agents", "leader", "the shepherd model takes dogs only"));
            }
            ModelKind::Local | ModelKind::NonlocalSpeed | ModelKind::NonlocalRoute
                if agents.leader.is_some() || !agents.dogs.is_empty() =>
            {
                return Err(loc.err("agents", "", "agents are only coupled to the piper and shepherd models"));
            }
            _ => {}
        }
        let g = geometry.as_ref().expect("checked above");
        for p in &populations {
            let exits = p.exits.as_ref().unwrap_or(&g.exits);
            if p.direction == DirectionSpec::Geodesic && exits.is_empty() {
                return Err(loc.err("populations", "direction", "geodesic directions need at least one exit"));
            }
        }
    }

    Ok(ScenarioConfig {
        name: raw.name.clone().unwrap_or_else(|| "scenario".into()),
        model,
        geometry,
        populations,
        agents,
        scheme,
        output,
        cost,
        gateaux,
        confinement,
    })
}

impl ScenarioConfig {
    /// The same scenario with all obstacles removed.
    pub fn without_obstacles(&self) -> Self {
        let mut c = self.clone();
        if let Some(g) = &mut c.geometry {
            g.obstacles.clear();
        }
        c
    }

    /// Apply command-line overrides.
    pub fn with_overrides(&self, o: &Overrides) -> Result<Self> {
        let mut c = self.clone();
        if let Some(dx) = o.dx {
            if !(dx > 0.0 && dx.is_finite()) {
                return Err(Error::config(format!("--dx must be positive, got {dx}")));
            }
            if let Some(g) = &mut c.geometry {
                g.dx = dx;
            }
            if let Some(k) = &mut c.confinement {
                k.dx = dx;
            }
        }
        if let Some(t) = o.end_time {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::config(format!("--end-time must be finite and >= 0, got {t}")));
            }
            if let Some(s) = &mut c.scheme {
                s.end_time = t;
            }
            if let Some(k) = &mut c.confinement {
                k.horizon = t;
            }
        }
        Ok(c)
    }

    /// Rasterize, solve for the direction fields and assemble the scenario.
    pub fn build(&self) -> Result<Scenario> {
        let model_cfg = self.model.as_ref().ok_or_else(|| Error::config("missing model"))?;
        let geo_cfg = self.geometry.as_ref().ok_or_else(|| Error::config("missing geometry"))?;
        let params = self.scheme.clone().ok_or_else(|| Error::config("missing scheme"))?;
        let mut geometries = Vec::with_capacity(self.populations.len());
        let mut directions = Vec::with_capacity(self.populations.len());
        let mut densities = Vec::with_capacity(self.populations.len());
        for p in &self.populations {
            let exits = p.exits.as_ref().unwrap_or(&geo_cfg.exits);
            let geo = rasterize_geometry(geo_cfg.domain, &geo_cfg.obstacles, exits, geo_cfg.dx)?;
            let g = geo.grid;
            let free = |k: usize| geo.is_free(k);
            let dirs = match p.direction {
                DirectionSpec::Geodesic => geodesic_directions(&solve_eikonal(&geo)?),
                DirectionSpec::None => VectorField::zeros(g),
                DirectionSpec::Constant(v) => {
                    let mut f = VectorField::from_fn(g, |_| v);
                    (0..g.len()).filter(|k| !free(*k)).for_each(|k| f.values[k] = [0.0, 0.0]);
                    f
                }
                DirectionSpec::Toward(q) => {
                    let mut f = VectorField::from_fn(g, |x| {
                        let (a, b) = (q[0] - x[0], q[1] - x[1]);
                        let n = a.hypot(b);
                        if n > 0.0 {
                            [a / n, b / n]
                        } else {
                            [0.0, 0.0]
                        }
                    });
                    (0..g.len()).filter(|k| !free(*k)).for_each(|k| f.values[k] = [0.0, 0.0]);
                    f
                }
            };
            let mut rho = sample_density(g, &p.initial)?;
            geo.mask(&mut rho);
            densities.push(rho);
            geometries.push(geo);
            directions.push(dirs);
        }
        let grid = geometries[0].grid;
        let kernel = model_cfg
            .kernel
            .as_ref()
            .map(|k| build_kernel(k.profile.clone(), k.radius, k.normalized, &grid))
            .transpose()?;
        let mut model = ModelSpec::new(model_cfg.kind, model_cfg.law.clone(), kernel)?.with_epsilon(model_cfg.epsilon)?;
        model.populations = self.populations.len();
        model.perp_sign = model_cfg.perp_sign;
        model.validate()?;
        let agents = match (&self.agents.leader, self.agents.dogs.is_empty()) {
            (Some((p, w)), _) => AgentState::leader(*p, WaypointTrack::new(w.clone())?),
            (None, false) => AgentState::dogs(self.agents.dogs.clone()),
            (None, true) => AgentState::none(),
        };
        let simulation = Simulation::new(model, geometries, directions, params)?;
        Ok(Scenario { name: self.name.clone(), simulation, initial: SimState::new(densities, agents) })
    }

    /// Perturbation direction of the derivative check, on the scenario grid.
    pub fn gateaux_direction(&self, scenario: &Scenario) -> Result<ScalarField> {
        let g = self.gateaux.as_ref().ok_or_else(|| Error::config("missing [gateaux] table"))?;
        let geo = &scenario.simulation.geometries[0];
        let mut r = sample_density(geo.grid, &g.perturbation)?;
        geo.mask(&mut r);
        Ok(r)
    }

    /// Grid of the reachable-set computation.
    pub fn confinement_grid(&self) -> Result<Grid2D> {
        let c = self.confinement.as_ref().ok_or_else(|| Error::config("missing [confinement] table"))?;
        Grid2D::covering(&c.bounds, c.dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "walled"

[model]
kind = "local"
speed = { law = "linear", vmax = 2.0, jam = 1.0 }

[geometry]
domain = [0.0, 0.0, 2.0, 1.0]
dx = 0.1

[[populations]]
direction = "constant"
vector = [1.0, 0.0]
initial = [{ rect = [0.2, 0.2, 0.8, 0.8], level = 0.5 }]

[scheme]
cfl = 0.45
dt_max = 0.1
end_time = 1.0
snapshot_every = 0.5
"#;

    #[test]
    fn empty_file_is_missing_model() {
        let e = parse_config("").unwrap_err();
        assert_eq!(e.to_string(), "invalid configuration: missing model");
    }

    #[test]
    fn minimal_file_builds() {
        let c = parse_config(MINIMAL).unwrap();
        let s = c.build().unwrap();
        assert_eq!(s.simulation.geometries[0].grid.nx, 20);
        let m: f64 = s.initial.densities[0].values.iter().sum::<f64>() * 0.01;
        assert!((m - 0.18).abs() < 1e-12);
    }

    #[test]
    fn unknown_key_rejected() {
        let text = MINIMAL.replace("cfl = 0.45", "cfl = 0.45\nspeedup = 2");
        let e = parse_config(&text).unwrap_err().to_string();
        assert!(e.contains("speedup"), "{e}");
    }

    #[test]
    fn rising_tabulated_law_rejected_with_line() {
        let text = MINIMAL.replace(
            r#"speed = { law = "linear", vmax = 2.0, jam = 1.0 }"#,
            r#"speed = { law = "tabulated", rho = [0.0, 0.5, 1.0], v = [1.0, 1.5, 0.0] }"#,
        );
        let e = parse_config(&text).unwrap_err().to_string();
        assert!(e.contains("line 6") && e.contains("non increasing"), "{e}");
    }

    #[test]
    fn kernel_required_for_nonlocal_models() {
        let text = MINIMAL.replace(r#"kind = "local""#, r#"kind = "nonlocal_speed""#);
        let e = parse_config(&text).unwrap_err().to_string();
        assert!(e.contains("requires a kernel") && e.contains("line 5"), "{e}");
    }

    #[test]
    fn geodesic_without_exit_rejected() {
        let text = MINIMAL.replace("direction = \"constant\"\nvector = [1.0, 0.0]", "direction = \"geodesic\"");
        assert!(parse_config(&text).unwrap_err().to_string().contains("exit"));
    }

    #[test]
    fn obstacles_stripped() {
        let text = MINIMAL.replace("dx = 0.1", "dx = 0.1\nobstacles = [{ disc = { center = [1.0, 0.5], radius = 0.2 } }]");
        let c = parse_config(&text).unwrap();
        assert_eq!(c.geometry.as_ref().unwrap().obstacles.len(), 1);
        assert!(c.without_obstacles().geometry.unwrap().obstacles.is_empty());
    }
}
