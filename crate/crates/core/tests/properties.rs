//! Invariants checked on randomly generated inputs.

use proptest::prelude::*;

use crowd::confinement::{confinement_condition, rearrange, reach_evolve, AgentPath, AgentTrack, PsiProfile, ReachParams};
use crowd::dynamics::{
    dog_velocities, sample_average_gradient, velocity_nonlocal_speed, velocity_piper, velocity_route, AgentState,
    ModelKind, ModelSpec, SpeedLaw,
};
use crowd::functionals::{cost_jt, metrics, solve_linearized, CostSpec, Penalty};
use crowd::geometry::{geodesic_directions, solve_eikonal};
use crowd::grid::{
    indicator_datum, rasterize_geometry, CellClass, Disc, Exit, Grid2D, Rect, ScalarField, Shape, Side, VectorField,
};
use crowd::nonlocal::{build_kernel, convolve, convolve_grad, KernelProfile};
use crowd::{run_scenario, Scenario, SchemeParams, SimState, Simulation};

fn field_strategy(nx: usize, ny: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, nx * ny)
}

fn grid(nx: usize, ny: usize) -> Grid2D {
    Grid2D::square([0.0, 0.0], 0.1, nx, ny).unwrap()
}

fn shape_strategy() -> impl Strategy<Value = Shape> {
    prop_oneof![
        (0.5..5.0f64, 0.5..3.5f64, 0.2..1.5f64, 0.2..1.5f64).prop_map(|(x, y, w, h)| Shape::Rect(Rect::new(x, y, x + w, y + h))),
        (0.5..5.5f64, 0.5..3.5f64, 0.1..0.8f64).prop_map(|(x, y, r)| Shape::Disc(Disc { center: [x, y], radius: r })),
    ]
}

const ROOM: Rect = Rect { min: [0.0, 0.0], max: [6.0, 4.0] };
const DOOR: Exit = Exit { side: Side::East, from: 1.5, to: 2.5 };

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn index_and_center_round_trip(nx in 1usize..60, ny in 1usize..60, h in 0.01..2.0f64, ox in -10.0..10.0f64, oy in -10.0..10.0f64) {
        let g = Grid2D::square([ox, oy], h, nx, ny).unwrap();
        for k in 0..g.len() {
            let (i, j) = g.cell(k);
            prop_assert_eq!(g.index(i, j), k);
            prop_assert_eq!(g.locate(g.center(i, j)), Some((i, j)));
        }
    }

    #[test]
    fn rasterization_ignores_obstacle_order(shapes in prop::collection::vec(shape_strategy(), 1..5)) {
        let forward = rasterize_geometry(ROOM, &shapes, &[], 0.1);
        let reversed: Vec<Shape> = shapes.iter().rev().cloned().collect();
        let backward = rasterize_geometry(ROOM, &reversed, &[], 0.1);
        match (forward, backward) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.grid, b.grid);
                prop_assert_eq!(&a.classes, &b.classes);
                prop_assert_eq!(a, rasterize_geometry(ROOM, &shapes, &[], 0.1).unwrap());
            }
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn convolution_is_linear(a in field_strategy(30, 20), b in field_strategy(30, 20), s in -3.0..3.0f64) {
        let g = grid(30, 20);
        let k = build_kernel(KernelProfile::Poly3, 0.4, false, &g).unwrap();
        let fa = ScalarField::from_values(g, a).unwrap();
        let fb = ScalarField::from_values(g, b).unwrap();
        let combo = fa.axpy(s, &fb).unwrap();
        let (ca, cb, cc) = (convolve(&fa, &k).unwrap(), convolve(&fb, &k).unwrap(), convolve(&combo, &k).unwrap());
        let (ga, gb, gc) = (convolve_grad(&fa, &k).unwrap(), convolve_grad(&fb, &k).unwrap(), convolve_grad(&combo, &k).unwrap());
        for i in 0..g.len() {
            prop_assert!((cc.values[i] - ca.values[i] - s * cb.values[i]).abs() < 1e-12);
            for c in 0..2 {
                prop_assert!((gc.values[i][c] - ga.values[i][c] - s * gb.values[i][c]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn averaging_is_nonnegative_bounded_and_reproducible(a in field_strategy(30, 20), normalized in any::<bool>()) {
        let g = grid(30, 20);
        let k = build_kernel(KernelProfile::Poly3, 0.5, normalized, &g).unwrap();
        let f = ScalarField::from_values(g, a).unwrap();
        let avg = convolve(&f, &k).unwrap();
        prop_assert!(avg.min() >= 0.0);
        prop_assert!(avg.max() <= f.max() * k.mass() * (1.0 + 1e-14));
        let again = convolve(&f, &k).unwrap();
        prop_assert!(avg.values.iter().zip(&again.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn distance_never_drops_when_an_obstacle_is_added(extra in shape_strategy()) {
        let base = rasterize_geometry(ROOM, &[], &[DOOR], 0.1).unwrap();
        let Ok(blocked) = rasterize_geometry(ROOM, &[extra], &[DOOR], 0.1) else { return Ok(()) };
        let (d0, d1) = (solve_eikonal(&base).unwrap(), solve_eikonal(&blocked).unwrap());
        for k in 0..base.grid.len() {
            if blocked.class(k) == CellClass::Free {
                prop_assert!(d1.d[k] >= d0.d[k] - 1e-12, "cell {}: {} < {}", k, d1.d[k], d0.d[k]);
            }
        }
    }

    #[test]
    fn directions_follow_a_rigid_translation(sx in -8i32..8, sy in -8i32..8, obstacle in shape_strategy()) {
        // dyadic spacing and shifts keep every coordinate exact
        let h = 0.125;
        let shift = [0.25 * sx as f64, 0.25 * sy as f64];
        let moved_room = ROOM.translated(shift);
        let moved_door = Exit { from: DOOR.from + shift[1], to: DOOR.to + shift[1], ..DOOR };
        let Ok(a) = rasterize_geometry(ROOM, &[obstacle.clone()], &[DOOR], h) else { return Ok(()) };
        let b = rasterize_geometry(moved_room, &[obstacle.translated(shift)], &[moved_door], h).unwrap();
        prop_assert_eq!(&a.classes, &b.classes);
        let (na, nb) = (geodesic_directions(&solve_eikonal(&a).unwrap()), geodesic_directions(&solve_eikonal(&b).unwrap()));
        prop_assert_eq!(na.values, nb.values);
    }

    #[test]
    fn velocities_respect_model_structure(a in field_strategy(30, 20), eps in 0.0..0.99f64, px in 0.0..3.0f64, py in 0.0..2.0f64) {
        let g = grid(30, 20);
        let rho = ScalarField::from_values(g, a).unwrap();
        let law = SpeedLaw::linear(2.0, 1.0).unwrap();
        let k = build_kernel(KernelProfile::Poly3, 0.4, true, &g).unwrap();
        let nu = VectorField::from_fn(g, |x| {
            let (u, v) = ((x[1] * 2.0).cos(), (x[0] * 3.0).sin());
            let n = u.hypot(v);
            [u / n, v / n]
        });

        // speed modulates, never steers
        let vs = velocity_nonlocal_speed(&rho, &k, &law, &nu).unwrap();
        prop_assert_eq!(&vs.values, &velocity_nonlocal_speed(&rho, &k, &law, &nu).unwrap().values);
        for (v, n) in vs.values.iter().zip(&nu.values) {
            prop_assert!((v[0] * n[1] - v[1] * n[0]).abs() < 1e-14);
            prop_assert!(v[0] * n[0] + v[1] * n[1] >= 0.0);
        }

        // the route correction never reverses motion
        let vr = velocity_route(&rho, &k, &law, &nu, eps).unwrap();
        for (i, (v, n)) in vr.values.iter().zip(&nu.values).enumerate() {
            let bound = law.speed(rho.values[i]) * (1.0 - eps);
            prop_assert!(v[0] * n[0] + v[1] * n[1] >= bound - 1e-14);
        }

        // followers walk toward the leader
        let leader = [px, py];
        let vp = velocity_piper(&rho, &AgentState::leader(leader, crowd::dynamics::WaypointTrack::new(vec![[0.0, 0.0], [1.0, 0.0]]).unwrap()), &law).unwrap();
        for (idx, v) in vp.values.iter().enumerate() {
            let x = g.center_of(idx);
            let towards = v[0] * (leader[0] - x[0]) + v[1] * (leader[1] - x[1]);
            if law.speed(rho.values[idx]) > 0.0 && (leader[0] - x[0]).hypot(leader[1] - x[1]) > 0.0 {
                prop_assert!(towards > 0.0);
            }
        }

        // dogs walk along level lines, slower than one
        let phi = dog_velocities(&rho, &[leader], &k, 1.0).unwrap();
        let gsample = sample_average_gradient(&rho, &k, leader).unwrap().unwrap();
        prop_assert!(phi[0][0].hypot(phi[0][1]) < 1.0);
        prop_assert!((phi[0][0] * gsample[0] + phi[0][1] * gsample[1]).abs() < 1e-12);
    }

    #[test]
    fn walled_runs_conserve_mass_and_stay_nonnegative(a in field_strategy(24, 16), kind in 0usize..3, steps in 1usize..120) {
        let room = rasterize_geometry(Rect::new(0.0, 0.0, 2.4, 1.6), &[], &[], 0.1).unwrap();
        let g = room.grid;
        let law = SpeedLaw::linear(1.5, 1.0).unwrap();
        let nu = VectorField::from_fn(g, |x| {
            let (u, v) = (x[1] - 0.8, 1.2 - x[0]);
            let n = u.hypot(v).max(1e-9);
            [u / n, v / n]
        });
        let kernel = build_kernel(KernelProfile::Poly3, 0.3, true, &g).unwrap();
        let model = match kind {
            0 => ModelSpec::new(ModelKind::Local, law, None).unwrap(),
            1 => ModelSpec::new(ModelKind::NonlocalSpeed, law, Some(kernel)).unwrap(),
            _ => ModelSpec::new(ModelKind::NonlocalRoute, law, Some(kernel)).unwrap().with_epsilon(0.3).unwrap(),
        };
        let params = SchemeParams::new(0.45, 0.05, 1e9, 1e9).unwrap();
        let sim = Simulation::new(model, vec![room], vec![nu], params).unwrap();
        let mut state = SimState::new(vec![ScalarField::from_values(g, a).unwrap()], AgentState::none());
        let m0 = metrics(&state.densities[0]).mass;
        for _ in 0..steps {
            let tr = sim.transports(&state).unwrap();
            let dt = sim.stable_dt(&tr);
            state = sim.advance_with(&state, &tr, dt).unwrap().0;
            prop_assert!(state.densities[0].min() >= 0.0);
        }
        let m = metrics(&state.densities[0]).mass;
        prop_assert!((m - m0).abs() <= 1e-12 * m0, "{} -> {}", m0, m);
    }

    #[test]
    fn larger_penalty_never_lowers_the_cost(shift in 0.0..0.5f64, bump in 0.0..2.0f64) {
        let scenario = corridor(1.0);
        let run = run_scenario(&scenario).unwrap();
        let region = vec![Rect::new(1.0, 0.0, 3.0, 1.0)];
        let small = CostSpec { region: region.clone(), horizon: 1.0, penalty: Penalty::Tabulated { rho: vec![0.0, 0.5, 1.0], f: vec![0.0, 0.1, 0.4] } };
        let large = CostSpec { region, horizon: 1.0, penalty: Penalty::Tabulated { rho: vec![0.0, 0.5, 1.0], f: vec![shift, 0.1 + shift, 0.4 + shift + bump] } };
        prop_assert!(cost_jt(&run, &large).unwrap() >= cost_jt(&run, &small).unwrap());
    }

    #[test]
    fn confinement_is_antitone_in_c(c1 in 0.0..1.5f64, dc in 0.0..1.0f64, a in -3.0..1.0f64) {
        let psi = PsiProfile::ScaledExp { a };
        let lo = confinement_condition(&psi, c1, 1.0, 0.6, 2.0, 200).unwrap();
        let hi = confinement_condition(&psi, c1 + dc, 1.0, 0.6, 2.0, 200).unwrap();
        prop_assert!(hi.margin <= lo.margin);
        prop_assert!(!(hi.holds && !lo.holds));
    }

    #[test]
    fn rearrangement_keeps_the_multiset(v in prop::collection::vec(-1e3..1e3f64, 0..400)) {
        let r = rearrange(&v);
        prop_assert!(r.windows(2).all(|w| w[0] <= w[1]));
        let mut a: Vec<u64> = v.iter().map(|x| x.to_bits()).collect();
        let mut b: Vec<u64> = r.iter().map(|x| x.to_bits()).collect();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
        // equal multisets give the same integral under any fixed summation order
        let mut s = v.clone();
        s.sort_by(f64::total_cmp);
        prop_assert_eq!(s.iter().sum::<f64>().to_bits(), r.iter().sum::<f64>().to_bits());
    }
}

fn corridor(end: f64) -> Scenario {
    let room = rasterize_geometry(Rect::new(0.0, 0.0, 4.0, 1.0), &[], &[Exit { side: Side::East, from: 0.0, to: 1.0 }], 0.1).unwrap();
    let nu = geodesic_directions(&solve_eikonal(&room).unwrap());
    let rho = indicator_datum(room.grid, Rect::new(0.5, 0.0, 2.0, 1.0), 0.8).unwrap();
    let model = ModelSpec::new(ModelKind::Local, SpeedLaw::linear(1.0, 1.0).unwrap(), None).unwrap();
    let sim = Simulation::new(model, vec![room], vec![nu], SchemeParams::new(0.45, 0.05, end, 0.25).unwrap()).unwrap();
    Scenario { name: "corridor".into(), simulation: sim, initial: SimState::new(vec![rho], AgentState::none()) }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn linearization_is_linear(scale in -4.0..4.0f64, cx in 1.5..3.5f64) {
        let g = Grid2D::square([0.0, 0.0], 0.1, 50, 50).unwrap();
        let room = rasterize_geometry(Rect::new(0.0, 0.0, 5.0, 5.0), &[], &[], 0.1).unwrap();
        let kernel = build_kernel(KernelProfile::Poly3, 0.4, true, &g).unwrap();
        let model = ModelSpec::new(ModelKind::NonlocalSpeed, SpeedLaw::linear(2.0, 1.0).unwrap(), Some(kernel)).unwrap();
        let nu = VectorField::from_fn(g, |_| [0.8, 0.6]);
        let sim = Simulation::new(model, vec![room], vec![nu], SchemeParams::new(0.45, 0.05, 0.3, 0.3).unwrap()).unwrap();
        let bump = |c: [f64; 2], r: f64| ScalarField::from_fn(g, move |x| {
            let q = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)) / (r * r);
            if q < 1.0 { (1.0 - q).powi(3) } else { 0.0 }
        });
        let scenario = Scenario { name: "lin".into(), simulation: sim, initial: SimState::new(vec![bump([2.5, 2.5], 1.2).scaled(0.6)], AgentState::none()) };
        let r0 = bump([cx, 2.0], 0.8);
        let one = solve_linearized(&scenario, &r0, 0.3).unwrap();
        let many = solve_linearized(&scenario, &r0.scaled(scale), 0.3).unwrap();
        for (a, b) in one.r.values.iter().zip(&many.r.values) {
            prop_assert!((scale * a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn zero_drift_reachable_sets_only_grow(c in 0.2..1.5f64, x0 in -0.5..0.5f64, r in 0.3..0.8f64) {
        let g = Grid2D::covering(&Rect::new(-3.0, -3.0, 3.0, 3.0), 0.1).unwrap();
        let track = AgentTrack { paths: vec![AgentPath::Fixed { point: [0.0, 0.0] }] };
        let k0 = Shape::Disc(Disc { center: [x0, 0.0], radius: r });
        let reach = reach_evolve(g, &k0, &track, &PsiProfile::Constant(0.0), c, 1.0, &ReachParams { snapshot_every: 0.1, ..ReachParams::default() }).unwrap();
        for w in reach.frames.windows(2) {
            let (a, b) = (&w[0].field, &w[1].field);
            // every cell occupied earlier is occupied later, or touches a later cell
            for k in 0..g.len() {
                if a.inside(k) && !b.inside(k) {
                    let (i, j) = g.cell(k);
                    let near = (i.saturating_sub(1)..=(i + 1).min(g.nx - 1))
                        .any(|p| (j.saturating_sub(1)..=(j + 1).min(g.ny - 1)).any(|q| b.inside(g.index(p, q))));
                    prop_assert!(near, "cell {} lost at t = {}", k, w[1].t);
                }
            }
            prop_assert!(w[1].area >= w[0].area);
        }
    }
}

#[test]
fn metrics_mass_is_the_solver_mass() {
    let run = run_scenario(&corridor(1.0)).unwrap();
    let from_metrics: f64 = run.metrics.last().unwrap().iter().map(|m| m.mass).sum();
    assert_eq!(from_metrics.to_bits(), run.mass_trace.last().unwrap().1.to_bits());
    assert_eq!(run.metrics[0][0].mass.to_bits(), run.initial_mass.to_bits());
}

#[test]
fn indicator_mass_converges_at_first_order() {
    let rect = Rect::new(0.33, 0.27, 2.71, 1.93);
    let exact = 0.7 * rect.area();
    let errs: Vec<f64> = [0.1, 0.05, 0.025, 0.0125]
        .iter()
        .map(|&h| {
            let g = Grid2D::covering(&Rect::new(0.0, 0.0, 3.0, 2.0), h).unwrap();
            (indicator_datum(g, rect, 0.7).unwrap().integral() - exact).abs()
        })
        .collect();
    for (k, e) in errs.iter().enumerate() {
        let h = 0.1 / 2f64.powi(k as i32);
        assert!(*e <= 0.7 * rect.perimeter_bound() * h, "h = {h}: error {e}");
    }
}

trait Perimeter {
    fn perimeter_bound(&self) -> f64;
}

impl Perimeter for Rect {
    /// Cells cut by the boundary cover at most `perimeter * h` of area.
    fn perimeter_bound(&self) -> f64 {
        2.0 * (self.max[0] - self.min[0] + self.max[1] - self.min[1])
    }
}

#[test]
fn nonlocal_speed_model_can_concentrate() {
    // directions converge on the center: no maximum principle is enforced
    let room = rasterize_geometry(Rect::new(0.0, 0.0, 4.0, 4.0), &[], &[], 0.05).unwrap();
    let g = room.grid;
    let nu = VectorField::from_fn(g, |x| {
        let (u, v) = (2.0 - x[0], 2.0 - x[1]);
        let n = u.hypot(v);
        if n < 0.1 { [0.0, 0.0] } else { [u / n, v / n] }
    });
    let kernel = build_kernel(KernelProfile::Poly3, 0.3, true, &g).unwrap();
    let model = ModelSpec::new(ModelKind::NonlocalSpeed, SpeedLaw::linear(1.0, 1.0).unwrap(), Some(kernel)).unwrap();
    let sim = Simulation::new(model, vec![room], vec![nu], SchemeParams::new(0.45, 0.05, 1.0, 0.25).unwrap()).unwrap();
    let rho0 = indicator_datum(g, Rect::new(0.5, 0.5, 3.5, 3.5), 0.5).unwrap();
    let run = run_scenario(&Scenario { name: "sink".into(), simulation: sim, initial: SimState::new(vec![rho0], AgentState::none()) }).unwrap();
    let linf: Vec<f64> = run.metrics.iter().map(|m| m[0].linf).collect();
    assert!(linf.last().unwrap() > &0.5, "{linf:?}");
}
