//! Property definitions shared by the property suite and the acceptance run.

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use twophase::energy::{dissipation, subdifferential_contains};
use twophase::*;

pub fn rock_strategy() -> impl Strategy<Value = RockType> {
    let curve = prop_oneof![
        (100.0..1e4f64, 100.0..2e4f64).prop_map(|(p_entry, delta_p)| CapillaryCurve::Linear { p_entry, delta_p }),
        (100.0..1e4f64, 1.2..4.0f64).prop_map(|(p_entry, lambda_bc)| CapillaryCurve::PowerLaw { p_entry, lambda_bc }),
    ];
    (0.05..0.4f64, -14.0..-11.0f64, 0.0..0.3f64, 0.0..0.3f64, curve, 1.0..4.0f64, 0.1..1e3f64).prop_map(
        |(phi, log_lam, s_o_res, s_w_res, curve, exponent, scale)| RockType {
            phi,
            lam: 10f64.powf(log_lam),
            s_o_res,
            s_w_res,
            curve,
            mobility: MobilityLaw { exponent, oil_scale: scale, water_scale: 2.0 * scale },
        },
    )
}

/// Grid with up to 6x4 cells and a random rock table and map.
pub fn grid_strategy() -> impl Strategy<Value = (Grid, Vec<RockType>)> {
    (1usize..=6, 1usize..=4, 0.01..2.0f64, 0.01..2.0f64, prop::collection::vec(rock_strategy(), 1..=3))
        .prop_flat_map(|(nx, ny, dx, dy, rocks)| {
            let n = nx * ny;
            let nr = rocks.len();
            (Just((nx, ny, dx, dy)), Just(rocks), prop::collection::vec(0..nr, n))
        })
        .prop_map(|((nx, ny, dx, dy), rocks, ids)| {
            let grid = Grid::build(&GridSpec::rect(nx, ny, dx, dy), ids, rocks.len()).unwrap();
            (grid, rocks)
        })
}

/// Interior fraction in (0, 1) mapped onto each cell's mobile interval.
fn interior(grid: &Grid, rocks: &[RockType], t: &[f64]) -> Vec<f64> {
    (0..grid.n_cells())
        .map(|k| {
            let r = grid.rock(rocks, k);
            r.s_o_min() + t[k] * (r.s_o_max() - r.s_o_min())
        })
        .collect()
}

fn close(a: f64, b: f64, rel: f64, abs: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + abs
}

pub fn prop_pi_round_trip(rock: &RockType, t: f64) -> Result<(), TestCaseError> {
    let s = rock.s_o_min() + t * (rock.s_o_max() - rock.s_o_min());
    prop_assume!(s > rock.s_o_min() && s < rock.s_o_max());
    let p = rock.pi_eval(s).unwrap();
    let back = rock.pi_inverse(p);
    prop_assert!(close(back, s, 1e-10, 1e-13), "s = {s}, pi = {p}, back = {back}");
    Ok(())
}

pub fn prop_resolvent_in_graph(rock: &RockType, u: f64, du: f64) -> Result<(), TestCaseError> {
    let s = rock.pi_inverse(u);
    prop_assert!(s >= rock.s_o_min() && s <= rock.s_o_max());
    prop_assert!(rock.graph_contains_tol(s, u, rock.graph_tolerance()).unwrap(), "s = {s}, u = {u}");
    prop_assert!(rock.pi_inverse(u + du.abs()) >= s);
    Ok(())
}

pub fn prop_dissipation_homogeneous(
    grid: &Grid,
    rocks: &[RockType],
    t: &[f64],
    q: &[(f64, f64)],
    c: f64,
) -> Result<(), TestCaseError> {
    let state = SaturationState::from_oil(interior(grid, rocks, t));
    let mut flux = FaceFluxField::zeros(grid.n_faces());
    for f in 0..grid.n_faces() {
        flux.oil[f] = q[f].0 * 1e-9;
        flux.water[f] = q[f].1 * 1e-9;
    }
    let up = FaceUpwind::from_flux(&flux, grid);
    let d = dissipation(&state, &flux, &up, grid, rocks);
    prop_assert!(d.is_finite() && d >= 0.0);
    // fixed upwinding: any scale factor
    let d_c = dissipation(&state, &flux.scaled(c), &up, grid, rocks);
    prop_assert!(close(d_c, c * c * d, 1e-12, 0.0), "D(cq) = {d_c}, c^2 D(q) = {}", c * c * d);
    // upwinding read off the scaled flux: positive factors
    let scaled = flux.scaled(c.abs());
    let d_pos = dissipation(&state, &scaled, &FaceUpwind::from_flux(&scaled, grid), grid, rocks);
    prop_assert!(close(d_pos, c * c * d, 1e-12, 0.0));
    Ok(())
}

pub fn prop_divergence_theorem(grid: &Grid, q: &[(f64, f64)]) -> Result<(), TestCaseError> {
    let mut flux = FaceFluxField::zeros(grid.n_faces());
    for f in 0..grid.n_faces() {
        flux.oil[f] = q[f].0;
        flux.water[f] = q[f].1;
    }
    for phase in PhaseId::ALL {
        let div = grid.divergence(&flux, phase);
        let total: f64 = div.values.iter().map(|d| d * grid.cell_volume).sum();
        let scale: f64 = flux.phase(phase).iter().map(|v| v.abs()).sum::<f64>() + f64::MIN_POSITIVE;
        prop_assert!(total.abs() <= 1e-12 * scale, "net {total} vs {scale}");
        for k in 0..grid.n_cells() {
            let out: f64 = grid
                .faces
                .iter()
                .enumerate()
                .map(|(f, face)| {
                    let q = flux.phase(phase)[f];
                    if face.cells.0 == k {
                        q
                    } else if face.cells.1 == k {
                        -q
                    } else {
                        0.0
                    }
                })
                .sum();
            prop_assert!(close(div[k] * grid.cell_volume, out, 1e-12, 1e-12 * scale));
        }
    }
    Ok(())
}

pub fn prop_gauge_invariance(
    grid: &Grid,
    rocks: &[RockType],
    t: &[f64],
    h_w: &[f64],
    shift: f64,
    fluids: &Fluids,
) -> Result<(), TestCaseError> {
    let s = interior(grid, rocks, t);
    let n = grid.n_cells();
    prop_assume!((0..n).all(|k| {
        let r = grid.rock(rocks, k);
        s[k] > r.s_o_min() && s[k] < r.s_o_max()
    }));
    let state = SaturationState::from_oil(s.clone());
    let b = fluids.buoyancy();
    let h_o: Vec<f64> =
        (0..n).map(|k| h_w[k] + grid.rock(rocks, k).pi_eval(s[k]).unwrap() - b * grid.depth[k]).collect();
    let h = HydrostaticPressures::new(h_o.clone(), h_w.to_vec());
    let tol = 1e-9 * (1.0 + h_o.iter().chain(h_w).map(|v| v.abs()).fold(shift.abs(), f64::max));
    prop_assert!(subdifferential_contains(&state, &h, grid, rocks, fluids, tol));
    let moved = HydrostaticPressures::new(h_o.iter().map(|v| v + shift).collect(), h_w.iter().map(|v| v + shift).collect());
    prop_assert!(subdifferential_contains(&state, &moved, grid, rocks, fluids, tol));
    // a shift of one phase alone leaves the graph
    let oil_only = HydrostaticPressures::new(h_o.iter().map(|v| v + 1e3 + 1e-3 * shift.abs()).collect(), h_w.to_vec());
    prop_assert!(!subdifferential_contains(&state, &oil_only, grid, rocks, fluids, tol.min(1.0)));
    Ok(())
}

fn fluids_strategy() -> impl Strategy<Value = Fluids> {
    (500.0..1000.0f64, 1000.0..1200.0f64).prop_map(|(rho_o, rho_w)| Fluids::new(rho_o, rho_w, 9.81))
}

/// Runs one named property with `cases` random cases.
pub fn check(name: &str, cases: u32) -> Result<(), String> {
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    let unit = 0.0..1.0f64;
    let result = match name {
        "pi_round_trip" => runner.run(&(rock_strategy(), unit), |(r, t)| prop_pi_round_trip(&r, t)).map_err(|e| e.to_string()),
        "resolvent_in_graph" => runner.run(&(rock_strategy(), -1e5..1e5f64, 0.0..1e4f64), |(r, u, du)| {
            prop_assert!(r.validate().is_empty());
            prop_resolvent_in_graph(&r, u, du)
        })
        .map_err(|e| e.to_string()),
        "dissipation_homogeneous" => runner.run(
            &grid_strategy().prop_flat_map(|(g, r)| {
                let n = g.n_cells();
                let nf = g.n_faces();
                (
                    Just((g, r)),
                    prop::collection::vec(0.01..0.99f64, n),
                    prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64), nf),
                    prop_oneof![-10.0..-0.1f64, 0.1..10.0f64],
                )
            }),
            |((g, r), t, q, c)| prop_dissipation_homogeneous(&g, &r, &t, &q, c),
        )
        .map_err(|e| e.to_string()),
        "divergence_theorem" => runner.run(
            &grid_strategy().prop_flat_map(|(g, _)| {
                let nf = g.n_faces();
                (Just(g), prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64), nf))
            }),
            |(g, q)| prop_divergence_theorem(&g, &q),
        )
        .map_err(|e| e.to_string()),
        "gauge_invariance" => runner.run(
            &(grid_strategy(), fluids_strategy()).prop_flat_map(|((g, r), fl)| {
                let n = g.n_cells();
                (
                    Just((g, r, fl)),
                    prop::collection::vec(0.01..0.99f64, n),
                    prop::collection::vec(-1e5..1e5f64, n),
                    -1e6..1e6f64,
                )
            }),
            |((g, r, fl), t, h, shift)| prop_gauge_invariance(&g, &r, &t, &h, shift, &fl),
        )
        .map_err(|e| e.to_string()),
        other => return Err(format!("unknown property {other}")),
    };
    result.map_err(|e| format!("{name}: {e}"))
}

pub const PROPERTIES: [&str; 5] =
    ["pi_round_trip", "resolvent_in_graph", "dissipation_homogeneous", "divergence_theorem", "gauge_invariance"];
