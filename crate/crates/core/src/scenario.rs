//! Scenario files: strict JSON, SI units, validated as a whole.
//!
//! Regions are axis-aligned boxes in physical coordinates (`x` along the
//! first grid axis, `z` depth), so a scenario can be refined without
//! rewriting its regions. A cell belongs to a box when its center satisfies
//! `lo <= c < hi`; later regions override earlier ones.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{gravity_equilibrium_oracle, mass_totals, ColumnSpec};
use crate::mesh::{Grid, GridSpec};
use crate::petrophysics::{Fluids, RockType};
use crate::solver::{Problem, SolverState, StepControls};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("cannot build scenario: {0}")]
    Build(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub grid: GridSpec,
    pub fluids: Fluids,
    /// Rock types by name.
    pub rocks: BTreeMap<String, RockType>,
    pub rock_map: RockMap,
    pub initial: InitialCondition,
    pub controls: StepControls,
    /// End time, s.
    pub t_end: f64,
    #[serde(default)]
    pub output: OutputControls,
}

/// Axis-aligned box; a missing bound is unbounded.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<[f64; 2]>,
}

impl Region {
    pub fn contains(&self, (x, z): (f64, f64)) -> bool {
        let inside = |r: &Option<[f64; 2]>, c: f64| r.map_or(true, |[lo, hi]| lo <= c && c < hi);
        inside(&self.x, x) && inside(&self.z, z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RockRegion {
    pub rock: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<[f64; 2]>,
}

impl RockRegion {
    pub fn region(&self) -> Region {
        Region { x: self.x, z: self.z }
    }
}

/// Either a default rock with overriding regions, or one name per cell.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RockMap {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<RockRegion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaturationRegion {
    pub s_o: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<[f64; 2]>,
}

impl SaturationRegion {
    pub fn region(&self) -> Region {
        Region { x: self.x, z: self.z }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    #[default]
    X,
    Z,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// Piecewise constant oil saturation.
    Regions {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        default: Option<f64>,
        #[serde(default)]
        regions: Vec<SaturationRegion>,
    },
    /// `mean + amplitude cos(pi c / L)` along one axis of the domain.
    Cosine {
        mean: f64,
        amplitude: f64,
        #[serde(default)]
        axis: Axis,
    },
    /// Gravity-capillary equilibrium holding `oil_fraction` of the
    /// achievable oil volume, plus uniform noise of half-width `amplitude`
    /// clamped to the bounds.
    EquilibriumPerturbed {
        oil_fraction: f64,
        #[serde(default)]
        amplitude: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Independent uniform draws in the admissible interval; each cell is
    /// put exactly on a residual endpoint with probability `endpoint_fraction`
    /// (never on the singular upper endpoint of a power-law curve).
    Random {
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        endpoint_fraction: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnapshotFormat {
    Csv,
    Vtk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputControls {
    #[serde(default = "default_dir")]
    pub dir: String,
    /// Accepted steps between snapshots; 0 writes only the initial and final states.
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default = "default_formats")]
    pub formats: Vec<SnapshotFormat>,
}

fn default_dir() -> String {
    "out".into()
}

fn default_formats() -> Vec<SnapshotFormat> {
    vec![SnapshotFormat::Csv]
}

impl Default for OutputControls {
    fn default() -> Self {
        OutputControls { dir: default_dir(), snapshot_every: 0, formats: default_formats() }
    }
}

/// A built scenario: problem, initial state and its conserved phase volumes.
#[derive(Debug, Clone)]
pub struct Setup {
    pub problem: Problem,
    pub initial: SolverState,
    pub m_o: f64,
    pub m_w: f64,
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    let problems = scenario.validate();
    if problems.is_empty() {
        Ok(scenario)
    } else {
        Err(ScenarioError::Validation(problems))
    }
}

impl Scenario {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    fn rock_names(&self) -> Vec<&String> {
        self.rocks.keys().collect()
    }

    fn grid_shape(&self) -> Result<Grid, String> {
        Grid::uniform(&self.grid).map_err(|e| e.to_string())
    }

    /// Every violation found, empty when valid.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        v.extend(self.fluids.validate().into_iter().map(|m| format!("fluids: {m}")));
        if self.rocks.is_empty() {
            v.push("rocks: at least one rock type is required".into());
        }
        for (name, rock) in &self.rocks {
            v.extend(rock.validate().into_iter().map(|m| format!("rock '{name}': {m}")));
        }
        v.extend(self.controls.validate().into_iter().map(|m| format!("controls: {m}")));
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            v.push(format!("t_end = {} must be > 0", self.t_end));
        }
        if self.output.formats.is_empty() {
            v.push("output.formats: at least one format is required".into());
        }
        let grid = match self.grid_shape() {
            Ok(g) => g,
            Err(e) => {
                v.push(format!("grid: {e}"));
                return v;
            }
        };
        let ids = match self.rock_ids(&grid) {
            Ok(ids) => ids,
            Err(mut e) => {
                v.append(&mut e);
                return v;
            }
        };
        if v.iter().any(|m| m.starts_with("rock '")) {
            return v;
        }
        let rocks: Vec<&RockType> = self.rocks.values().collect();
        match &self.initial {
            InitialCondition::Regions { default, regions } => {
                let mut assigned = vec![*default; grid.n_cells()];
                for r in regions {
                    for (k, a) in assigned.iter_mut().enumerate() {
                        if r.region().contains(grid.cell_center(k)) {
                            *a = Some(r.s_o);
                        }
                    }
                }
                let mut uncovered = 0;
                for (k, a) in assigned.iter().enumerate() {
                    let rock = rocks[ids[k]];
                    match a {
                        None => uncovered += 1,
                        Some(s) if !(*s >= rock.s_o_min() && *s <= rock.s_o_max()) => v.push(format!(
                            "initial: cell {k} s_o = {s} outside [{}, {}]",
                            rock.s_o_min(),
                            rock.s_o_max()
                        )),
                        _ => {}
                    }
                }
                if uncovered > 0 {
                    v.push(format!("initial: {uncovered} cells not covered by any region and no default"));
                }
            }
            InitialCondition::Cosine { mean, amplitude, .. } => {
                for (k, &id) in ids.iter().enumerate() {
                    let r = rocks[id];
                    if mean - amplitude.abs() < r.s_o_min() || mean + amplitude.abs() > r.s_o_max() {
                        v.push(format!("initial: cosine profile leaves [{}, {}] in cell {k}", r.s_o_min(), r.s_o_max()));
                        break;
                    }
                }
            }
            InitialCondition::EquilibriumPerturbed { oil_fraction, amplitude, .. } => {
                if !(0.0..=1.0).contains(oil_fraction) {
                    v.push(format!("initial: oil_fraction = {oil_fraction} must be in [0, 1]"));
                }
                if !(*amplitude >= 0.0 && amplitude.is_finite()) {
                    v.push(format!("initial: amplitude = {amplitude} must be >= 0"));
                }
            }
            InitialCondition::Random { endpoint_fraction, .. } => {
                if !(0.0..=1.0).contains(endpoint_fraction) {
                    v.push(format!("initial: endpoint_fraction = {endpoint_fraction} must be in [0, 1]"));
                }
            }
        }
        v
    }

    fn rock_ids(&self, grid: &Grid) -> Result<Vec<usize>, Vec<String>> {
        let names = self.rock_names();
        let lookup = |n: &String, what: &str| -> Result<usize, String> {
            names.iter().position(|m| *m == n).ok_or_else(|| format!("rock_map: {what} references unknown rock '{n}'"))
        };
        let mut errs = Vec::new();
        let n = grid.n_cells();
        let map = &self.rock_map;
        let mut ids: Vec<Option<usize>> = match (&map.cells, &map.default) {
            (Some(cells), None) if map.regions.is_empty() => {
                if cells.len() != n {
                    errs.push(format!("rock_map: {} cell entries for {n} cells", cells.len()));
                }
                cells
                    .iter()
                    .enumerate()
                    .map(|(k, c)| lookup(c, &format!("cell {k}")).map_err(|e| errs.push(e)).ok())
                    .collect()
            }
            (Some(_), _) => {
                errs.push("rock_map: 'cells' excludes 'default' and 'regions'".into());
                vec![None; n]
            }
            (None, d) => {
                let d = d.as_ref().and_then(|d| lookup(d, "default").map_err(|e| errs.push(e)).ok());
                let mut ids = vec![d; n];
                for (i, r) in map.regions.iter().enumerate() {
                    let Ok(id) = lookup(&r.rock, &format!("region {i}")).map_err(|e| errs.push(e)) else { continue };
                    for (k, slot) in ids.iter_mut().enumerate() {
                        if r.region().contains(grid.cell_center(k)) {
                            *slot = Some(id);
                        }
                    }
                }
                ids
            }
        };
        ids.resize(n, None);
        let uncovered = ids.iter().filter(|i| i.is_none()).count();
        if uncovered > 0 && errs.is_empty() {
            errs.push(format!("rock_map: {uncovered} cells have no rock"));
        }
        if errs.is_empty() {
            Ok(ids.into_iter().map(|i| i.unwrap()).collect())
        } else {
            Err(errs)
        }
    }

    /// Problem and initial state; `seed` overrides the scenario's seed.
    pub fn build(&self, seed: Option<u64>) -> Result<Setup, ScenarioError> {
        let problems = self.validate();
        if !problems.is_empty() {
            return Err(ScenarioError::Validation(problems));
        }
        let shape = self.grid_shape().map_err(ScenarioError::Build)?;
        let ids = self.rock_ids(&shape).map_err(ScenarioError::Validation)?;
        let rocks: Vec<RockType> = self.rocks.values().copied().collect();
        let grid = Grid::build(&self.grid, ids, rocks.len()).map_err(|e| ScenarioError::Build(e.to_string()))?;
        let problem = Problem::new(grid, rocks, self.fluids);
        let s_o = self.initial_saturation(&problem, seed)?;
        let initial = SolverState::from_saturation(&problem, &s_o).map_err(|e| ScenarioError::Build(e.to_string()))?;
        let sat = initial.saturations(&problem);
        let (m_o, m_w) = mass_totals(&sat, &problem.grid, &problem.rocks);
        Ok(Setup { problem, initial, m_o, m_w })
    }

    fn initial_saturation(&self, p: &Problem, seed: Option<u64>) -> Result<Vec<f64>, ScenarioError> {
        let grid = &p.grid;
        let n = grid.n_cells();
        let rock = |k: usize| grid.rock(&p.rocks, k);
        Ok(match &self.initial {
            InitialCondition::Regions { default, regions } => (0..n)
                .map(|k| {
                    let c = grid.cell_center(k);
                    regions.iter().rev().find(|r| r.region().contains(c)).map(|r| r.s_o).or(*default).unwrap()
                })
                .collect(),
            InitialCondition::Cosine { mean, amplitude, axis } => {
                let (len, lo) = match axis {
                    Axis::X => (grid.nx as f64 * grid.dx, 0.0),
                    Axis::Z if grid.ny > 1 => (grid.ny as f64 * grid.dy, self.grid.z_top),
                    Axis::Z => (grid.nx as f64 * grid.dx, self.grid.z_top),
                };
                (0..n)
                    .map(|k| {
                        let (x, z) = grid.cell_center(k);
                        let c = match axis {
                            Axis::X => x,
                            Axis::Z => z,
                        };
                        mean + amplitude * (std::f64::consts::PI * (c - lo) / len).cos()
                    })
                    .collect()
            }
            InitialCondition::EquilibriumPerturbed { oil_fraction, amplitude, seed: s } => {
                let mut spec = ColumnSpec::new(p.clone(), 0.0);
                let (lo, hi) = spec.bounds();
                spec = ColumnSpec::new(p.clone(), lo + oil_fraction * (hi - lo));
                let eq = gravity_equilibrium_oracle(&spec).map_err(|e| ScenarioError::Build(e.to_string()))?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(*s));
                eq.s_o
                    .iter()
                    .enumerate()
                    .map(|(k, s)| {
                        let noise = if *amplitude > 0.0 { rng.gen_range(-amplitude..=*amplitude) } else { 0.0 };
                        (s + noise).clamp(rock(k).s_o_min(), rock(k).s_o_max())
                    })
                    .collect()
            }
            InitialCondition::Random { seed: s, endpoint_fraction } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(*s));
                (0..n)
                    .map(|k| {
                        let r = rock(k);
                        // the singular curve has no pressure at its upper endpoint
                        let upper_ok = r.pi_upper_limit().is_finite();
                        if rng.gen_bool(*endpoint_fraction) {
                            if rng.gen_bool(0.5) && upper_ok {
                                r.s_o_max()
                            } else {
                                r.s_o_min()
                            }
                        } else {
                            rng.gen_range(r.s_o_min()..r.s_o_max())
                        }
                    })
                    .collect()
            }
        })
    }

    /// The scenario with cell sizes and step controls divided by `2^level`.
    pub fn refined(&self, level: u32) -> Scenario {
        let f = (1u64 << level) as f64;
        let mut s = self.clone();
        s.grid.nx <<= level;
        s.grid.dx /= f;
        if s.grid.ny > 1 {
            s.grid.ny <<= level;
            s.grid.dy /= f;
        }
        s.controls.tau_init /= f;
        s.controls.tau_max /= f;
        s.controls.tau_min = s.controls.tau_min.map(|t| t / f);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "name": "minimal",
        "grid": {"nx": 4, "dx": 0.25, "orientation": "vertical"},
        "fluids": {"rho_o": 800, "rho_w": 1000},
        "rocks": {"sand": {"phi": 0.2, "lam": 1e-12, "s_o_res": 0.1, "s_w_res": 0.2,
                  "curve": {"kind": "linear", "p_entry": 1000, "delta_p": 5000}}},
        "rock_map": {"default": "sand"},
        "initial": {"kind": "regions", "default": 0.5},
        "controls": {"tau_init": 10, "tau_max": 1e5},
        "t_end": 1e6
    }"#;

    #[test]
    fn minimal_scenario_gets_defaults() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(s.fluids.g, 9.81);
        assert_eq!(s.controls.newton_tol, 1e-10);
        assert_eq!(s.grid.ny, 1);
        assert_eq!(s.output, OutputControls::default());
        let setup = s.build(None).unwrap();
        assert_eq!(setup.problem.n_cells(), 4);
        assert!((setup.m_o - 4.0 * 0.05 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn unknown_key_reports_path() {
        let text = MINIMAL.replace("\"rho_w\": 1000", "\"rho_w\": 1000, \"viscocity\": 1e-3");
        match parse_scenario(&text) {
            Err(ScenarioError::Parse { path, message }) => {
                assert_eq!(path, "fluids.viscocity");
                assert!(message.contains("viscocity"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn validation_lists_every_violation() {
        let text = MINIMAL
            .replace("\"s_o_res\": 0.1, \"s_w_res\": 0.2", "\"s_o_res\": 0.6, \"s_w_res\": 0.5")
            .replace("\"t_end\": 1e6", "\"t_end\": -1");
        match parse_scenario(&text) {
            Err(ScenarioError::Validation(v)) => {
                assert!(v.iter().any(|m| m.contains("rock 'sand'") && m.contains("residuals-sum")), "{v:?}");
                assert!(v.iter().any(|m| m.contains("t_end")), "{v:?}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unresolved_rock_and_uncovered_cells() {
        let text = MINIMAL.replace("{\"default\": \"sand\"}", "{\"regions\": [{\"rock\": \"clay\", \"z\": [0, 0.5]}]}");
        let Err(ScenarioError::Validation(v)) = parse_scenario(&text) else { panic!() };
        assert!(v.iter().any(|m| m.contains("unknown rock 'clay'")), "{v:?}");
        let text = MINIMAL.replace("{\"default\": \"sand\"}", "{\"regions\": [{\"rock\": \"sand\", \"z\": [0, 0.5]}]}");
        let Err(ScenarioError::Validation(v)) = parse_scenario(&text) else { panic!() };
        assert_eq!(v, vec!["rock_map: 2 cells have no rock".to_string()]);
    }

    #[test]
    fn initial_saturation_out_of_bounds() {
        let text = MINIMAL.replace("\"default\": 0.5}", "\"default\": 0.5, \"regions\": [{\"s_o\": 0.9, \"z\": [0.5, 1]}]}");
        let Err(ScenarioError::Validation(v)) = parse_scenario(&text) else { panic!() };
        assert_eq!(v.len(), 2, "{v:?}");
    }

    #[test]
    fn round_trip_is_identity() {
        let s = parse_scenario(MINIMAL).unwrap();
        assert_eq!(parse_scenario(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn regions_use_cell_centers() {
        let text = MINIMAL.replace("\"default\": 0.5}", "\"default\": 0.5, \"regions\": [{\"s_o\": 0.3, \"z\": [0, 0.5]}]}");
        let setup = parse_scenario(&text).unwrap().build(None).unwrap();
        let s = setup.initial.s_o(&setup.problem);
        let expect = [0.3, 0.3, 0.5, 0.5];
        for k in 0..4 {
            assert!((s[k] - expect[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn seeds_are_reproducible() {
        let text = MINIMAL.replace("{\"kind\": \"regions\", \"default\": 0.5}", "{\"kind\": \"random\", \"seed\": 3, \"endpoint_fraction\": 0.3}");
        let s = parse_scenario(&text).unwrap();
        let a = s.build(None).unwrap().initial;
        let b = s.build(None).unwrap().initial;
        let c = s.build(Some(4)).unwrap().initial;
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn refinement_scales_grid_and_steps() {
        let s = parse_scenario(MINIMAL).unwrap().refined(2);
        assert_eq!(s.grid.nx, 16);
        assert_eq!(s.grid.dx, 0.0625);
        assert_eq!(s.controls.tau_init, 2.5);
        assert!(s.validate().is_empty());
    }
}
