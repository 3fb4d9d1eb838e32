//! Structured 1D/2D finite-volume mesh with two-point flux transmissibilities.
//!
//! Cells are numbered row-major, `k = i + nx * j`. In 2D the second axis is
//! depth, `z` increasing downward. Boundary faces are never stored, so a
//! no-flux boundary holds by construction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::petrophysics::{PhaseId, RockType};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeshError {
    #[error("bad grid spec: {field}: {reason}")]
    BadSpec { field: &'static str, reason: String },
}

/// Axis of a one-dimensional grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    #[default]
    Horizontal,
    /// The single axis is depth.
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    #[serde(default = "one_usize")]
    pub ny: usize,
    /// m
    pub dx: f64,
    /// m
    #[serde(default = "one_f64")]
    pub dy: f64,
    /// Only meaningful when `ny == 1`; 2D grids always use the second axis as depth.
    #[serde(default)]
    pub orientation: Orientation,
    /// Depth of the top boundary, m.
    #[serde(default)]
    pub z_top: f64,
}

fn one_usize() -> usize {
    1
}

fn one_f64() -> f64 {
    1.0
}

impl GridSpec {
    pub fn column(n: usize, dz: f64) -> Self {
        GridSpec { nx: n, ny: 1, dx: dz, dy: 1.0, orientation: Orientation::Vertical, z_top: 0.0 }
    }

    pub fn horizontal(n: usize, dx: f64) -> Self {
        GridSpec { nx: n, ny: 1, dx, dy: 1.0, orientation: Orientation::Horizontal, z_top: 0.0 }
    }

    pub fn rect(nx: usize, ny: usize, dx: f64, dy: f64) -> Self {
        GridSpec { nx, ny, dx, dy, orientation: Orientation::Horizontal, z_top: 0.0 }
    }

    pub fn is_vertical_column(&self) -> bool {
        self.ny == 1 && self.orientation == Orientation::Vertical
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceAxis {
    X,
    Y,
}

/// Interior face oriented from `cells.0` to `cells.1`, with `cells.0 < cells.1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    pub cells: (usize, usize),
    pub axis: FaceAxis,
    /// m² (unit thickness out of plane)
    pub area: f64,
    /// Half-cell distances from each cell center to the face, m.
    pub half_dist: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub orientation: Orientation,
    pub cell_volume: f64,
    pub rock_id: Vec<usize>,
    pub depth: Vec<f64>,
    pub faces: Vec<Face>,
    /// Face indices incident to each cell.
    pub cell_faces: Vec<Vec<usize>>,
}

impl Grid {
    pub fn build(spec: &GridSpec, rock_id: Vec<usize>, n_rocks: usize) -> Result<Grid, MeshError> {
        let bad = |field, reason: String| MeshError::BadSpec { field, reason };
        if spec.nx == 0 {
            return Err(bad("nx", "must be >= 1".into()));
        }
        if spec.ny == 0 {
            return Err(bad("ny", "must be >= 1".into()));
        }
        if !(spec.dx > 0.0 && spec.dx.is_finite()) {
            return Err(bad("dx", format!("{} must be > 0", spec.dx)));
        }
        if !(spec.dy > 0.0 && spec.dy.is_finite()) {
            return Err(bad("dy", format!("{} must be > 0", spec.dy)));
        }
        if !spec.z_top.is_finite() {
            return Err(bad("z_top", "must be finite".into()));
        }
        let (nx, ny) = (spec.nx, spec.ny);
        let n = nx * ny;
        if rock_id.len() != n {
            return Err(bad("rock_map", format!("covers {} cells, grid has {n}", rock_id.len())));
        }
        if let Some(&r) = rock_id.iter().find(|&&r| r >= n_rocks) {
            return Err(bad("rock_map", format!("rock index {r} out of range ({n_rocks} rocks)")));
        }

        let vertical_1d = ny == 1 && spec.orientation == Orientation::Vertical;
        let depth = (0..n)
            .map(|k| {
                let (i, j) = (k % nx, k / nx);
                if ny > 1 {
                    spec.z_top + (j as f64 + 0.5) * spec.dy
                } else if vertical_1d {
                    spec.z_top + (i as f64 + 0.5) * spec.dx
                } else {
                    spec.z_top
                }
            })
            .collect();

        let mut faces = Vec::with_capacity((nx - 1) * ny + nx * (ny - 1));
        for j in 0..ny {
            for i in 0..nx.saturating_sub(1) {
                let k = i + nx * j;
                faces.push(Face {
                    cells: (k, k + 1),
                    axis: FaceAxis::X,
                    area: spec.dy,
                    half_dist: (0.5 * spec.dx, 0.5 * spec.dx),
                });
            }
        }
        for j in 0..ny.saturating_sub(1) {
            for i in 0..nx {
                let k = i + nx * j;
                faces.push(Face {
                    cells: (k, k + nx),
                    axis: FaceAxis::Y,
                    area: spec.dx,
                    half_dist: (0.5 * spec.dy, 0.5 * spec.dy),
                });
            }
        }
        let mut cell_faces = vec![Vec::new(); n];
        for (f, face) in faces.iter().enumerate() {
            cell_faces[face.cells.0].push(f);
            cell_faces[face.cells.1].push(f);
        }

        Ok(Grid {
            nx,
            ny,
            dx: spec.dx,
            dy: spec.dy,
            orientation: spec.orientation,
            cell_volume: spec.dx * spec.dy,
            rock_id,
            depth,
            faces,
            cell_faces,
        })
    }

    /// Homogeneous grid with every cell on rock 0.
    pub fn uniform(spec: &GridSpec) -> Result<Grid, MeshError> {
        Grid::build(spec, vec![0; spec.nx * spec.ny], 1)
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn rock<'a>(&self, rocks: &'a [RockType], k: usize) -> &'a RockType {
        &rocks[self.rock_id[k]]
    }

    /// `phi_K * V_K`
    pub fn pore_volume(&self, rocks: &[RockType], k: usize) -> f64 {
        self.rock(rocks, k).phi * self.cell_volume
    }

    /// Cell-center coordinates `(x, z)` as written to snapshots.
    pub fn cell_center(&self, k: usize) -> (f64, f64) {
        let i = k % self.nx;
        ((i as f64 + 0.5) * self.dx, self.depth[k])
    }

    /// Harmonic-average two-point transmissibility `A / (d1/L1 + d2/L2)`, m³.
    pub fn transmissibility(&self, face: usize, rocks: &[RockType]) -> f64 {
        let f = &self.faces[face];
        let l1 = self.rock(rocks, f.cells.0).lam;
        let l2 = self.rock(rocks, f.cells.1).lam;
        two_point_transmissibility(f.area, f.half_dist.0, f.half_dist.1, l1, l2)
    }

    pub fn transmissibilities(&self, rocks: &[RockType]) -> Vec<f64> {
        (0..self.n_faces()).map(|f| self.transmissibility(f, rocks)).collect()
    }

    /// Net outgoing flux per unit cell volume. The saturation update is
    /// `phi d_t s = -divergence`.
    pub fn divergence(&self, flux: &FaceFluxField, phase: PhaseId) -> CellField {
        let q = flux.phase(phase);
        let mut div = vec![0.0; self.n_cells()];
        for (f, face) in self.faces.iter().enumerate() {
            div[face.cells.0] += q[f];
            div[face.cells.1] -= q[f];
        }
        for d in &mut div {
            *d /= self.cell_volume;
        }
        CellField::new(Quantity::Rate, div)
    }
}

pub fn two_point_transmissibility(area: f64, d1: f64, d2: f64, lam1: f64, lam2: f64) -> f64 {
    let r = d1 / lam1 + d2 / lam2;
    if r.is_infinite() {
        0.0
    } else {
        area / r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    Saturation,
    Pressure,
    EnergyDensity,
    Rate,
}

/// One value per cell, tagged with what it measures.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    pub quantity: Quantity,
    pub values: Vec<f64>,
}

impl CellField {
    pub fn new(quantity: Quantity, values: Vec<f64>) -> Self {
        CellField { quantity, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl std::ops::Index<usize> for CellField {
    type Output = f64;

    fn index(&self, k: usize) -> &f64 {
        &self.values[k]
    }
}

/// Per interior face and phase volumetric flux (m³/s), positive from
/// `face.cells.0` to `face.cells.1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceFluxField {
    pub oil: Vec<f64>,
    pub water: Vec<f64>,
}

impl FaceFluxField {
    pub fn zeros(n_faces: usize) -> Self {
        FaceFluxField { oil: vec![0.0; n_faces], water: vec![0.0; n_faces] }
    }

    pub fn phase(&self, phase: PhaseId) -> &[f64] {
        match phase {
            PhaseId::Oil => &self.oil,
            PhaseId::Water => &self.water,
        }
    }

    pub fn phase_mut(&mut self, phase: PhaseId) -> &mut Vec<f64> {
        match phase {
            PhaseId::Oil => &mut self.oil,
            PhaseId::Water => &mut self.water,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        FaceFluxField {
            oil: self.oil.iter().map(|q| c * q).collect(),
            water: self.water.iter().map(|q| c * q).collect(),
        }
    }
}
