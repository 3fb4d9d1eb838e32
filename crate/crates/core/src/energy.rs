//! Energy, subdifferential, dissipation and duality pairing.
//!
//! Energies and dissipations are extended-real valued: states outside the
//! admissible set and fluxes through immobile upwind cells evaluate to
//! `f64::INFINITY` rather than an error.

use crate::mesh::{CellField, FaceFluxField, Grid, Quantity};
use crate::petrophysics::{Fluids, PhaseId, RockType};

/// Tolerance on `s_o + s_w = 1` for membership in the admissible set.
pub const PORE_SATURATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SaturationState {
    pub s_o: CellField,
    pub s_w: CellField,
}

impl SaturationState {
    pub fn new(s_o: Vec<f64>, s_w: Vec<f64>) -> Self {
        assert_eq!(s_o.len(), s_w.len());
        SaturationState {
            s_o: CellField::new(Quantity::Saturation, s_o),
            s_w: CellField::new(Quantity::Saturation, s_w),
        }
    }

    /// Fully saturated state, `s_w = 1 - s_o`.
    pub fn from_oil(s_o: Vec<f64>) -> Self {
        let s_w = s_o.iter().map(|s| 1.0 - s).collect();
        SaturationState::new(s_o, s_w)
    }

    pub fn len(&self) -> usize {
        self.s_o.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_o.is_empty()
    }

    pub fn phase(&self, phase: PhaseId) -> &[f64] {
        match phase {
            PhaseId::Oil => &self.s_o.values,
            PhaseId::Water => &self.s_w.values,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HydrostaticPressures {
    pub h_o: CellField,
    pub h_w: CellField,
}

impl HydrostaticPressures {
    pub fn new(h_o: Vec<f64>, h_w: Vec<f64>) -> Self {
        HydrostaticPressures {
            h_o: CellField::new(Quantity::Pressure, h_o),
            h_w: CellField::new(Quantity::Pressure, h_w),
        }
    }

    pub fn phase(&self, phase: PhaseId) -> &[f64] {
        match phase {
            PhaseId::Oil => &self.h_o.values,
            PhaseId::Water => &self.h_w.values,
        }
    }
}

/// Whether `(s_o, s_w)` lies in the admissible simplex of the rock.
pub fn in_admissible_set(s_o: f64, s_w: f64, rock: &RockType) -> bool {
    (s_o + s_w - 1.0).abs() <= PORE_SATURATION_TOL && s_o >= rock.s_o_min() && s_o <= rock.s_o_max()
}

/// Energy density in Pa; `+inf` outside the admissible set.
pub fn volume_energy(s_o: f64, s_w: f64, rock: &RockType, z: f64, fluids: &Fluids) -> f64 {
    if !in_admissible_set(s_o, s_w, rock) {
        return f64::INFINITY;
    }
    match rock.pi_primitive(s_o) {
        Ok(pi) => pi - fluids.buoyancy() * s_o * z,
        Err(_) => f64::INFINITY,
    }
}

/// `sum_K phi_K V_K E_K`, in J.
pub fn global_energy(state: &SaturationState, grid: &Grid, rocks: &[RockType], fluids: &Fluids) -> f64 {
    let mut total = 0.0;
    for k in 0..grid.n_cells() {
        let e = volume_energy(state.s_o[k], state.s_w[k], grid.rock(rocks, k), grid.depth[k], fluids);
        if e == f64::INFINITY {
            return f64::INFINITY;
        }
        total += grid.pore_volume(rocks, k) * e;
    }
    total
}

/// Per-cell membership `h_o - h_w + (rho_o - rho_w) g z ∈ pi(s_o)`, with
/// absolute tolerance `tol` on the single-valued part.
pub fn subdifferential_contains(
    state: &SaturationState,
    h: &HydrostaticPressures,
    grid: &Grid,
    rocks: &[RockType],
    fluids: &Fluids,
    tol: f64,
) -> bool {
    (0..grid.n_cells()).all(|k| {
        let rock = grid.rock(rocks, k);
        if !in_admissible_set(state.s_o[k], state.s_w[k], rock) {
            return false;
        }
        let p = h.h_o[k] - h.h_w[k] + fluids.buoyancy() * grid.depth[k];
        rock.graph_contains_tol(state.s_o[k], p, tol).unwrap_or(false)
    })
}

/// Upwind cell per face and phase, as chosen by the flux discretization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaceUpwind {
    pub oil: Vec<usize>,
    pub water: Vec<usize>,
}

impl FaceUpwind {
    pub fn phase(&self, phase: PhaseId) -> &[usize] {
        match phase {
            PhaseId::Oil => &self.oil,
            PhaseId::Water => &self.water,
        }
    }

    /// Upwinding read off the flux sign; zero flux picks the lower index.
    pub fn from_flux(flux: &FaceFluxField, grid: &Grid) -> Self {
        let pick = |q: &[f64]| {
            grid.faces
                .iter()
                .zip(q)
                .map(|(f, &q)| if q < 0.0 { f.cells.1 } else { f.cells.0 })
                .collect()
        };
        FaceUpwind { oil: pick(&flux.oil), water: pick(&flux.water) }
    }
}

/// Discrete dissipation potential `1/2 sum q^2 / (T eta_up)`, in W.
pub fn dissipation(
    state: &SaturationState,
    flux: &FaceFluxField,
    upwind: &FaceUpwind,
    grid: &Grid,
    rocks: &[RockType],
) -> f64 {
    let mut total = 0.0;
    for phase in PhaseId::ALL {
        let q = flux.phase(phase);
        let up = upwind.phase(phase);
        let s = state.phase(phase);
        for f in 0..grid.n_faces() {
            if q[f] == 0.0 {
                continue;
            }
            let k = up[f];
            let conductance = grid.transmissibility(f, rocks) * grid.rock(rocks, k).mobility(s[k], phase);
            if conductance == 0.0 {
                return f64::INFINITY;
            }
            total += 0.5 * q[f] * q[f] / conductance;
        }
    }
    total
}

/// `sum_alpha sum_K phi_K V_K h_alpha sdot_alpha`, in W.
pub fn duality_pairing(
    h: &HydrostaticPressures,
    sdot: (&CellField, &CellField),
    grid: &Grid,
    rocks: &[RockType],
) -> f64 {
    let mut total = 0.0;
    for k in 0..grid.n_cells() {
        let pv = grid.pore_volume(rocks, k);
        total += pv * (h.h_o[k] * sdot.0[k] + h.h_w[k] * sdot.1[k]);
    }
    total
}

/// The two sides of `dE/dt = -2 D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRates {
    pub de_dt_chain: f64,
    pub minus_two_d: f64,
}

pub fn decay_rate_report(
    state: &SaturationState,
    flux: &FaceFluxField,
    upwind: &FaceUpwind,
    h: &HydrostaticPressures,
    sdot: (&CellField, &CellField),
    grid: &Grid,
    rocks: &[RockType],
) -> DecayRates {
    DecayRates {
        de_dt_chain: duality_pairing(h, sdot, grid, rocks),
        minus_two_d: -2.0 * dissipation(state, flux, upwind, grid, rocks),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::GridSpec;
    use crate::petrophysics::fixtures::linear_rock;
    use approx::assert_relative_eq;

    fn fluids() -> Fluids {
        Fluids::new(800.0, 1000.0, 9.81)
    }

    #[test]
    fn volume_energy_examples() {
        let r = linear_rock();
        let f = fluids();
        assert_eq!(volume_energy(0.45, 0.45, &r, 0.0, &f), f64::INFINITY);
        assert_eq!(volume_energy(0.05, 0.95, &r, 0.0, &f), f64::INFINITY);
        assert_relative_eq!(volume_energy(0.8, 0.2, &r, 0.0, &f), 2450.0, max_relative = 1e-13);
        // 787.5 - (-200) * 0.45 * 9.81 * 10
        assert_relative_eq!(volume_energy(0.45, 0.55, &r, 10.0, &f), 787.5 + 8829.0, max_relative = 1e-13);
        assert_relative_eq!(volume_energy(0.45, 0.55, &r, 10.0, &f), 9616.5, max_relative = 1e-13);
    }

    #[test]
    fn global_energy_examples() {
        let rocks = [linear_rock()];
        let f = fluids();
        let g = Grid::uniform(&GridSpec::horizontal(2, 1.0)).unwrap();
        assert_eq!(global_energy(&SaturationState::from_oil(vec![0.1, 0.1]), &g, &rocks, &f), 0.0);
        let s = SaturationState::new(vec![0.45, 0.45], vec![0.55, 0.55]);
        assert_relative_eq!(global_energy(&s, &g, &rocks, &f), 315.0, max_relative = 1e-13);
        let s = SaturationState::new(vec![0.45, 0.45], vec![0.55, 0.50]);
        assert_eq!(global_energy(&s, &g, &rocks, &f), f64::INFINITY);
    }

    #[test]
    fn subdifferential_examples() {
        let rocks = [linear_rock()];
        let f = fluids();
        let g = Grid::uniform(&GridSpec::column(1, 4.0)).unwrap();
        let z = g.depth[0];
        let tol = 1e-6;
        let s = SaturationState::from_oil(vec![0.45]);
        let gap = 3500.0 - f.buoyancy() * z;
        assert!(subdifferential_contains(&s, &HydrostaticPressures::new(vec![gap + 7.0], vec![7.0]), &g, &rocks, &f, tol));
        assert!(!subdifferential_contains(
            &s,
            &HydrostaticPressures::new(vec![gap + 10.0 * tol], vec![0.0]),
            &g,
            &rocks,
            &f,
            tol
        ));
        let s = SaturationState::from_oil(vec![0.1]);
        let h = HydrostaticPressures::new(vec![1000.0 - 100.0 - f.buoyancy() * z], vec![0.0]);
        assert!(subdifferential_contains(&s, &h, &g, &rocks, &f, tol));
    }

    #[test]
    fn dissipation_examples() {
        let mut rock = linear_rock();
        rock.lam = 1e-12;
        let rocks = [rock];
        let g = Grid::uniform(&GridSpec::horizontal(2, 1.0)).unwrap();
        let s = SaturationState::from_oil(vec![0.45, 0.1]);
        let mut flux = FaceFluxField::zeros(1);
        let up = FaceUpwind::from_flux(&flux, &g);
        assert_eq!(dissipation(&s, &flux, &up, &g, &rocks), 0.0);
        // T = 1e-12, eta_up(0.45) = 0.25
        flux.oil[0] = 1e-6;
        let up = FaceUpwind::from_flux(&flux, &g);
        assert_relative_eq!(dissipation(&s, &flux, &up, &g, &rocks), 2.0, max_relative = 1e-12);
        // reverse direction pulls from the residual cell
        flux.oil[0] = -1e-6;
        let up = FaceUpwind::from_flux(&flux, &g);
        assert_eq!(dissipation(&s, &flux, &up, &g, &rocks), f64::INFINITY);
    }

    #[test]
    fn duality_examples() {
        let rock = RockType { phi: 0.2, ..linear_rock() };
        let g = Grid::uniform(&GridSpec::horizontal(1, 1.0)).unwrap();
        let h = HydrostaticPressures::new(vec![3.0], vec![0.0]);
        let so = CellField::new(Quantity::Rate, vec![2.0]);
        let sw = CellField::new(Quantity::Rate, vec![-2.0]);
        assert_relative_eq!(duality_pairing(&h, (&so, &sw), &g, &[rock]), 1.2, max_relative = 1e-14);
        let zero = CellField::new(Quantity::Rate, vec![0.0]);
        assert_eq!(duality_pairing(&h, (&zero, &zero), &g, &[rock]), 0.0);

        let g = Grid::uniform(&GridSpec::horizontal(3, 1.0)).unwrap();
        let h = HydrostaticPressures::new(vec![1.0; 3], vec![1.0; 3]);
        let so = CellField::new(Quantity::Rate, vec![1.0, -0.25, -0.75]);
        let sw = CellField::new(Quantity::Rate, vec![-1.0, 0.5, 0.5]);
        assert!(duality_pairing(&h, (&so, &sw), &g, &[rock]).abs() < 1e-15);
    }

    #[test]
    fn decay_report_edge_cases() {
        let rocks = [linear_rock()];
        let g = Grid::uniform(&GridSpec::horizontal(2, 1.0)).unwrap();
        let s = SaturationState::from_oil(vec![0.1, 0.1]);
        let zero = CellField::new(Quantity::Rate, vec![0.0; 2]);
        let h = HydrostaticPressures::new(vec![0.0; 2], vec![0.0; 2]);
        let flux = FaceFluxField::zeros(1);
        let up = FaceUpwind::from_flux(&flux, &g);
        let r = decay_rate_report(&s, &flux, &up, &h, (&zero, &zero), &g, &rocks);
        assert_eq!((r.de_dt_chain, r.minus_two_d), (0.0, 0.0));
        let mut flux = FaceFluxField::zeros(1);
        flux.oil[0] = 1e-9;
        let up = FaceUpwind::from_flux(&flux, &g);
        let r = decay_rate_report(&s, &flux, &up, &h, (&zero, &zero), &g, &rocks);
        assert_eq!(r.minus_two_d, f64::NEG_INFINITY);
    }
}
