//! Backward-Euler time stepping of the two-phase gradient flow.
//!
//! Primary unknowns per cell are the capillary potential `u` and the water
//! hydrostatic pressure `h_w`. Saturations are recovered through the
//! resolvent, `s_o = pi^{-1}(u)`, so bounds hold for every iterate and the
//! capillary inclusion is satisfied by construction. Each step solves, for
//! every cell, oil continuity and the total-flux closure with upwinded
//! two-point fluxes, fully implicit, by a damped Newton method.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{self, FaceUpwind, HydrostaticPressures, SaturationState};
use crate::linalg::{LinearSolveError, TripletMatrix};
use crate::mesh::{CellField, FaceFluxField, Grid, Quantity};
use crate::petrophysics::{Fluids, PetroError, PhaseId, RockType};

/// Diagonal regularization of `ds_o/du` in the Jacobian, 1/Pa.
pub const JACOBIAN_EPS: f64 = 1e-12;
/// Residual level, relative to the Newton tolerance, below which no polishing step is taken.
const POLISH_FACTOR: f64 = 1e-3;

/// Relative diagonal regularization of the pressure rows, keeps the Jacobian
/// nonsingular when a cell is cut off by immobile upwind faces.
const PRESSURE_REG: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("Newton did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("time step floor reached at t = {time} s (tau = {tau} s)")]
    StepFloorReached { time: f64, tau: f64 },
    #[error("pressure system is singular: every face is immobile for both phases")]
    SingularSystem,
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error(transparent)]
    Linear(#[from] LinearSolveError),
}

impl From<PetroError> for SolverError {
    fn from(e: PetroError) -> Self {
        SolverError::InvalidState(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepControls {
    pub tau_init: f64,
    #[serde(default)]
    pub tau_min: Option<f64>,
    pub tau_max: f64,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_newton_max_iter")]
    pub newton_max_iter: usize,
    #[serde(default = "default_shrink")]
    pub line_search_shrink: f64,
    #[serde(default = "default_max_line_search")]
    pub max_line_search: usize,
    #[serde(default = "default_growth")]
    pub growth_factor: f64,
}

fn default_newton_tol() -> f64 {
    1e-10
}
fn default_newton_max_iter() -> usize {
    50
}
fn default_shrink() -> f64 {
    0.5
}
fn default_max_line_search() -> usize {
    8
}
fn default_growth() -> f64 {
    1.4
}

impl StepControls {
    pub fn new(tau_init: f64, tau_max: f64) -> Self {
        StepControls {
            tau_init,
            tau_min: None,
            tau_max,
            newton_tol: default_newton_tol(),
            newton_max_iter: default_newton_max_iter(),
            line_search_shrink: default_shrink(),
            max_line_search: default_max_line_search(),
            growth_factor: default_growth(),
        }
    }

    /// Constant step size.
    pub fn fixed(tau: f64) -> Self {
        StepControls { growth_factor: 1.0, ..StepControls::new(tau, tau) }
    }

    pub fn tau_min(&self) -> f64 {
        self.tau_min.unwrap_or(1e-6 * self.tau_init)
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        let tmin = self.tau_min();
        if !(tmin > 0.0 && tmin <= self.tau_init && self.tau_init <= self.tau_max && self.tau_max.is_finite()) {
            v.push(format!(
                "need 0 < tau_min ({tmin}) <= tau_init ({}) <= tau_max ({})",
                self.tau_init, self.tau_max
            ));
        }
        if !(self.newton_tol > 0.0) {
            v.push(format!("newton_tol = {} must be > 0", self.newton_tol));
        }
        if self.newton_max_iter == 0 {
            v.push("newton_max_iter must be >= 1".into());
        }
        if !(self.line_search_shrink > 0.0 && self.line_search_shrink < 1.0) {
            v.push(format!("line_search_shrink = {} must lie in (0, 1)", self.line_search_shrink));
        }
        if !(self.growth_factor >= 1.0) {
            v.push(format!("growth_factor = {} must be >= 1", self.growth_factor));
        }
        v
    }
}

/// Grid, rock table and fluids, with transmissibilities precomputed.
#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Grid,
    pub rocks: Vec<RockType>,
    pub fluids: Fluids,
    trans: Vec<f64>,
    threads: usize,
}

/// Cell count above which cell-local evaluation is split across threads.
const PARALLEL_MIN_CELLS: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    /// Capillary potential `p_o - p_w`, Pa.
    pub u: CellField,
    /// Water hydrostatic pressure `p_w - rho_w g z`, Pa.
    pub h_w: CellField,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub time: f64,
    pub accepted_tau: f64,
    pub newton_iters: usize,
    pub residual_norm: f64,
    pub energy_before: f64,
    pub energy_after: f64,
    /// Dissipation of the step's fluxes at the new state, W.
    pub dissipation: f64,
    /// `<h, (s_new - s_old) / tau>`, W.
    pub de_dt_chain: f64,
    /// Set when the step raised the energy beyond the audit tolerance.
    pub energy_flag: bool,
}

/// Per-cell quantities derived from `(u, h_w)`.
#[derive(Debug, Clone)]
struct CellCache {
    s: Vec<f64>,
    /// Accumulation slope for the Jacobian, positive on the clamped branches.
    slope: Vec<f64>,
    eta: [Vec<f64>; 2],
    /// d eta / d u
    deta: [Vec<f64>; 2],
    /// Hydrostatic phase potentials.
    pot: [Vec<f64>; 2],
}

fn idx(phase: PhaseId) -> usize {
    match phase {
        PhaseId::Oil => 0,
        PhaseId::Water => 1,
    }
}

impl SolverState {
    pub fn new(u: Vec<f64>, h_w: Vec<f64>, time: f64) -> Self {
        SolverState {
            u: CellField::new(Quantity::Pressure, u),
            h_w: CellField::new(Quantity::Pressure, h_w),
            time,
        }
    }

    /// State with the given oil saturations, capillary potentials selected
    /// from the graph and the minimal-norm water pressure.
    pub fn from_saturation(problem: &Problem, s_o: &[f64]) -> Result<Self, SolverError> {
        let grid = &problem.grid;
        if s_o.len() != grid.n_cells() {
            return Err(SolverError::InvalidState(format!(
                "{} saturations for {} cells",
                s_o.len(),
                grid.n_cells()
            )));
        }
        let u = (0..grid.n_cells())
            .map(|k| grid.rock(&problem.rocks, k).graph_selection(s_o[k]))
            .collect::<Result<Vec<_>, _>>()?;
        let h_w = match problem.pressure_solve(s_o) {
            Ok(h) => h.h_w.values,
            Err(SolverError::SingularSystem) => vec![0.0; grid.n_cells()],
            Err(e) => return Err(e),
        };
        Ok(SolverState::new(u, h_w, 0.0))
    }

    pub fn s_o(&self, problem: &Problem) -> Vec<f64> {
        (0..self.u.len())
            .map(|k| problem.grid.rock(&problem.rocks, k).pi_inverse(self.u[k]))
            .collect()
    }

    pub fn saturations(&self, problem: &Problem) -> SaturationState {
        SaturationState::from_oil(self.s_o(problem))
    }

    /// `h_o = h_w + u - (rho_o - rho_w) g z` and `h_w`.
    pub fn pressures(&self, problem: &Problem) -> HydrostaticPressures {
        let b = problem.fluids.buoyancy();
        let h_o = (0..self.u.len())
            .map(|k| self.h_w[k] + self.u[k] - b * problem.grid.depth[k])
            .collect();
        HydrostaticPressures::new(h_o, self.h_w.values.clone())
    }
}

impl Problem {
    pub fn new(grid: Grid, rocks: Vec<RockType>, fluids: Fluids) -> Self {
        let trans = grid.transmissibilities(&rocks);
        Problem { grid, rocks, fluids, trans, threads: 1 }
    }

    /// Worker threads for cell-local evaluation. Results do not depend on it.
    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        self
    }

    pub fn transmissibility(&self, face: usize) -> f64 {
        self.trans[face]
    }

    pub fn n_cells(&self) -> usize {
        self.grid.n_cells()
    }

    pub fn pore_volume(&self, k: usize) -> f64 {
        self.grid.pore_volume(&self.rocks, k)
    }

    pub fn energy(&self, sat: &SaturationState) -> f64 {
        energy::global_energy(sat, &self.grid, &self.rocks, &self.fluids)
    }

    fn cell_values(&self, k: usize, u: f64, h_w: f64) -> [f64; 8] {
        let rock = self.grid.rock(&self.rocks, k);
        let s = rock.pi_inverse(u);
        let dsdu = rock.pi_inverse_derivative(u);
        [
            s,
            rock.mobility(s, PhaseId::Oil),
            rock.mobility(1.0 - s, PhaseId::Water),
            rock.mobility_derivative(s, PhaseId::Oil) * dsdu,
            -rock.mobility_derivative(1.0 - s, PhaseId::Water) * dsdu,
            h_w + u - self.fluids.buoyancy() * self.grid.depth[k],
            h_w,
            rock.pi_inverse_slope(u),
        ]
    }

    fn cache(&self, u: &[f64], h_w: &[f64]) -> CellCache {
        let n = self.n_cells();
        let mut vals = vec![[0.0; 8]; n];
        if self.threads > 1 && n >= PARALLEL_MIN_CELLS {
            let chunk = n.div_ceil(self.threads);
            std::thread::scope(|scope| {
                for (i, part) in vals.chunks_mut(chunk).enumerate() {
                    scope.spawn(move || {
                        for (j, v) in part.iter_mut().enumerate() {
                            let k = i * chunk + j;
                            *v = self.cell_values(k, u[k], h_w[k]);
                        }
                    });
                }
            });
        } else {
            for (k, v) in vals.iter_mut().enumerate() {
                *v = self.cell_values(k, u[k], h_w[k]);
            }
        }
        let col = |i: usize| vals.iter().map(|v| v[i]).collect::<Vec<f64>>();
        CellCache {
            s: col(0),
            eta: [col(1), col(2)],
            deta: [col(3), col(4)],
            pot: [col(5), col(6)],
            slope: col(7),
        }
    }

    /// Upwinded two-point flux of one phase across `face`, m³/s, positive
    /// from `cells.0` to `cells.1`. Returns the flux and the upwind cell.
    fn flux_from_cache(&self, c: &CellCache, face: usize, phase: usize) -> (f64, usize) {
        let (k, l) = self.grid.faces[face].cells;
        let dpot = c.pot[phase][k] - c.pot[phase][l];
        let up = if dpot >= 0.0 { k } else { l };
        let eta = c.eta[phase][up];
        if eta == 0.0 {
            return (0.0, up);
        }
        (self.trans[face] * eta * dpot, up)
    }

    pub fn phase_face_flux(&self, state: &SolverState, face: usize, phase: PhaseId) -> f64 {
        let c = self.cache(&state.u.values, &state.h_w.values);
        self.flux_from_cache(&c, face, idx(phase)).0
    }

    /// All face fluxes of a state with the upwind cells used.
    pub fn fluxes(&self, state: &SolverState) -> (FaceFluxField, FaceUpwind) {
        let c = self.cache(&state.u.values, &state.h_w.values);
        self.fluxes_from_cache(&c)
    }

    fn fluxes_from_cache(&self, c: &CellCache) -> (FaceFluxField, FaceUpwind) {
        let nf = self.grid.n_faces();
        let mut flux = FaceFluxField::zeros(nf);
        let mut up = FaceUpwind { oil: vec![0; nf], water: vec![0; nf] };
        for f in 0..nf {
            let (q, k) = self.flux_from_cache(c, f, 0);
            flux.oil[f] = q;
            up.oil[f] = k;
            let (q, k) = self.flux_from_cache(c, f, 1);
            flux.water[f] = q;
            up.water[f] = k;
        }
        (flux, up)
    }

    /// Backward-Euler residual, two entries per cell: `[oil_K, total_K]`.
    pub fn step_residual(&self, new: &SolverState, old: &SolverState, tau: f64) -> Vec<f64> {
        let s_old = old.s_o(self);
        let c = self.cache(&new.u.values, &new.h_w.values);
        self.assemble(&c, &s_old, tau, None)
    }

    /// Residual and optionally the analytic Jacobian (unknowns `[u_K, h_w_K]`).
    fn assemble(&self, c: &CellCache, s_old: &[f64], tau: f64, mut jac: Option<&mut TripletMatrix>) -> Vec<f64> {
        let n = self.n_cells();
        let mut r = vec![0.0; 2 * n];
        for k in 0..n {
            let pv = self.pore_volume(k);
            r[2 * k] = pv * (c.s[k] - s_old[k]) / tau;
            if let Some(j) = jac.as_deref_mut() {
                j.add(2 * k, 2 * k, pv / tau * (c.slope[k] + JACOBIAN_EPS));
            }
        }
        for (f, face) in self.grid.faces.iter().enumerate() {
            let (k, l) = face.cells;
            let t = self.trans[f];
            for phase in 0..2 {
                let (q, up) = self.flux_from_cache(c, f, phase);
                r[2 * k] += if phase == 0 { q } else { 0.0 };
                r[2 * l] -= if phase == 0 { q } else { 0.0 };
                r[2 * k + 1] += q;
                r[2 * l + 1] -= q;
                let Some(j) = jac.as_deref_mut() else { continue };
                let eta = c.eta[phase][up];
                let dpot = c.pot[phase][k] - c.pot[phase][l];
                let up_term = t * c.deta[phase][up] * dpot;
                // potentials: pot_o = h_w + u - b z, pot_w = h_w
                let mut dq_du = [0.0; 2];
                if phase == 0 {
                    dq_du = [t * eta, -t * eta];
                }
                if up == k {
                    dq_du[0] += up_term;
                } else {
                    dq_du[1] += up_term;
                }
                let dq_dh = [t * eta, -t * eta];
                let rows: &[usize] = if phase == 0 { &[2 * k, 2 * k + 1] } else { &[2 * k + 1] };
                for &row in rows {
                    j.add(row, 2 * k, dq_du[0]);
                    j.add(row, 2 * l, dq_du[1]);
                    j.add(row, 2 * k + 1, dq_dh[0]);
                    j.add(row, 2 * l + 1, dq_dh[1]);
                    let row_l = row - 2 * k + 2 * l;
                    j.add(row_l, 2 * k, -dq_du[0]);
                    j.add(row_l, 2 * l, -dq_du[1]);
                    j.add(row_l, 2 * k + 1, -dq_dh[0]);
                    j.add(row_l, 2 * l + 1, -dq_dh[1]);
                }
            }
        }
        r
    }

    /// Conductance scale used to size the pressure-row regularization.
    fn conductance_scale(&self) -> f64 {
        let n = self.grid.n_faces().max(1);
        let t: f64 = self.trans.iter().sum::<f64>() / n as f64;
        let m = self
            .rocks
            .iter()
            .map(|r| r.mobility.oil_scale.max(r.mobility.water_scale))
            .fold(0.0, f64::max);
        (t * m).max(f64::MIN_POSITIVE)
    }

    /// Residual measured in saturation units: `max |R_K| tau / (phi_K V_K)`.
    fn scaled_norms(&self, r: &[f64], tau: f64) -> (f64, f64) {
        let mut inf = 0.0f64;
        let mut two = 0.0;
        for k in 0..self.n_cells() {
            let w = tau / self.pore_volume(k);
            for v in [r[2 * k] * w, r[2 * k + 1] * w] {
                inf = inf.max(v.abs());
                two += v * v;
            }
        }
        (inf, two.sqrt())
    }

    /// One backward-Euler step of size `tau` from `old`.
    pub fn newton_solve(
        &self,
        old: &SolverState,
        tau: f64,
        controls: &StepControls,
    ) -> Result<(SolverState, StepReport), SolverError> {
        assert!(tau > 0.0, "tau must be positive");
        let n = self.n_cells();
        let s_old = old.s_o(self);
        let mut u = old.u.values.clone();
        let mut h = old.h_w.values.clone();
        let mut c = self.cache(&u, &h);
        let r = self.assemble(&c, &s_old, tau, None);
        let (mut norm, mut merit) = self.scaled_norms(&r, tau);
        let reg = PRESSURE_REG * self.conductance_scale();
        let mut iters = 0;

        let direction = |c: &CellCache| -> Result<Vec<f64>, SolverError> {
            let mut jac = TripletMatrix::new(2 * n);
            let r = self.assemble(c, &s_old, tau, Some(&mut jac));
            for k in 1..n {
                jac.add(2 * k + 1, 2 * k + 1, reg);
            }
            // gauge: pin h_w of cell 0 by replacing its total-flux row
            let mut rhs: Vec<f64> = r.iter().map(|v| -v).collect();
            rhs[1] = 0.0;
            Ok(jac.with_row_replaced(1, 1).solve(&rhs)?)
        };
        let shifted = |u: &[f64], h: &[f64], delta: &[f64], alpha: f64| -> (Vec<f64>, Vec<f64>) {
            (
                (0..n).map(|k| u[k] + alpha * delta[2 * k]).collect(),
                (0..n).map(|k| h[k] + alpha * delta[2 * k + 1]).collect(),
            )
        };

        while norm > controls.newton_tol {
            if iters == controls.newton_max_iter {
                return Err(SolverError::NoConvergence { iterations: iters, residual: norm });
            }
            iters += 1;
            let delta = direction(&c)?;
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..=controls.max_line_search {
                let (u_try, h_try) = shifted(&u, &h, &delta, alpha);
                let c_try = self.cache(&u_try, &h_try);
                let r_try = self.assemble(&c_try, &s_old, tau, None);
                let (inf_try, merit_try) = self.scaled_norms(&r_try, tau);
                if merit_try <= (1.0 - 1e-4 * alpha) * merit || inf_try <= controls.newton_tol {
                    u = u_try;
                    h = h_try;
                    c = c_try;
                    norm = inf_try;
                    merit = merit_try;
                    accepted = true;
                    break;
                }
                alpha *= controls.line_search_shrink;
            }
            if !accepted {
                return Err(SolverError::NoConvergence { iterations: iters, residual: norm });
            }
        }

        // polishing step
        if iters > 0 && norm > POLISH_FACTOR * controls.newton_tol {
            if let Ok(delta) = direction(&c) {
                let (u_try, h_try) = shifted(&u, &h, &delta, 1.0);
                let c_try = self.cache(&u_try, &h_try);
                let (inf_try, _) = self.scaled_norms(&self.assemble(&c_try, &s_old, tau, None), tau);
                if inf_try < norm {
                    u = u_try;
                    h = h_try;
                    c = c_try;
                    norm = inf_try;
                }
            }
        }

        let new = SolverState::new(u, h, old.time + tau);
        let sat_old = SaturationState::from_oil(s_old);
        let sat_new = SaturationState::from_oil(c.s.clone());
        let (flux, upwind) = self.fluxes_from_cache(&c);
        let sdot_o: Vec<f64> = (0..n).map(|k| (sat_new.s_o[k] - sat_old.s_o[k]) / tau).collect();
        let sdot_w: Vec<f64> = sdot_o.iter().map(|v| -v).collect();
        let rates = energy::decay_rate_report(
            &sat_new,
            &flux,
            &upwind,
            &new.pressures(self),
            (&CellField::new(Quantity::Rate, sdot_o), &CellField::new(Quantity::Rate, sdot_w)),
            &self.grid,
            &self.rocks,
        );
        let report = StepReport {
            time: new.time,
            accepted_tau: tau,
            newton_iters: iters,
            residual_norm: norm,
            energy_before: self.energy(&sat_old),
            energy_after: self.energy(&sat_new),
            dissipation: -0.5 * rates.minus_two_d,
            de_dt_chain: rates.de_dt_chain,
            energy_flag: false,
        };
        Ok((new, report))
    }

    /// Minimal-norm subgradient selection for fixed saturations.
    ///
    /// Capillary potentials are fixed by the graph (endpoint limits on the
    /// vertical branches); `h_w` minimizes the upwinded Dirichlet energy
    /// `1/2 sum_faces sum_phases T eta_up dpot^2`, whose stationarity is the
    /// divergence-free total flux. One gauge is pinned per connected
    /// conducting component.
    pub fn pressure_solve(&self, s_o: &[f64]) -> Result<HydrostaticPressures, SolverError> {
        let n = self.n_cells();
        let grid = &self.grid;
        let u = (0..n)
            .map(|k| grid.rock(&self.rocks, k).graph_selection(s_o[k]))
            .collect::<Result<Vec<_>, _>>()?;
        let eta: [Vec<f64>; 2] = [
            (0..n).map(|k| grid.rock(&self.rocks, k).mobility(s_o[k], PhaseId::Oil)).collect(),
            (0..n).map(|k| grid.rock(&self.rocks, k).mobility(1.0 - s_o[k], PhaseId::Water)).collect(),
        ];
        let conducting = |f: usize| {
            let (k, l) = grid.faces[f].cells;
            self.trans[f] > 0.0 && (eta[0][k].max(eta[0][l]) > 0.0 || eta[1][k].max(eta[1][l]) > 0.0)
        };
        if n > 1 && !(0..grid.n_faces()).any(conducting) {
            return Err(SolverError::SingularSystem);
        }
        let roots = component_roots(n, grid.faces.iter().enumerate().filter(|(f, _)| conducting(*f)).map(|(_, f)| f.cells));

        let b = self.fluids.buoyancy();
        let offset: Vec<f64> = (0..n).map(|k| u[k] - b * grid.depth[k]).collect();
        let mut h = vec![0.0; n];
        let reg = PRESSURE_REG * self.conductance_scale();

        let eval = |h: &[f64], jac: Option<&mut TripletMatrix>| -> (f64, Vec<f64>) {
            let mut w = 0.0;
            let mut grad = vec![0.0; n];
            let mut jac = jac;
            for (f, face) in grid.faces.iter().enumerate() {
                let (k, l) = face.cells;
                for (phase, eta) in eta.iter().enumerate() {
                    let off = if phase == 0 { (offset[k], offset[l]) } else { (0.0, 0.0) };
                    let dpot = (h[k] + off.0) - (h[l] + off.1);
                    let up = if dpot >= 0.0 { k } else { l };
                    let c = self.trans[f] * eta[up];
                    w += 0.5 * c * dpot * dpot;
                    grad[k] += c * dpot;
                    grad[l] -= c * dpot;
                    if let Some(j) = jac.as_deref_mut() {
                        j.add(k, k, c);
                        j.add(k, l, -c);
                        j.add(l, k, -c);
                        j.add(l, l, c);
                    }
                }
            }
            (w, grad)
        };

        let (mut w, _) = eval(&h, None);
        for _ in 0..100 {
            let mut jac = TripletMatrix::new(n);
            let (_, grad) = eval(&h, Some(&mut jac));
            for k in 0..n {
                jac.add(k, k, reg);
            }
            let mut rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
            let mut jac = jac;
            for &root in &roots {
                rhs[root] = 0.0;
                jac = jac.with_row_replaced(root, root);
            }
            let delta = jac.solve(&rhs)?;
            let slope: f64 = grad.iter().zip(&delta).map(|(g, d)| g * d).sum();
            let mut alpha = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let h_try: Vec<f64> = h.iter().zip(&delta).map(|(h, d)| h + alpha * d).collect();
                let (w_try, _) = eval(&h_try, None);
                if w_try <= w + 1e-4 * alpha * slope {
                    moved = w_try < w || h_try != h;
                    h = h_try;
                    w = w_try;
                    break;
                }
                alpha *= 0.5;
            }
            let scale = h.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let step = delta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !moved || alpha * step <= 1e-13 * scale {
                break;
            }
        }
        let h_o = (0..n).map(|k| h[k] + offset[k]).collect();
        Ok(HydrostaticPressures::new(h_o, h))
    }
}

/// Lowest cell index of each connected component.
fn component_roots(n: usize, edges: impl Iterator<Item = (usize, usize)>) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent[hi] = lo;
        }
    }
    (0..n).filter(|&k| find(&mut parent, k) == k).collect()
}

/// Accepted steps of a run, after the initial state.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub initial: SolverState,
    pub steps: Vec<(SolverState, StepReport)>,
}

impl Trajectory {
    pub fn last_state(&self) -> &SolverState {
        self.steps.last().map(|(s, _)| s).unwrap_or(&self.initial)
    }
}

/// Adaptive time stepper around [`Problem::newton_solve`].
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    pub problem: &'a Problem,
    pub controls: StepControls,
    pub state: SolverState,
    pub tau: f64,
    energy_ref: f64,
}

impl<'a> Simulator<'a> {
    pub fn new(problem: &'a Problem, controls: StepControls, state: SolverState) -> Self {
        let e0 = problem.energy(&state.saturations(problem));
        Simulator { problem, tau: controls.tau_init, controls, state, energy_ref: e0 }
    }

    /// Energy tolerance for the monotonicity audit, J.
    pub fn energy_tolerance(&self) -> f64 {
        1e-9 * self.energy_ref.abs().max(1.0)
    }

    /// Takes one accepted step of at most `max_tau`, halving on failure.
    pub fn step_limited(&mut self, max_tau: f64) -> Result<StepReport, SolverError> {
        let tau_min = self.controls.tau_min();
        let mut tau = self.tau;
        loop {
            let trial = tau.min(max_tau);
            match self.problem.newton_solve(&self.state, trial, &self.controls) {
                Ok((next, mut report)) => {
                    report.energy_flag = report.energy_after > report.energy_before + self.energy_tolerance();
                    self.state = next;
                    if trial == tau {
                        self.tau = (tau * self.controls.growth_factor).min(self.controls.tau_max);
                    } else {
                        self.tau = tau;
                    }
                    return Ok(report);
                }
                Err(SolverError::NoConvergence { .. }) | Err(SolverError::Linear(_)) => {
                    if trial <= tau_min {
                        return Err(SolverError::StepFloorReached { time: self.state.time, tau: trial });
                    }
                    tau = (trial * 0.5).max(tau_min);
                }
                Err(e) => return Err(e),
            }
        }
    }

    pub fn step(&mut self) -> Result<StepReport, SolverError> {
        self.step_limited(f64::INFINITY)
    }

    /// Steps until `t_end`, calling `hook` after every accepted step.
    pub fn advance(
        &mut self,
        t_end: f64,
        hook: &mut dyn FnMut(&SolverState, &StepReport),
    ) -> Result<Trajectory, SolverError> {
        let mut traj = Trajectory { initial: self.state.clone(), steps: Vec::new() };
        let eps = 1e-12 * t_end.abs().max(1.0);
        while t_end - self.state.time > eps {
            let report = self.step_limited(t_end - self.state.time)?;
            hook(&self.state, &report);
            traj.steps.push((self.state.clone(), report));
        }
        Ok(traj)
    }
}

/// Convenience wrapper: adaptive run of `state` to `t_end`.
pub fn advance(
    problem: &Problem,
    state: SolverState,
    t_end: f64,
    controls: &StepControls,
    hook: &mut dyn FnMut(&SolverState, &StepReport),
) -> Result<Trajectory, SolverError> {
    Simulator::new(problem, *controls, state).advance(t_end, hook)
}
