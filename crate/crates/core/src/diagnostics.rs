//! Oracles and audits for the gradient-flow structure: conservation, energy
//! decay, the `dE/dt = -2 D` identity and gravity-capillary equilibria.

use thiserror::Error;

use crate::energy::{SaturationState, PORE_SATURATION_TOL};
use crate::mesh::Grid;
use crate::petrophysics::RockType;
use crate::solver::{Problem, Simulator, SolverError, SolverState, StepReport, Trajectory};

/// Relative phase-volume drift tolerated by the audit.
pub const MASS_DRIFT_TOL: f64 = 1e-10;
/// Energy increase tolerated per step, relative to `max(1, |E0|)`.
pub const ENERGY_INCREASE_TOL: f64 = 1e-9;
/// Distance from the residual saturations kept by the identity study.
pub const MOBILE_BAND: f64 = 0.05;
/// Relative energy change per step below which a run counts as stagnant.
pub const STAGNATION_TOL: f64 = 1e-13;
/// Consecutive stagnant steps that define a steady state.
pub const STAGNATION_STEPS: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error("oil volume {m_o} is outside the achievable range [{lo}, {hi}]")]
    Unachievable { m_o: f64, lo: f64, hi: f64 },
    #[error("brute-force minimizer supports at most 6 cells, got {0}")]
    TooManyCells(usize),
    #[error("level {level}, step {step}: cell {cell} left the mobile band (s_o = {s_o})")]
    RegimeViolation { level: usize, step: usize, cell: usize, s_o: f64 },
    #[error("no steady state within {0} steps")]
    NotSteady(usize),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Phase volumes `sum_K phi_K V_K s_alpha,K`, m³.
pub fn mass_totals(state: &SaturationState, grid: &Grid, rocks: &[RockType]) -> (f64, f64) {
    let mut m = (0.0, 0.0);
    for k in 0..grid.n_cells() {
        let pv = grid.pore_volume(rocks, k);
        m.0 += pv * state.s_o[k];
        m.1 += pv * state.s_w[k];
    }
    m
}

/// Vertical column (or any grid) with a prescribed oil volume.
#[derive(Debug, Clone)]
pub struct ColumnSpec {
    pub problem: Problem,
    pub m_o: f64,
    pub m_w: f64,
}

impl ColumnSpec {
    /// Column with `m_w` the complement of `m_o` in the pore volume.
    pub fn new(problem: Problem, m_o: f64) -> Self {
        let pv: f64 = (0..problem.n_cells()).map(|k| problem.pore_volume(k)).sum();
        ColumnSpec { problem, m_o, m_w: pv - m_o }
    }

    /// Achievable oil volume range.
    pub fn bounds(&self) -> (f64, f64) {
        let p = &self.problem;
        (0..p.n_cells()).fold((0.0, 0.0), |(lo, hi), k| {
            let pv = p.pore_volume(k);
            let r = p.grid.rock(&p.rocks, k);
            (lo + pv * r.s_o_min(), hi + pv * r.s_o_max())
        })
    }

    fn check(&self) -> Result<(), DiagnosticsError> {
        let (lo, hi) = self.bounds();
        let slack = 1e-12 * hi.abs().max(1e-300);
        if self.m_o < lo - slack || self.m_o > hi + slack {
            return Err(DiagnosticsError::Unachievable { m_o: self.m_o, lo, hi });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumProfile {
    /// Constant oil-water hydrostatic pressure difference `h_o - h_w`, Pa.
    pub c: f64,
    pub s_o: Vec<f64>,
}

fn profile_at(problem: &Problem, c: f64) -> Vec<f64> {
    let b = problem.fluids.buoyancy();
    (0..problem.n_cells())
        .map(|k| problem.grid.rock(&problem.rocks, k).pi_inverse(c + b * problem.grid.depth[k]))
        .collect()
}

fn oil_volume(problem: &Problem, s: &[f64]) -> f64 {
    s.iter().enumerate().map(|(k, s)| problem.pore_volume(k) * s).sum()
}

/// Hydrostatic equilibrium `s_o = pi^{-1}(C + (rho_o - rho_w) g z)` with `C`
/// found by bisection on the oil volume.
pub fn gravity_equilibrium_oracle(spec: &ColumnSpec) -> Result<EquilibriumProfile, DiagnosticsError> {
    spec.check()?;
    let p = &spec.problem;
    let b = p.fluids.buoyancy();
    let target = spec.m_o;
    let mass = |c: f64| oil_volume(p, &profile_at(p, c)) - target;

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..p.n_cells() {
        let r = p.grid.rock(&p.rocks, k);
        let z = b * p.grid.depth[k];
        lo = lo.min(r.pi_lower_limit() - z);
        let top = r.pi_upper_limit();
        hi = hi.max(if top.is_finite() { top } else { r.pi_lower_limit() } - z);
    }
    let pad = 1.0 + 1e-6 * (hi - lo).abs();
    lo -= pad;
    hi += pad;
    let (mut f_lo, mut f_hi) = (mass(lo), mass(hi));
    let mut width = hi - lo;
    while f_hi < 0.0 {
        // singular upper branches: widen until the bracket holds the target
        width *= 2.0;
        hi = lo + width;
        f_hi = mass(hi);
        if !hi.is_finite() {
            break;
        }
    }
    let tol = 1e-12 * target.abs().max(f64::MIN_POSITIVE);
    let mut best = if f_lo.abs() <= f_hi.abs() { (lo, f_lo) } else { (hi, f_hi) };
    while best.1.abs() > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = mass(mid);
        assert!(f_lo <= f_mid && f_mid <= f_hi, "oil volume must be nondecreasing in C");
        if f_mid < 0.0 {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
        if f_mid.abs() < best.1.abs() {
            best = (mid, f_mid);
        }
    }
    Ok(EquilibriumProfile { c: best.0, s_o: profile_at(p, best.0) })
}

/// Energy increment of cell `k` when its saturation moves by `d`, J,
/// evaluated without cancellation against the total energy.
fn cell_energy_increment(problem: &Problem, k: usize, s: f64, d: f64) -> f64 {
    let rock = problem.grid.rock(&problem.rocks, k);
    let pi = rock.pi_primitive_increment(s, d).unwrap_or(f64::INFINITY);
    problem.pore_volume(k) * (pi - problem.fluids.buoyancy() * problem.grid.depth[k] * d)
}

/// Minimizes the global energy over saturations with the prescribed oil
/// volume, for grids of at most six cells.
///
/// Projected gradient descent with diminishing steps, then a pairwise
/// mass-exchange polish with shrinking exchange volume. Exchanges are
/// accepted on a strictly negative energy increment computed cell-locally.
pub fn brute_force_minimizer(spec: &ColumnSpec) -> Result<SaturationState, DiagnosticsError> {
    spec.check()?;
    let p = &spec.problem;
    let n = p.n_cells();
    if n > 6 {
        return Err(DiagnosticsError::TooManyCells(n));
    }
    let pv: Vec<f64> = (0..n).map(|k| p.pore_volume(k)).collect();
    let lo: Vec<f64> = (0..n).map(|k| p.grid.rock(&p.rocks, k).s_o_min()).collect();
    let hi: Vec<f64> = (0..n).map(|k| p.grid.rock(&p.rocks, k).s_o_max()).collect();
    let (m_lo, m_hi) = spec.bounds();
    let theta = if m_hi > m_lo { ((spec.m_o - m_lo) / (m_hi - m_lo)).clamp(0.0, 1.0) } else { 0.0 };
    let mut s: Vec<f64> = (0..n).map(|k| lo[k] + theta * (hi[k] - lo[k])).collect();

    // projected gradient on cell volumes x_k = pv_k s_k
    let b = p.fluids.buoyancy();
    let chem = |k: usize, s: f64| {
        let r = p.grid.rock(&p.rocks, k);
        let pi = if s <= r.s_o_min() {
            r.pi_lower_limit()
        } else if s >= r.s_o_max() {
            r.pi_upper_limit()
        } else {
            r.pi_eval(s).unwrap_or(0.0)
        };
        pi - b * p.grid.depth[k]
    };
    let scale = (0..n).map(|k| chem(k, 0.5 * (lo[k] + hi[k])).abs()).fold(1.0, f64::max);
    let step0 = 0.05 * (0..n).map(|k| pv[k] * (hi[k] - lo[k])).fold(f64::INFINITY, f64::min) / scale;
    for it in 0..500 {
        let alpha = step0 / ((it + 1) as f64).sqrt();
        let y: Vec<f64> = (0..n)
            .map(|k| {
                let g = chem(k, s[k]);
                pv[k] * s[k] - alpha * if g.is_finite() { g } else { scale }
            })
            .collect();
        s = project_volumes(&y, &pv, &lo, &hi, spec.m_o);
    }

    // pairwise exchange polish
    let mut delta = 0.1 * (0..n).map(|k| pv[k] * (hi[k] - lo[k])).fold(f64::INFINITY, f64::min);
    let floor = 1e-14 * pv.iter().cloned().fold(f64::INFINITY, f64::min);
    while delta > floor {
        loop {
            let mut improved = false;
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let room = (pv[i] * (s[i] - lo[i])).min(pv[j] * (hi[j] - s[j]));
                    let vol = delta.min(room);
                    if vol <= 0.0 {
                        continue;
                    }
                    let di = if vol == pv[i] * (s[i] - lo[i]) { lo[i] - s[i] } else { -vol / pv[i] };
                    let dj = if vol == pv[j] * (hi[j] - s[j]) { hi[j] - s[j] } else { vol / pv[j] };
                    let de = cell_energy_increment(p, i, s[i], di) + cell_energy_increment(p, j, s[j], dj);
                    if de < 0.0 {
                        s[i] = if di == lo[i] - s[i] { lo[i] } else { s[i] + di };
                        s[j] = if dj == hi[j] - s[j] { hi[j] } else { s[j] + dj };
                        improved = true;
                    }
                }
            }
            if !improved {
                break;
            }
        }
        delta *= 0.5;
    }
    Ok(SaturationState::from_oil(s))
}

/// Euclidean projection (in volume units) onto the box intersected with the
/// volume constraint, returned as saturations.
fn project_volumes(y: &[f64], pv: &[f64], lo: &[f64], hi: &[f64], m: f64) -> Vec<f64> {
    let at = |lambda: f64| -> Vec<f64> {
        (0..y.len()).map(|k| ((y[k] - lambda) / pv[k]).clamp(lo[k], hi[k])).collect()
    };
    let total = |s: &[f64]| s.iter().zip(pv).map(|(s, v)| s * v).sum::<f64>();
    let spread = y.iter().map(|v| v.abs()).fold(0.0, f64::max) + pv.iter().sum::<f64>();
    let (mut a, mut b) = (-spread - 1.0, spread + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if total(&at(mid)) > m {
            a = mid;
        } else {
            b = mid;
        }
    }
    at(0.5 * (a + b))
}

/// One refinement level of the dissipation identity study.
#[derive(Debug, Clone)]
pub struct IdentityLevel {
    pub problem: Problem,
    pub initial: SolverState,
    pub tau: f64,
    /// Characteristic cell size, m.
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityRow {
    pub tau: f64,
    pub h: f64,
    pub steps: usize,
    /// Median over steps of `|dE/tau + 2D| / max(2D, floor)`.
    pub median_mismatch: f64,
}

/// Absolute floor on `2D` in the mismatch statistic, W.
pub const IDENTITY_FLOOR: f64 = 1e-300;

/// Runs each level with fixed steps to `t_end` and reports the per-step
/// mismatch between the energy decay and twice the dissipation.
pub fn dissipation_identity_study(levels: &[IdentityLevel], t_end: f64) -> Result<Vec<IdentityRow>, DiagnosticsError> {
    let mut rows = Vec::with_capacity(levels.len());
    for (li, level) in levels.iter().enumerate() {
        let p = &level.problem;
        let check_band = |state: &SolverState, step: usize| -> Result<(), DiagnosticsError> {
            for (k, &s) in state.s_o(p).iter().enumerate() {
                let r = p.grid.rock(&p.rocks, k);
                if s < r.s_o_min() + MOBILE_BAND || s > r.s_o_max() - MOBILE_BAND {
                    return Err(DiagnosticsError::RegimeViolation { level: li, step, cell: k, s_o: s });
                }
            }
            Ok(())
        };
        check_band(&level.initial, 0)?;
        let controls = crate::solver::StepControls::fixed(level.tau);
        let mut sim = Simulator::new(p, controls, level.initial.clone());
        let mut mismatches = Vec::new();
        let n_steps = (t_end / level.tau).round() as usize;
        for step in 1..=n_steps {
            let r = sim.step()?;
            check_band(&sim.state, step)?;
            mismatches.push(identity_mismatch(&r));
        }
        rows.push(IdentityRow { tau: level.tau, h: level.h, steps: n_steps, median_mismatch: median(&mut mismatches) });
    }
    Ok(rows)
}

/// `|(E_after - E_before)/tau + 2D| / max(2D, floor)` for one step.
pub fn identity_mismatch(r: &StepReport) -> f64 {
    let de = (r.energy_after - r.energy_before) / r.accepted_tau;
    (de + 2.0 * r.dissipation).abs() / (2.0 * r.dissipation).max(IDENTITY_FLOOR)
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditRecord {
    pub step: usize,
    pub t: f64,
    pub tau: f64,
    pub energy: f64,
    pub dissipation: f64,
    pub de_dt_chain: f64,
    pub m_o: f64,
    pub m_w: f64,
    pub min_s_o: f64,
    pub max_s_o: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    MassDriftOil,
    MassDriftWater,
    EnergyIncrease,
    Bounds,
    PoreSaturation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub step: usize,
    pub kind: ViolationKind,
    pub magnitude: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    /// Record 0 is the initial state.
    pub records: Vec<AuditRecord>,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks conservation, energy monotonicity, bounds and pore saturation on
/// every state of a trajectory (step 0 is the initial state).
pub fn audit_trajectory(problem: &Problem, traj: &Trajectory) -> AuditReport {
    let mut report = AuditReport::default();
    let grid = &problem.grid;
    let rocks = &problem.rocks;
    let sat0 = traj.initial.saturations(problem);
    let (m_o0, m_w0) = mass_totals(&sat0, grid, rocks);
    let e0 = problem.energy(&sat0);
    let e_tol = ENERGY_INCREASE_TOL * e0.abs().max(1.0);
    let pv_total: f64 = (0..grid.n_cells()).map(|k| problem.pore_volume(k)).sum();
    let rel = |m: f64, m0: f64| (m - m0).abs() / m0.abs().max(1e-12 * pv_total);

    let mut prev_e = e0;
    let states = std::iter::once((&traj.initial, None)).chain(traj.steps.iter().map(|(s, r)| (s, Some(r))));
    for (step, (state, rep)) in states.enumerate() {
        let sat = state.saturations(problem);
        let (m_o, m_w) = mass_totals(&sat, grid, rocks);
        let e = problem.energy(&sat);
        let min_s = sat.s_o.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_s = sat.s_o.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        report.records.push(AuditRecord {
            step,
            t: state.time,
            tau: rep.map_or(0.0, |r| r.accepted_tau),
            energy: e,
            dissipation: rep.map_or(0.0, |r| r.dissipation),
            de_dt_chain: rep.map_or(0.0, |r| r.de_dt_chain),
            m_o,
            m_w,
            min_s_o: min_s,
            max_s_o: max_s,
        });
        let mut flag = |kind, magnitude| report.violations.push(Violation { step, kind, magnitude });
        let d = rel(m_o, m_o0);
        if d > MASS_DRIFT_TOL {
            flag(ViolationKind::MassDriftOil, d);
        }
        let d = rel(m_w, m_w0);
        if d > MASS_DRIFT_TOL {
            flag(ViolationKind::MassDriftWater, d);
        }
        if e > prev_e + e_tol {
            flag(ViolationKind::EnergyIncrease, e - prev_e);
        }
        for k in 0..grid.n_cells() {
            let r = grid.rock(rocks, k);
            let s = sat.s_o[k];
            if !(s >= r.s_o_min() && s <= r.s_o_max()) {
                flag(ViolationKind::Bounds, (s - s.clamp(r.s_o_min(), r.s_o_max())).abs());
            }
            let sum = sat.s_o[k] + sat.s_w[k];
            if (sum - 1.0).abs() > PORE_SATURATION_TOL {
                flag(ViolationKind::PoreSaturation, (sum - 1.0).abs());
            }
        }
        prev_e = e;
    }
    report
}

#[derive(Debug, Clone)]
pub struct SteadyRun {
    pub trajectory: Trajectory,
    pub steady: bool,
}

/// Steps until the energy stagnates (`|dE| < 1e-13 max(1, |E|)` for ten
/// consecutive steps) or `max_steps` is reached.
pub fn relax_to_steady_state(sim: &mut Simulator<'_>, max_steps: usize) -> Result<SteadyRun, SolverError> {
    let mut traj = Trajectory { initial: sim.state.clone(), steps: Vec::new() };
    let mut quiet = 0;
    for _ in 0..max_steps {
        let r = sim.step()?;
        let change = (r.energy_after - r.energy_before).abs();
        if change < STAGNATION_TOL * r.energy_after.abs().max(1.0) {
            quiet += 1;
        } else {
            quiet = 0;
        }
        traj.steps.push((sim.state.clone(), r));
        if quiet >= STAGNATION_STEPS {
            return Ok(SteadyRun { trajectory: traj, steady: true });
        }
    }
    Ok(SteadyRun { trajectory: traj, steady: false })
}
