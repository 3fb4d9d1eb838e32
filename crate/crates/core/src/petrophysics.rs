//! Rock types, capillary pressure graphs and phase mobilities.
//!
//! The capillary pressure `pi(s_o)` is a maximal monotone graph on
//! `[s_o_res, 1 - s_w_res]`: single valued and strictly increasing on the open
//! interval, with vertical extensions at the endpoints. Its resolvent
//! [`RockType::pi_inverse`] is single valued on the whole real line.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Saturation distance accepted by the interior graph membership test.
pub const GRAPH_SATURATION_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum PetroError {
    #[error("saturation {s} is not strictly inside ({lo}, {hi})")]
    OutOfOpenInterval { s: f64, lo: f64, hi: f64 },
    #[error("saturation {s} is outside [{lo}, {hi}]")]
    OutOfBounds { s: f64, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseId {
    Oil,
    Water,
}

impl PhaseId {
    pub const ALL: [PhaseId; 2] = [PhaseId::Oil, PhaseId::Water];
}

/// Densities and gravity. Viscosities are folded into the mobility law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fluids {
    /// kg/m³
    pub rho_o: f64,
    /// kg/m³
    pub rho_w: f64,
    /// m/s²
    #[serde(default = "default_gravity")]
    pub g: f64,
}

fn default_gravity() -> f64 {
    9.81
}

impl Fluids {
    pub fn new(rho_o: f64, rho_w: f64, g: f64) -> Self {
        Fluids { rho_o, rho_w, g }
    }

    /// `(rho_o - rho_w) g`, the buoyancy gradient in Pa/m.
    pub fn buoyancy(&self) -> f64 {
        (self.rho_o - self.rho_w) * self.g
    }

    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.rho_o > 0.0) {
            v.push(format!("rho_o = {} must be > 0", self.rho_o));
        }
        if !(self.rho_w > 0.0) {
            v.push(format!("rho_w = {} must be > 0", self.rho_w));
        }
        if !(self.g >= 0.0) {
            v.push(format!("g = {} must be >= 0", self.g));
        }
        v
    }
}

/// Capillary pressure curve family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CapillaryCurve {
    /// `p_entry + delta_p * S` with `S` the normalized oil saturation.
    Linear { p_entry: f64, delta_p: f64 },
    /// Brooks-Corey type `p_entry * S_we^(-1/lambda_bc)`, singular at the
    /// upper endpoint but integrable for `lambda_bc > 1`.
    PowerLaw { p_entry: f64, lambda_bc: f64 },
}

impl CapillaryCurve {
    pub fn p_entry(&self) -> f64 {
        match *self {
            CapillaryCurve::Linear { p_entry, .. } | CapillaryCurve::PowerLaw { p_entry, .. } => p_entry,
        }
    }
}

/// Power-law mobility `scale * S^exponent`, per phase scale in 1/(Pa·s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilityLaw {
    pub exponent: f64,
    /// Endpoint oil mobility (relative permeability over viscosity).
    pub oil_scale: f64,
    pub water_scale: f64,
}

impl Default for MobilityLaw {
    fn default() -> Self {
        // water 1 mPa·s, oil 2 mPa·s
        MobilityLaw { exponent: 2.0, oil_scale: 500.0, water_scale: 1000.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RockType {
    /// Porosity in (0, 1).
    pub phi: f64,
    /// Isotropic permeability, m².
    pub lam: f64,
    pub s_o_res: f64,
    pub s_w_res: f64,
    pub curve: CapillaryCurve,
    #[serde(default)]
    pub mobility: MobilityLaw,
}

impl RockType {
    pub fn s_o_min(&self) -> f64 {
        self.s_o_res
    }

    pub fn s_o_max(&self) -> f64 {
        1.0 - self.s_w_res
    }

    pub fn s_w_min(&self) -> f64 {
        self.s_w_res
    }

    pub fn s_w_max(&self) -> f64 {
        1.0 - self.s_o_res
    }

    fn span(&self) -> f64 {
        self.s_o_max() - self.s_o_min()
    }

    fn check_closed(&self, s_o: f64) -> Result<(), PetroError> {
        let (lo, hi) = (self.s_o_min(), self.s_o_max());
        if s_o >= lo && s_o <= hi {
            Ok(())
        } else {
            Err(PetroError::OutOfBounds { s: s_o, lo, hi })
        }
    }

    /// Capillary pressure on the open interval.
    pub fn pi_eval(&self, s_o: f64) -> Result<f64, PetroError> {
        let (lo, hi) = (self.s_o_min(), self.s_o_max());
        if !(s_o > lo && s_o < hi) {
            return Err(PetroError::OutOfOpenInterval { s: s_o, lo, hi });
        }
        Ok(match self.curve {
            CapillaryCurve::Linear { p_entry, delta_p } => p_entry + delta_p * (s_o - lo) / self.span(),
            CapillaryCurve::PowerLaw { p_entry, lambda_bc } => {
                let s_we = (hi - s_o) / self.span();
                p_entry * s_we.powf(-1.0 / lambda_bc)
            }
        })
    }

    /// Limit of `pi` at the lower endpoint (top of the lower vertical branch).
    pub fn pi_lower_limit(&self) -> f64 {
        self.curve.p_entry()
    }

    /// Limit of `pi` at the upper endpoint; `+inf` for the power law.
    pub fn pi_upper_limit(&self) -> f64 {
        match self.curve {
            CapillaryCurve::Linear { p_entry, delta_p } => p_entry + delta_p,
            CapillaryCurve::PowerLaw { .. } => f64::INFINITY,
        }
    }

    /// Absolute tolerance for interior equality tests in graph membership.
    pub fn graph_tolerance(&self) -> f64 {
        1e-9 * self.curve.p_entry().abs().max(1.0)
    }

    /// Whether `p` belongs to `pi(s_o)`, interior equality tested at
    /// [`RockType::graph_tolerance`] in pressure or [`GRAPH_SATURATION_TOL`]
    /// in saturation (the latter matters near a singular endpoint).
    pub fn graph_contains(&self, s_o: f64, p: f64) -> Result<bool, PetroError> {
        self.graph_contains_tol(s_o, p, self.graph_tolerance())
    }

    pub fn graph_contains_tol(&self, s_o: f64, p: f64, tol: f64) -> Result<bool, PetroError> {
        self.check_closed(s_o)?;
        if !p.is_finite() {
            return Ok(false);
        }
        if s_o == self.s_o_min() {
            return Ok(p <= self.pi_lower_limit() + tol);
        }
        if s_o == self.s_o_max() {
            // empty at a singular endpoint: every finite p is below +inf
            return Ok(p >= self.pi_upper_limit() - tol);
        }
        let v = self.pi_eval(s_o)?;
        Ok((p - v).abs() <= tol || (self.pi_inverse(p) - s_o).abs() <= GRAPH_SATURATION_TOL)
    }

    /// Resolvent `pi^{-1}`: clamps to the endpoints outside the range.
    pub fn pi_inverse(&self, u: f64) -> f64 {
        let (lo, hi) = (self.s_o_min(), self.s_o_max());
        match self.curve {
            CapillaryCurve::Linear { p_entry, delta_p } => {
                if u <= p_entry {
                    lo
                } else if u >= p_entry + delta_p {
                    hi
                } else {
                    (lo + self.span() * (u - p_entry) / delta_p).clamp(lo, hi)
                }
            }
            CapillaryCurve::PowerLaw { p_entry, lambda_bc } => {
                if u <= p_entry {
                    lo
                } else {
                    let s_we = (u / p_entry).powf(-lambda_bc);
                    (hi - self.span() * s_we).clamp(lo, hi)
                }
            }
        }
    }

    /// Derivative of the resolvent; zero on the clamped branches.
    pub fn pi_inverse_derivative(&self, u: f64) -> f64 {
        match self.curve {
            CapillaryCurve::Linear { p_entry, delta_p } => {
                if u > p_entry && u < p_entry + delta_p {
                    self.span() / delta_p
                } else {
                    0.0
                }
            }
            CapillaryCurve::PowerLaw { p_entry, lambda_bc } => {
                if u > p_entry {
                    self.span() * lambda_bc / p_entry * (u / p_entry).powf(-lambda_bc - 1.0)
                } else {
                    0.0
                }
            }
        }
    }

    /// Slope used for Newton linearization: the resolvent derivative, or on a
    /// clamped branch the one-sided derivative at its endpoint.
    pub fn pi_inverse_slope(&self, u: f64) -> f64 {
        match self.curve {
            CapillaryCurve::Linear { delta_p, .. } => self.span() / delta_p,
            CapillaryCurve::PowerLaw { p_entry, .. } => self.pi_inverse_derivative(u.max(p_entry * (1.0 + 1e-15))),
        }
    }

    /// `∫_{s_o_res}^{s_o} pi(a) da` in closed form.
    pub fn pi_primitive(&self, s_o: f64) -> Result<f64, PetroError> {
        self.check_closed(s_o)?;
        let lo = self.s_o_min();
        let span = self.span();
        Ok(match self.curve {
            CapillaryCurve::Linear { p_entry, delta_p } => {
                let d = s_o - lo;
                p_entry * d + delta_p * d * d / (2.0 * span)
            }
            CapillaryCurve::PowerLaw { p_entry, lambda_bc } => {
                // antiderivative in S_we: -p_entry span S^a / a, a = 1 - 1/lambda
                let a = 1.0 - 1.0 / lambda_bc;
                let s_we = (self.s_o_max() - s_o) / span;
                p_entry * span / a * (1.0 - s_we.powf(a))
            }
        })
    }

    /// `Pi(s_o + d) - Pi(s_o)` evaluated without cancellation.
    pub fn pi_primitive_increment(&self, s_o: f64, d: f64) -> Result<f64, PetroError> {
        self.check_closed(s_o)?;
        self.check_closed(s_o + d)?;
        let lo = self.s_o_min();
        let span = self.span();
        Ok(match self.curve {
            CapillaryCurve::Linear { p_entry, delta_p } => {
                d * (p_entry + delta_p * ((s_o - lo) + 0.5 * d) / span)
            }
            CapillaryCurve::PowerLaw { p_entry, lambda_bc } => {
                let a = 1.0 - 1.0 / lambda_bc;
                let s0 = (self.s_o_max() - s_o) / span;
                let ratio = -d / span;
                if s0 == 0.0 || (ratio / s0).abs() > 0.5 {
                    let s1 = (self.s_o_max() - (s_o + d)) / span;
                    return Ok(-p_entry * span / a * (s1.powf(a) - s0.powf(a)));
                }
                // S1^a - S0^a = S0^a * expm1(a ln(1 + ratio / S0))
                let diff = s0.powf(a) * (a * (ratio / s0).ln_1p()).exp_m1();
                -p_entry * span / a * diff
            }
        })
    }

    /// Corey-type phase mobility, zero at and below the residual saturation.
    pub fn mobility(&self, s: f64, phase: PhaseId) -> f64 {
        let (res, max, scale) = match phase {
            PhaseId::Oil => (self.s_o_min(), self.s_o_max(), self.mobility.oil_scale),
            PhaseId::Water => (self.s_w_min(), self.s_w_max(), self.mobility.water_scale),
        };
        let x = (s - res).max(0.0) / (max - res);
        if x == 0.0 {
            0.0
        } else {
            scale * x.powf(self.mobility.exponent)
        }
    }

    /// Derivative of [`RockType::mobility`] with respect to its own phase saturation.
    pub fn mobility_derivative(&self, s: f64, phase: PhaseId) -> f64 {
        let (res, max, scale) = match phase {
            PhaseId::Oil => (self.s_o_min(), self.s_o_max(), self.mobility.oil_scale),
            PhaseId::Water => (self.s_w_min(), self.s_w_max(), self.mobility.water_scale),
        };
        let span = max - res;
        let x = (s - res) / span;
        if x <= 0.0 {
            0.0
        } else {
            scale * self.mobility.exponent * x.powf(self.mobility.exponent - 1.0) / span
        }
    }

    /// A capillary pressure selected from `pi(s_o)`: the graph value inside,
    /// the finite endpoint limit on the vertical branches.
    pub fn graph_selection(&self, s_o: f64) -> Result<f64, PetroError> {
        self.check_closed(s_o)?;
        if s_o == self.s_o_min() {
            Ok(self.pi_lower_limit())
        } else if s_o == self.s_o_max() {
            let p = self.pi_upper_limit();
            if p.is_finite() {
                Ok(p)
            } else {
                Err(PetroError::OutOfOpenInterval { s: s_o, lo: self.s_o_min(), hi: self.s_o_max() })
            }
        } else {
            self.pi_eval(s_o)
        }
    }

    /// Every violated invariant, empty when the rock is valid.
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.phi > 0.0 && self.phi < 1.0) {
            v.push(format!("phi = {} must lie in (0, 1)", self.phi));
        }
        if !(self.lam > 0.0 && self.lam.is_finite()) {
            v.push(format!("lam = {} must be > 0", self.lam));
        }
        if !(self.s_o_res >= 0.0 && self.s_o_res < 1.0) {
            v.push(format!("s_o_res = {} must lie in [0, 1)", self.s_o_res));
        }
        if !(self.s_w_res >= 0.0 && self.s_w_res < 1.0) {
            v.push(format!("s_w_res = {} must lie in [0, 1)", self.s_w_res));
        }
        if !(self.s_o_res + self.s_w_res < 1.0) {
            v.push(format!(
                "residuals-sum: s_o_res + s_w_res = {} must be < 1",
                self.s_o_res + self.s_w_res
            ));
        }
        match self.curve {
            CapillaryCurve::Linear { p_entry, delta_p } => {
                if !p_entry.is_finite() {
                    v.push(format!("curve.p_entry = {p_entry} must be finite"));
                }
                if !(delta_p > 0.0 && delta_p.is_finite()) {
                    v.push(format!("curve.delta_p = {delta_p} must be > 0"));
                }
            }
            CapillaryCurve::PowerLaw { p_entry, lambda_bc } => {
                if !(p_entry > 0.0 && p_entry.is_finite()) {
                    v.push(format!("curve.p_entry = {p_entry} must be > 0"));
                }
                if !(lambda_bc > 1.0 && lambda_bc.is_finite()) {
                    v.push(format!(
                        "curve.lambda_bc = {lambda_bc}: non-integrable capillary singularity (need lambda_bc > 1)"
                    ));
                }
            }
        }
        if !(self.mobility.exponent >= 1.0) {
            v.push(format!("mobility.exponent = {} must be >= 1", self.mobility.exponent));
        }
        if !(self.mobility.oil_scale > 0.0) {
            v.push(format!("mobility.oil_scale = {} must be > 0", self.mobility.oil_scale));
        }
        if !(self.mobility.water_scale > 0.0) {
            v.push(format!("mobility.water_scale = {} must be > 0", self.mobility.water_scale));
        }
        v
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn linear_rock() -> RockType {
        RockType {
            phi: 0.2,
            lam: 1e-12,
            s_o_res: 0.1,
            s_w_res: 0.2,
            curve: CapillaryCurve::Linear { p_entry: 1000.0, delta_p: 5000.0 },
            mobility: MobilityLaw { exponent: 2.0, oil_scale: 1.0, water_scale: 1.0 },
        }
    }

    pub fn power_rock() -> RockType {
        RockType {
            curve: CapillaryCurve::PowerLaw { p_entry: 1000.0, lambda_bc: 2.0 },
            ..linear_rock()
        }
    }
}
