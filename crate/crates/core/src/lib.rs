//! Finite-volume simulation of incompressible immiscible two-phase flow in
//! heterogeneous porous media, built on its gradient-flow structure: a
//! singular energy with multivalued capillary graphs, a quadratic
//! dissipation, and implicit steps whose optimality conditions are the
//! Darcy-Muskat and capillary pressure laws.

pub mod cli;
pub mod diagnostics;
pub mod energy;
pub mod linalg;
pub mod mesh;
pub mod output;
pub mod petrophysics;
pub mod scenario;
pub mod solver;

pub use energy::{FaceUpwind, HydrostaticPressures, SaturationState};
pub use mesh::{CellField, FaceFluxField, Grid, GridSpec, Orientation};
pub use petrophysics::{CapillaryCurve, Fluids, MobilityLaw, PhaseId, RockType};
pub use solver::{Problem, Simulator, SolverError, SolverState, StepControls, StepReport, Trajectory};
