//! Finite-element solver for planar strain-gradient crystal plasticity with
//! a dissipative grain-boundary model.
//!
//! The crate is organized bottom-up:
//!
//! * [`kinematics`]: slip-system geometry and plane-strain elasticity,
//! * [`bulk`]: the single-crystal constitutive update (proposed model plus
//!   Gurtin-type energetic and dissipative baselines),
//! * [`gb`]: the grain-boundary constitutive update,
//! * [`fem`]: mixed Q8 / interface elements, assembly and constraints,
//! * [`solver`]: Newton iteration, adaptive time marching, sparse solve,
//! * [`cases`]: the benchmark problems (shear layer, bicrystal shear,
//!   bicrystal tension) and their postprocessing,
//! * [`config`] and [`output`]: run configuration and CSV/manifest output.
//!
//! Units are MPa, mm and seconds throughout. Angles are radians everywhere
//! except the config files, which take degrees.

pub mod bulk;
pub mod cases;
pub mod config;
pub mod fem;
pub mod gb;
pub mod kinematics;
pub mod output;
pub mod solver;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A material or geometric parameter is out of its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// The mesh is malformed (bad connectivity, non-positive Jacobian, ...).
    #[error("mesh error: {0}")]
    Mesh(String),
    /// The run configuration could not be parsed or is inconsistent.
    #[error("config error: {0}")]
    Config(String),
    /// Newton or the linear solver failed beyond recovery.
    #[error("solver failure: {0}")]
    Solver(String),
    /// An internal consistency check tripped (e.g. negative dissipation).
    #[error("nonphysical state: {0}")]
    Nonphysical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
