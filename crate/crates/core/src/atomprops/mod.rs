//! Atomic response: Wigner 6j symbols, line tables and dynamic polarizabilities.

mod lines;
mod polarizability;
pub mod wigner;

pub use lines::{AtomSpecies, DipoleConvention, HyperfineLevel, Transition, LINE_TABLE_FORMAT};
pub use polarizability::{
    reduced_polarizability, scalar_polarizability, vector_polarizability, vls_per_intensity, Polarizability,
    PolarizabilityOptions, Rank,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AtomError {
    #[error("unknown species key `{0}`")]
    UnknownSpecies(String),
    #[error("line table: {0}")]
    Table(String),
    #[error("hyperfine level F = {f} is not part of the ground manifold")]
    UnknownLevel { f: f64 },
    #[error("wavelength must be positive and finite, got {0} m")]
    BadWavelength(f64),
    #[error("light is resonant with {0}; polarizability diverges")]
    Resonant(String),
    #[error("vector polarizability is undefined for F = 0")]
    ZeroF,
}
