//! Radial solvers for normalized solitary waves of coupled cubic Schrödinger
//! systems and of scalar equations with general focusing nonlinearities.
//!
//! The central objects are mass-constrained variational problems: minimizers
//! and mountain-pass critical points of the energy restricted to the
//! Pohozaev-type natural constraint set, realized numerically on a uniform
//! radial grid. The crate is organized as:
//!
//! - [`grid`], [`field`]: radial grids, quadrature, discrete fields, the
//!   mass-preserving dilation;
//! - [`nonlinearity`]: power-sum nonlinearities and their growth envelope;
//! - [`functionals`]: energies, constraint functionals, fiber maps and
//!   manifold projections for the scalar and the two-component problem;
//! - [`scalar`]: shooting and constrained-descent solvers for ground and
//!   node-indexed excited states;
//! - [`system`]: bordered Newton, mountain-pass path deformation, and
//!   continuation in the inter-species coupling;
//! - [`diagnostics`]: solution certificates (Pohozaev ratio, decay envelope,
//!   Gagliardo–Nirenberg ratio, segregation metrics).

pub mod corpus;
pub mod diagnostics;
pub mod error;
pub mod field;
pub mod functionals;
pub mod grid;
pub mod interp;
pub mod io;
pub mod linalg;
pub mod nonlinearity;
pub mod scalar;
pub mod system;

pub use error::SolverError;
pub use field::RadialField;
pub use grid::RadialGrid;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, SolverError>;
