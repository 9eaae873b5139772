//! Maxwell-Stefan multicomponent diffusion: pointwise flux inversion,
//! conservative periodic-grid evolution and entropy-structure diagnostics.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the command line live in the `msdiff` companion crate.
//!
//! Layout:
//! - [`msflux`]: the friction matrices, projections, spectral bound and the
//!   constrained force-flux solve at a single point.
//! - [`grid`] and [`state`]: periodic uniform grids, discrete operators,
//!   concentration and flux fields.
//! - [`entropy`]: entropy functionals, dissipation, the relative-entropy
//!   identity, error terms and the Grönwall certificate.
//! - [`mollify`]: mollifier kernels and the doubled test function.
//! - [`testfn`]: smooth space-time test functions.
//! - [`sim`]: time stepping, trajectories, weak-form residuals and twin runs.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod entropy;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod mollify;
pub mod msflux;
pub mod sim;
pub mod state;
pub mod testfn;

pub use error::{Error, Result};
pub use grid::PeriodicGrid;
pub use msflux::{DiffusionMatrix, FluxSolver, MsOperator, PointComposition, PointFlux};
pub use state::{ConcentrationState, FluxField, Snapshot};
