//! Exact-solution engine for small quantum systems linearly coupled to
//! bosonic or fermionic reservoirs.
//!
//! The dynamics of such systems is governed by a pair of nonequilibrium
//! Green functions: a retarded propagator `u(t)` obeying a Volterra
//! integro-differential equation with a reservoir memory kernel, and a
//! fluctuation function `v(t)` carrying the reservoir-injected occupation.
//! From these the engine extracts a renormalized Hamiltonian, dissipation
//! and fluctuation coefficients, exact reduced density matrices, and a full
//! set of thermodynamic quantities (energy, entropy, particle number,
//! renormalized temperature and chemical potential, work/heat split, free
//! energy, specific heat). A frequency-domain steady-state oracle provides
//! an independent route to every long-time value.
//!
//! Module map:
//! - [`model`]: scenario types, validation, unit normalization
//! - [`quadrature`]: adaptive integration, principal values, memory kernels
//! - [`greens`]: Volterra solver for `u`, double-convolution accumulation of `v`
//! - [`renorm`]: renormalized Hamiltonian / dissipation / fluctuation extraction
//! - [`state`]: exact reduced density matrices and Gibbs states
//! - [`thermo`]: thermodynamic trajectories and renormalized (T, mu) fits
//! - [`steady`]: frequency-domain steady state, level shifts, localized modes
//! - [`scenario`]: end-to-end pipeline shared by the CLI and the test suites

pub mod greens;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod renorm;
pub mod scenario;
pub mod state;
pub mod steady;
pub mod thermo;

pub use greens::{DecayStatus, GreensError, Trajectory};
pub use renorm::{RenormError, RenormSeries, TailAverages};
pub use model::{
    ReservoirSpec, ScenarioConfig, SpectralDensityModel, Statistics, SystemSpec, ValidatedScenario,
};
pub use quadrature::KernelTable;

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Dynamically sized complex matrix used for all level-space objects.
pub type CMatrix = nalgebra::DMatrix<C64>;
