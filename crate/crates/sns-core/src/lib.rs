//! Solver library and benchmark harness for the 2D stochastic Stokes and
//! Navier-Stokes equations on the unit square.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid_fem`] — structured triangulation, Taylor-Hood (P2/P1) spaces,
//!   quadrature, interpolation and assembly of the constant operators,
//! * [`saddle`] — sparse direct solves: saddle-point systems with a mean-zero
//!   pressure gauge, SPD solves and mean-free Neumann Poisson solves,
//! * [`stochastics`] — reproducible Wiener paths with nested refinement and
//!   the noise models (additive / multiplicative / transport),
//! * [`helmholtz`] — discrete Helmholtz-Leray decomposition,
//! * [`schemes`] — the time-stepping algorithms (implicit Euler, Chorin,
//!   pressure-corrected Chorin, Crank-Nicolson for transport noise, and the
//!   semi-implicit Euler scheme for the Navier-Stokes nonlinearity),
//! * [`benchmarks`] — the manufactured-solution benchmark catalogue,
//! * [`experiments`] — Monte-Carlo error estimation, convergence-rate fits
//!   and field statistics.

pub mod benchmarks;
pub mod error;
pub mod experiments;
pub mod grid_fem;
pub mod helmholtz;
pub mod saddle;
pub mod schemes;
pub mod sparse;
pub mod stochastics;

pub use error::{Error, Result};

/// Forces all faer kernels onto the sequential code path.
///
/// Sample-level parallelism is handled by rayon in [`experiments`]; keeping
/// the factorisation kernels sequential makes every solve bit-reproducible
/// regardless of the worker count.
pub fn init_deterministic_linear_algebra() {
    faer::set_global_parallelism(faer::Par::Seq);
}
