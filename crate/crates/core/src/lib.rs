//! Spectral Galerkin simulation of two thin fluid layers in a porous medium.
//!
//! The layer heights `f` (lower fluid) and `g` (upper fluid) evolve under the
//! coupled fourth-order system
//!
//! ```text
//! ∂t f = -∂x[ a_ε(f) ∂x³(A f + B g) ]
//! ∂t g = -∂x[ a_ε(g) ∂x³(f + g) ]
//! ```
//!
//! on `(0, L)` with no-flux boundary conditions. The mobility cutoff
//! `a_ε(s) = max(s, 0) + ε` keeps the truncated system uniformly parabolic.
//! Solutions are expanded in the cosine eigenbasis of `-∂x²` with Neumann
//! conditions and the coefficient ODEs are integrated in time, while the
//! conserved and dissipated quantities (masses, surface energy, entropy) are
//! tracked at every sample.
//!
//! Module map:
//!
//! - [`basis`]: cosine basis, quadrature grid, synthesis and projection.
//! - [`regularization`]: `a_ε`, `Φ` and `Φ_ε`.
//! - [`dynamics`]: the Galerkin vector field and its Jacobian.
//! - [`integrator`]: adaptive time stepping.
//! - [`diagnostics`]: energies, dissipations, weak-form residuals.
//! - [`harness`]: run configuration, artifacts and experiment drivers.

pub mod basis;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod integrator;
pub mod regularization;

pub use basis::{analyze, eval_basis, make_grid, synthesize, BasisTable, QuadratureGrid, SpectralCoeffs};
pub use diagnostics::DiagnosticsRecord;
pub use dynamics::{GalerkinSystem, Model, PhysParams, State};
pub use error::{Error, Result};
pub use integrator::{integrate, step, Scheme, StepControls};
pub use regularization::{a_eps, phi, phi_eps, RegEps};
