//! Pseudo-spectral simulator and verification harness for the 3D
//! incompressible magneto-micropolar equations with horizontal dissipation.
//!
//! The system couples a velocity `u`, a magnetic field `B`, and a
//! micro-rotation field `w` on a periodic box. Dissipation acts through the
//! horizontal Laplacian (plus full diffusion `chi * Laplacian` on `u`, the
//! `kappa * grad(div w)` and `4 chi w` terms on `w`), the pressure is
//! eliminated by Leray projection, and time stepping is integrating-factor
//! RK4 with the stiff diagonal part handled exactly.
//!
//! Crate layout:
//! - [`grid`], [`field`], [`ops`], [`init`]: the spectral toolbox.
//! - [`dynamics`], [`mms`]: tendencies, propagators, stepping, verification.
//! - [`diagnostics`]: norms, energy audit, decay fits.
//! - [`inequality`]: randomized checks of the anisotropic product estimates.
//! - [`reduced_ode`]: scalar decay-inequality models and exponent iteration.
//! - [`checkpoint`], [`config`], [`runner`]: persistence and experiment drivers.

pub mod checkpoint;
pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod fft;
pub mod field;
pub mod grid;
pub mod inequality;
pub mod init;
pub mod mms;
pub mod ops;
pub mod reduced_ode;
pub mod runner;

pub use diagnostics::{DecayFit, EnergyAuditRecord, NormReport, NormSeries};
pub use dynamics::{PhysParams, State, Stepper};
pub use field::{forward_transform, inverse_transform, SpectralScalarField, SpectralVectorField};
pub use grid::{Dir, GridSpec};
