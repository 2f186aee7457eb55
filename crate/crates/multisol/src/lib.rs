//! Multiple solutions of semilinear elliptic PDEs on circular and elliptical
//! disks.
//!
//! The equation `eps^2 * laplace(u) + f(x, u) = 0` is discretized with a
//! Legendre-Fourier spectral Galerkin scheme in mapped polar coordinates.
//! Distinct solutions are located by an adaptive orthogonal basis deflation
//! driver that combines three building blocks:
//!
//! * [`rootfind`] — a bisection-deflation scheme returning all discoverable
//!   roots of a scalar equation,
//! * [`trustregion`] — a dogleg trust-region minimizer for the nonlinear
//!   algebraic system,
//! * [`aobd`] — the driver that grows an orthonormal basis from previously
//!   found solutions and seeds new searches from amplitude roots.
//!
//! Built-in problems live in [`problems`]; run configuration, result
//! persistence and table exports in [`io`]. The `multisol` binary exposes the
//! `run`, `sweep`, `export`, `eigs` and `validate` subcommands.

pub mod aobd;
pub mod galerkin;
pub mod geometry;
pub mod io;
pub mod legendre;
pub mod problems;
pub mod rootfind;
pub mod trustregion;

pub use galerkin::{BoundaryKind, DiscreteProblem, SpectralCoefficients};
pub use geometry::EllipseDomain;
pub use problems::ProblemSpec;
