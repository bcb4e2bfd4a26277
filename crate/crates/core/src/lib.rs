//! Mass-constrained ground states for three-dimensional energies with a
//! nonattractive point interaction at the origin.
//!
//! States live in the energy space of the point-interaction Laplacian and are
//! represented as `u = φ_λ + q G_λ`: a regular part sampled on a logarithmic
//! radial grid, a charge `q` and a gauge `λ` selecting the Yukawa kernel
//! `G_λ(x) = e^{-√λ|x|} / (4π|x|)`.
//!
//! Module map:
//!
//! - [`grid`]: radial quadrature, differentiation and interpolation.
//! - [`green`]: closed forms for `G_λ` and its inner products.
//! - [`espace`]: states, mass, the quadratic form `H_α`, gauge changes, `L^p` norms.
//! - [`functionals`]: the NLSE, Kirchhoff and Schrödinger–Poisson energies
//!   with exact discrete gradients, Lagrange multipliers and scaling paths.
//! - [`solver`]: preconditioned projected gradient descent on the mass sphere.
//! - [`verify`]: identity checks and condition scans producing [`verify::ScanReport`]s.

pub mod error;
pub mod espace;
pub mod functionals;
pub mod green;
pub mod grid;
mod linalg;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use espace::{AlphaParam, EnergyState};
pub use functionals::{EnergyBreakdown, ProblemKind, ProblemSpec};
pub use green::GreenParam;
pub use grid::{GridDescriptor, RadialGrid};
pub use solver::{GroundStateResult, SolveOptions};
pub use verify::ScanReport;
