//! Numerics for the anisotropic quaternion Carnot groups `Q^n`.
//!
//! Points are pairs `(x, z)` with `x` in `R^{4n}` stored block-major
//! (`x[4l..4l+4]` is block `l`) and `z` in `R^3`. The group is fixed by a
//! positive `3 x n` parameter matrix [`params::AnisotropyParams`].
//!
//! * [`algebra`]: quaternions, block matrices, group law, frames, the
//!   sub-Laplacian by finite differences;
//! * [`curves`], [`geodesic`]: sampled curves, the Hamiltonian flow and
//!   the closed-form exponential map;
//! * [`mu`], [`connectivity`]: boundary-value solvers for geodesics from
//!   the origin;
//! * [`kernels`]: complex action, heat kernel and Green's function;
//! * [`figures`], [`verify`]: data regeneration and seeded self-checks.

pub mod algebra;
pub mod connectivity;
pub mod curves;
pub mod error;
pub mod figures;
pub mod geodesic;
pub mod kernels;
pub mod mu;
pub mod params;
pub mod quaternion;
pub mod verify;

pub use error::{Error, Result};
