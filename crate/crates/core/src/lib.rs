//! Spectral boundary conditions for volumetric frame fields.
//!
//! Frames are encoded as rotated reference spherical harmonics of degree 4
//! (9 coefficients) or degree 3 (7 coefficients, the semisymmetric
//! octupoles). Orientation constraints become quadratic penalties over the
//! coefficient vector; any number of them collapse into one penalty by
//! summing coefficients, which is what lets a background octree carry an
//! immersed triangle-mesh boundary cell by cell.
//!
//! Module map:
//!
//! * [`sh_rotation`]: exact degree-3/4 rotation operators and SH lifts of 3D rotations.
//! * [`frame_repr`]: reference harmonics, frame embedding and recovery.
//! * [`penalty`]: single-normal penalties, accumulation, spectral shift, packing.
//! * [`spectral`]: symmetric eigensolver and the cube/cylinder/sphere analyses.
//! * [`mesh`], [`clip`], [`grid`]: immersed boundary octree.
//! * [`solver`]: coarse-to-fine frame-field optimization.

pub mod basis;
pub mod clip;
pub mod error;
pub mod exec;
pub mod frame_repr;
pub mod grid;
pub mod mesh;
pub mod penalty;
pub mod quadrature;
pub mod sh_rotation;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
pub use exec::Execution;
pub use frame_repr::{embed_frame, frame_axes, recover_frame, reference, FrameOrientation};
pub use grid::{GridHierarchy, GridParams};
pub use mesh::TriangleSurface;
pub use penalty::{BoundaryPenalty, PackedPenalty};
pub use sh_rotation::{Degree, HarmonicCoeffs, SHRotation, UnitVector3};
pub use solver::{SolveConfig, SolveReport};
pub use spectral::SpectralReport;
