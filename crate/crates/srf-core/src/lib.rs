//! Core library for single-object neural implicit shape and radiance fields.
//!
//! Everything in here is pure computation over plain `f64` buffers: analytic
//! signed distance fields and their voxelizations, a small reverse-mode
//! autodiff engine with Adam, the implicit/rendering MLPs, SDF-based volume
//! rendering and scene composition, the two-stage training loop, marching
//! cubes, and reconstruction metrics. File formats and the CLI live in the
//! companion `srf` crate.
//!
//! The crate is `no_std` (with `alloc`); all transcendental math goes through
//! [`math`] so results are bit-identical regardless of the host's libm.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod field;
pub mod geom;
pub mod math;
pub mod mesh;
pub mod metrics;
pub mod render;
pub mod rng;
pub mod scene;
pub mod sdf;
pub mod train;

pub use geom::{Aabb, Camera, Ray, SimilarityTransform, Vec3};
pub use sdf::{AnalyticSdf, SdfGrid};
