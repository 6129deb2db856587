//! Frame-wise multi-camera depth fusion.
//!
//! Each time step is processed from scratch: depth frames are scored per
//! pixel, gated and back-projected into world-space fragments, grouped in an
//! adaptive spatial hash, and fused cell by cell with weights combining
//! measurement confidence and cross-view distance consistency.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar for the common cases.

// Negated float comparisons are deliberate: they reject NaN along with
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod confidence;
pub mod consistency;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod hashgrid;
pub mod io;
pub mod pointgen;
pub mod scalar;
pub mod synth;

pub use confidence::{confidence_map, ConfidenceMap, ConfidenceParams, DepthFrame};
pub use consistency::{CameraView, ConsistencyParams};
pub use fusion::{fuse_frame, Ablation, FusedCloud, FusedPoint, PipelineParams};
pub use geometry::{CameraModel, ImagePoint, Mat3, Pixel, RigidTransform, Vec3};
pub use hashgrid::{AdaptiveGrid, GridParams, PointTable};
pub use pointgen::{generate_fragment, PointFragment};
pub use scalar::Real;

pub type Vec3d = Vec3<f64>;
pub type Vec3f = Vec3<f32>;
pub type Camera = CameraModel<f64>;
pub type Camera32 = CameraModel<f32>;
pub type Frame = DepthFrame<f64>;
pub type Frame32 = DepthFrame<f32>;
pub type Cloud = FusedCloud<f64>;
pub type Cloud32 = FusedCloud<f32>;
pub type Params = PipelineParams<f64>;
pub type Params32 = PipelineParams<f32>;
