//! Depth images, PLY clouds, rig configuration and the recording layout.

pub mod config;
pub mod depth;
pub mod frames;
pub mod ply;

pub use config::{ConfigError, RigConfig};
pub use depth::{read_depth_frame, write_depth_frame, DepthFormat, DepthIoError};
pub use ply::{read_ply, write_ply, PlyMode};
