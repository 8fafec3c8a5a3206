//! Linear convexity on voxel grids: conjugate sets, hulls and homology.

pub mod duality;
pub mod error;
pub mod families;
pub mod geometry;
pub mod lab;
mod sampling;
pub mod scenes;
pub mod topology;

pub use error::{Error, Result};
pub use families::{FamilyW, ParamSample, ProjectiveMap, ThroughSampler};
pub use geometry::{AffineSubspace, BoundingBox, GridSpec, VoxelGrid};
