//! Grids, affine flats and the flat-versus-cell kernel.

mod affine;
mod bbox;
mod grid;
mod raster;

pub use affine::AffineSubspace;
pub use bbox::{BoundingBox, MAX_DIM, MIN_DIM};
pub use grid::{CellIdx, GridSpec, VoxelGrid};
pub use raster::{
    first_hit, rasterize_subspace, rasterize_with, subspace_intersects_cell, subspace_misses,
    visit_cells, Strategy,
};

pub(crate) use affine::{complete_basis, dot, norm};
