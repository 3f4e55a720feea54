//! Voxel grids, file formats, single-view scans and toy shapes.

pub mod binvox;
pub mod grid;
pub mod scan;
pub mod toy;

pub use binvox::{decode_binvox, encode_binvox, read_binvox, write_binvox, Placement};
pub use grid::{Axis, VoxelGrid};
pub use scan::{
    depth_scan, encode_scan, known_empty, occlude_to_grid, render_silhouette, DepthMap, Image, OcclusionEncoding,
    View,
};
pub use toy::{toy_dataset, ToyKind};
