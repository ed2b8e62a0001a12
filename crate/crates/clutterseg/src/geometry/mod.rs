//! World-space geometry: camera model, depth fusion, normals, super-voxels.

pub mod camera;
pub mod cloud;
pub mod knn;
pub mod supervoxel;

pub use camera::{CameraPose, Intrinsics};
pub use cloud::{backproject_frame, estimate_normals, fuse_and_downsample, PointCloud};
pub use supervoxel::{build_supervoxels, pair_distance, SuperVoxel, SuperVoxelSet};
