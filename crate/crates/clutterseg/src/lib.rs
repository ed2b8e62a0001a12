//! Zero-shot sparse-view 3D instance segmentation from noisy per-frame 2D
//! masks and posed depth.
//!
//! The pipeline fuses depth into a super-voxel cloud, organizes each frame's
//! masks into containment hierarchies, groups leaf masks across views by
//! spatial and semantic similarity, resolves residual fragments through
//! parent substitution, and votes super-voxels into 3D instances enriched
//! with aggregated embeddings. A single post-interaction image re-associates
//! instances, flags displaced ones by projection IoU and recovers their
//! rigid motion with a coarse-to-fine contour/photometric optimization.
//!
//! Conventions: poses are 4x4 camera-to-world matrices, translations in
//! meters; the camera frame is x-right, y-down, z-forward; depth value 0
//! marks invalid pixels; the world +z axis is up (gravity axis).

pub mod config;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod geometry;
pub mod grouping;
pub mod instances;
pub mod mask;
pub mod pipeline;
pub mod scene;
pub mod semantics;
pub mod update;

pub use config::PipelineConfig;
pub use embedding::Embedding;
pub use error::{Error, Result};
pub use pipeline::{segment_scene, update_scene, SceneState};
