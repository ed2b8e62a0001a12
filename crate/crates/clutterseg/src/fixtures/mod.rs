//! Synthetic scene fixtures with exact ground truth.

pub mod generate;
pub mod render;
pub mod shapes;

pub use generate::{
    generate_scene, oracle_grouping, plant_post_frame, write_fixture, FixtureScene, FixtureSpec,
    GeneratedFixture, GroundTruth, MaskOrigin, PlannedDisplacement, PostChange, Provenance,
};
pub use shapes::{SceneObject, ShapeKind};
