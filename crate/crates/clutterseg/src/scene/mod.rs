//! Scene bundle loading, validation and output serialization.

pub mod bundle;
pub mod frame;
pub mod outputs;

pub use bundle::{load_scene_bundle, save_scene_bundle};
pub use frame::{CameraFrame, DepthMap, ImageBuf, SceneBundle, SceneMeta};
pub use outputs::{read_instance_output, write_instance_output};
