//! Binary masks and their per-frame containment hierarchies.

pub mod hierarchy;
pub mod rle;

pub use hierarchy::{build_instance_forest, containment_ratio, InstanceForest, MaskNode};
pub use rle::{Bitmap, RleMask};
