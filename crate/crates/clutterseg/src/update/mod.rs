//! Consistency-aware scene update from a single post-interaction view.

pub mod change;
pub mod contour;
pub mod losses;
pub mod optimize;
pub mod transform;

pub use change::{
    detect_displaced, instance_footprint, match_post_masks, ChangeEntry, ChangeReport,
    ChangeStatus,
};
pub use losses::{chamfer_loss, combine_losses, photometric_loss, reg_z_loss, MaskTarget};
pub use optimize::{optimize_transform, InstanceView, OptimizeOutcome, OptimizeStatus};
pub use transform::RigidTransform;
