//! Pinhole camera model.
//!
//! Poses are camera-to-world throughout the crate. The camera frame is
//! x-right, y-down, z-forward; a pixel (u, v) with depth d back-projects to
//! `pose · (d·(u−cx)/fx, d·(v−cy)/fy, d)`.

use nalgebra::{Matrix3, Matrix4, Point3, Rotation3, Translation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Project a camera-frame point; `None` behind the camera.
    pub fn project(&self, p_cam: &Point3<f64>) -> Option<(f64, f64)> {
        if p_cam.z <= 0.0 {
            return None;
        }
        Some((
            self.fx * p_cam.x / p_cam.z + self.cx,
            self.fy * p_cam.y / p_cam.z + self.cy,
        ))
    }

    /// Camera-frame point for pixel (u, v) at depth d along the optical axis.
    pub fn backproject(&self, u: f64, v: f64, d: f64) -> Point3<f64> {
        Point3::new(d * (u - self.cx) / self.fx, d * (v - self.cy) / self.fy, d)
    }
}

/// Validated camera-to-world pose.
#[derive(Debug, Clone, Copy)]
pub struct CameraPose {
    rotation: Rotation3<f64>,
    translation: Vector3<f64>,
}

impl CameraPose {
    /// Build from a 4×4 row-major camera-to-world matrix, validating that the
    /// upper-left block is a rotation (orthonormal, det +1 within 1e-6).
    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self> {
        let r = m.fixed_view::<3, 3>(0, 0).into_owned();
        let ident_err = (r.transpose() * r - Matrix3::identity()).norm();
        let det = r.determinant();
        if ident_err > 1e-6 || (det - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidPose(format!(
                "rotation block not orthonormal (|RᵀR−I| = {ident_err:.2e}, det = {det:.6})"
            )));
        }
        let bottom = m.row(3);
        if (bottom[0], bottom[1], bottom[2], bottom[3]) != (0.0, 0.0, 0.0, 1.0) {
            return Err(Error::InvalidPose("last row must be [0 0 0 1]".into()));
        }
        Ok(CameraPose {
            rotation: Rotation3::from_matrix_unchecked(r),
            translation: Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]),
        })
    }

    pub fn from_parts(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        CameraPose {
            rotation,
            translation,
        }
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        (Translation3::from(self.translation).to_homogeneous())
            * self.rotation.to_homogeneous()
    }

    pub fn cam_to_world(&self, p: &Point3<f64>) -> Point3<f64> {
        self.rotation * p + self.translation
    }

    pub fn world_to_cam(&self, p: &Point3<f64>) -> Point3<f64> {
        self.rotation.inverse() * (p - self.translation)
    }

    pub fn rotation(&self) -> &Rotation3<f64> {
        &self.rotation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(self.translation)
    }

    /// Project a world point to pixel coordinates (camera must see it).
    pub fn project_world(&self, intr: &Intrinsics, p_world: &Point3<f64>) -> Option<(f64, f64)> {
        intr.project(&self.world_to_cam(p_world))
    }
}
