//! Rigid transforms parametrized as axis-angle rotation plus translation.

use nalgebra::{Matrix4, Point3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// World-frame rigid motion `x' = R x + t` with R given as a scaled-axis
/// (axis-angle) vector in radians.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RigidTransform {
    pub axis_angle: [f64; 3],
    pub translation: [f64; 3],
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            axis_angle: [0.0; 3],
            translation: [0.0; 3],
        }
    }

    pub fn new(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        RigidTransform {
            axis_angle: axis_angle.into(),
            translation: translation.into(),
        }
    }

    pub fn rotation(&self) -> Rotation3<f64> {
        Rotation3::from_scaled_axis(Vector3::from(self.axis_angle))
    }

    pub fn translation_vec(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        self.rotation() * p + self.translation_vec()
    }

    pub fn rotate_vec(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * v
    }

    /// Rotation angle in [0, pi].
    pub fn angle(&self) -> f64 {
        Vector3::from(self.axis_angle).norm()
    }

    /// The transform equal to applying `self` first and `next` second.
    pub fn then(&self, next: &RigidTransform) -> RigidTransform {
        let r = next.rotation() * self.rotation();
        let t = next.rotation() * self.translation_vec() + next.translation_vec();
        RigidTransform::new(r.scaled_axis(), t)
    }

    /// Rotation about `pivot` by `axis_angle` followed by `delta`,
    /// expressed in the world frame.
    pub fn about_point(
        axis_angle: Vector3<f64>,
        delta: Vector3<f64>,
        pivot: &Point3<f64>,
    ) -> RigidTransform {
        let r = Rotation3::from_scaled_axis(axis_angle);
        let t = pivot.coords - r * pivot.coords + delta;
        RigidTransform::new(axis_angle, t)
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(self.rotation().matrix());
        m.fixed_view_mut::<3, 1>(0, 3)
            .copy_from(&self.translation_vec());
        m
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self> {
        let r = m.fixed_view::<3, 3>(0, 0).into_owned();
        let det = r.determinant();
        if (r.transpose() * r - nalgebra::Matrix3::identity()).norm() > 1e-6
            || (det - 1.0).abs() > 1e-6
        {
            return Err(Error::InvalidPose(
                "matrix rotation block is not a rotation".into(),
            ));
        }
        let rot = Rotation3::from_matrix_unchecked(r);
        Ok(RigidTransform::new(
            rot.scaled_axis(),
            Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]),
        ))
    }

    /// Yaw-only constructor used by fixtures and tests.
    pub fn yaw_about(yaw: f64, pivot: &Point3<f64>, delta: Vector3<f64>) -> RigidTransform {
        RigidTransform::about_point(Vector3::z() * yaw, delta, pivot)
    }

    /// Relative rotation angle between two transforms, in [0, pi].
    pub fn rotation_error(&self, other: &RigidTransform) -> f64 {
        (self.rotation().inverse() * other.rotation()).angle()
    }

    /// Difference of the two motions evaluated at a reference point.
    pub fn displacement_error_at(&self, other: &RigidTransform, at: &Point3<f64>) -> f64 {
        (self.apply(at) - other.apply(at)).norm()
    }
}

/// Unit-axis rotation helper for tests and fixtures.
pub fn axis_angle(axis: Vector3<f64>, angle: f64) -> Vector3<f64> {
    Unit::new_normalize(axis).into_inner() * angle
}
