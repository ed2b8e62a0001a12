//! Ray-cast rasterizer for fixture scenes: depth, flat-shaded color and
//! exact per-object visibility masks.

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use crate::geometry::camera::{CameraPose, Intrinsics};
use crate::mask::rle::{Bitmap, RleMask};
use crate::scene::frame::{DepthMap, ImageBuf};

use super::shapes::{ray_table, SceneObject};

pub const TABLE_ALBEDO: [f32; 3] = [0.55, 0.53, 0.50];

pub struct RenderOutput {
    pub depth: DepthMap,
    pub rgb: ImageBuf,
    /// Visible object id per pixel; -1 table, -2 background.
    pub object_px: Vec<i32>,
}

impl RenderOutput {
    /// Exact visibility mask of one object.
    pub fn exact_mask(&self, object_id: u32, width: u32, height: u32) -> RleMask {
        let mut bm = Bitmap::new(width, height);
        for (i, &id) in self.object_px.iter().enumerate() {
            if id == object_id as i32 {
                bm.bits[i] = true;
            }
        }
        RleMask::from_bitmap(&bm)
    }
}

/// Render one view by per-pixel ray casting against all objects plus the
/// finite table plane. Depth is the camera-frame z of the nearest hit.
pub fn render_view(
    objects: &[SceneObject],
    table_half_extent: f64,
    intrinsics: &Intrinsics,
    pose: &CameraPose,
    width: u32,
    height: u32,
) -> RenderOutput {
    let origin = pose.center();
    let rows: Vec<(Vec<f32>, Vec<[f32; 3]>, Vec<i32>)> = (0..height)
        .into_par_iter()
        .map(|v| {
            let mut depth_row = vec![0.0f32; width as usize];
            let mut rgb_row = vec![[0.0f32; 3]; width as usize];
            let mut id_row = vec![-2i32; width as usize];
            for u in 0..width {
                // dir_cam has z = 1, so the ray parameter equals z-depth.
                let dir_cam = Vector3::new(
                    (u as f64 - intrinsics.cx) / intrinsics.fx,
                    (v as f64 - intrinsics.cy) / intrinsics.fy,
                    1.0,
                );
                let dir = pose.rotation() * dir_cam;
                let mut best_t = f64::INFINITY;
                let mut best_id = -2i32;
                if let Some(t) = ray_table(&origin, &dir, table_half_extent) {
                    best_t = t;
                    best_id = -1;
                }
                for obj in objects {
                    if let Some(t) = obj.intersect(&origin, &dir) {
                        if t < best_t {
                            best_t = t;
                            best_id = obj.id as i32;
                        }
                    }
                }
                if best_id != -2 {
                    depth_row[u as usize] = best_t as f32;
                    rgb_row[u as usize] = if best_id == -1 {
                        TABLE_ALBEDO
                    } else {
                        objects.iter().find(|o| o.id as i32 == best_id).unwrap().albedo
                    };
                    id_row[u as usize] = best_id;
                }
            }
            (depth_row, rgb_row, id_row)
        })
        .collect();

    let mut depth = DepthMap::new(width, height);
    let mut rgb = ImageBuf::new(width, height);
    let mut object_px = vec![-2i32; (width * height) as usize];
    for (v, (depth_row, rgb_row, id_row)) in rows.into_iter().enumerate() {
        let base = v * width as usize;
        depth.values[base..base + width as usize].copy_from_slice(&depth_row);
        rgb.pixels[base..base + width as usize].copy_from_slice(&rgb_row);
        object_px[base..base + width as usize].copy_from_slice(&id_row);
    }
    RenderOutput {
        depth,
        rgb,
        object_px,
    }
}

/// Camera-to-world pose looking from `eye` toward `target`, world +z up,
/// image y pointing down.
pub fn look_at(eye: Point3<f64>, target: Point3<f64>) -> CameraPose {
    let z = (target - eye).normalize();
    let mut x = z.cross(&Vector3::z());
    if x.norm() < 1e-9 {
        x = Vector3::x();
    }
    let x = x.normalize();
    let y = z.cross(&x);
    let rot = nalgebra::Rotation3::from_matrix_unchecked(nalgebra::Matrix3::from_columns(&[
        x, y, z,
    ]));
    CameraPose::from_parts(rot, eye.coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::shapes::ShapeKind;

    #[test]
    fn look_at_is_valid_pose_seeing_target() {
        let eye = Point3::new(0.6, 0.2, 0.5);
        let target = Point3::new(0.0, 0.0, 0.05);
        let pose = look_at(eye, target);
        let m = pose.to_matrix();
        assert!(CameraPose::from_matrix(&m).is_ok());
        let intr = Intrinsics {
            fx: 500.0,
            fy: 500.0,
            cx: 320.0,
            cy: 240.0,
        };
        let (u, v) = pose.project_world(&intr, &target).unwrap();
        assert!((u - 320.0).abs() < 1e-6 && (v - 240.0).abs() < 1e-6);
    }

    #[test]
    fn rendered_sphere_depth_is_analytic() {
        let sphere = SceneObject {
            id: 0,
            category: 0,
            shape: ShapeKind::Sphere { radius: 0.05 },
            center: Point3::new(0.0, 0.0, 0.1),
            yaw: 0.0,
            albedo: [0.9, 0.1, 0.1],
        };
        let pose = look_at(Point3::new(0.0, -0.4, 0.4), Point3::new(0.0, 0.0, 0.1));
        let intr = Intrinsics {
            fx: 300.0,
            fy: 300.0,
            cx: 160.0,
            cy: 120.0,
        };
        let out = render_view(&[sphere], 0.45, &intr, &pose, 320, 240);
        // center pixel hits the sphere front face
        let d = out.depth.get(160, 120) as f64;
        let dist_to_center =
            (Point3::new(0.0f64, -0.4, 0.4) - Point3::new(0.0, 0.0, 0.1)).norm();
        assert!((d - (dist_to_center - 0.05)).abs() < 1e-6);
        assert_eq!(out.object_px[(120 * 320 + 160) as usize], 0);
        // mask is non-empty and circularish
        let mask = out.exact_mask(0, 320, 240);
        assert!(mask.area() > 100);
    }

    #[test]
    fn table_fills_background_under_ring_camera() {
        let pose = look_at(Point3::new(0.5, 0.0, 0.5), Point3::new(0.0, 0.0, 0.0));
        let intr = Intrinsics {
            fx: 300.0,
            fy: 300.0,
            cx: 160.0,
            cy: 120.0,
        };
        let out = render_view(&[], 0.45, &intr, &pose, 320, 240);
        let hits = out.object_px.iter().filter(|&&id| id == -1).count();
        assert!(hits > 5000, "table barely visible: {hits} px");
        let misses = out.object_px.iter().filter(|&&id| id == -2).count();
        assert!(misses > 0, "finite table should not fill the frame");
    }
}
