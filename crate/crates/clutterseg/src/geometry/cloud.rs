//! Depth fusion into a world point cloud and normal estimation.

use std::collections::HashMap;

use nalgebra::{Matrix3, Point3, Vector3};
use rayon::prelude::*;

use crate::config::GeometryParams;
use crate::error::{Error, Result};
use crate::geometry::knn::PointGrid;
use crate::scene::frame::CameraFrame;

/// Fused world-space point cloud.
#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub positions: Vec<Point3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    pub colors: Vec<[f64; 3]>,
    /// Number of raw depth samples merged into each point.
    pub source_counts: Vec<u32>,
    /// Mean contributing camera center per point; anchors normal orientation.
    pub view_anchors: Vec<Point3<f64>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Back-project one frame's valid depth pixels into world space.
///
/// Returns (world point, color) per pixel with depth > 0.
pub fn backproject_frame(frame: &CameraFrame) -> Vec<(Point3<f64>, [f64; 3])> {
    let (w, h) = (frame.depth.width, frame.depth.height);
    let mut out = Vec::new();
    for v in 0..h {
        for u in 0..w {
            let d = frame.depth.get(u, v) as f64;
            if d <= 0.0 || !d.is_finite() {
                continue;
            }
            let p_cam = frame.intrinsics.backproject(u as f64, v as f64, d);
            let p_world = frame.pose.cam_to_world(&p_cam);
            let c = frame.rgb.get(u, v);
            out.push((p_world, [c[0] as f64, c[1] as f64, c[2] as f64]));
        }
    }
    out
}

/// Fuse all frames into a voxel-downsampled cloud, discarding voxels with
/// fewer than `min_occupancy` samples. Each kept voxel emits the mean
/// position and color of its samples.
pub fn fuse_and_downsample(frames: &[CameraFrame], params: &GeometryParams) -> PointCloud {
    struct Acc {
        pos: Vector3<f64>,
        color: [f64; 3],
        cam: Vector3<f64>,
        n: u32,
    }
    let edge = params.voxel_size_m;
    let mut bins: HashMap<(i64, i64, i64), Acc> = HashMap::new();
    for frame in frames {
        let cam_center = frame.pose.center();
        for (p, c) in backproject_frame(frame) {
            let key = (
                (p.x / edge).floor() as i64,
                (p.y / edge).floor() as i64,
                (p.z / edge).floor() as i64,
            );
            let acc = bins.entry(key).or_insert(Acc {
                pos: Vector3::zeros(),
                color: [0.0; 3],
                cam: Vector3::zeros(),
                n: 0,
            });
            acc.pos += p.coords;
            for ch in 0..3 {
                acc.color[ch] += c[ch];
            }
            acc.cam += cam_center.coords;
            acc.n += 1;
        }
    }

    let mut keys: Vec<_> = bins
        .iter()
        .filter(|(_, a)| a.n as usize >= params.min_occupancy)
        .map(|(k, _)| *k)
        .collect();
    keys.sort_unstable();

    let mut cloud = PointCloud::default();
    for key in keys {
        let acc = &bins[&key];
        let inv = 1.0 / acc.n as f64;
        cloud.positions.push(Point3::from(acc.pos * inv));
        cloud
            .colors
            .push([acc.color[0] * inv, acc.color[1] * inv, acc.color[2] * inv]);
        cloud.view_anchors.push(Point3::from(acc.cam * inv));
        cloud.source_counts.push(acc.n);
    }
    cloud
}

/// Estimate per-point normals from the covariance of the k nearest
/// neighbors; orient each normal toward the point's view anchor.
pub fn estimate_normals(cloud: &mut PointCloud, k_nn: usize) -> Result<()> {
    let n = cloud.len();
    if n < k_nn + 1 {
        return Err(Error::CloudTooSmall {
            need: k_nn + 1,
            have: n,
        });
    }
    let grid = PointGrid::build(&cloud.positions, 0.01);
    let positions = &cloud.positions;
    let anchors = &cloud.view_anchors;
    cloud.normals = (0..n)
        .into_par_iter()
        .map(|i| {
            let neighbors = grid.k_nearest(i, k_nn);
            let mut mean = Vector3::zeros();
            for &j in &neighbors {
                mean += positions[j as usize].coords;
            }
            mean /= neighbors.len() as f64;
            let mut cov = Matrix3::zeros();
            for &j in &neighbors {
                let d = positions[j as usize].coords - mean;
                cov += d * d.transpose();
            }
            let eig = cov.symmetric_eigen();
            let mut min_idx = 0;
            for k in 1..3 {
                if eig.eigenvalues[k] < eig.eigenvalues[min_idx] {
                    min_idx = k;
                }
            }
            let mut normal: Vector3<f64> = eig.eigenvectors.column(min_idx).into_owned();
            let norm = normal.norm();
            if norm < 1e-12 {
                normal = Vector3::z();
            } else {
                normal /= norm;
            }
            let toward = anchors[i].coords - positions[i].coords;
            if normal.dot(&toward) < 0.0 {
                normal = -normal;
            }
            normal
        })
        .collect();
    Ok(())
}
