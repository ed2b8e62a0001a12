//! Super-voxel occupancy vectors and the two edge similarities.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::embedding::Embedding;
use crate::error::Result;
use crate::geometry::cloud::PointCloud;
use crate::geometry::supervoxel::SuperVoxelSet;
use crate::mask::hierarchy::InstanceForest;
use crate::mask::rle::Bitmap;
use crate::scene::frame::CameraFrame;

/// Identifies a mask node: (frame index, arena index within that frame's
/// forest).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeKey {
    pub frame: u32,
    pub node: u32,
}

/// Sparse occupancy vector over super-voxel ids; only positive entries kept,
/// sorted by id.
pub type SparseOccupancy = Vec<(u32, f64)>;

/// Cached projection of the fused cloud into one frame. Entries are pixel
/// coordinates for points that project in-bounds, in front of the camera and
/// within the depth-visibility margin of the frame's depth map.
pub struct FrameProjection {
    pub pixels: Vec<Option<(u32, u32)>>,
}

pub fn project_cloud_to_frame(
    cloud: &PointCloud,
    frame: &CameraFrame,
    visibility_margin: f64,
) -> FrameProjection {
    let (w, h) = (frame.depth.width, frame.depth.height);
    let pixels = cloud
        .positions
        .par_iter()
        .map(|p| {
            let p_cam = frame.pose.world_to_cam(p);
            let (u, v) = frame.intrinsics.project(&p_cam)?;
            let (ui, vi) = (u.round(), v.round());
            if ui < 0.0 || vi < 0.0 || ui >= w as f64 || vi >= h as f64 {
                return None;
            }
            let (ui, vi) = (ui as u32, vi as u32);
            let d_map = frame.depth.get(ui, vi) as f64;
            if d_map <= 0.0 || (p_cam.z - d_map).abs() > visibility_margin {
                return None;
            }
            Some((ui, vi))
        })
        .collect();
    FrameProjection { pixels }
}

/// Occupancy ratio per super-voxel: visible member points inside the mask
/// over total member points.
pub fn compute_occupancy(
    mask: &Bitmap,
    supervoxels: &SuperVoxelSet,
    projection: &FrameProjection,
) -> SparseOccupancy {
    let mut out = Vec::new();
    for sv in &supervoxels.voxels {
        let mut hit = 0usize;
        for &m in &sv.members {
            if let Some((u, v)) = projection.pixels[m as usize] {
                if mask.get(u, v) {
                    hit += 1;
                }
            }
        }
        if hit > 0 {
            out.push((sv.id, hit as f64 / sv.members.len() as f64));
        }
    }
    out
}

/// Weighted Jaccard similarity of two occupancy vectors:
/// `sum_k w_k min(a_k, b_k) / (sum_k w_k max(a_k, b_k) + epsilon)`.
pub fn spatial_similarity(
    a: &SparseOccupancy,
    b: &SparseOccupancy,
    weights: &[f64],
    epsilon: f64,
) -> f64 {
    let (mut i, mut j) = (0usize, 0usize);
    let (mut num, mut den) = (0.0f64, 0.0f64);
    while i < a.len() || j < b.len() {
        let ka = a.get(i).map(|&(k, _)| k);
        let kb = b.get(j).map(|&(k, _)| k);
        match (ka, kb) {
            (Some(x), Some(y)) if x == y => {
                let (va, vb) = (a[i].1, b[j].1);
                num += weights[x as usize] * va.min(vb);
                den += weights[x as usize] * va.max(vb);
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x < y => {
                den += weights[x as usize] * a[i].1;
                i += 1;
            }
            (Some(_), Some(y)) => {
                den += weights[y as usize] * b[j].1;
                j += 1;
            }
            (Some(x), None) => {
                den += weights[x as usize] * a[i].1;
                i += 1;
            }
            (None, Some(y)) => {
                den += weights[y as usize] * b[j].1;
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    num / (den + epsilon)
}

/// Cosine similarity of two unit embeddings.
pub fn semantic_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    a.dot(b)
}

/// Occupancy vectors for every node (leaves and parents) of every forest.
pub fn build_occupancy_table(
    forests: &[InstanceForest],
    supervoxels: &SuperVoxelSet,
    projections: &[FrameProjection],
) -> HashMap<NodeKey, SparseOccupancy> {
    let jobs: Vec<NodeKey> = forests
        .iter()
        .flat_map(|f| {
            (0..f.nodes.len() as u32).map(move |node| NodeKey {
                frame: f.frame,
                node,
            })
        })
        .collect();
    jobs.into_par_iter()
        .map(|key| {
            let forest = &forests[key.frame as usize];
            let bitmap = forest.nodes[key.node as usize].rle.to_bitmap();
            let occ = compute_occupancy(&bitmap, supervoxels, &projections[key.frame as usize]);
            (key, occ)
        })
        .collect()
}
