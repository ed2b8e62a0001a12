//! Post-interaction re-association, change detection and selective update.

use std::collections::BTreeMap;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::config::{GroupingParams, UpdateParams};
use crate::error::Result;
use crate::instances::Instance3D;
use crate::mask::hierarchy::InstanceForest;
use crate::mask::rle::Bitmap;
use crate::scene::frame::CameraFrame;
use crate::update::contour::footprint_bitmap;
use crate::update::transform::RigidTransform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeStatus {
    Static,
    Displaced,
    /// No mask matched; occluded, removed or out of view.
    Unmatched,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChangeEntry {
    pub instance_id: u32,
    /// Mask id in the post frame, when matched.
    pub matched_mask: Option<u32>,
    pub projection_iou: f64,
    pub status: ChangeStatus,
    /// Recovered world-frame motion; present iff displaced.
    pub transform: Option<RigidTransform>,
    pub final_loss: Option<f64>,
    pub final_iou: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ChangeReport {
    pub entries: Vec<ChangeEntry>,
}

impl ChangeReport {
    pub fn entry(&self, instance_id: u32) -> Option<&ChangeEntry> {
        self.entries.iter().find(|e| e.instance_id == instance_id)
    }

    /// Structured text rendering: one line per instance with the transform
    /// as a 4x4 row-major matrix.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let status = match e.status {
                ChangeStatus::Static => "static",
                ChangeStatus::Displaced => "displaced",
                ChangeStatus::Unmatched => "occluded/unmatched",
            };
            out.push_str(&format!(
                "instance {} status={} iou={:.4}",
                e.instance_id, status, e.projection_iou
            ));
            if let Some(t) = &e.transform {
                let m = t.to_matrix();
                out.push_str(" transform=");
                for r in 0..4 {
                    for c in 0..4 {
                        out.push_str(&format!("{:.9} ", m[(r, c)]));
                    }
                }
            }
            if let Some(l) = e.final_loss {
                out.push_str(&format!("final_loss={l:.6} "));
            }
            if let Some(i) = e.final_iou {
                out.push_str(&format!("final_iou={i:.4}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Project instance points into the post view and rasterize the footprint
/// (1-pixel splats, 1-pixel dilation).
pub fn instance_footprint(
    points: &[Point3<f64>],
    frame: &CameraFrame,
    width: u32,
    height: u32,
) -> Bitmap {
    let projections: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|p| frame.pose.project_world(&frame.intrinsics, p))
        .collect();
    footprint_bitmap(&projections, width, height)
}

/// Greedy one-to-one association between stored instances and post-frame
/// mask candidates, with residual-leaf parent substitution between rounds.
///
/// Candidates start as the forest's leaves. Scores blend embedding cosine
/// and projection overlap equally; pairs whose cosine falls below `tau_sem`
/// stay unmatched. When all of a parent's leaf descendants end a round
/// unmatched, the parent replaces them and matching continues.
pub fn match_post_masks(
    post_frame: &CameraFrame,
    forest: &InstanceForest,
    instances: &[Instance3D],
    positions: &[Point3<f64>],
    grouping: &GroupingParams,
) -> Result<BTreeMap<u32, u32>> {
    let (w, h) = (post_frame.rgb.width, post_frame.rgb.height);
    let footprints: Vec<Bitmap> = instances
        .iter()
        .map(|inst| {
            let pts: Vec<Point3<f64>> = inst
                .points
                .iter()
                .map(|&i| positions[i as usize])
                .collect();
            instance_footprint(&pts, post_frame, w, h)
        })
        .collect();

    let mut matched: BTreeMap<u32, u32> = BTreeMap::new(); // instance id -> node idx
    let mut instance_taken = vec![false; instances.len()];
    let mut active: Vec<u32> = forest.leaves.clone();

    let max_rounds = forest.max_depth().max(1);
    for round in 0..max_rounds {
        // Score all unmatched (instance, candidate) pairs.
        let mut pairs: Vec<(f64, u32, u32)> = Vec::new(); // (score, inst id, node idx)
        for (ii, inst) in instances.iter().enumerate() {
            if instance_taken[ii] {
                continue;
            }
            for &node_idx in &active {
                let node = forest.node(node_idx);
                let cosine = inst.embedding.dot(&node.embedding)?;
                if cosine < grouping.tau_sem {
                    continue;
                }
                let mask_bm = node.rle.to_bitmap();
                let mask_area = mask_bm.count();
                let overlap = if mask_area == 0 {
                    0.0
                } else {
                    footprints[ii].intersection_count(&mask_bm) as f64 / mask_area as f64
                };
                pairs.push((0.5 * cosine + 0.5 * overlap, inst.id, node_idx));
            }
        }
        pairs.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });

        let mut node_taken: std::collections::HashSet<u32> = std::collections::HashSet::new();
        for (_, inst_id, node_idx) in pairs {
            let ii = instances.iter().position(|i| i.id == inst_id).unwrap();
            if instance_taken[ii] || node_taken.contains(&node_idx) {
                continue;
            }
            instance_taken[ii] = true;
            node_taken.insert(node_idx);
            matched.insert(inst_id, node_idx);
        }

        if round + 1 == max_rounds {
            break;
        }

        // Residual substitution: lift unmatched leaves to their parent when
        // the parent's whole active descendant set is unmatched.
        let residual: Vec<u32> = active
            .iter()
            .copied()
            .filter(|n| !node_taken.contains(n) && !matched.values().any(|&m| m == *n))
            .collect();
        let mut parents: Vec<u32> = residual
            .iter()
            .filter_map(|&n| forest.node(n).parent)
            .collect();
        parents.sort_unstable();
        parents.dedup();

        let mut next_active = active.clone();
        let mut substituted = false;
        for p in parents {
            let descendants = forest.leaf_descendants(p);
            let covered: Vec<u32> = active
                .iter()
                .copied()
                .filter(|&n| {
                    let mut cur = Some(n);
                    while let Some(i) = cur {
                        if i == p {
                            return true;
                        }
                        cur = forest.node(i).parent;
                    }
                    false
                })
                .collect();
            let all_residual = !covered.is_empty()
                && covered.iter().all(|n| residual.contains(n))
                && descendants
                    .iter()
                    .all(|d| covered.iter().any(|&c| is_descendant_or_self(forest, *d, c)));
            if all_residual {
                next_active.retain(|n| !covered.contains(n));
                next_active.push(p);
                substituted = true;
            }
        }
        if !substituted {
            break;
        }
        next_active.sort_unstable();
        next_active.dedup();
        active = next_active;
    }
    Ok(matched)
}

fn is_descendant_or_self(forest: &InstanceForest, node: u32, ancestor: u32) -> bool {
    let mut cur = Some(node);
    while let Some(i) = cur {
        if i == ancestor {
            return true;
        }
        cur = forest.node(i).parent;
    }
    false
}

/// Classify one instance against its matched mask by footprint IoU.
pub fn detect_displaced(
    instance_points: &[Point3<f64>],
    post_frame: &CameraFrame,
    matched_mask: Option<&Bitmap>,
    params: &UpdateParams,
) -> (ChangeStatus, f64) {
    let Some(mask) = matched_mask else {
        return (ChangeStatus::Unmatched, 0.0);
    };
    let footprint = instance_footprint(instance_points, post_frame, mask.width, mask.height);
    let iou = footprint.iou(mask);
    if iou < params.tau_iou {
        (ChangeStatus::Displaced, iou)
    } else {
        (ChangeStatus::Static, iou)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unmatched_instances_are_flagged_without_optimization() {
        let frame = crate::update::tests_support::blank_frame(64, 48);
        let params = UpdateParams::default();
        let (status, iou) = detect_displaced(&[], &frame, None, &params);
        assert_eq!(status, ChangeStatus::Unmatched);
        assert_eq!(iou, 0.0);
    }

    #[test]
    fn tau_iou_monotonicity() {
        // Fixed footprint/mask pair: raising tau_iou can only move verdicts
        // from static toward displaced.
        let frame = crate::update::tests_support::blank_frame(64, 48);
        let mut mask = Bitmap::new(64, 48);
        for v in 10..20 {
            for u in 10..25 {
                mask.set(u, v);
            }
        }
        // Points projecting onto part of the mask.
        let mut points = Vec::new();
        for v in 10..20 {
            for u in 10..20 {
                let p_cam = frame.intrinsics.backproject(u as f64, v as f64, 1.0);
                points.push(frame.pose.cam_to_world(&p_cam));
            }
        }
        let mut last_static = true;
        for tau in [0.05, 0.3, 0.6, 0.9, 0.99] {
            let params = UpdateParams {
                tau_iou: tau,
                ..UpdateParams::default()
            };
            let (status, _) = detect_displaced(&points, &frame, Some(&mask), &params);
            let is_static = status == ChangeStatus::Static;
            assert!(
                !(is_static && !last_static),
                "verdict flipped back to static at tau={tau}"
            );
            last_static = is_static;
        }
    }
}
