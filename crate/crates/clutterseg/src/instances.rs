//! Conversion of converged groups into 3D instances by weighted majority
//! vote over super-voxels.

use std::collections::HashMap;

use crate::embedding::Embedding;
use crate::error::Result;
use crate::geometry::supervoxel::SuperVoxelSet;
use crate::grouping::graph::{GroupNode, SimilarityContext};
use crate::grouping::occupancy::{NodeKey, SparseOccupancy};
use crate::semantics::aggregate_group_embedding;

#[derive(Debug, Clone)]
pub struct Instance3D {
    pub id: u32,
    pub supervoxels: Vec<u32>,
    /// Group size: number of constituent masks.
    pub confidence: u32,
    pub embedding: Embedding,
    /// Cloud point indices covered by the instance's super-voxels.
    pub points: Vec<u32>,
}

/// Per-super-voxel assignment: each super-voxel goes to the group with the
/// highest summed occupancy, ties broken by higher confidence then lower
/// group id; zero-score super-voxels stay unassigned.
pub fn majority_vote(
    groups: &[&GroupNode],
    occupancies: &HashMap<NodeKey, SparseOccupancy>,
    supervoxels: &SuperVoxelSet,
) -> Vec<Option<usize>> {
    // score[sv][group index]
    let mut scores: Vec<HashMap<usize, f64>> = vec![HashMap::new(); supervoxels.len()];
    for (gi, group) in groups.iter().enumerate() {
        for member in &group.members {
            if let Some(occ) = occupancies.get(member) {
                for &(sv, o) in occ {
                    *scores[sv as usize].entry(gi).or_insert(0.0) += o;
                }
            }
        }
    }
    scores
        .into_iter()
        .map(|per_group| {
            let mut best: Option<(f64, u32, u32, usize)> = None; // score, conf, neg-id order via tuple
            for (gi, score) in per_group {
                if score <= 0.0 {
                    continue;
                }
                let conf = groups[gi].members.len() as u32;
                let id = groups[gi].id;
                let better = match best {
                    None => true,
                    Some((bs, bc, bid, _)) => {
                        (score, conf, std::cmp::Reverse(id))
                            > (bs, bc, std::cmp::Reverse(bid))
                    }
                };
                if better {
                    best = Some((score, conf, id, gi));
                }
            }
            best.map(|(_, _, _, gi)| gi)
        })
        .collect()
}

/// Assemble instances from the final graph nodes with at least
/// `min_group_size` constituent masks.
pub fn build_instances(
    groups: &[&GroupNode],
    occupancies: &HashMap<NodeKey, SparseOccupancy>,
    supervoxels: &SuperVoxelSet,
    ctx: &SimilarityContext,
) -> Result<Vec<Instance3D>> {
    let assignment = majority_vote(groups, occupancies, supervoxels);
    let mut out = Vec::new();
    for (gi, group) in groups.iter().enumerate() {
        let svs: Vec<u32> = assignment
            .iter()
            .enumerate()
            .filter(|(_, a)| **a == Some(gi))
            .map(|(sv, _)| sv as u32)
            .collect();
        let mut points = Vec::new();
        for &sv in &svs {
            points.extend_from_slice(&supervoxels.voxels[sv as usize].members);
        }
        points.sort_unstable();
        let constituents: Vec<(&Embedding, u32)> = group
            .members
            .iter()
            .map(|&m| (ctx.embedding(m), ctx.mask_area(m)))
            .collect();
        let embedding = aggregate_group_embedding(&constituents)?;
        out.push(Instance3D {
            id: gi as u32,
            supervoxels: svs,
            confidence: group.members.len() as u32,
            embedding,
            points,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Point3, Vector3};

    fn sv_set(n: usize) -> SuperVoxelSet {
        let voxels = (0..n)
            .map(|i| crate::geometry::supervoxel::SuperVoxel {
                id: i as u32,
                members: vec![i as u32],
                centroid: Point3::origin(),
                mean_normal: Vector3::z(),
                weight: 1,
                weight_normalized: 1.0 / n as f64,
            })
            .collect();
        SuperVoxelSet {
            voxels,
            point_to_voxel: (0..n as u32).collect(),
        }
    }

    fn group(id: u32, members: Vec<NodeKey>) -> GroupNode {
        let frames = members.iter().map(|m| m.frame).collect();
        GroupNode {
            id,
            members,
            frames,
            grouped: true,
        }
    }

    fn key(frame: u32, node: u32) -> NodeKey {
        NodeKey { frame, node }
    }

    #[test]
    fn argmax_assignment() {
        let svs = sv_set(1);
        let g1 = group(0, vec![key(0, 0), key(1, 0)]);
        let g2 = group(1, vec![key(2, 0)]);
        let mut occ = HashMap::new();
        occ.insert(key(0, 0), vec![(0u32, 0.9)]);
        occ.insert(key(1, 0), vec![(0u32, 0.8)]);
        occ.insert(key(2, 0), vec![(0u32, 0.3)]);
        let assign = majority_vote(&[&g1, &g2], &occ, &svs);
        assert_eq!(assign, vec![Some(0)]); // 1.7 beats 0.3
    }

    #[test]
    fn zero_scores_stay_unassigned() {
        let svs = sv_set(2);
        let g1 = group(0, vec![key(0, 0)]);
        let mut occ = HashMap::new();
        occ.insert(key(0, 0), vec![(0u32, 0.5)]);
        let assign = majority_vote(&[&g1], &occ, &svs);
        assert_eq!(assign, vec![Some(0), None]);
    }

    #[test]
    fn score_ties_break_by_confidence_then_lower_id() {
        let svs = sv_set(1);
        // Equal score 0.6; g_small has 1 member, g_big has 2.
        let g_small = group(5, vec![key(0, 0)]);
        let g_big = group(9, vec![key(1, 0), key(2, 0)]);
        let mut occ = HashMap::new();
        occ.insert(key(0, 0), vec![(0u32, 0.6)]);
        occ.insert(key(1, 0), vec![(0u32, 0.3)]);
        occ.insert(key(2, 0), vec![(0u32, 0.3)]);
        let assign = majority_vote(&[&g_small, &g_big], &occ, &svs);
        assert_eq!(assign, vec![Some(1)], "higher confidence wins the tie");

        // Same confidence, same score: lower group id wins.
        let g_a = group(2, vec![key(0, 0)]);
        let g_b = group(7, vec![key(1, 1)]);
        let mut occ = HashMap::new();
        occ.insert(key(0, 0), vec![(0u32, 0.6)]);
        occ.insert(key(1, 1), vec![(0u32, 0.6)]);
        let assign = majority_vote(&[&g_a, &g_b], &occ, &svs);
        assert_eq!(assign, vec![Some(0)]);
    }

    #[test]
    fn adding_evidence_never_flips_away() {
        let svs = sv_set(1);
        let g1 = group(0, vec![key(0, 0)]);
        let g2 = group(1, vec![key(1, 0)]);
        let mut occ = HashMap::new();
        occ.insert(key(0, 0), vec![(0u32, 0.7)]);
        occ.insert(key(1, 0), vec![(0u32, 0.4)]);
        assert_eq!(majority_vote(&[&g1, &g2], &occ, &svs), vec![Some(0)]);
        // extend winning group with another positive-occupancy mask
        let g1b = group(0, vec![key(0, 0), key(2, 0)]);
        occ.insert(key(2, 0), vec![(0u32, 0.2)]);
        assert_eq!(majority_vote(&[&g1b, &g2], &occ, &svs), vec![Some(0)]);
    }
}
