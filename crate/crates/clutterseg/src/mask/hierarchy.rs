//! Per-frame mask hierarchies ordered by pixel containment.
//!
//! Each frame's masks form a forest: a mask's parent is the smallest-area
//! mask containing it at ratio >= tau_contain. Leaves are the finest
//! fragments and serve as proper-segment candidates downstream.

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::mask::rle::RleMask;

#[derive(Debug, Clone)]
pub struct MaskNode {
    pub mask_id: u32,
    pub frame: u32,
    pub rle: RleMask,
    pub area: u32,
    /// Arena index of the parent node, if any.
    pub parent: Option<u32>,
    /// Arena indices of children.
    pub children: Vec<u32>,
    pub embedding: Embedding,
}

#[derive(Debug, Clone)]
pub struct InstanceForest {
    pub frame: u32,
    pub nodes: Vec<MaskNode>,
    pub roots: Vec<u32>,
    pub leaves: Vec<u32>,
    /// (duplicate mask id, kept mask id) pairs removed by deduplication.
    pub aliases: Vec<(u32, u32)>,
}

impl InstanceForest {
    pub fn node(&self, idx: u32) -> &MaskNode {
        &self.nodes[idx as usize]
    }

    /// Longest root-to-leaf path length (nodes counted), 0 for empty forest.
    pub fn max_depth(&self) -> usize {
        fn depth(forest: &InstanceForest, idx: u32) -> usize {
            1 + forest.nodes[idx as usize]
                .children
                .iter()
                .map(|&c| depth(forest, c))
                .max()
                .unwrap_or(0)
        }
        self.roots.iter().map(|&r| depth(self, r)).max().unwrap_or(0)
    }

    /// Arena indices of all original-leaf descendants of `idx`
    /// (the node itself when it is a leaf).
    pub fn leaf_descendants(&self, idx: u32) -> Vec<u32> {
        let node = &self.nodes[idx as usize];
        if node.children.is_empty() {
            return vec![idx];
        }
        let mut out = Vec::new();
        for &c in &node.children {
            out.extend(self.leaf_descendants(c));
        }
        out
    }
}

/// Fraction of `b` covered by `a`: |a ∩ b| / |b|.
pub fn containment_ratio(a: &RleMask, b: &RleMask) -> Result<f64> {
    if b.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(a.intersection_area(b) as f64 / b.area() as f64)
}

/// Build the containment forest for one frame's masks.
///
/// Identical duplicate masks are removed first (lowest id kept, the rest
/// recorded as aliases). Parent selection is deterministic: the containing
/// mask with the smallest area wins, ties broken by lower mask id.
pub fn build_instance_forest(
    frame: u32,
    masks: &[(u32, RleMask)],
    embeddings: impl Fn(u32) -> Option<Embedding>,
    tau_contain: f64,
) -> Result<InstanceForest> {
    // Deduplicate identical pixel sets.
    let mut sorted: Vec<&(u32, RleMask)> = masks.iter().collect();
    sorted.sort_by_key(|(id, _)| *id);
    let mut kept: Vec<(u32, &RleMask)> = Vec::new();
    let mut aliases = Vec::new();
    'next_mask: for (id, m) in sorted {
        if m.is_empty() {
            continue;
        }
        for (kid, km) in &kept {
            if *km == m {
                aliases.push((*id, *kid));
                continue 'next_mask;
            }
        }
        kept.push((*id, m));
    }

    let mut nodes: Vec<MaskNode> = kept
        .iter()
        .map(|(id, m)| {
            let embedding = embeddings(*id).ok_or_else(|| {
                Error::IncompleteBundle(format!("frame {frame}: mask {id} has no embedding"))
            })?;
            Ok(MaskNode {
                mask_id: *id,
                frame,
                rle: (*m).clone(),
                area: m.area(),
                parent: None,
                children: Vec::new(),
                embedding,
            })
        })
        .collect::<Result<_>>()?;

    // Parent of b: smallest-area container, ties by lower mask id. Equal-area
    // mutual containment cannot cycle because only the lower id may parent.
    for b in 0..nodes.len() {
        let mut best: Option<(u32, u32, u32)> = None; // (area, mask_id, idx)
        for a in 0..nodes.len() {
            if a == b {
                continue;
            }
            let bigger = nodes[a].area > nodes[b].area
                || (nodes[a].area == nodes[b].area && nodes[a].mask_id < nodes[b].mask_id);
            if !bigger {
                continue;
            }
            let ratio = containment_ratio(&nodes[a].rle, &nodes[b].rle)?;
            if ratio >= tau_contain {
                let cand = (nodes[a].area, nodes[a].mask_id, a as u32);
                if best.is_none() || cand < best.unwrap() {
                    best = Some(cand);
                }
            }
        }
        if let Some((_, _, parent_idx)) = best {
            nodes[b].parent = Some(parent_idx);
        }
    }
    for b in 0..nodes.len() {
        if let Some(p) = nodes[b].parent {
            nodes[p as usize].children.push(b as u32);
        }
    }
    for node in &mut nodes {
        node.children.sort_unstable();
    }

    let roots = (0..nodes.len() as u32)
        .filter(|&i| nodes[i as usize].parent.is_none())
        .collect();
    let leaves = (0..nodes.len() as u32)
        .filter(|&i| nodes[i as usize].children.is_empty())
        .collect();

    Ok(InstanceForest {
        frame,
        nodes,
        roots,
        leaves,
        aliases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn embed() -> Embedding {
        Embedding::from_raw(vec![1.0, 0.0]).unwrap()
    }

    fn rect(w: u32, h: u32, x0: u32, y0: u32, x1: u32, y1: u32) -> RleMask {
        let runs = (y0..y1).map(|v| (v * w + x0, x1 - x0)).collect();
        RleMask::new(w, h, runs).unwrap()
    }

    #[test]
    fn containment_ratio_examples() {
        let a = rect(20, 20, 0, 0, 10, 10);
        let b = rect(20, 20, 2, 2, 6, 6);
        assert_eq!(containment_ratio(&a, &b).unwrap(), 1.0);
        let c = rect(20, 20, 12, 12, 18, 18);
        assert_eq!(containment_ratio(&a, &c).unwrap(), 0.0);
        // a covers 90 of b2's 100 pixels
        let b2 = rect(20, 20, 1, 0, 11, 10); // 10x10, one column outside a
        assert!((containment_ratio(&a, &b2).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let a = rect(20, 20, 0, 0, 10, 10);
        let empty = RleMask::new(20, 20, vec![]).unwrap();
        assert!(matches!(
            containment_ratio(&a, &empty),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn chain_of_nested_masks() {
        // cluster ⊃ cup ⊃ handle
        let cluster = rect(40, 40, 0, 0, 30, 30);
        let cup = rect(40, 40, 5, 5, 20, 20);
        let handle = rect(40, 40, 6, 6, 10, 10);
        let masks = vec![(0, cluster), (1, cup), (2, handle)];
        let forest = build_instance_forest(0, &masks, |_| Some(embed()), 0.95).unwrap();
        assert_eq!(forest.roots, vec![0]);
        assert_eq!(forest.leaves, vec![2]);
        assert_eq!(forest.nodes[2].parent, Some(1));
        assert_eq!(forest.nodes[1].parent, Some(0));
        assert_eq!(forest.max_depth(), 3);
    }

    #[test]
    fn disjoint_masks_are_single_node_trees() {
        let masks = vec![
            (0, rect(40, 40, 0, 0, 8, 8)),
            (1, rect(40, 40, 10, 10, 18, 18)),
            (2, rect(40, 40, 20, 20, 28, 28)),
        ];
        let forest = build_instance_forest(0, &masks, |_| Some(embed()), 0.95).unwrap();
        assert_eq!(forest.roots.len(), 3);
        assert_eq!(forest.leaves.len(), 3);
    }

    #[test]
    fn duplicates_are_aliased_not_errors() {
        let m = rect(40, 40, 0, 0, 8, 8);
        let masks = vec![(3, m.clone()), (7, m.clone())];
        let forest = build_instance_forest(0, &masks, |_| Some(embed()), 0.95).unwrap();
        assert_eq!(forest.nodes.len(), 1);
        assert_eq!(forest.aliases, vec![(7, 3)]);
    }

    #[test]
    fn parent_is_smallest_container() {
        let outer = rect(60, 60, 0, 0, 50, 50);
        let middle = rect(60, 60, 5, 5, 35, 35);
        let inner = rect(60, 60, 10, 10, 20, 20);
        let masks = vec![(0, outer), (1, middle), (2, inner)];
        let forest = build_instance_forest(0, &masks, |_| Some(embed()), 0.95).unwrap();
        assert_eq!(forest.nodes[2].parent, Some(1));
    }

    #[test]
    fn order_invariance() {
        let a = rect(60, 60, 0, 0, 50, 50);
        let b = rect(60, 60, 5, 5, 35, 35);
        let c = rect(60, 60, 10, 10, 20, 20);
        let d = rect(60, 60, 40, 40, 48, 48);
        let m1 = vec![(0, a.clone()), (1, b.clone()), (2, c.clone()), (3, d.clone())];
        let m2 = vec![(3, d), (1, b), (2, c), (0, a)];
        let f1 = build_instance_forest(0, &m1, |_| Some(embed()), 0.95).unwrap();
        let f2 = build_instance_forest(0, &m2, |_| Some(embed()), 0.95).unwrap();
        let rel1: Vec<(u32, Option<u32>)> = f1
            .nodes
            .iter()
            .map(|n| (n.mask_id, n.parent.map(|p| f1.nodes[p as usize].mask_id)))
            .collect();
        let rel2: Vec<(u32, Option<u32>)> = f2
            .nodes
            .iter()
            .map(|n| (n.mask_id, n.parent.map(|p| f2.nodes[p as usize].mask_id)))
            .collect();
        let mut rel1 = rel1;
        let mut rel2 = rel2;
        rel1.sort();
        rel2.sort();
        assert_eq!(rel1, rel2);
    }

    #[test]
    fn forest_is_acyclic() {
        let masks = vec![
            (0, rect(60, 60, 0, 0, 50, 50)),
            (1, rect(60, 60, 5, 5, 35, 35)),
            (2, rect(60, 60, 10, 10, 20, 20)),
            (3, rect(60, 60, 36, 36, 49, 49)),
        ];
        let forest = build_instance_forest(0, &masks, |_| Some(embed()), 0.95).unwrap();
        for start in 0..forest.nodes.len() as u32 {
            let mut seen = std::collections::HashSet::new();
            let mut cur = Some(start);
            while let Some(i) = cur {
                assert!(seen.insert(i), "cycle through node {i}");
                cur = forest.nodes[i as usize].parent;
            }
        }
    }
}
