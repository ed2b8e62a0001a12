//! Class-agnostic AP and language-grounded 3D semantic IoU.

use std::collections::{BTreeMap, HashSet};

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::config::ApInterpolation;
use crate::error::{Error, Result};

pub type VoxelKey = (i64, i64, i64);

/// Floor-quantize points onto a voxel grid of the given edge length.
pub fn voxelize(points: &[Point3<f64>], edge: f64) -> HashSet<VoxelKey> {
    assert!(edge > 0.0, "voxel edge must be positive");
    points
        .iter()
        .map(|p| {
            (
                (p.x / edge).floor() as i64,
                (p.y / edge).floor() as i64,
                (p.z / edge).floor() as i64,
            )
        })
        .collect()
}

/// Intersection over union of two voxel sets; 0 when both are empty.
pub fn instance_iou_3d(a: &HashSet<VoxelKey>, b: &HashSet<VoxelKey>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone)]
pub struct PredictedInstance {
    pub id: u32,
    pub confidence: f64,
    pub voxels: HashSet<VoxelKey>,
}

#[derive(Debug, Clone)]
pub struct GroundTruthInstance {
    pub id: u32,
    pub category: u32,
    pub voxels: HashSet<VoxelKey>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct APReport {
    pub ap25: f64,
    pub ap50: f64,
    /// Mean AP over IoU thresholds 0.50:0.05:0.95.
    pub map: f64,
    pub per_threshold: Vec<(f64, f64)>,
    /// (threshold, (recall, precision) points in prediction order).
    pub curves: Vec<(f64, Vec<(f64, f64)>)>,
}

/// The standard mAP threshold grid 0.50:0.05:0.95 plus 0.25.
pub fn default_thresholds() -> Vec<f64> {
    let mut t = vec![0.25];
    for i in 0..10 {
        t.push(0.50 + 0.05 * i as f64);
    }
    t
}

fn ap_at_threshold(
    preds: &[&PredictedInstance],
    gts: &[GroundTruthInstance],
    threshold: f64,
    interp: ApInterpolation,
) -> (f64, Vec<(f64, f64)>) {
    let mut gt_matched = vec![false; gts.len()];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut curve = Vec::with_capacity(preds.len());
    for pred in preds {
        // best unmatched GT by IoU, ties to lower GT id
        let mut best: Option<(f64, usize)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if gt_matched[gi] {
                continue;
            }
            let iou = instance_iou_3d(&pred.voxels, &gt.voxels);
            if iou < threshold {
                continue;
            }
            let better = match best {
                None => true,
                Some((bi, bgi)) => iou > bi || (iou == bi && gts[gi].id < gts[bgi].id),
            };
            if better {
                best = Some((iou, gi));
            }
        }
        match best {
            Some((_, gi)) => {
                gt_matched[gi] = true;
                tp += 1;
            }
            None => fp += 1,
        }
        curve.push((
            tp as f64 / gts.len() as f64,
            tp as f64 / (tp + fp) as f64,
        ));
    }

    // Precision envelope: max precision at recall >= r.
    let envelope = |r: f64| -> f64 {
        curve
            .iter()
            .filter(|(rec, _)| *rec >= r - 1e-12)
            .map(|(_, prec)| *prec)
            .fold(0.0, f64::max)
    };
    let ap = match interp {
        ApInterpolation::Points101 => {
            (0..=100).map(|i| envelope(i as f64 / 100.0)).sum::<f64>() / 101.0
        }
        ApInterpolation::AllPoints => {
            // area under the envelope over recall breakpoints
            let mut recalls: Vec<f64> = curve.iter().map(|(r, _)| *r).collect();
            recalls.sort_by(|a, b| a.partial_cmp(b).unwrap());
            recalls.dedup();
            let mut area = 0.0;
            let mut prev = 0.0;
            for r in recalls {
                if r > prev {
                    area += (r - prev) * envelope(r);
                    prev = r;
                }
            }
            area
        }
    };
    (ap, curve)
}

/// Average precision with greedy confidence-ordered matching.
///
/// Predictions are sorted by descending confidence (ties by lower id) and
/// each greedily takes the unmatched ground-truth instance with the highest
/// IoU at or above the threshold.
pub fn instance_ap(
    predictions: &[PredictedInstance],
    ground_truth: &[GroundTruthInstance],
    interp: ApInterpolation,
) -> Result<APReport> {
    if ground_truth.is_empty() {
        return Err(Error::NoGroundTruth);
    }
    let mut preds: Vec<&PredictedInstance> = predictions.iter().collect();
    preds.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap()
            .then(a.id.cmp(&b.id))
    });

    let mut per_threshold = Vec::new();
    let mut curves = Vec::new();
    for &t in &default_thresholds() {
        let (ap, curve) = ap_at_threshold(&preds, ground_truth, t, interp);
        per_threshold.push((t, ap));
        curves.push((t, curve));
    }
    let ap25 = per_threshold[0].1;
    let ap50 = per_threshold[1].1;
    let map = per_threshold[1..].iter().map(|(_, ap)| ap).sum::<f64>() / 10.0;
    Ok(APReport {
        ap25,
        ap50,
        map,
        per_threshold,
        curves,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemanticIouReport {
    /// (category, IoU) for categories present in the ground truth.
    pub per_category: Vec<(u32, f64)>,
    pub mean: f64,
    /// Categories skipped because the ground truth lacks them.
    pub warnings: Vec<String>,
}

/// Per-category 3D IoU between the predicted instance voxels chosen for each
/// category and the ground-truth voxels of that category, averaged over
/// categories present in the ground truth.
pub fn semantic_iou(
    category_predictions: &BTreeMap<u32, HashSet<VoxelKey>>,
    ground_truth: &[GroundTruthInstance],
) -> Result<SemanticIouReport> {
    if ground_truth.is_empty() {
        return Err(Error::NoGroundTruth);
    }
    let mut gt_by_category: BTreeMap<u32, HashSet<VoxelKey>> = BTreeMap::new();
    for gt in ground_truth {
        gt_by_category
            .entry(gt.category)
            .or_default()
            .extend(gt.voxels.iter().copied());
    }
    let mut per_category = Vec::new();
    let mut warnings = Vec::new();
    for (&cat, pred) in category_predictions {
        match gt_by_category.get(&cat) {
            Some(gt) => per_category.push((cat, instance_iou_3d(pred, gt))),
            None => warnings.push(format!(
                "category {cat} absent from ground truth; excluded from the mean"
            )),
        }
    }
    let mean = if per_category.is_empty() {
        0.0
    } else {
        per_category.iter().map(|(_, v)| v).sum::<f64>() / per_category.len() as f64
    };
    Ok(SemanticIouReport {
        per_category,
        mean,
        warnings,
    })
}

/// CSV rendering of an AP report (one row), mirroring the headline table
/// columns.
pub fn ap_report_csv(report: &APReport, seconds: f64) -> String {
    format!(
        "ap25,ap50,map,time_s\n{:.4},{:.4},{:.4},{:.2}\n",
        report.ap25, report.ap50, report.map, seconds
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vox(keys: &[(i64, i64, i64)]) -> HashSet<VoxelKey> {
        keys.iter().copied().collect()
    }

    #[test]
    fn voxelize_examples() {
        let edge = 0.010;
        let pts = vec![
            Point3::new(0.001, 0.002, 0.003),
            Point3::new(0.009, 0.0, 0.009),
        ];
        assert_eq!(voxelize(&pts, edge).len(), 1);
        let pts = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(0.015, 0.0, 0.0)];
        assert_eq!(voxelize(&pts, edge).len(), 2);
        assert!(voxelize(&[], edge).is_empty());
    }

    #[test]
    fn iou_examples() {
        let a = vox(&[(0, 0, 0), (1, 0, 0)]);
        assert_eq!(instance_iou_3d(&a, &a), 1.0);
        let b = vox(&[(5, 5, 5)]);
        assert_eq!(instance_iou_3d(&a, &b), 0.0);
        let c: HashSet<VoxelKey> = (0..30).map(|i| (i, 0, 0)).collect();
        let d: HashSet<VoxelKey> = (0..60).map(|i| (i, 0, 0)).collect();
        assert!((instance_iou_3d(&c, &d) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn perfect_single_prediction_scores_one() {
        let voxels = vox(&[(0, 0, 0), (1, 1, 1)]);
        let preds = vec![PredictedInstance {
            id: 0,
            confidence: 1.0,
            voxels: voxels.clone(),
        }];
        let gts = vec![GroundTruthInstance {
            id: 0,
            category: 0,
            voxels,
        }];
        let r = instance_ap(&preds, &gts, ApInterpolation::Points101).unwrap();
        assert!((r.ap25 - 1.0).abs() < 1e-12);
        assert!((r.ap50 - 1.0).abs() < 1e-12);
        assert!((r.map - 1.0).abs() < 1e-12);
    }

    #[test]
    fn low_confidence_spurious_prediction_keeps_ap_one() {
        let voxels = vox(&[(0, 0, 0)]);
        let preds = vec![
            PredictedInstance {
                id: 0,
                confidence: 0.9,
                voxels: voxels.clone(),
            },
            PredictedInstance {
                id: 1,
                confidence: 0.1,
                voxels: vox(&[(9, 9, 9)]),
            },
        ];
        let gts = vec![GroundTruthInstance {
            id: 0,
            category: 0,
            voxels,
        }];
        let r = instance_ap(&preds, &gts, ApInterpolation::Points101).unwrap();
        assert!((r.ap50 - 1.0).abs() < 1e-12, "ap50 = {}", r.ap50);
    }

    #[test]
    fn empty_ground_truth_is_an_error() {
        assert!(matches!(
            instance_ap(&[], &[], ApInterpolation::Points101),
            Err(Error::NoGroundTruth)
        ));
    }

    #[test]
    fn ap_monotone_non_increasing_in_threshold() {
        let preds = vec![
            PredictedInstance {
                id: 0,
                confidence: 0.8,
                voxels: (0..10).map(|i| (i, 0, 0)).collect(),
            },
            PredictedInstance {
                id: 1,
                confidence: 0.7,
                voxels: (0..4).map(|i| (i, 5, 0)).collect(),
            },
        ];
        let gts = vec![
            GroundTruthInstance {
                id: 0,
                category: 0,
                voxels: (0..12).map(|i| (i, 0, 0)).collect(),
            },
            GroundTruthInstance {
                id: 1,
                category: 1,
                voxels: (0..10).map(|i| (i, 5, 0)).collect(),
            },
        ];
        let r = instance_ap(&preds, &gts, ApInterpolation::Points101).unwrap();
        for w in r.per_threshold.windows(2) {
            assert!(w[0].1 >= w[1].1 - 1e-12);
        }
    }

    #[test]
    fn confidence_rescaling_does_not_change_ap() {
        let mk = |conf: &[f64]| -> Vec<PredictedInstance> {
            conf.iter()
                .enumerate()
                .map(|(i, &c)| PredictedInstance {
                    id: i as u32,
                    confidence: c,
                    voxels: (0..10).map(|k| (k, i as i64, 0)).collect(),
                })
                .collect()
        };
        let gts: Vec<GroundTruthInstance> = (0..3)
            .map(|i| GroundTruthInstance {
                id: i as u32,
                category: 0,
                voxels: (0..10).map(|k| (k, i as i64, 0)).collect(),
            })
            .collect();
        let r1 = instance_ap(&mk(&[3.0, 2.0, 1.0]), &gts, ApInterpolation::Points101).unwrap();
        let r2 = instance_ap(&mk(&[30.0, 20.0, 10.0]), &gts, ApInterpolation::Points101).unwrap();
        assert_eq!(r1.per_threshold, r2.per_threshold);
    }

    #[test]
    fn semantic_iou_examples() {
        let cat_voxels = |base: i64| -> HashSet<VoxelKey> { (0..10).map(|i| (i, base, 0)).collect() };
        let gts = vec![
            GroundTruthInstance {
                id: 0,
                category: 1,
                voxels: cat_voxels(0),
            },
            GroundTruthInstance {
                id: 1,
                category: 2,
                voxels: cat_voxels(5),
            },
        ];
        // perfect
        let mut preds = BTreeMap::new();
        preds.insert(1, cat_voxels(0));
        preds.insert(2, cat_voxels(5));
        let r = semantic_iou(&preds, &gts).unwrap();
        assert!((r.mean - 1.0).abs() < 1e-12);
        // one of two fully wrong
        let mut preds = BTreeMap::new();
        preds.insert(1, cat_voxels(0));
        preds.insert(2, cat_voxels(9));
        let r = semantic_iou(&preds, &gts).unwrap();
        assert!((r.mean - 0.5).abs() < 1e-12);
        // unknown category warned and excluded
        let mut preds = BTreeMap::new();
        preds.insert(1, cat_voxels(0));
        preds.insert(77, cat_voxels(5));
        let r = semantic_iou(&preds, &gts).unwrap();
        assert_eq!(r.per_category.len(), 1);
        assert_eq!(r.warnings.len(), 1);
        assert!((r.mean - 1.0).abs() < 1e-12);
    }
}
