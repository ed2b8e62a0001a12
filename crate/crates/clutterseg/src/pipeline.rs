//! End-to-end orchestration: segmentation, evaluation bridging and the
//! post-interaction update.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::Point3;
use rayon::prelude::*;

use crate::config::PipelineConfig;
use crate::error::Result;
use crate::eval::{GroundTruthInstance, PredictedInstance};
use crate::geometry::cloud::{estimate_normals, fuse_and_downsample, PointCloud};
use crate::geometry::supervoxel::{build_supervoxels, SuperVoxelSet};
use crate::grouping::graph::{
    construct_leaf_graph, group_by_similarity, substitute_residuals, GroupNode, SimilarityContext,
};
use crate::grouping::occupancy::{build_occupancy_table, project_cloud_to_frame};
use crate::instances::{build_instances, Instance3D};
use crate::mask::hierarchy::{build_instance_forest, InstanceForest};
use crate::scene::frame::{CameraFrame, SceneBundle};
use crate::scene::outputs::GtInstanceMeta;
use crate::update::change::{
    detect_displaced, match_post_masks, ChangeEntry, ChangeReport, ChangeStatus,
};
use crate::update::optimize::{optimize_transform, InstanceView, OptimizeStatus};

#[derive(Debug, Clone)]
pub struct SceneState {
    pub cloud: PointCloud,
    pub supervoxels: Option<SuperVoxelSet>,
    pub instances: Vec<Instance3D>,
}

#[derive(Debug, Clone, Default)]
pub struct PipelineStats {
    /// (stage name, seconds) in execution order.
    pub timings: Vec<(String, f64)>,
    pub point_count: usize,
    pub supervoxel_count: usize,
    pub leaf_count: usize,
    pub merges: usize,
    pub substitution_rounds: usize,
    pub substitutions: usize,
    pub group_count: usize,
}

impl PipelineStats {
    pub fn total_seconds(&self) -> f64 {
        self.timings.iter().map(|(_, s)| s).sum()
    }

    pub fn timing_log(&self) -> String {
        let mut out = String::new();
        for (name, secs) in &self.timings {
            out.push_str(&format!("{name} {secs:.3}\n"));
        }
        out.push_str(&format!("total {:.3}\n", self.total_seconds()));
        out
    }
}

struct StageTimer {
    last: Instant,
    timings: Vec<(String, f64)>,
}

impl StageTimer {
    fn new() -> Self {
        StageTimer {
            last: Instant::now(),
            timings: Vec::new(),
        }
    }

    fn mark(&mut self, name: &str) {
        let now = Instant::now();
        self.timings
            .push((name.to_string(), (now - self.last).as_secs_f64()));
        self.last = now;
    }
}

/// Run the full segmentation pipeline on a validated bundle.
pub fn segment_scene(
    bundle: &SceneBundle,
    config: &PipelineConfig,
) -> Result<(SceneState, PipelineStats)> {
    bundle.validate()?;
    let mut timer = StageTimer::new();
    let mut stats = PipelineStats::default();

    let mut cloud = fuse_and_downsample(&bundle.frames, &config.geometry);
    timer.mark("fuse");
    estimate_normals(&mut cloud, config.geometry.k_nn)?;
    timer.mark("normals");
    let supervoxels = build_supervoxels(&cloud, &config.geometry)?;
    timer.mark("supervoxels");
    stats.point_count = cloud.len();
    stats.supervoxel_count = supervoxels.len();

    let forests: Vec<InstanceForest> = bundle
        .frames
        .iter()
        .map(|frame| {
            build_instance_forest(
                frame.frame_index,
                &frame.masks,
                |id| frame.mask_embeddings.get(&id).cloned(),
                config.grouping.tau_contain,
            )
        })
        .collect::<Result<_>>()?;
    timer.mark("forests");

    let projections: Vec<_> = bundle
        .frames
        .par_iter()
        .map(|frame| project_cloud_to_frame(&cloud, frame, config.grouping.visibility_margin_m))
        .collect();
    let occupancies = build_occupancy_table(&forests, &supervoxels, &projections);
    timer.mark("occupancy");

    let weights: Vec<f64> = supervoxels
        .voxels
        .iter()
        .map(|sv| sv.weight_normalized)
        .collect();
    let mut ctx = SimilarityContext::new(&occupancies, &forests, &weights, config.grouping.epsilon);
    let mut graph = construct_leaf_graph(&forests, &mut ctx);
    stats.leaf_count = graph.stats.original_leaf_count;
    timer.mark("leaf_graph");

    group_by_similarity(
        &mut graph,
        &mut ctx,
        config.grouping.tau_spat,
        config.grouping.tau_sem,
    );
    timer.mark("grouping");

    if config.grouping.enable_substitution {
        substitute_residuals(
            &mut graph,
            &mut ctx,
            config.grouping.tau_spat,
            config.grouping.tau_sem,
        );
    }
    timer.mark("substitution");
    stats.merges = graph.stats.merges;
    stats.substitution_rounds = graph.stats.substitution_rounds;
    stats.substitutions = graph.stats.substitutions;

    let groups: Vec<&GroupNode> = graph
        .nodes
        .values()
        .filter(|n| n.members.len() >= config.grouping.min_group_size)
        .collect();
    let instances = build_instances(&groups, &occupancies, &supervoxels, &ctx)?;
    timer.mark("vote");
    stats.group_count = instances.len();
    stats.timings = timer.timings;

    Ok((
        SceneState {
            cloud,
            supervoxels: Some(supervoxels),
            instances,
        },
        stats,
    ))
}

/// Voxelized predictions for the AP evaluator; confidence is the group size.
pub fn predicted_instances_for_eval(state: &SceneState, edge: f64) -> Vec<PredictedInstance> {
    state
        .instances
        .iter()
        .map(|inst| {
            let points: Vec<Point3<f64>> = inst
                .points
                .iter()
                .map(|&i| state.cloud.positions[i as usize])
                .collect();
            PredictedInstance {
                id: inst.id,
                confidence: inst.confidence as f64,
                voxels: crate::eval::voxelize(&points, edge),
            }
        })
        .collect()
}

/// Voxelized ground truth from labeled surface points.
pub fn gt_instances_for_eval(
    points: &[(Point3<f64>, u32)],
    meta: &[GtInstanceMeta],
    edge: f64,
) -> Vec<GroundTruthInstance> {
    let mut per_instance: BTreeMap<u32, Vec<Point3<f64>>> = BTreeMap::new();
    for (p, id) in points {
        per_instance.entry(*id).or_default().push(*p);
    }
    meta.iter()
        .filter_map(|m| {
            per_instance.get(&m.id).map(|pts| GroundTruthInstance {
                id: m.id,
                category: m.category,
                voxels: crate::eval::voxelize(pts, edge),
            })
        })
        .collect()
}

/// Apply a change report: transform displaced instances' points and
/// normals, refresh their super-voxels, leave everything else untouched.
pub fn apply_update(state: &mut SceneState, report: &ChangeReport) {
    for entry in &report.entries {
        if entry.status != ChangeStatus::Displaced {
            continue;
        }
        let Some(transform) = &entry.transform else {
            continue;
        };
        let Some(inst) = state.instances.iter().find(|i| i.id == entry.instance_id) else {
            continue;
        };
        for &pi in &inst.points {
            let i = pi as usize;
            state.cloud.positions[i] = transform.apply(&state.cloud.positions[i]);
            if i < state.cloud.normals.len() {
                state.cloud.normals[i] = transform.rotate_vec(&state.cloud.normals[i]);
            }
        }
        if let Some(svs) = &mut state.supervoxels {
            for &sv in &inst.supervoxels {
                svs.refresh_voxel(sv, &state.cloud);
            }
        }
    }
}

/// Match post-interaction masks, flag displaced instances, recover their
/// rigid motions and apply the update to the scene state.
pub fn update_scene(
    state: &mut SceneState,
    post_frame: &CameraFrame,
    config: &PipelineConfig,
) -> Result<ChangeReport> {
    let forest = build_instance_forest(
        post_frame.frame_index,
        &post_frame.masks,
        |id| post_frame.mask_embeddings.get(&id).cloned(),
        config.grouping.tau_contain,
    )?;
    let matched = match_post_masks(
        post_frame,
        &forest,
        &state.instances,
        &state.cloud.positions,
        &config.grouping,
    )?;

    struct Pending {
        instance_id: u32,
        mask_id: Option<u32>,
        status: ChangeStatus,
        iou: f64,
        view: Option<InstanceView>,
        mask_idx: Option<u32>,
    }

    let mut pending: Vec<Pending> = Vec::new();
    for inst in &state.instances {
        let node_idx = matched.get(&inst.id).copied();
        let points: Vec<Point3<f64>> = inst
            .points
            .iter()
            .map(|&i| state.cloud.positions[i as usize])
            .collect();
        let (status, iou, mask_id) = match node_idx {
            None => (ChangeStatus::Unmatched, 0.0, None),
            Some(idx) => {
                let node = forest.node(idx);
                let bitmap = node.rle.to_bitmap();
                let (status, iou) =
                    detect_displaced(&points, post_frame, Some(&bitmap), &config.update);
                (status, iou, Some(node.mask_id))
            }
        };
        let view = (status == ChangeStatus::Displaced).then(|| {
            let colors: Vec<[f64; 3]> = inst
                .points
                .iter()
                .map(|&i| state.cloud.colors[i as usize])
                .collect();
            InstanceView::new(points.clone(), colors)
        });
        pending.push(Pending {
            instance_id: inst.id,
            mask_id,
            status,
            iou,
            view,
            mask_idx: node_idx,
        });
    }

    let entries: Vec<ChangeEntry> = pending
        .par_iter()
        .map(|p| {
            let mut entry = ChangeEntry {
                instance_id: p.instance_id,
                matched_mask: p.mask_id,
                projection_iou: p.iou,
                status: p.status,
                transform: None,
                final_loss: None,
                final_iou: None,
            };
            if let (ChangeStatus::Displaced, Some(view), Some(idx)) =
                (p.status, p.view.as_ref(), p.mask_idx)
            {
                let bitmap = forest.node(idx).rle.to_bitmap();
                let outcome = optimize_transform(view, post_frame, &bitmap, &config.update);
                match outcome.status {
                    OptimizeStatus::Failed => {
                        // leave the instance untouched; report the failure
                        entry.transform = None;
                        entry.final_loss = None;
                        entry.final_iou = Some(0.0);
                        entry.status = ChangeStatus::Displaced;
                    }
                    _ => {
                        entry.transform = Some(outcome.transform);
                        entry.final_loss = Some(outcome.final_loss);
                        entry.final_iou = Some(outcome.final_iou);
                    }
                }
            }
            entry
        })
        .collect();

    let report = ChangeReport { entries };
    apply_update(state, &report);
    Ok(report)
}
