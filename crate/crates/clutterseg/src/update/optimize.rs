//! Coarse-to-fine SE(3) refinement of displaced instances.
//!
//! Six parameters (axis-angle about the instance centroid, then translation)
//! are descended with central finite differences, momentum and a
//! backtracking step control. The silhouette and photometric point sets are
//! re-selected at each iterate and held fixed during gradient evaluation, so
//! the per-iteration objective is smooth.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use crate::config::{StageWeights, UpdateParams};
use crate::mask::rle::Bitmap;
use crate::scene::frame::CameraFrame;
use crate::update::contour::footprint_bitmap;
use crate::update::losses::{chamfer_loss, combine_losses, reg_z_loss, MaskTarget};
use crate::update::transform::RigidTransform;

/// The data of one instance entering optimization.
pub struct InstanceView {
    pub points: Vec<Point3<f64>>,
    pub colors: Vec<[f64; 3]>,
    /// Rotation pivot; the centroid of the instance points.
    pub pivot: Point3<f64>,
}

impl InstanceView {
    pub fn new(points: Vec<Point3<f64>>, colors: Vec<[f64; 3]>) -> Self {
        let mut pivot = Vector3::zeros();
        for p in &points {
            pivot += p.coords;
        }
        if !points.is_empty() {
            pivot /= points.len() as f64;
        }
        InstanceView {
            points,
            colors,
            pivot: Point3::from(pivot),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum OptimizeStatus {
    /// Coarse stage alone reached the IoU bar.
    EarlyExit,
    /// Both stages ran.
    Refined,
    /// Degenerate inputs; identity transform returned.
    Failed,
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct TracePoint {
    pub stage: u8,
    pub iteration: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    /// World-frame rigid motion of the instance.
    pub transform: RigidTransform,
    pub final_iou: f64,
    pub final_loss: f64,
    pub status: OptimizeStatus,
    pub trace: Vec<TracePoint>,
}

/// Six-parameter state: rotation (scaled axis) about the pivot, then a
/// translation delta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theta(pub [f64; 6]);

impl Theta {
    fn zero() -> Self {
        Theta([0.0; 6])
    }

    pub fn to_world(&self, pivot: &Point3<f64>) -> RigidTransform {
        RigidTransform::about_point(
            Vector3::new(self.0[0], self.0[1], self.0[2]),
            Vector3::new(self.0[3], self.0[4], self.0[5]),
            pivot,
        )
    }

    fn delta(&self) -> Vector3<f64> {
        Vector3::new(self.0[3], self.0[4], self.0[5])
    }
}

/// Smooth per-iteration objective: silhouette points and photometric
/// support selected at a reference state, then evaluated at nearby states.
pub struct LossEvaluator<'a> {
    instance: &'a InstanceView,
    frame: &'a CameraFrame,
    target: &'a MaskTarget,
    weights: (f64, f64, f64),
    /// Indices of points whose projections form the footprint contour.
    silhouette: Vec<u32>,
    /// Indices of points contributing to the photometric term.
    photo_support: Vec<u32>,
}

fn project_point(
    frame: &CameraFrame,
    transform: &RigidTransform,
    p: &Point3<f64>,
) -> Option<(f64, f64)> {
    let moved = transform.apply(p);
    frame.pose.project_world(&frame.intrinsics, &moved)
}

impl<'a> LossEvaluator<'a> {
    /// Select the silhouette and photometric sets at `reference`.
    pub fn new(
        instance: &'a InstanceView,
        frame: &'a CameraFrame,
        target: &'a MaskTarget,
        weights: (f64, f64, f64),
        params: &UpdateParams,
        reference: &Theta,
    ) -> Self {
        let transform = reference.to_world(&instance.pivot);
        let (w, h) = (target.bitmap.width, target.bitmap.height);

        // Splat the projected points; remember the first point per pixel.
        let mut bm = Bitmap::new(w, h);
        let mut owner: HashMap<(u32, u32), u32> = HashMap::new();
        let photo_stride = (instance.points.len() / params.photo_samples.max(1)).max(1);
        let mut photo_support = Vec::new();
        for (i, p) in instance.points.iter().enumerate() {
            let Some((u, v)) = project_point(frame, &transform, p) else {
                continue;
            };
            let (ur, vr) = (u.round(), v.round());
            if ur < 0.0 || vr < 0.0 || ur >= w as f64 || vr >= h as f64 {
                continue;
            }
            let (ur, vr) = (ur as u32, vr as u32);
            bm.set(ur, vr);
            owner.entry((ur, vr)).or_insert(i as u32);
            if i % photo_stride == 0 && target.bitmap.get(ur, vr) {
                photo_support.push(i as u32);
            }
        }

        let boundary = bm.boundary_pixels();
        let mut silhouette: Vec<u32> = boundary
            .iter()
            .filter_map(|px| owner.get(px).copied())
            .collect();
        if silhouette.len() > params.contour_samples && params.contour_samples > 0 {
            let stride = silhouette.len() as f64 / params.contour_samples as f64;
            silhouette = (0..params.contour_samples)
                .map(|i| silhouette[(i as f64 * stride) as usize])
                .collect();
        }

        LossEvaluator {
            instance,
            frame,
            target,
            weights,
            silhouette,
            photo_support,
        }
    }

    pub fn has_silhouette(&self) -> bool {
        !self.silhouette.is_empty()
    }

    /// Total loss at `theta` over the fixed point sets.
    pub fn eval(&self, theta: &Theta) -> f64 {
        let transform = theta.to_world(&self.instance.pivot);

        let projections: Vec<(f64, f64)> = self
            .silhouette
            .iter()
            .filter_map(|&i| {
                project_point(self.frame, &transform, &self.instance.points[i as usize])
            })
            .collect();
        let chamfer = if projections.is_empty() {
            // Everything left the view; a large constant keeps descent away.
            1e6
        } else {
            chamfer_loss(&projections, self.target).unwrap_or(1e6)
        };

        let photo = if self.photo_support.is_empty() {
            0.0
        } else {
            let mut acc = 0.0;
            let mut n = 0usize;
            for &i in &self.photo_support {
                let p = &self.instance.points[i as usize];
                let Some((u, v)) = project_point(self.frame, &transform, p) else {
                    continue;
                };
                let sampled = self.frame.rgb.sample_bilinear(u, v);
                let color = &self.instance.colors[i as usize];
                acc += (0..3).map(|c| (color[c] - sampled[c]).abs()).sum::<f64>();
                n += 1;
            }
            if n == 0 {
                0.0
            } else {
                acc / n as f64
            }
        };

        let reg = reg_z_loss(&theta.delta());
        combine_losses(chamfer, photo, reg, self.weights)
    }

    /// Central finite-difference gradient at `theta`.
    pub fn gradient(&self, theta: &Theta, h: f64) -> [f64; 6] {
        let mut g = [0.0; 6];
        for i in 0..6 {
            let mut plus = *theta;
            let mut minus = *theta;
            plus.0[i] += h;
            minus.0[i] -= h;
            g[i] = (self.eval(&plus) - self.eval(&minus)) / (2.0 * h);
        }
        g
    }
}

/// Footprint IoU of the transformed instance against the matched mask.
pub fn projection_iou(
    instance: &InstanceView,
    frame: &CameraFrame,
    mask: &Bitmap,
    transform: &RigidTransform,
) -> f64 {
    let projections: Vec<(f64, f64)> = instance
        .points
        .iter()
        .filter_map(|p| project_point(frame, transform, p))
        .collect();
    let footprint = footprint_bitmap(&projections, mask.width, mask.height);
    footprint.iou(mask)
}

fn descend_stage(
    instance: &InstanceView,
    frame: &CameraFrame,
    target: &MaskTarget,
    params: &UpdateParams,
    stage: &StageWeights,
    stage_idx: u8,
    start: Theta,
    trace: &mut Vec<TracePoint>,
) -> (f64, Theta) {
    let weights = (stage.chamfer, stage.photo, stage.reg_z);
    let mut theta = start;
    let mut velocity = [0.0f64; 6];
    let mut step = stage.step_size;
    let mut best = (f64::INFINITY, theta);

    for iteration in 0..stage.iterations {
        let evaluator = LossEvaluator::new(instance, frame, target, weights, params, &theta);
        if !evaluator.has_silhouette() {
            break;
        }
        let loss = evaluator.eval(&theta);
        if loss < best.0 {
            best = (loss, theta);
        }
        trace.push(TracePoint {
            stage: stage_idx,
            iteration,
            loss,
        });

        let g = evaluator.gradient(&theta, params.fd_step);
        let g_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if g_norm < 1e-12 {
            break;
        }

        let mut accepted = false;
        for _ in 0..6 {
            let mut candidate = theta;
            let mut cand_velocity = [0.0f64; 6];
            for i in 0..6 {
                cand_velocity[i] = params.momentum * velocity[i] - step * g[i] / g_norm;
                candidate.0[i] += cand_velocity[i];
            }
            let cand_eval =
                LossEvaluator::new(instance, frame, target, weights, params, &candidate);
            let cand_loss = cand_eval.eval(&candidate);
            if cand_loss <= loss {
                theta = candidate;
                velocity = cand_velocity;
                step = (step * 1.2).min(stage.step_size);
                accepted = true;
                break;
            }
            step *= 0.5;
            velocity = [0.0; 6];
        }
        if !accepted && step < 1e-7 {
            break;
        }
    }
    if best.0.is_infinite() {
        let evaluator = LossEvaluator::new(instance, frame, target, weights, params, &theta);
        best = (evaluator.eval(&theta), theta);
    }
    best
}

/// Initial translation aligning the projected footprint centroid with the
/// mask centroid, lifted to 3D at the instance's mean camera depth.
fn centroid_initialization(
    instance: &InstanceView,
    frame: &CameraFrame,
    mask: &Bitmap,
) -> Option<Vector3<f64>> {
    let identity = RigidTransform::identity();
    let mut projections = Vec::new();
    let mut mean_depth = 0.0;
    for p in &instance.points {
        let p_cam = frame.pose.world_to_cam(p);
        if p_cam.z <= 0.0 {
            continue;
        }
        if let Some(px) = project_point(frame, &identity, p) {
            projections.push(px);
            mean_depth += p_cam.z;
        }
    }
    if projections.is_empty() {
        return None;
    }
    mean_depth /= projections.len() as f64;
    let footprint = footprint_bitmap(&projections, mask.width, mask.height);
    let (fu, fv) = footprint.centroid()?;
    let (mu, mv) = mask.centroid()?;
    let d_cam = Vector3::new(
        (mu - fu) * mean_depth / frame.intrinsics.fx,
        (mv - fv) * mean_depth / frame.intrinsics.fy,
        0.0,
    );
    Some(frame.pose.rotation() * d_cam)
}

/// Recover the rigid motion aligning the instance with its matched
/// post-interaction mask.
pub fn optimize_transform(
    instance: &InstanceView,
    frame: &CameraFrame,
    mask: &Bitmap,
    params: &UpdateParams,
) -> OptimizeOutcome {
    let mut trace = Vec::new();
    let target = match MaskTarget::from_bitmap(mask.clone(), params.contour_samples) {
        Ok(t) => t,
        Err(_) => {
            return OptimizeOutcome {
                transform: RigidTransform::identity(),
                final_iou: 0.0,
                final_loss: f64::INFINITY,
                status: OptimizeStatus::Failed,
                trace,
            };
        }
    };
    if instance.points.is_empty() {
        return OptimizeOutcome {
            transform: RigidTransform::identity(),
            final_iou: 0.0,
            final_loss: f64::INFINITY,
            status: OptimizeStatus::Failed,
            trace,
        };
    }

    let mut start = Theta::zero();
    if params.centroid_init {
        if let Some(delta) = centroid_initialization(instance, frame, &target.bitmap) {
            start.0[3] = delta.x;
            start.0[4] = delta.y;
            start.0[5] = delta.z;
        }
    }
    {
        // Degenerate-at-initialization check: no silhouette at the starting
        // state means the instance does not project into the view at all.
        let probe = LossEvaluator::new(
            instance,
            frame,
            &target,
            (params.stage1.chamfer, params.stage1.photo, params.stage1.reg_z),
            params,
            &start,
        );
        if !probe.has_silhouette() {
            return OptimizeOutcome {
                transform: RigidTransform::identity(),
                final_iou: 0.0,
                final_loss: f64::INFINITY,
                status: OptimizeStatus::Failed,
                trace,
            };
        }
    }

    let (coarse_loss, coarse_theta) = descend_stage(
        instance,
        frame,
        &target,
        params,
        &params.stage1,
        1,
        start,
        &mut trace,
    );
    let coarse_iou = projection_iou(
        instance,
        frame,
        &target.bitmap,
        &coarse_theta.to_world(&instance.pivot),
    );
    if coarse_iou > params.tau_iou {
        return OptimizeOutcome {
            transform: coarse_theta.to_world(&instance.pivot),
            final_iou: coarse_iou,
            final_loss: coarse_loss,
            status: OptimizeStatus::EarlyExit,
            trace,
        };
    }

    let (fine_loss, fine_theta) = descend_stage(
        instance,
        frame,
        &target,
        params,
        &params.stage2,
        2,
        coarse_theta,
        &mut trace,
    );
    let final_iou = projection_iou(
        instance,
        frame,
        &target.bitmap,
        &fine_theta.to_world(&instance.pivot),
    );
    OptimizeOutcome {
        transform: fine_theta.to_world(&instance.pivot),
        final_iou,
        final_loss: fine_loss,
        status: OptimizeStatus::Refined,
        trace,
    }
}
