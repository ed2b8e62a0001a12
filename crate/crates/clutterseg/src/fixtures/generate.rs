//! Deterministic synthetic scene bundles with full ground truth,
//! controllable segmentation noise and planted displacements.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::geometry::camera::{CameraPose, Intrinsics};
use crate::mask::rle::RleMask;
use crate::scene::frame::{CameraFrame, SceneBundle, SceneMeta};
use crate::scene::outputs::{GtInstanceMeta, LabeledPoint};
use crate::update::transform::RigidTransform;

use super::render::{look_at, render_view, RenderOutput};
use super::shapes::{SceneObject, ShapeKind};

pub const TABLE_HALF_EXTENT: f64 = 0.45;
/// Vertical gap between table top and object bottoms; keeps object and
/// table super-voxels from contracting into each other.
const OBJECT_LIFT: f64 = 0.02;
const MIN_MASK_PX: u32 = 12;
const MIN_FRAGMENT_PX: u32 = 25;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlannedDisplacement {
    pub object: u32,
    /// Yaw about the object center, radians.
    pub yaw: f64,
    /// In-plane translation, meters.
    pub delta: [f64; 2],
    /// View index re-rendered as the post-interaction image.
    pub view: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub seed: u64,
    pub objects: usize,
    pub categories: usize,
    pub views: usize,
    pub width: u32,
    pub height: u32,
    pub ring_radius: f64,
    pub ring_height: f64,
    /// Per-(object, view) probability of splitting a mask into fragments.
    pub p_split: f64,
    /// Per adjacent pair probability of adding a union mask.
    pub p_merge: f64,
    pub embed_dim: usize,
    /// Embedding noise before re-normalization.
    pub sigma: f64,
    pub displacement: Option<PlannedDisplacement>,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            seed: 0,
            objects: 10,
            categories: 5,
            views: 8,
            width: 640,
            height: 480,
            ring_radius: 0.68,
            ring_height: 0.62,
            p_split: 0.0,
            p_merge: 0.0,
            embed_dim: 128,
            sigma: 0.0,
            displacement: None,
        }
    }
}

impl FixtureSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_split", self.p_split), ("p_merge", self.p_merge)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Fixture(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if self.objects == 0 || self.views == 0 || self.embed_dim == 0 {
            return Err(Error::Fixture(
                "objects, views and embed_dim must be positive".into(),
            ));
        }
        if self.categories == 0 || self.categories > self.objects {
            return Err(Error::Fixture(format!(
                "categories = {} must lie in 1..=objects",
                self.categories
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskOrigin {
    Object(u32),
    Fragment { object: u32, part: u32 },
    Cluster(Vec<u32>),
}

impl MaskOrigin {
    /// Ground-truth instance a proper or fragment mask belongs to; clusters
    /// span several and map to none.
    pub fn instance(&self) -> Option<u32> {
        match self {
            MaskOrigin::Object(k) => Some(*k),
            MaskOrigin::Fragment { object, .. } => Some(*object),
            MaskOrigin::Cluster(_) => None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Provenance {
    /// Per frame: mask id -> origin.
    pub frames: Vec<BTreeMap<u32, MaskOrigin>>,
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub instances: Vec<GtInstanceMeta>,
    /// Fused ground-truth surface points with object labels.
    pub points: Vec<(Point3<f64>, u32)>,
    /// Per frame: exact visibility mask per object id.
    pub exact_masks: Vec<Vec<(u32, RleMask)>>,
}

#[derive(Debug, Clone)]
pub struct FixtureScene {
    pub spec: FixtureSpec,
    pub objects: Vec<SceneObject>,
    pub cameras: Vec<(Intrinsics, CameraPose)>,
    /// Category prototype embeddings.
    pub prototypes: Vec<Embedding>,
}

pub struct GeneratedFixture {
    pub scene: FixtureScene,
    pub bundle: SceneBundle,
    pub ground_truth: GroundTruth,
    pub provenance: Provenance,
}

fn stream(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn gauss_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn noisy_embedding(base: &Embedding, sigma: f64, rng: &mut ChaCha8Rng) -> Embedding {
    let noise = gauss_vec(rng, base.dim());
    let values = base
        .values()
        .iter()
        .zip(noise.iter())
        .map(|(b, n)| b + sigma * n)
        .collect();
    Embedding::from_raw(values).expect("unit prototype plus bounded noise")
}

fn hue_color(i: usize) -> [f32; 3] {
    let h = ((i as f64 + 1.0) * 0.618_033_988_75).fract() * 6.0;
    let (s, v) = (0.70f64, 0.85f64);
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [(r + m) as f32, (g + m) as f32, (b + m) as f32]
}

fn sample_objects(spec: &FixtureSpec, rng: &mut ChaCha8Rng) -> Result<Vec<SceneObject>> {
    let spread = 0.27f64;
    let mut objects: Vec<SceneObject> = Vec::with_capacity(spec.objects);
    for i in 0..spec.objects {
        let shape = match i % 3 {
            0 => ShapeKind::Box {
                half: Vector3::new(
                    rng.random_range(0.030..0.055),
                    rng.random_range(0.030..0.055),
                    rng.random_range(0.030..0.060),
                ),
            },
            1 => ShapeKind::Cylinder {
                radius: rng.random_range(0.028..0.050),
                half_height: rng.random_range(0.035..0.065),
            },
            _ => ShapeKind::Sphere {
                radius: rng.random_range(0.032..0.050),
            },
        };
        let ground_radius = shape.ground_radius();
        let mut placed = None;
        for _ in 0..4000 {
            let x = rng.random_range(-spread..spread);
            let y = rng.random_range(-spread..spread);
            if (x * x + y * y).sqrt() + ground_radius > spread + 0.05 {
                continue;
            }
            let clear = objects.iter().all(|o| {
                let d = ((o.center.x - x).powi(2) + (o.center.y - y).powi(2)).sqrt();
                d >= o.shape.ground_radius() + ground_radius + 0.04
            });
            if clear {
                placed = Some((x, y));
                break;
            }
        }
        let Some((x, y)) = placed else {
            return Err(Error::Fixture(format!(
                "cannot place object {i} without overlap; reduce object count or sizes"
            )));
        };
        objects.push(SceneObject {
            id: i as u32,
            category: (i % spec.categories) as u32,
            shape,
            center: Point3::new(x, y, OBJECT_LIFT + shape.bottom_offset()),
            yaw: rng.random_range(0.0..std::f64::consts::FRAC_PI_2),
            albedo: hue_color(i),
        });
    }
    Ok(objects)
}

fn ring_cameras(spec: &FixtureSpec) -> Vec<(Intrinsics, CameraPose)> {
    // Focal length scales with resolution so the field of view stays fixed.
    let focal = 525.0 * spec.width as f64 / 640.0;
    let intr = Intrinsics {
        fx: focal,
        fy: focal,
        cx: (spec.width as f64 - 1.0) / 2.0,
        cy: (spec.height as f64 - 1.0) / 2.0,
    };
    (0..spec.views)
        .map(|v| {
            let az = 2.0 * std::f64::consts::PI * v as f64 / spec.views as f64 + 0.23;
            let eye = Point3::new(
                spec.ring_radius * az.cos(),
                spec.ring_radius * az.sin(),
                spec.ring_height,
            );
            (intr, look_at(eye, Point3::new(0.0, 0.0, 0.06)))
        })
        .collect()
}

fn mask_bbox(mask: &RleMask) -> (u32, u32, u32, u32) {
    let w = mask.width();
    let (mut u0, mut v0, mut u1, mut v1) = (u32::MAX, u32::MAX, 0u32, 0u32);
    for idx in mask.pixel_indices() {
        let (u, v) = (idx % w, idx / w);
        u0 = u0.min(u);
        v0 = v0.min(v);
        u1 = u1.max(u);
        v1 = v1.max(v);
    }
    (u0, v0, u1, v1)
}

fn bboxes_adjacent(a: (u32, u32, u32, u32), b: (u32, u32, u32, u32), margin: u32) -> bool {
    let (au0, av0, au1, av1) = a;
    let (bu0, bv0, bu1, bv1) = b;
    au0.saturating_sub(margin) <= bu1
        && bu0.saturating_sub(margin) <= au1
        && av0.saturating_sub(margin) <= bv1
        && bv0.saturating_sub(margin) <= av1
}

/// Split a mask into `n` fragments by random lines through the centroid;
/// falls back to a pixel-order split when geometry refuses to cooperate.
fn split_mask(mask: &RleMask, n: usize, rng: &mut ChaCha8Rng) -> Vec<RleMask> {
    let w = mask.width();
    let (cu, cv) = mask.centroid().expect("non-empty mask");
    let pixels: Vec<u32> = mask.pixel_indices().collect();
    for _ in 0..12 {
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let (sin, cos) = theta.sin_cos();
        let mut parts: Vec<Vec<(u32, u32)>> = vec![Vec::new(); n];
        for &idx in &pixels {
            let (u, v) = ((idx % w) as f64 - cu, (idx / w) as f64 - cv);
            let part = if n == 2 {
                usize::from(u * sin - v * cos >= 0.0)
            } else {
                let ang = (v.atan2(u) - theta).rem_euclid(2.0 * std::f64::consts::PI);
                ((ang / (2.0 * std::f64::consts::PI) * n as f64) as usize).min(n - 1)
            };
            parts[part].push((idx, 1));
        }
        if parts.iter().all(|p| p.len() >= MIN_FRAGMENT_PX as usize) {
            return parts
                .into_iter()
                .map(|runs| RleMask::new(w, mask.height(), runs).unwrap())
                .collect();
        }
    }
    // fallback: contiguous chunks of the pixel list
    let chunk = pixels.len().div_ceil(n);
    pixels
        .chunks(chunk)
        .map(|c| {
            RleMask::new(w, mask.height(), c.iter().map(|&i| (i, 1)).collect()).unwrap()
        })
        .collect()
}

struct NoisyMaskLayer {
    masks: Vec<(u32, RleMask)>,
    embeddings: BTreeMap<u32, Embedding>,
    origins: BTreeMap<u32, MaskOrigin>,
}

/// Apply the over/under-segmentation noise model to one view's exact masks.
fn build_mask_layer(
    exact: &[(u32, RleMask)],
    objects: &[SceneObject],
    prototypes: &[Embedding],
    spec: &FixtureSpec,
    rng: &mut ChaCha8Rng,
) -> NoisyMaskLayer {
    let mut masks = Vec::new();
    let mut origins = BTreeMap::new();
    let mut embeddings = BTreeMap::new();
    let mut next_id = 0u32;
    let id = |next_id: &mut u32| {
        let v = *next_id;
        *next_id += 1;
        v
    };

    let object_by_id = |id: u32| -> &SceneObject {
        objects
            .iter()
            .find(|o| o.id == id)
            .expect("mask refers to a scene object")
    };
    for (obj_id, mask) in exact {
        let obj = object_by_id(*obj_id);
        let proto = &prototypes[obj.category as usize];
        let full_id = id(&mut next_id);
        masks.push((full_id, mask.clone()));
        origins.insert(full_id, MaskOrigin::Object(*obj_id));
        embeddings.insert(full_id, noisy_embedding(proto, spec.sigma, rng));

        if mask.area() >= 2 && rng.random::<f64>() < spec.p_split {
            let n = if rng.random::<f64>() < 0.7 { 2 } else { 3 };
            for (part, frag) in split_mask(mask, n, rng).into_iter().enumerate() {
                if frag.is_empty() {
                    continue;
                }
                let frag_id = id(&mut next_id);
                masks.push((frag_id, frag));
                origins.insert(
                    frag_id,
                    MaskOrigin::Fragment {
                        object: *obj_id,
                        part: part as u32,
                    },
                );
                embeddings.insert(frag_id, noisy_embedding(proto, spec.sigma, rng));
            }
        }
    }

    // under-segmentation: union masks over adjacent pairs
    let bboxes: Vec<(u32, (u32, u32, u32, u32))> = exact
        .iter()
        .map(|(obj_id, m)| (*obj_id, mask_bbox(m)))
        .collect();
    let mut merged: HashSet<u32> = HashSet::new();
    for i in 0..bboxes.len() {
        for j in (i + 1)..bboxes.len() {
            let (a, abox) = bboxes[i];
            let (b, bbox) = bboxes[j];
            if merged.contains(&a) || merged.contains(&b) {
                continue;
            }
            if !bboxes_adjacent(abox, bbox, 14) {
                continue;
            }
            if rng.random::<f64>() >= spec.p_merge {
                continue;
            }
            merged.insert(a);
            merged.insert(b);
            let union = exact[i].1.union(&exact[j].1);
            let union_id = id(&mut next_id);
            masks.push((union_id, union));
            origins.insert(union_id, MaskOrigin::Cluster(vec![a, b]));
            let blended = Embedding::from_raw(Embedding::component_sum([
                &prototypes[object_by_id(a).category as usize],
                &prototypes[object_by_id(b).category as usize],
            ]))
            .expect("distinct prototypes never cancel");
            embeddings.insert(union_id, noisy_embedding(&blended, spec.sigma, rng));
        }
    }

    masks.sort_by_key(|(id, _)| *id);
    NoisyMaskLayer {
        masks,
        embeddings,
        origins,
    }
}

/// Generate the scene, its bundle, ground truth and mask provenance.
pub fn generate_scene(spec: &FixtureSpec) -> Result<GeneratedFixture> {
    spec.validate()?;
    let mut obj_rng = stream(spec.seed, 1);
    let mut proto_rng = stream(spec.seed, 2);

    let objects = sample_objects(spec, &mut obj_rng)?;
    let prototypes: Vec<Embedding> = (0..spec.categories)
        .map(|_| Embedding::from_raw(gauss_vec(&mut proto_rng, spec.embed_dim)))
        .collect::<Result<_>>()?;
    let cameras = ring_cameras(spec);

    let renders: Vec<RenderOutput> = cameras
        .iter()
        .map(|(intr, pose)| {
            render_view(
                &objects,
                TABLE_HALF_EXTENT,
                intr,
                pose,
                spec.width,
                spec.height,
            )
        })
        .collect();

    let mut frames = Vec::with_capacity(spec.views);
    let mut provenance = Provenance::default();
    let mut exact_masks_per_frame = Vec::with_capacity(spec.views);
    let mut seen_any = vec![false; spec.objects];

    for (view, render) in renders.iter().enumerate() {
        let mut exact: Vec<(u32, RleMask)> = Vec::new();
        for obj in &objects {
            let mask = render.exact_mask(obj.id, spec.width, spec.height);
            if mask.area() >= MIN_MASK_PX {
                seen_any[obj.id as usize] = true;
                exact.push((obj.id, mask));
            }
        }
        let mut noise_rng = stream(spec.seed, 0x100 + view as u64);
        let layer = build_mask_layer(&exact, &objects, &prototypes, spec, &mut noise_rng);
        provenance.frames.push(layer.origins);
        exact_masks_per_frame.push(exact);

        frames.push(CameraFrame {
            frame_index: view as u32,
            intrinsics: cameras[view].0,
            pose: cameras[view].1,
            rgb: render.rgb.clone(),
            depth: render.depth.clone(),
            masks: layer.masks,
            mask_embeddings: layer.embeddings,
        });
    }

    if let Some(missing) = seen_any.iter().position(|s| !s) {
        return Err(Error::Fixture(format!(
            "object {missing} is not visible in any view; adjust the camera ring"
        )));
    }

    // Ground-truth surface points: back-projected exact-mask depth pixels,
    // aggregated per object on a 5 mm grid with the same mean-position
    // semantics the fusion uses.
    let mut gt_bins: BTreeMap<(u32, i64, i64, i64), (Vector3<f64>, u32)> = BTreeMap::new();
    for (view, render) in renders.iter().enumerate() {
        let (intr, pose) = &cameras[view];
        for (obj_id, mask) in &exact_masks_per_frame[view] {
            for idx in mask.pixel_indices() {
                let (u, v) = (idx % spec.width, idx / spec.width);
                let d = render.depth.get(u, v) as f64;
                if d <= 0.0 {
                    continue;
                }
                let p = pose.cam_to_world(&intr.backproject(u as f64, v as f64, d));
                let key = (
                    *obj_id,
                    (p.x / 0.005).floor() as i64,
                    (p.y / 0.005).floor() as i64,
                    (p.z / 0.005).floor() as i64,
                );
                let acc = gt_bins.entry(key).or_insert((Vector3::zeros(), 0));
                acc.0 += p.coords;
                acc.1 += 1;
            }
        }
    }
    let gt_points: Vec<(Point3<f64>, u32)> = gt_bins
        .into_iter()
        .map(|((obj, _, _, _), (sum, n))| (Point3::from(sum / n as f64), obj))
        .collect();

    let ground_truth = GroundTruth {
        instances: objects
            .iter()
            .map(|o| GtInstanceMeta {
                id: o.id,
                category: o.category,
            })
            .collect(),
        points: gt_points,
        exact_masks: exact_masks_per_frame,
    };

    let bundle = SceneBundle {
        meta: SceneMeta {
            scene_id: format!("fixture-{}", spec.seed),
            embed_dim: spec.embed_dim,
            units: "meters".into(),
        },
        frames,
    };

    Ok(GeneratedFixture {
        scene: FixtureScene {
            spec: spec.clone(),
            objects,
            cameras,
            prototypes,
        },
        bundle,
        ground_truth,
        provenance,
    })
}

/// A re-rendered post-interaction view with one object moved or removed.
pub struct PlantedPostFrame {
    pub frame: CameraFrame,
    pub origins: BTreeMap<u32, MaskOrigin>,
    /// World-frame ground-truth motion (identity for removals).
    pub gt_transform: RigidTransform,
    /// True when no other object's visibility changed by more than 3%.
    pub occlusion_free: bool,
}

#[derive(Debug, Clone, Copy)]
pub enum PostChange {
    Move { object: u32, yaw: f64, delta: [f64; 2] },
    Remove { object: u32 },
}

/// Re-render one view after a scene change, emitting post masks and
/// embeddings with the same noise model.
pub fn plant_post_frame(
    scene: &FixtureScene,
    view: usize,
    change: PostChange,
) -> Result<PlantedPostFrame> {
    let spec = &scene.spec;
    if view >= scene.cameras.len() {
        return Err(Error::Fixture(format!("view {view} out of range")));
    }
    let (intr, pose) = &scene.cameras[view];
    let pre_render = render_view(
        &scene.objects,
        TABLE_HALF_EXTENT,
        intr,
        pose,
        spec.width,
        spec.height,
    );

    let mut objects = scene.objects.clone();
    let gt_transform = match change {
        PostChange::Move { object, yaw, delta } => {
            if yaw.abs() > std::f64::consts::FRAC_PI_4 {
                return Err(Error::Fixture("|yaw| must be at most 45 degrees".into()));
            }
            let d = (delta[0] * delta[0] + delta[1] * delta[1]).sqrt();
            if d > 0.15 + 1e-9 {
                return Err(Error::Fixture(
                    "in-plane translation must be at most 0.15 m".into(),
                ));
            }
            let obj = objects
                .iter_mut()
                .find(|o| o.id == object)
                .ok_or_else(|| Error::Fixture(format!("no object {object}")))?;
            let pivot = obj.center;
            obj.yaw += yaw;
            obj.center = Point3::new(
                obj.center.x + delta[0],
                obj.center.y + delta[1],
                obj.center.z,
            );
            RigidTransform::yaw_about(yaw, &pivot, Vector3::new(delta[0], delta[1], 0.0))
        }
        PostChange::Remove { object } => {
            let before = objects.len();
            objects.retain(|o| o.id != object);
            if objects.len() == before {
                return Err(Error::Fixture(format!("no object {object}")));
            }
            RigidTransform::identity()
        }
    };

    let render = render_view(
        &objects,
        TABLE_HALF_EXTENT,
        intr,
        pose,
        spec.width,
        spec.height,
    );

    let mut exact: Vec<(u32, RleMask)> = Vec::new();
    for obj in &objects {
        let mask = render.exact_mask(obj.id, spec.width, spec.height);
        if mask.area() >= MIN_MASK_PX {
            exact.push((obj.id, mask));
        }
    }
    if let PostChange::Move { object, .. } = change {
        if !exact.iter().any(|(id, _)| *id == object) {
            return Err(Error::Fixture(
                "moved object fully out of frame or hidden".into(),
            ));
        }
    }

    // Occlusion check: every untouched object keeps >= 97% of its pre-change
    // visible pixels.
    let moved_id = match change {
        PostChange::Move { object, .. } | PostChange::Remove { object } => object,
    };
    let mut occlusion_free = true;
    for obj in &scene.objects {
        if obj.id == moved_id {
            continue;
        }
        let pre = pre_render.exact_mask(obj.id, spec.width, spec.height);
        if pre.area() < MIN_MASK_PX {
            continue;
        }
        let post = render.exact_mask(obj.id, spec.width, spec.height);
        let kept = pre.intersection_area(&post) as f64 / pre.area() as f64;
        if kept < 0.97 {
            occlusion_free = false;
            break;
        }
    }

    let mut noise_rng = stream(spec.seed, 0x9000 + view as u64);
    let layer = build_mask_layer(&exact, &objects, &scene.prototypes, spec, &mut noise_rng);

    Ok(PlantedPostFrame {
        frame: CameraFrame {
            frame_index: view as u32,
            intrinsics: *intr,
            pose: *pose,
            rgb: render.rgb,
            depth: render.depth,
            masks: layer.masks,
            mask_embeddings: layer.embeddings,
        },
        origins: layer.origins,
        gt_transform,
        occlusion_free,
    })
}

/// Write a generated fixture as a scene bundle plus ground-truth files.
pub fn write_fixture(fx: &GeneratedFixture, dir: &Path) -> Result<()> {
    crate::scene::bundle::save_scene_bundle(&fx.bundle, dir)?;
    for (view, exact) in fx.ground_truth.exact_masks.iter().enumerate() {
        crate::scene::bundle::save_masks_rle(
            &dir.join(format!("frame_{view}")).join("gt_labels.rle"),
            fx.scene.spec.width,
            fx.scene.spec.height,
            exact,
        )?;
    }
    crate::scene::outputs::write_gt_instances(
        &dir.join("gt_instances.json"),
        &fx.ground_truth.instances,
    )?;
    let gt_points: Vec<LabeledPoint> = fx
        .ground_truth
        .points
        .iter()
        .map(|(p, id)| LabeledPoint {
            position: *p,
            color: {
                let a = fx.scene.objects[*id as usize].albedo;
                [a[0] as f64, a[1] as f64, a[2] as f64]
            },
            label: *id as i32,
        })
        .collect();
    crate::scene::outputs::write_labeled_ply(&dir.join("gt_points.ply"), &gt_points)?;
    let prototypes: BTreeMap<u32, Embedding> = fx
        .scene
        .prototypes
        .iter()
        .enumerate()
        .map(|(i, e)| (i as u32, e.clone()))
        .collect();
    crate::scene::outputs::write_category_embeddings(
        &dir.join("category_embeddings.f32"),
        &prototypes,
    )?;
    std::fs::write(
        dir.join("mask_provenance.json"),
        serde_json::to_string_pretty(&fx.provenance)?,
    )?;

    if let Some(planned) = &fx.scene.spec.displacement {
        let planted = plant_post_frame(
            &fx.scene,
            planned.view,
            PostChange::Move {
                object: planned.object,
                yaw: planned.yaw,
                delta: planned.delta,
            },
        )?;
        let post_dir = dir.join("post_frame");
        crate::scene::bundle::save_frame_dir(&post_dir, &planted.frame, true)?;
        #[derive(Serialize)]
        struct GtTransform<'a> {
            object: u32,
            view: usize,
            transform: &'a RigidTransform,
            matrix: Vec<f64>,
        }
        let m = planted.gt_transform.to_matrix();
        std::fs::write(
            dir.join("gt_transform.json"),
            serde_json::to_string_pretty(&GtTransform {
                object: planned.object,
                view: planned.view,
                transform: &planted.gt_transform,
                matrix: m.transpose().as_slice().to_vec(),
            })?,
        )?;
    }
    Ok(())
}

/// True ground-truth assignment of generated masks: mask -> source object.
/// Cluster masks map to `None`.
pub fn oracle_grouping(provenance: &Provenance) -> Vec<HashMap<u32, Option<u32>>> {
    provenance
        .frames
        .iter()
        .map(|frame| {
            frame
                .iter()
                .map(|(id, origin)| (*id, origin.instance()))
                .collect()
        })
        .collect()
}
