//! Loss terms for post-interaction pose refinement.

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::mask::rle::Bitmap;
use crate::scene::frame::CameraFrame;
use crate::update::contour::DistanceField;
use crate::update::transform::RigidTransform;

/// Matched post-interaction mask prepared for chamfer evaluation: boundary
/// pixel samples and the exact distance field of the full boundary.
pub struct MaskTarget {
    pub bitmap: Bitmap,
    /// Sampled boundary pixels (the C set of the bidirectional term).
    pub contour: Vec<(f64, f64)>,
    pub distance_field: DistanceField,
}

impl MaskTarget {
    pub fn from_bitmap(bitmap: Bitmap, max_contour_samples: usize) -> Result<Self> {
        let boundary = bitmap.boundary_pixels();
        if boundary.is_empty() {
            return Err(Error::DegenerateContour("mask has no boundary pixels".into()));
        }
        let distance_field = DistanceField::from_sites(bitmap.width, bitmap.height, &boundary);
        let contour = subsample(&boundary, max_contour_samples)
            .into_iter()
            .map(|(u, v)| (u as f64, v as f64))
            .collect();
        Ok(MaskTarget {
            bitmap,
            contour,
            distance_field,
        })
    }
}

fn subsample<T: Copy>(items: &[T], cap: usize) -> Vec<T> {
    if items.len() <= cap || cap == 0 {
        return items.to_vec();
    }
    let stride = items.len() as f64 / cap as f64;
    (0..cap)
        .map(|i| items[(i as f64 * stride) as usize])
        .collect()
}

/// Bidirectional contour distance:
/// `mean_p min_c |p - c| + mean_c min_p |c - p|`.
///
/// The P→C direction reads the precomputed distance field with bilinear
/// interpolation (sub-pixel, smooth); the C→P direction is exact over the
/// given sets.
pub fn chamfer_loss(projections: &[(f64, f64)], target: &MaskTarget) -> Result<f64> {
    if projections.is_empty() {
        return Err(Error::DegenerateContour("no valid projections".into()));
    }
    if target.contour.is_empty() {
        return Err(Error::DegenerateContour("empty mask contour".into()));
    }
    let p_to_c: f64 = projections
        .iter()
        .map(|&(x, y)| target.distance_field.sample(x, y))
        .sum::<f64>()
        / projections.len() as f64;
    let c_to_p: f64 = target
        .contour
        .iter()
        .map(|&(cx, cy)| {
            projections
                .iter()
                .map(|&(px, py)| {
                    let (dx, dy) = (cx - px, cy - py);
                    (dx * dx + dy * dy).sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        / target.contour.len() as f64;
    Ok(p_to_c + c_to_p)
}

/// Mean weighted L1 color error of transformed points that project inside
/// the matched mask; 0 with `supported = false` when nothing contributes.
pub fn photometric_loss(
    points: &[(Point3<f64>, [f64; 3])],
    transform: &RigidTransform,
    frame: &CameraFrame,
    mask: &Bitmap,
) -> (f64, bool) {
    let mut acc = 0.0f64;
    let mut n = 0usize;
    for (p, color) in points {
        let moved = transform.apply(p);
        let p_cam = frame.pose.world_to_cam(&moved);
        let Some((u, v)) = frame.intrinsics.project(&p_cam) else {
            continue;
        };
        let (ui, vi) = (u.round(), v.round());
        if ui < 0.0 || vi < 0.0 || ui >= mask.width as f64 || vi >= mask.height as f64 {
            continue;
        }
        if !mask.get(ui as u32, vi as u32) {
            continue;
        }
        let sampled = frame.rgb.sample_bilinear(u, v);
        // uniform weights w_p = 1
        acc += (0..3).map(|c| (color[c] - sampled[c]).abs()).sum::<f64>();
        n += 1;
    }
    if n == 0 {
        (0.0, false)
    } else {
        (acc / n as f64, true)
    }
}

/// Squared vertical translation penalty.
pub fn reg_z_loss(translation: &Vector3<f64>) -> f64 {
    translation.z * translation.z
}

/// Weighted combination of the three terms.
pub fn combine_losses(chamfer: f64, photo: f64, reg_z: f64, weights: (f64, f64, f64)) -> f64 {
    weights.0 * chamfer + weights.1 * photo + weights.2 * reg_z
}

#[cfg(test)]
mod tests {
    use super::*;

    fn target_from_sites(w: u32, h: u32, sites: &[(u32, u32)]) -> MaskTarget {
        let mut bitmap = Bitmap::new(w, h);
        for &(u, v) in sites {
            bitmap.set(u, v);
        }
        MaskTarget::from_bitmap(bitmap, 1024).unwrap()
    }

    #[test]
    fn coincident_sets_have_zero_chamfer() {
        let target = target_from_sites(10, 10, &[(2, 3), (7, 8)]);
        let p = vec![(2.0, 3.0), (7.0, 8.0)];
        assert!(chamfer_loss(&p, &target).unwrap() < 1e-12);
    }

    #[test]
    fn single_point_pair_distance() {
        // P = {(0,0)}, C = {(3,4)} -> 5 + 5 = 10
        let target = target_from_sites(10, 10, &[(3, 4)]);
        let p = vec![(0.0, 0.0)];
        let loss = chamfer_loss(&p, &target).unwrap();
        assert!((loss - 10.0).abs() < 1e-2, "loss = {loss}");
    }

    #[test]
    fn matches_brute_force_on_random_sets() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let np = rng.random_range(1..=20);
            let nc = rng.random_range(1..=20);
            let c_sites: Vec<(u32, u32)> = (0..nc)
                .map(|_| (rng.random_range(0..64), rng.random_range(0..48)))
                .collect();
            let p_pts: Vec<(f64, f64)> = (0..np)
                .map(|_| {
                    (
                        rng.random_range(0.0..63.0),
                        rng.random_range(0.0..47.0),
                    )
                })
                .collect();
            let target = target_from_sites(64, 48, &c_sites);
            let got = chamfer_loss(&p_pts, &target).unwrap();

            let dist = |a: (f64, f64), b: (f64, f64)| -> f64 {
                ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
            };
            let cs: Vec<(f64, f64)> = c_sites.iter().map(|&(u, v)| (u as f64, v as f64)).collect();
            let p_to_c: f64 = p_pts
                .iter()
                .map(|&p| cs.iter().map(|&c| dist(p, c)).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / p_pts.len() as f64;
            let c_to_p: f64 = cs
                .iter()
                .map(|&c| p_pts.iter().map(|&p| dist(c, p)).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / cs.len() as f64;
            let want = p_to_c + c_to_p;
            assert!(
                (got - want).abs() < 0.05,
                "chamfer {got} vs brute force {want}"
            );
        }
    }

    #[test]
    fn degenerate_inputs_error() {
        let target = target_from_sites(10, 10, &[(3, 4)]);
        assert!(matches!(
            chamfer_loss(&[], &target),
            Err(Error::DegenerateContour(_))
        ));
        let empty = Bitmap::new(10, 10);
        assert!(matches!(
            MaskTarget::from_bitmap(empty, 100),
            Err(Error::DegenerateContour(_))
        ));
    }

    #[test]
    fn reg_z_examples() {
        assert_eq!(reg_z_loss(&Vector3::new(0.1, 0.2, 0.0)), 0.0);
        assert!((reg_z_loss(&Vector3::new(0.0, 0.0, 0.05)) - 0.0025).abs() < 1e-15);
        assert_eq!(
            reg_z_loss(&Vector3::new(0.0, 0.0, 0.3)),
            reg_z_loss(&Vector3::new(0.0, 0.0, -0.3))
        );
    }

    #[test]
    fn stage_weight_combinations() {
        // stage-1 weights: 50*1 + 0.5*2 + 10*3 = 81
        assert!((combine_losses(1.0, 2.0, 3.0, (50.0, 0.5, 10.0)) - 81.0).abs() < 1e-12);
        // stage-2 weights: 10 + 4 + 3 = 17
        assert!((combine_losses(1.0, 2.0, 3.0, (10.0, 2.0, 1.0)) - 17.0).abs() < 1e-12);
        assert_eq!(combine_losses(0.0, 0.0, 0.0, (50.0, 0.5, 10.0)), 0.0);
    }
}
