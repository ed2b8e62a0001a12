//! Analytic primitives and ray intersections for the synthetic renderer.

use nalgebra::{Point3, Rotation3, Vector3};

#[derive(Debug, Clone, Copy)]
pub enum ShapeKind {
    /// Axis-aligned box in the object frame, given half extents.
    Box { half: Vector3<f64> },
    /// Upright cylinder along the object z axis.
    Cylinder { radius: f64, half_height: f64 },
    Sphere { radius: f64 },
}

impl ShapeKind {
    /// Radius of the bounding circle in the ground plane.
    pub fn ground_radius(&self) -> f64 {
        match self {
            ShapeKind::Box { half } => (half.x * half.x + half.y * half.y).sqrt(),
            ShapeKind::Cylinder { radius, .. } => *radius,
            ShapeKind::Sphere { radius } => *radius,
        }
    }

    /// Distance from the shape center to its lowest point.
    pub fn bottom_offset(&self) -> f64 {
        match self {
            ShapeKind::Box { half } => half.z,
            ShapeKind::Cylinder { half_height, .. } => *half_height,
            ShapeKind::Sphere { radius } => *radius,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SceneObject {
    pub id: u32,
    pub category: u32,
    pub shape: ShapeKind,
    pub center: Point3<f64>,
    /// Rotation about the world z axis.
    pub yaw: f64,
    pub albedo: [f32; 3],
}

const T_MIN: f64 = 1e-6;

fn ray_sphere(o: &Vector3<f64>, d: &Vector3<f64>, radius: f64) -> Option<f64> {
    let a = d.dot(d);
    let b = 2.0 * o.dot(d);
    let c = o.dot(o) - radius * radius;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = (-b - sq) / (2.0 * a);
    let t1 = (-b + sq) / (2.0 * a);
    if t0 > T_MIN {
        Some(t0)
    } else if t1 > T_MIN {
        Some(t1)
    } else {
        None
    }
}

fn ray_box(o: &Vector3<f64>, d: &Vector3<f64>, half: &Vector3<f64>) -> Option<f64> {
    let mut t_near = -f64::INFINITY;
    let mut t_far = f64::INFINITY;
    for i in 0..3 {
        if d[i].abs() < 1e-15 {
            if o[i].abs() > half[i] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[i];
        let mut t0 = (-half[i] - o[i]) * inv;
        let mut t1 = (half[i] - o[i]) * inv;
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
        if t_near > t_far {
            return None;
        }
    }
    if t_near > T_MIN {
        Some(t_near)
    } else if t_far > T_MIN {
        Some(t_far)
    } else {
        None
    }
}

fn ray_cylinder(
    o: &Vector3<f64>,
    d: &Vector3<f64>,
    radius: f64,
    half_height: f64,
) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut consider = |t: f64| {
        if t > T_MIN && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    };
    // lateral surface
    let a = d.x * d.x + d.y * d.y;
    if a > 1e-15 {
        let b = 2.0 * (o.x * d.x + o.y * d.y);
        let c = o.x * o.x + o.y * o.y - radius * radius;
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                let z = o.z + t * d.z;
                if z.abs() <= half_height {
                    consider(t);
                }
            }
        }
    }
    // caps
    if d.z.abs() > 1e-15 {
        for zc in [half_height, -half_height] {
            let t = (zc - o.z) / d.z;
            let (x, y) = (o.x + t * d.x, o.y + t * d.y);
            if x * x + y * y <= radius * radius {
                consider(t);
            }
        }
    }
    best
}

impl SceneObject {
    /// Smallest positive ray parameter where the world-space ray hits the
    /// object, or `None`.
    pub fn intersect(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), -self.yaw);
        let o = rot * (origin - self.center);
        let d = rot * dir;
        match self.shape {
            ShapeKind::Sphere { radius } => ray_sphere(&o, &d, radius),
            ShapeKind::Box { half } => ray_box(&o, &d, &half),
            ShapeKind::Cylinder {
                radius,
                half_height,
            } => ray_cylinder(&o, &d, radius, half_height),
        }
    }
}

/// Finite table rectangle in the z = 0 plane.
pub fn ray_table(origin: &Point3<f64>, dir: &Vector3<f64>, half_extent: f64) -> Option<f64> {
    if dir.z.abs() < 1e-15 {
        return None;
    }
    let t = -origin.z / dir.z;
    if t <= T_MIN {
        return None;
    }
    let x = origin.x + t * dir.x;
    let y = origin.y + t * dir.y;
    (x.abs() <= half_extent && y.abs() <= half_extent).then_some(t)
}
