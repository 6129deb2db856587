//! Analytic scenes and camera rigs with exactly known geometry.
//!
//! Depth frames are ray cast against planes, spheres and axis-aligned boxes,
//! so every accuracy check downstream has a closed-form ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confidence::DepthFrame;
use crate::geometry::{
    CameraModel, GeometryError, ImagePoint, Mat3, RigidTransform, Vec3, Z_MIN_MM,
};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error(transparent)]
    Camera(#[from] GeometryError),
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> SynthError {
    SynthError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

/// Scene primitive. `velocity` (mm per frame) translates it over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "type",
    rename_all = "lowercase",
    deny_unknown_fields,
    bound = "T: Real"
)]
pub enum Primitive<T> {
    Plane {
        point: Vec3<T>,
        normal: Vec3<T>,
        /// Half side of a square patch centered on `point`; unbounded when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        half_extent: Option<T>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        velocity: Option<Vec3<T>>,
    },
    Sphere {
        center: Vec3<T>,
        radius: T,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        velocity: Option<Vec3<T>>,
    },
    Box {
        min: Vec3<T>,
        max: Vec3<T>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        velocity: Option<Vec3<T>>,
    },
}

/// In-plane orthonormal axes for a unit normal.
fn plane_basis<T: Real>(n: Vec3<T>) -> (Vec3<T>, Vec3<T>) {
    let a = if n.x.abs() < T::lit(0.9) {
        Vec3::new(T::one(), T::zero(), T::zero())
    } else {
        Vec3::new(T::zero(), T::one(), T::zero())
    };
    let u = n.cross(a).normalized();
    (u, n.cross(u))
}

impl<T: Real> Primitive<T> {
    pub fn sphere(center: Vec3<T>, radius: T) -> Self {
        Primitive::Sphere {
            center,
            radius,
            velocity: None,
        }
    }

    pub fn plane(point: Vec3<T>, normal: Vec3<T>, half_extent: Option<T>) -> Self {
        Primitive::Plane {
            point,
            normal,
            half_extent,
            velocity: None,
        }
    }

    pub fn cuboid(min: Vec3<T>, max: Vec3<T>) -> Self {
        Primitive::Box {
            min,
            max,
            velocity: None,
        }
    }

    fn velocity(&self) -> Option<Vec3<T>> {
        match self {
            Primitive::Plane { velocity, .. }
            | Primitive::Sphere { velocity, .. }
            | Primitive::Box { velocity, .. } => *velocity,
        }
    }

    /// The primitive as it stands at `frame`.
    pub fn at_frame(&self, frame: u64) -> Self {
        let Some(v) = self.velocity() else {
            return self.clone();
        };
        let shift = v * T::from_u64(frame).expect("frame index fits scalar");
        match self.clone() {
            Primitive::Plane {
                point,
                normal,
                half_extent,
                velocity,
            } => Primitive::Plane {
                point: point + shift,
                normal,
                half_extent,
                velocity,
            },
            Primitive::Sphere {
                center,
                radius,
                velocity,
            } => Primitive::Sphere {
                center: center + shift,
                radius,
                velocity,
            },
            Primitive::Box { min, max, velocity } => Primitive::Box {
                min: min + shift,
                max: max + shift,
                velocity,
            },
        }
    }

    fn validate(&self, idx: usize) -> Result<(), SynthError> {
        let f = |name: &str| format!("primitives[{idx}].{name}");
        match self {
            Primitive::Plane {
                point,
                normal,
                half_extent,
                ..
            } => {
                if !point.is_finite() {
                    return Err(invalid(f("point"), "must be finite"));
                }
                if !(normal.is_finite() && normal.norm() > T::zero()) {
                    return Err(invalid(f("normal"), "must be a finite non-zero vector"));
                }
                if let Some(h) = half_extent {
                    if !(*h > T::zero() && h.is_finite()) {
                        return Err(invalid(f("half_extent"), "must be > 0"));
                    }
                }
            }
            Primitive::Sphere { center, radius, .. } => {
                if !center.is_finite() {
                    return Err(invalid(f("center"), "must be finite"));
                }
                if !(*radius > T::zero() && radius.is_finite()) {
                    return Err(invalid(f("radius"), "must be > 0"));
                }
            }
            Primitive::Box { min, max, .. } => {
                if !(min.is_finite()
                    && max.is_finite()
                    && min.x < max.x
                    && min.y < max.y
                    && min.z < max.z)
                {
                    return Err(invalid(
                        f("min/max"),
                        "must be finite with min < max on every axis",
                    ));
                }
            }
        }
        if let Some(v) = self.velocity() {
            if !v.is_finite() {
                return Err(invalid(f("velocity"), "must be finite"));
            }
        }
        Ok(())
    }

    /// Smallest ray parameter `t > t_min` where `origin + t·dir` meets the surface.
    pub fn intersect(&self, origin: Vec3<T>, dir: Vec3<T>, t_min: T) -> Option<T> {
        match self {
            Primitive::Plane {
                point,
                normal,
                half_extent,
                ..
            } => {
                let n = normal.normalized();
                let denom = n.dot(dir);
                if denom.abs() <= T::lit(1e-12) {
                    return None;
                }
                let t = n.dot(*point - origin) / denom;
                if !(t > t_min) {
                    return None;
                }
                if let Some(h) = half_extent {
                    let (u, v) = plane_basis(n);
                    let rel = origin + dir * t - *point;
                    if rel.dot(u).abs() > *h || rel.dot(v).abs() > *h {
                        return None;
                    }
                }
                Some(t)
            }
            Primitive::Sphere { center, radius, .. } => {
                let oc = origin - *center;
                let a = dir.dot(dir);
                let b = oc.dot(dir);
                let c = oc.dot(oc) - *radius * *radius;
                let disc = b * b - a * c;
                if disc < T::zero() {
                    return None;
                }
                let sq = disc.sqrt();
                let t0 = (-b - sq) / a;
                let t1 = (-b + sq) / a;
                if t0 > t_min {
                    Some(t0)
                } else if t1 > t_min {
                    Some(t1)
                } else {
                    None
                }
            }
            Primitive::Box { min, max, .. } => {
                let mut t_near = T::neg_infinity();
                let mut t_far = T::infinity();
                for axis in 0..3 {
                    let (o, d, lo, hi) = (origin[axis], dir[axis], min[axis], max[axis]);
                    if d.abs() <= T::lit(1e-15) {
                        if o < lo || o > hi {
                            return None;
                        }
                        continue;
                    }
                    let (mut a, mut b) = ((lo - o) / d, (hi - o) / d);
                    if a > b {
                        std::mem::swap(&mut a, &mut b);
                    }
                    t_near = t_near.max(a);
                    t_far = t_far.min(b);
                }
                if t_near > t_far {
                    None
                } else if t_near > t_min {
                    Some(t_near)
                } else if t_far > t_min {
                    Some(t_far)
                } else {
                    None
                }
            }
        }
    }

    /// Euclidean distance from `p` to the primitive's surface.
    pub fn surface_distance(&self, p: Vec3<T>) -> T {
        match self {
            Primitive::Plane {
                point,
                normal,
                half_extent,
                ..
            } => {
                let n = normal.normalized();
                let rel = p - *point;
                let h_dist = rel.dot(n);
                match half_extent {
                    None => h_dist.abs(),
                    Some(h) => {
                        let (u, v) = plane_basis(n);
                        let du = (rel.dot(u).abs() - *h).max(T::zero());
                        let dv = (rel.dot(v).abs() - *h).max(T::zero());
                        (h_dist * h_dist + du * du + dv * dv).sqrt()
                    }
                }
            }
            Primitive::Sphere { center, radius, .. } => (p.distance(*center) - *radius).abs(),
            Primitive::Box { min, max, .. } => {
                let mut outside = T::zero();
                let mut inside = T::infinity();
                for a in 0..3 {
                    let d = (min[a] - p[a]).max(p[a] - max[a]);
                    if d > T::zero() {
                        outside = outside + d * d;
                    }
                    inside = inside.min((p[a] - min[a]).min(max[a] - p[a]));
                }
                if outside > T::zero() {
                    outside.sqrt()
                } else {
                    inside.max(T::zero())
                }
            }
        }
    }
}

/// Primitives plus the sensor corruption applied to observed frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Real")]
pub struct SceneSpec<T> {
    pub primitives: Vec<Primitive<T>>,
    /// Standard deviation of additive Gaussian depth noise, mm.
    #[serde(default = "zero")]
    pub noise_sigma: T,
    /// Fraction of pixels invalidated at random.
    #[serde(default = "zero")]
    pub dropout_rate: T,
    #[serde(default)]
    pub seed: u64,
}

fn zero<T: Real>() -> T {
    T::zero()
}

impl<T: Real> SceneSpec<T> {
    pub fn new(primitives: Vec<Primitive<T>>) -> Self {
        SceneSpec {
            primitives,
            noise_sigma: T::zero(),
            dropout_rate: T::zero(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.primitives.is_empty() {
            return Err(invalid("primitives", "scene needs at least one primitive"));
        }
        for (i, p) in self.primitives.iter().enumerate() {
            p.validate(i)?;
        }
        if !(self.noise_sigma >= T::zero() && self.noise_sigma.is_finite()) {
            return Err(invalid(
                "noise_sigma",
                format!("must be >= 0, got {}", self.noise_sigma),
            ));
        }
        if !(self.dropout_rate >= T::zero() && self.dropout_rate < T::one()) {
            return Err(invalid(
                "dropout_rate",
                format!("must lie in [0, 1), got {}", self.dropout_rate),
            ));
        }
        Ok(())
    }

    pub fn at_frame(&self, frame: u64) -> Vec<Primitive<T>> {
        self.primitives.iter().map(|p| p.at_frame(frame)).collect()
    }

    /// Distance from `p` to the nearest primitive surface at `frame`.
    pub fn surface_distance(&self, p: Vec3<T>, frame: u64) -> T {
        self.primitives
            .iter()
            .map(|prim| prim.at_frame(frame).surface_distance(p))
            .fold(T::infinity(), T::min)
    }
}

/// Observed depth and its noiseless twin.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedDepth<T> {
    pub observed: DepthFrame<T>,
    pub truth: DepthFrame<T>,
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the noise stream for one image row.
fn row_seed(seed: u64, frame: u64, camera: u32, row: usize) -> u64 {
    let mut h = mix64(seed ^ 0x9e37_79b9_7f4a_7c15);
    h = mix64(h ^ frame);
    h = mix64(h ^ u64::from(camera));
    mix64(h ^ row as u64)
}

/// Ray casts `scene` at `frame` through every pixel center of `cam`.
///
/// Noise and dropout draw from per-row streams keyed by seed, frame, camera
/// and row, so the output does not depend on worker scheduling.
pub fn render_depth<T: Real>(
    scene: &SceneSpec<T>,
    cam: &CameraModel<T>,
    frame: u64,
) -> RenderedDepth<T> {
    let prims = scene.at_frame(frame);
    let origin = cam.center();
    let rt = cam.pose.rotation.transpose();
    let (w, h) = (cam.width, cam.height);
    let sigma = scene.noise_sigma.to_f64_lossy();
    let dropout = scene.dropout_rate.to_f64_lossy();
    let normal = Normal::new(0.0, sigma.max(0.0)).expect("sigma validated");

    let rows: Vec<(Vec<T>, Vec<T>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut rng = ChaCha8Rng::seed_from_u64(row_seed(scene.seed, frame, cam.id, y));
            let mut truth = Vec::with_capacity(w);
            let mut observed = Vec::with_capacity(w);
            for x in 0..w {
                let pix = ImagePoint::new(T::from_usize_lossy(x), T::from_usize_lossy(y));
                // Camera-frame ray with unit z: the hit parameter is the depth.
                let dir = rt * cam.ray_camera(pix);
                let hit = prims
                    .iter()
                    .filter_map(|p| p.intersect(origin, dir, T::lit(Z_MIN_MM)))
                    .fold(None, |best: Option<T>, t| {
                        Some(best.map_or(t, |b| b.min(t)))
                    });
                let z = hit.unwrap_or_else(T::zero);
                // Both draws happen for every pixel so streams stay aligned.
                let n = normal.sample(&mut rng);
                let drop = rng.random::<f64>() < dropout;
                let obs = if z > T::zero() && !drop {
                    let v = z + T::lit(n);
                    if v > T::zero() {
                        v
                    } else {
                        T::zero()
                    }
                } else {
                    T::zero()
                };
                truth.push(z);
                observed.push(obs);
            }
            (truth, observed)
        })
        .collect();

    let mut truth = Vec::with_capacity(w * h);
    let mut observed = Vec::with_capacity(w * h);
    for (t, o) in rows {
        truth.extend(t);
        observed.extend(o);
    }
    RenderedDepth {
        observed: DepthFrame::new(cam.id, w, h, observed)
            .expect("rendered depths are finite and >= 0"),
        truth: DepthFrame::new(cam.id, w, h, truth).expect("rendered depths are finite and >= 0"),
    }
}

/// Shared pinhole intrinsics for synthetic rigs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Real")]
pub struct Intrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: usize,
    pub height: usize,
}

impl<T: Real> Intrinsics<T> {
    /// Square image with the principal point at the center.
    pub fn square(size: usize, focal: T) -> Self {
        let c = T::from_usize_lossy(size) / T::two();
        Intrinsics {
            fx: focal,
            fy: focal,
            cx: c,
            cy: c,
            width: size,
            height: size,
        }
    }

    pub fn camera(
        &self,
        id: u32,
        pose: RigidTransform<T>,
    ) -> Result<CameraModel<T>, GeometryError> {
        CameraModel::new(
            id,
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.width,
            self.height,
            pose,
        )
    }
}

fn world_up<T: Real>() -> Vec3<T> {
    Vec3::new(T::zero(), T::zero(), T::one())
}

/// `count` cameras evenly spaced on a horizontal circle of `radius` around
/// `target`, raised by `height`, each aimed at `target`. Camera 0 sits on +X.
pub fn make_ring_rig<T: Real>(
    count: usize,
    radius: T,
    height: T,
    target: Vec3<T>,
    intrinsics: &Intrinsics<T>,
) -> Result<Vec<CameraModel<T>>, SynthError> {
    let step = T::lit(std::f64::consts::TAU) / T::from_usize_lossy(count.max(1));
    make_circular(count, radius, height, target, intrinsics, |i| {
        step * T::from_usize_lossy(i)
    })
}

/// `count` cameras spread over an arc of `arc` radians centered on +X.
pub fn make_arc_rig<T: Real>(
    count: usize,
    radius: T,
    height: T,
    arc: T,
    target: Vec3<T>,
    intrinsics: &Intrinsics<T>,
) -> Result<Vec<CameraModel<T>>, SynthError> {
    let step = if count > 1 {
        arc / T::from_usize_lossy(count - 1)
    } else {
        T::zero()
    };
    let start = if count > 1 {
        -arc / T::two()
    } else {
        T::zero()
    };
    make_circular(count, radius, height, target, intrinsics, |i| {
        start + step * T::from_usize_lossy(i)
    })
}

fn make_circular<T: Real>(
    count: usize,
    radius: T,
    height: T,
    target: Vec3<T>,
    intrinsics: &Intrinsics<T>,
    angle: impl Fn(usize) -> T,
) -> Result<Vec<CameraModel<T>>, SynthError> {
    if count == 0 {
        return Err(invalid("count", "must be >= 1"));
    }
    if !(radius > T::zero()) && !(height.abs() > T::zero()) {
        return Err(invalid("radius", "cameras would coincide with the target"));
    }
    (0..count)
        .map(|i| {
            let (s, c) = angle(i).sin_cos();
            let eye = target + Vec3::new(radius * c, radius * s, height);
            let pose = RigidTransform::look_at(eye, target, world_up());
            Ok(intrinsics.camera(i as u32, pose)?)
        })
        .collect()
}

/// Explicit world→camera pose for a custom rig.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Real")]
pub struct PoseSpec<T> {
    /// Row-major 3×3 rotation.
    pub rotation: [T; 9],
    pub translation: Vec3<T>,
}

/// Camera rig layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "layout",
    rename_all = "lowercase",
    deny_unknown_fields,
    bound = "T: Real"
)]
pub enum RigSpec<T> {
    Ring {
        count: usize,
        radius: T,
        #[serde(default = "zero")]
        height: T,
        #[serde(default = "Vec3::zero")]
        target: Vec3<T>,
        intrinsics: Intrinsics<T>,
    },
    Arc {
        count: usize,
        radius: T,
        #[serde(default = "zero")]
        height: T,
        /// Total angular span, degrees.
        arc_degrees: T,
        #[serde(default = "Vec3::zero")]
        target: Vec3<T>,
        intrinsics: Intrinsics<T>,
    },
    Custom {
        intrinsics: Intrinsics<T>,
        poses: Vec<PoseSpec<T>>,
    },
}

impl<T: Real> RigSpec<T> {
    pub fn build(&self) -> Result<Vec<CameraModel<T>>, SynthError> {
        match self {
            RigSpec::Ring {
                count,
                radius,
                height,
                target,
                intrinsics,
            } => make_ring_rig(*count, *radius, *height, *target, intrinsics),
            RigSpec::Arc {
                count,
                radius,
                height,
                arc_degrees,
                target,
                intrinsics,
            } => make_arc_rig(
                *count,
                *radius,
                *height,
                arc_degrees.to_radians(),
                *target,
                intrinsics,
            ),
            RigSpec::Custom { intrinsics, poses } => {
                if poses.is_empty() {
                    return Err(invalid("poses", "custom rig needs at least one pose"));
                }
                poses
                    .iter()
                    .enumerate()
                    .map(|(i, p)| {
                        let pose =
                            RigidTransform::new(Mat3::from_row_slice(&p.rotation), p.translation);
                        intrinsics
                            .camera(i as u32, pose)
                            .map_err(|e| invalid(format!("poses[{i}]"), e.to_string()))
                    })
                    .collect()
            }
        }
    }
}
