//! Pinhole camera model, rigid transforms, projection and back-projection.
//!
//! Poses are world→camera: a world point `p` lands in camera coordinates at
//! `pose.apply(p)`, and a camera-frame point returns to the world through
//! `pose.inverse()`. All lengths are millimeters.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// Points closer than this (camera-frame z, mm) are treated as behind the camera.
pub const Z_MIN_MM: f64 = 1.0;

/// Tolerance for the rotation orthonormality / determinant checks.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("{field}: {reason}")]
    InvalidCamera { field: &'static str, reason: String },
    #[error("depth must be positive and finite, got {0}")]
    NonPositiveDepth(f64),
    #[error("pixel ({x}, {y}) outside {width}x{height} frame")]
    PixelOutOfFrame {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[T; 3]", into = "[T; 3]")]
#[serde(bound = "T: Real")]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> From<[T; 3]> for Vec3<T> {
    fn from(a: [T; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl<T: Real> From<Vec3<T>> for [T; 3] {
    fn from(v: Vec3<T>) -> Self {
        [v.x, v.y, v.z]
    }
}

impl<T: Real> Vec3<T> {
    #[inline]
    pub const fn new(x: T, y: T, z: T) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn zero() -> Self {
        Vec3::new(T::zero(), T::zero(), T::zero())
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction; the zero vector is returned unchanged.
    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n > T::zero() {
            self / n
        } else {
            self
        }
    }

    #[inline]
    pub fn distance(self, o: Self) -> T {
        (self - o).norm()
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn min(self, o: Self) -> Self {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    #[inline]
    pub fn max(self, o: Self) -> Self {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn cast<U: Real>(self) -> Vec3<U> {
        Vec3::new(
            U::lit(self.x.to_f64_lossy()),
            U::lit(self.y.to_f64_lossy()),
            U::lit(self.z.to_f64_lossy()),
        )
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Div<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn div(self, s: T) -> Self {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl<T> Index<usize> for Vec3<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3<T> {
    pub rows: [[T; 3]; 3],
}

impl<T: Real> Mat3<T> {
    pub const fn from_rows(rows: [[T; 3]; 3]) -> Self {
        Mat3 { rows }
    }

    /// Builds a matrix from nine row-major entries.
    pub fn from_row_slice(v: &[T; 9]) -> Self {
        Mat3::from_rows([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    pub fn to_row_array(&self) -> [T; 9] {
        let r = &self.rows;
        [
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        ]
    }

    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Mat3::from_rows([[o, z, z], [z, o, z], [z, z, o]])
    }

    /// Right-handed rotation about the world Z axis by `angle` radians.
    pub fn rotation_z(angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        let (o, z) = (T::one(), T::zero());
        Mat3::from_rows([[c, -s, z], [s, c, z], [z, z, o]])
    }

    pub fn row(&self, i: usize) -> Vec3<T> {
        Vec3::new(self.rows[i][0], self.rows[i][1], self.rows[i][2])
    }

    pub fn transpose(&self) -> Self {
        let r = &self.rows;
        Mat3::from_rows([
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        ])
    }

    pub fn determinant(&self) -> T {
        self.row(0).dot(self.row(1).cross(self.row(2)))
    }

    /// Largest absolute deviation of `RᵀR` from the identity.
    pub fn orthonormality_error(&self) -> T {
        let p = self.transpose() * *self;
        let mut worst = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((p.rows[i][j] - target).abs());
            }
        }
        worst
    }

    pub fn is_rotation(&self, tol: T) -> bool {
        self.orthonormality_error() <= tol && (self.determinant() - T::one()).abs() <= tol
    }
}

impl<T: Real> Mul<Vec3<T>> for Mat3<T> {
    type Output = Vec3<T>;
    #[inline]
    fn mul(self, v: Vec3<T>) -> Vec3<T> {
        let r = &self.rows;
        Vec3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }
}

impl<T: Real> Mul for Mat3<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut out = [[T::zero(); 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.rows[i][k] * o.rows[k][j]).sum();
            }
        }
        Mat3::from_rows(out)
    }
}

/// Rigid motion `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform<T> {
    pub rotation: Mat3<T>,
    pub translation: Vec3<T>,
}

impl<T: Real> RigidTransform<T> {
    pub fn new(rotation: Mat3<T>, translation: Vec3<T>) -> Self {
        RigidTransform {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        RigidTransform::new(Mat3::identity(), Vec3::zero())
    }

    /// World→camera pose of a camera at `eye` whose optical axis points at
    /// `target`, with image rows running opposite to `up`.
    pub fn look_at(eye: Vec3<T>, target: Vec3<T>, up: Vec3<T>) -> Self {
        let forward = (target - eye).normalized();
        let mut right = forward.cross(up);
        if right.norm() <= T::lit(1e-12) {
            // Looking along `up`: any perpendicular works.
            let alt = if forward.x.abs() < T::lit(0.9) {
                Vec3::new(T::one(), T::zero(), T::zero())
            } else {
                Vec3::new(T::zero(), T::one(), T::zero())
            };
            right = forward.cross(alt);
        }
        let right = right.normalized();
        let down = forward.cross(right);
        let rotation = Mat3::from_rows([
            [right.x, right.y, right.z],
            [down.x, down.y, down.z],
            [forward.x, forward.y, forward.z],
        ]);
        RigidTransform::new(rotation, -(rotation * eye))
    }

    #[inline]
    pub fn apply(&self, p: Vec3<T>) -> Vec3<T> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        RigidTransform::new(rt, -(rt * self.translation))
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        RigidTransform::new(
            self.rotation * other.rotation,
            self.apply(other.translation),
        )
    }
}

/// Integer pixel, column `x` and row `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Pixel {
    pub x: usize,
    pub y: usize,
}

impl Pixel {
    pub const fn new(x: usize, y: usize) -> Self {
        Pixel { x, y }
    }

    /// Row-major linear index.
    #[inline]
    pub fn index(self, width: usize) -> usize {
        self.y * width + self.x
    }

    /// Row-major ordering key: rows first, then columns.
    #[inline]
    pub fn row_major_key(self) -> (usize, usize) {
        (self.y, self.x)
    }
}

/// Real-valued image coordinate, as produced by projection.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImagePoint<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> ImagePoint<T> {
    pub fn new(x: T, y: T) -> Self {
        ImagePoint { x, y }
    }

    /// Nearest integer pixel, if it lies inside a `width`×`height` frame.
    pub fn round_in_frame(self, width: usize, height: usize) -> Option<Pixel> {
        let rx = self.x.round();
        let ry = self.y.round();
        if !(rx >= T::zero() && ry >= T::zero()) {
            return None;
        }
        let (x, y) = (rx.to_usize()?, ry.to_usize()?);
        (x < width && y < height).then_some(Pixel::new(x, y))
    }
}

impl<T: Real> From<Pixel> for ImagePoint<T> {
    fn from(p: Pixel) -> Self {
        ImagePoint::new(T::from_usize_lossy(p.x), T::from_usize_lossy(p.y))
    }
}

/// Result of projecting a world point: image location and camera-frame depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection<T> {
    pub pixel: ImagePoint<T>,
    pub depth: T,
}

/// Pinhole intrinsics plus world→camera pose.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel<T> {
    pub id: u32,
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: usize,
    pub height: usize,
    pub pose: RigidTransform<T>,
}

impl<T: Real> CameraModel<T> {
    /// Builds a camera, checking every intrinsic and pose invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: u32,
        fx: T,
        fy: T,
        cx: T,
        cy: T,
        width: usize,
        height: usize,
        pose: RigidTransform<T>,
    ) -> Result<Self, GeometryError> {
        let cam = CameraModel {
            id,
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            pose,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |field, reason: String| Err(GeometryError::InvalidCamera { field, reason });
        if self.width == 0 || self.height == 0 {
            return bad(
                "width/height",
                format!("{}x{} frame is empty", self.width, self.height),
            );
        }
        if !(self.fx > T::zero() && self.fx.is_finite()) {
            return bad("fx", format!("must be > 0, got {}", self.fx));
        }
        if !(self.fy > T::zero() && self.fy.is_finite()) {
            return bad("fy", format!("must be > 0, got {}", self.fy));
        }
        if !(self.cx >= T::zero() && self.cx < T::from_usize_lossy(self.width)) {
            return bad(
                "cx",
                format!("must lie in [0, {}), got {}", self.width, self.cx),
            );
        }
        if !(self.cy >= T::zero() && self.cy < T::from_usize_lossy(self.height)) {
            return bad(
                "cy",
                format!("must lie in [0, {}), got {}", self.height, self.cy),
            );
        }
        // f32 cannot hold 1e-9; scale the tolerance to the scalar's precision.
        let tol = T::lit(ROTATION_TOLERANCE).max(T::epsilon() * T::lit(16.0));
        if !self.pose.rotation.is_rotation(tol) {
            return bad(
                "rotation",
                format!(
                    "must be orthonormal with det +1 (orthonormality error {}, det {})",
                    self.pose.rotation.orthonormality_error(),
                    self.pose.rotation.determinant()
                ),
            );
        }
        if !self.pose.translation.is_finite() {
            return bad("translation", "must be finite".to_string());
        }
        Ok(())
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3<T> {
        -(self.pose.rotation.transpose() * self.pose.translation)
    }

    #[inline]
    pub fn contains(&self, pix: Pixel) -> bool {
        pix.x < self.width && pix.y < self.height
    }

    /// Projects a world point. `None` when the point is within `Z_MIN_MM`
    /// of the image plane or behind it. The pixel is not clamped to the frame.
    #[inline]
    pub fn project(&self, p_world: Vec3<T>) -> Option<Projection<T>> {
        let pc = self.pose.apply(p_world);
        if !(pc.z > T::lit(Z_MIN_MM)) {
            return None;
        }
        Some(Projection {
            pixel: ImagePoint::new(
                self.fx * pc.x / pc.z + self.cx,
                self.fy * pc.y / pc.z + self.cy,
            ),
            depth: pc.z,
        })
    }

    /// Lifts an integer pixel at `depth` mm into world coordinates.
    pub fn back_project(&self, pix: Pixel, depth: T) -> Result<Vec3<T>, GeometryError> {
        if !self.contains(pix) {
            return Err(GeometryError::PixelOutOfFrame {
                x: pix.x,
                y: pix.y,
                width: self.width,
                height: self.height,
            });
        }
        self.back_project_point(pix.into(), depth)
    }

    /// Lifts a real-valued image coordinate at `depth` mm into world coordinates.
    #[inline]
    pub fn back_project_point(
        &self,
        pix: ImagePoint<T>,
        depth: T,
    ) -> Result<Vec3<T>, GeometryError> {
        if !(depth > T::zero() && depth.is_finite()) {
            return Err(GeometryError::NonPositiveDepth(depth.to_f64_lossy()));
        }
        let pc = Vec3::new(
            (pix.x - self.cx) / self.fx * depth,
            (pix.y - self.cy) / self.fy * depth,
            depth,
        );
        Ok(self.to_world(pc))
    }

    /// Camera frame → world frame.
    #[inline]
    pub fn to_world(&self, p_cam: Vec3<T>) -> Vec3<T> {
        // Rᵀ(p − t), without materializing the inverse.
        self.pose.rotation.transpose() * (p_cam - self.pose.translation)
    }

    /// Unit-free ray direction (camera frame, z = 1) through a pixel center.
    #[inline]
    pub fn ray_camera(&self, pix: ImagePoint<T>) -> Vec3<T> {
        Vec3::new(
            (pix.x - self.cx) / self.fx,
            (pix.y - self.cy) / self.fy,
            T::one(),
        )
    }
}
