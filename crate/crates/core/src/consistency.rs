//! Cross-view 3D distance consistency.
//!
//! A world point is reprojected into neighboring cameras; each neighbor's own
//! depth at the rounded pixel is lifted back to 3D and the squared distances
//! to the point are folded into `V = exp(-mean(d²) / σ²)`.

use serde::{Deserialize, Serialize};

use crate::confidence::{DepthFrame, ParamError};
use crate::geometry::{CameraModel, Pixel, Vec3};
use crate::scalar::Real;

/// A camera together with its depth frame for the current time step.
#[derive(Debug, Clone, Copy)]
pub struct CameraView<'a, T> {
    pub camera: &'a CameraModel<T>,
    pub frame: &'a DepthFrame<T>,
}

impl<'a, T: Real> CameraView<'a, T> {
    pub fn new(camera: &'a CameraModel<T>, frame: &'a DepthFrame<T>) -> Self {
        CameraView { camera, frame }
    }

    pub fn id(&self) -> u32 {
        self.camera.id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "T: Real")]
pub struct ConsistencyParams<T> {
    /// Tolerated spatial deviation, mm.
    pub sigma: T,
    /// Cameras considered per point, the owner included.
    pub k_cams: usize,
}

impl<T: Real> Default for ConsistencyParams<T> {
    fn default() -> Self {
        ConsistencyParams {
            sigma: T::lit(20.0),
            k_cams: 4,
        }
    }
}

impl<T: Real> ConsistencyParams<T> {
    /// Defaults for an `n`-camera rig: σ = 20 mm, K = min(4, n).
    pub fn for_rig(n: usize) -> Self {
        ConsistencyParams {
            sigma: T::lit(20.0),
            k_cams: n.clamp(2, 4),
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.sigma > T::zero() && self.sigma.is_finite()) {
            return Err(ParamError::Invalid {
                field: "sigma",
                reason: format!("must be > 0, got {}", self.sigma),
            });
        }
        if self.k_cams < 2 {
            return Err(ParamError::Invalid {
                field: "k_cams",
                reason: format!("must be >= 2, got {}", self.k_cams),
            });
        }
        Ok(())
    }

    /// Rig-size check, applied where the camera count is known.
    pub fn validate_for_rig(&self, n: usize) -> Result<(), ParamError> {
        self.validate()?;
        if n >= 2 && self.k_cams > n {
            return Err(ParamError::Invalid {
                field: "k_cams",
                reason: format!("must be <= camera count {n}, got {}", self.k_cams),
            });
        }
        Ok(())
    }
}

/// Nearest pixel of `p_world` in `view`, if in front, inside the frame and
/// backed by a valid depth sample.
#[inline]
pub fn fov_check<T: Real>(p_world: Vec3<T>, view: &CameraView<'_, T>) -> Option<Pixel> {
    let proj = view.camera.project(p_world)?;
    let pix = proj
        .pixel
        .round_in_frame(view.camera.width, view.camera.height)?;
    view.frame.valid_at(pix).map(|_| pix)
}

/// Cameras other than `owner` that observe `p_world`, nearest first, at most
/// `k_cams - 1` of them. Distance ties go to the lower camera id.
pub fn select_neighbor_cams<T: Real>(
    p_world: Vec3<T>,
    owner: u32,
    views: &[CameraView<'_, T>],
    k_cams: usize,
) -> Vec<u32> {
    select_neighbors_with_pixels(p_world, owner, views, k_cams)
        .into_iter()
        .map(|(id, _)| id)
        .collect()
}

/// Like [`select_neighbor_cams`] but keeps the looked-up pixel, sparing a
/// second projection when the weight is computed right after.
pub fn select_neighbors_with_pixels<T: Real>(
    p_world: Vec3<T>,
    owner: u32,
    views: &[CameraView<'_, T>],
    k_cams: usize,
) -> Vec<(u32, Pixel)> {
    let limit = k_cams.saturating_sub(1);
    if limit == 0 {
        return Vec::new();
    }
    let mut cands: Vec<(T, u32, Pixel)> = views
        .iter()
        .filter(|v| v.id() != owner)
        .filter_map(|v| {
            fov_check(p_world, v).map(|pix| (v.camera.center().distance(p_world), v.id(), pix))
        })
        .collect();
    cands.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("finite distances")
            .then(a.1.cmp(&b.1))
    });
    cands.truncate(limit);
    cands.into_iter().map(|(_, id, pix)| (id, pix)).collect()
}

/// `exp(-(1/K) Σ d²/σ²)` over `K` neighbor distances; `1` when there are none.
#[inline]
pub fn weight_from_distances<T: Real>(distances: &[T], sigma: T) -> T {
    if distances.is_empty() {
        return T::one();
    }
    let s2 = sigma * sigma;
    let sum: T = distances.iter().map(|d| *d * *d / s2).sum();
    (-(sum / T::from_usize_lossy(distances.len()))).exp()
}

/// Distance from `p_world` to the point neighbor `view` reconstructs at `pix`.
#[inline]
fn reprojection_distance<T: Real>(
    p_world: Vec3<T>,
    view: &CameraView<'_, T>,
    pix: Pixel,
) -> Option<T> {
    let d = view.frame.valid_at(pix)?;
    let q = view.camera.back_project(pix, d).ok()?;
    Some(p_world.distance(q))
}

/// Consistency weight of `p_world` against the listed neighbor cameras.
///
/// Neighbors that no longer observe the point (unknown id, out of view) are
/// skipped and do not count toward the average.
pub fn consistency_weight<T: Real>(
    p_world: Vec3<T>,
    neighbors: &[u32],
    views: &[CameraView<'_, T>],
    sigma: T,
) -> T {
    let ds: Vec<T> = neighbors
        .iter()
        .filter_map(|id| views.iter().find(|v| v.id() == *id))
        .filter_map(|v| {
            fov_check(p_world, v).and_then(|pix| reprojection_distance(p_world, v, pix))
        })
        .collect();
    weight_from_distances(&ds, sigma)
}

/// Neighbor selection and weight in one pass.
pub fn point_consistency<T: Real>(
    p_world: Vec3<T>,
    owner: u32,
    views: &[CameraView<'_, T>],
    params: &ConsistencyParams<T>,
) -> T {
    let ds: Vec<T> = select_neighbors_with_pixels(p_world, owner, views, params.k_cams)
        .into_iter()
        .map(|(id, pix)| {
            let view = views
                .iter()
                .find(|v| v.id() == id)
                .expect("selected from views");
            reprojection_distance(p_world, view, pix).expect("fov_check guarantees a valid sample")
        })
        .collect();
    weight_from_distances(&ds, params.sigma)
}
