//! Gated per-camera back-projection of depth frames into world-space fragments.

use rayon::prelude::*;
use thiserror::Error;

use crate::confidence::{ConfidenceMap, DepthFrame};
use crate::geometry::{CameraModel, Pixel, Vec3};
use crate::scalar::Real;

/// Default confidence gate.
pub const DEFAULT_TAU: f64 = 0.6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PointGenError {
    #[error("camera {camera_id} is {cam_w}x{cam_h} but its {what} is {got_w}x{got_h}")]
    DimensionMismatch {
        camera_id: u32,
        what: &'static str,
        cam_w: usize,
        cam_h: usize,
        got_w: usize,
        got_h: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FragmentPoint<T> {
    pub position: Vec3<T>,
    pub confidence: T,
    pub pixel: Pixel,
}

/// Gated world-space points from one camera for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PointFragment<T> {
    pub camera_id: u32,
    pub points: Vec<FragmentPoint<T>>,
}

impl<T> PointFragment<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn median_in_place<T: Real>(v: &mut [T]) -> T {
    v.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite depths"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::two()
    }
}

/// Optional 3×3 median filter over valid neighbors; invalid pixels stay invalid.
///
/// With an even number of valid neighbors the two middle values are averaged.
pub fn preprocess_depth<T: Real>(frame: &DepthFrame<T>, median_filter: bool) -> DepthFrame<T> {
    if !median_filter {
        return frame.clone();
    }
    let (w, h) = (frame.width, frame.height);
    let mut out = vec![T::zero(); frame.len()];
    if w > 0 {
        out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            let mut buf = Vec::with_capacity(9);
            for (x, o) in row.iter_mut().enumerate() {
                if !frame.is_valid(x, y) {
                    continue;
                }
                buf.clear();
                for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        let d = frame.get(xx, yy);
                        if d > T::zero() {
                            buf.push(d);
                        }
                    }
                }
                *o = median_in_place(&mut buf);
            }
        });
    }
    DepthFrame::new(frame.camera_id, w, h, out).expect("median of valid depths is valid")
}

fn check_dims<T: Real>(
    cam: &CameraModel<T>,
    what: &'static str,
    w: usize,
    h: usize,
) -> Result<(), PointGenError> {
    if cam.width != w || cam.height != h {
        return Err(PointGenError::DimensionMismatch {
            camera_id: cam.id,
            what,
            cam_w: cam.width,
            cam_h: cam.height,
            got_w: w,
            got_h: h,
        });
    }
    Ok(())
}

/// Back-projects every valid pixel whose confidence exceeds `tau`.
///
/// Points are emitted in row-major pixel order regardless of how rows are
/// scheduled across workers.
pub fn generate_fragment<T: Real>(
    cam: &CameraModel<T>,
    frame: &DepthFrame<T>,
    conf: &ConfidenceMap<T>,
    tau: T,
) -> Result<PointFragment<T>, PointGenError> {
    check_dims(cam, "depth frame", frame.width, frame.height)?;
    check_dims(cam, "confidence map", conf.width, conf.height)?;
    let w = frame.width;
    let rows: Vec<Vec<FragmentPoint<T>>> = (0..frame.height)
        .into_par_iter()
        .map(|y| {
            let mut row = Vec::new();
            for x in 0..w {
                let d = frame.get(x, y);
                let c = conf.get(x, y);
                if d > T::zero() && c > tau {
                    let pixel = Pixel::new(x, y);
                    let position = cam.back_project(pixel, d).expect("valid pixel and depth");
                    row.push(FragmentPoint {
                        position,
                        confidence: c,
                        pixel,
                    });
                }
            }
            row
        })
        .collect();
    let mut points = Vec::with_capacity(rows.iter().map(Vec::len).sum());
    for r in rows {
        points.extend(r);
    }
    Ok(PointFragment {
        camera_id: cam.id,
        points,
    })
}
