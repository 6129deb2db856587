//! Per-pixel measurement confidence from depth gradient and local depth spread.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pixel;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("depth buffer holds {actual} values, expected {width}x{height} = {expected}")]
    SizeMismatch {
        width: usize,
        height: usize,
        expected: usize,
        actual: usize,
    },
    #[error("depth at pixel ({x}, {y}) is {value}; depths must be finite and >= 0")]
    BadDepth { x: usize, y: usize, value: f64 },
}

/// One camera's depth image in millimeters; `0` marks an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame<T> {
    pub camera_id: u32,
    pub width: usize,
    pub height: usize,
    depth: Vec<T>,
}

impl<T: Real> DepthFrame<T> {
    pub fn new(
        camera_id: u32,
        width: usize,
        height: usize,
        depth: Vec<T>,
    ) -> Result<Self, FrameError> {
        let expected = width * height;
        if depth.len() != expected {
            return Err(FrameError::SizeMismatch {
                width,
                height,
                expected,
                actual: depth.len(),
            });
        }
        if let Some(i) = depth
            .iter()
            .position(|d| !(d.is_finite() && *d >= T::zero()))
        {
            return Err(FrameError::BadDepth {
                x: i % width,
                y: i / width,
                value: depth[i].to_f64_lossy(),
            });
        }
        Ok(DepthFrame {
            camera_id,
            width,
            height,
            depth,
        })
    }

    /// A frame with every pixel invalid.
    pub fn invalid(camera_id: u32, width: usize, height: usize) -> Self {
        DepthFrame {
            camera_id,
            width,
            height,
            depth: vec![T::zero(); width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.depth[y * self.width + x]
    }

    #[inline]
    pub fn at(&self, pix: Pixel) -> T {
        self.get(pix.x, pix.y)
    }

    /// Depth at `pix` when the pixel is inside the frame and valid.
    #[inline]
    pub fn valid_at(&self, pix: Pixel) -> Option<T> {
        if pix.x < self.width && pix.y < self.height {
            let d = self.at(pix);
            (d > T::zero()).then_some(d)
        } else {
            None
        }
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.get(x, y) > T::zero()
    }

    pub fn values(&self) -> &[T] {
        &self.depth
    }

    pub fn len(&self) -> usize {
        self.depth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depth.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|d| **d > T::zero()).count()
    }
}

/// Per-pixel confidence in `[0, 1]`, zero on invalid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap<T> {
    pub width: usize,
    pub height: usize,
    values: Vec<T>,
}

impl<T: Real> ConfidenceMap<T> {
    pub fn from_values(width: usize, height: usize, values: Vec<T>) -> Self {
        assert_eq!(values.len(), width * height, "confidence buffer size");
        ConfidenceMap {
            width,
            height,
            values,
        }
    }

    /// A map with the same value everywhere, ignoring the depth mask.
    pub fn uniform(width: usize, height: usize, value: T) -> Self {
        ConfidenceMap {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.values[y * self.width + x]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

/// Weights of the confidence model `α/(1+βG) + γ/(1+δσ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "T: Real")]
pub struct ConfidenceParams<T> {
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
    pub delta: T,
    /// Odd side length of the square neighborhood used for the local spread.
    pub window: usize,
}

impl<T: Real> Default for ConfidenceParams<T> {
    fn default() -> Self {
        ConfidenceParams {
            alpha: T::lit(0.5),
            beta: T::lit(0.5),
            gamma: T::one(),
            delta: T::one(),
            window: 3,
        }
    }
}

impl<T: Real> ConfidenceParams<T> {
    pub fn validate(&self) -> Result<(), ParamError> {
        for (field, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
        ] {
            if !(v >= T::zero() && v.is_finite()) {
                return Err(ParamError::Invalid {
                    field,
                    reason: format!("must be finite and >= 0, got {v}"),
                });
            }
        }
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(ParamError::Invalid {
                field: "window",
                reason: format!("must be odd and >= 3, got {}", self.window),
            });
        }
        Ok(())
    }

    /// Confidence from a gradient magnitude and local spread, clamped to 1.
    #[inline]
    pub fn evaluate(&self, gradient: T, spread: T) -> T {
        let raw = self.alpha / (T::one() + self.beta * gradient)
            + self.gamma / (T::one() + self.delta * spread);
        raw.min(T::one())
    }
}

/// One-axis derivative over the valid neighbors of a valid center sample.
#[inline]
fn axis_derivative<T: Real>(center: T, prev: Option<T>, next: Option<T>) -> T {
    match (prev, next) {
        (Some(p), Some(n)) => (n - p) / T::two(),
        (None, Some(n)) => n - center,
        (Some(p), None) => center - p,
        (None, None) => T::zero(),
    }
}

fn valid_sample<T: Real>(frame: &DepthFrame<T>, x: isize, y: isize) -> Option<T> {
    if x < 0 || y < 0 || x as usize >= frame.width || y as usize >= frame.height {
        return None;
    }
    let d = frame.get(x as usize, y as usize);
    (d > T::zero()).then_some(d)
}

/// Depth gradient magnitude (mm per pixel) at a valid pixel.
///
/// Central differences where both neighbors along an axis are valid, one-sided
/// where only one is, zero where neither is.
pub fn depth_gradient<T: Real>(frame: &DepthFrame<T>, pix: Pixel) -> T {
    let center = frame.at(pix);
    debug_assert!(center > T::zero(), "gradient requested at invalid pixel");
    let (x, y) = (pix.x as isize, pix.y as isize);
    let gx = axis_derivative(
        center,
        valid_sample(frame, x - 1, y),
        valid_sample(frame, x + 1, y),
    );
    let gy = axis_derivative(
        center,
        valid_sample(frame, x, y - 1),
        valid_sample(frame, x, y + 1),
    );
    (gx * gx + gy * gy).sqrt()
}

/// Population standard deviation (mm) of the valid depths in the
/// `window`×`window` neighborhood clipped to the frame; zero below two samples.
pub fn local_deviation<T: Real>(frame: &DepthFrame<T>, pix: Pixel, window: usize) -> T {
    let r = window / 2;
    let x0 = pix.x.saturating_sub(r);
    let y0 = pix.y.saturating_sub(r);
    let x1 = (pix.x + r).min(frame.width - 1);
    let y1 = (pix.y + r).min(frame.height - 1);

    let mut n = 0usize;
    let mut sum = T::zero();
    for yy in y0..=y1 {
        for xx in x0..=x1 {
            let d = frame.get(xx, yy);
            if d > T::zero() {
                n += 1;
                sum = sum + d;
            }
        }
    }
    if n < 2 {
        return T::zero();
    }
    let mean = sum / T::from_usize_lossy(n);
    let mut ss = T::zero();
    for yy in y0..=y1 {
        for xx in x0..=x1 {
            let d = frame.get(xx, yy);
            if d > T::zero() {
                let e = d - mean;
                ss = ss + e * e;
            }
        }
    }
    (ss / T::from_usize_lossy(n)).sqrt()
}

/// Confidence of a single valid pixel.
pub fn pixel_confidence<T: Real>(
    frame: &DepthFrame<T>,
    pix: Pixel,
    params: &ConfidenceParams<T>,
) -> T {
    if frame.at(pix) <= T::zero() {
        return T::zero();
    }
    params.evaluate(
        depth_gradient(frame, pix),
        local_deviation(frame, pix, params.window),
    )
}

/// Full confidence map, computed row-parallel.
pub fn confidence_map<T: Real>(
    frame: &DepthFrame<T>,
    params: &ConfidenceParams<T>,
) -> ConfidenceMap<T> {
    let w = frame.width;
    let mut values = vec![T::zero(); frame.len()];
    if w > 0 {
        values.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            for (x, c) in row.iter_mut().enumerate() {
                *c = pixel_confidence(frame, Pixel::new(x, y), params);
            }
        });
    }
    ConfidenceMap {
        width: w,
        height: frame.height,
        values,
    }
}
