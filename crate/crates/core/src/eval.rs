//! Multi-camera depth consistency error and the camera-count scaling benchmark.

use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confidence::DepthFrame;
use crate::fusion::{check_inputs, fuse_frame, Ablation, PipelineError, PipelineParams};
use crate::geometry::{CameraModel, Vec3};
use crate::scalar::Real;
use crate::synth::{render_depth, SceneSpec, SynthError};

pub const DEFAULT_SAMPLE_SIZE: usize = 10_000;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no data: the fused cloud is empty")]
    EmptyCloud,
    #[error(transparent)]
    Inputs(#[from] PipelineError),
    #[error("frame for camera {camera} is {frame_w}x{frame_h}, camera expects {cam_w}x{cam_h}")]
    FrameSize {
        camera: u32,
        frame_w: usize,
        frame_h: usize,
        cam_w: usize,
        cam_h: usize,
    },
    #[error("{0}")]
    InvalidInput(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraResidual {
    pub camera_id: u32,
    /// Sampled points visible in this camera.
    pub observations: usize,
    /// Mean |projected − observed| depth over those points, mm.
    pub mean_abs_residual_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    /// Mean over retained points of the per-point mean absolute depth residual, mm.
    pub e_mc: f64,
    pub cloud_size: usize,
    /// Points drawn from the cloud.
    pub sample_size: usize,
    /// Drawn points seen by at least one camera; `e_mc` averages over these.
    pub evaluated: usize,
    /// Drawn points seen by no camera.
    pub excluded_no_visibility: usize,
    pub seed: u64,
    pub per_camera: Vec<CameraResidual>,
}

/// Indices of a uniform sample without replacement, ascending.
pub fn sample_indices(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let k = k.min(n);
    if k == n {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = index::sample(&mut rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

/// Depth residual of `p` in every camera that sees it: in front, rounded
/// pixel inside the frame, valid observed depth there.
fn residuals<T: Real>(
    p: Vec3<T>,
    cameras: &[CameraModel<T>],
    frames: &[DepthFrame<T>],
) -> Vec<(usize, f64)> {
    cameras
        .iter()
        .zip(frames)
        .enumerate()
        .filter_map(|(i, (cam, frame))| {
            let proj = cam.project(p)?;
            let pix = proj.pixel.round_in_frame(cam.width, cam.height)?;
            let observed = frame.valid_at(pix)?;
            Some((i, (proj.depth - observed).abs().to_f64_lossy()))
        })
        .collect()
}

/// Multi-camera depth consistency error over a seeded uniform sample of `points`.
///
/// `sample_size = None` uses `min(DEFAULT_SAMPLE_SIZE, points.len())`.
pub fn mc_error<T: Real>(
    points: &[Vec3<T>],
    cameras: &[CameraModel<T>],
    frames: &[DepthFrame<T>],
    sample_size: Option<usize>,
    seed: u64,
) -> Result<McReport, EvalError> {
    check_inputs(cameras, frames)?;
    for (c, f) in cameras.iter().zip(frames) {
        if c.width != f.width || c.height != f.height {
            return Err(EvalError::FrameSize {
                camera: c.id,
                frame_w: f.width,
                frame_h: f.height,
                cam_w: c.width,
                cam_h: c.height,
            });
        }
    }
    if points.is_empty() {
        return Err(EvalError::EmptyCloud);
    }
    let k = sample_size.unwrap_or(DEFAULT_SAMPLE_SIZE);
    if k == 0 {
        return Err(EvalError::InvalidInput("sample_size must be >= 1".into()));
    }
    let sample = sample_indices(points.len(), k, seed);
    let per_point: Vec<Vec<(usize, f64)>> = sample
        .par_iter()
        .map(|&i| residuals(points[i], cameras, frames))
        .collect();

    let mut cam_sum = vec![0.0f64; cameras.len()];
    let mut cam_n = vec![0usize; cameras.len()];
    let mut total = 0.0f64;
    let mut evaluated = 0usize;
    for res in &per_point {
        if res.is_empty() {
            continue;
        }
        evaluated += 1;
        total += res.iter().map(|r| r.1).sum::<f64>() / res.len() as f64;
        for &(cam, r) in res {
            cam_sum[cam] += r;
            cam_n[cam] += 1;
        }
    }
    let mut per_camera: Vec<CameraResidual> = cameras
        .iter()
        .enumerate()
        .map(|(i, c)| CameraResidual {
            camera_id: c.id,
            observations: cam_n[i],
            mean_abs_residual_mm: if cam_n[i] > 0 {
                cam_sum[i] / cam_n[i] as f64
            } else {
                0.0
            },
        })
        .collect();
    per_camera.sort_by_key(|c| c.camera_id);

    Ok(McReport {
        e_mc: if evaluated > 0 {
            total / evaluated as f64
        } else {
            0.0
        },
        cloud_size: points.len(),
        sample_size: sample.len(),
        evaluated,
        excluded_no_visibility: sample.len() - evaluated,
        seed,
        per_camera,
    })
}

/// Least-squares line `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    /// Coefficient of determination; 1 when `y` is constant.
    pub r_squared: f64,
    /// Root-mean-square residual.
    pub residual_rms: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Some(LinearFit {
        intercept,
        slope,
        r_squared,
        residual_rms: (ss_res / n).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub reps: usize,
    pub warmup: usize,
    /// Worker threads for the pipeline; 0 lets the pool pick.
    pub threads: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            reps: 5,
            warmup: 1,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    pub cameras: usize,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub fps: f64,
    /// Gated points per run; identical across repetitions.
    pub gated_points: usize,
    pub fused_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub reps: usize,
    pub warmup: usize,
    pub threads: usize,
    pub points: Vec<BenchPoint>,
    /// `mean_ms = intercept + slope·cameras`; absent with fewer than two distinct counts.
    pub fit: Option<LinearFit>,
}

impl BenchReport {
    pub fn camera_counts(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.cameras).collect()
    }

    pub fn mean_ms(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean_ms).collect()
    }
}

/// Times `fuse_frame` for each camera count; rendering is done up front and
/// is not timed. `rig_for(n)` supplies the `n`-camera rig.
pub fn bench_scaling<T, F>(
    counts: &[usize],
    scene: &SceneSpec<T>,
    rig_for: F,
    params: &PipelineParams<T>,
    ablation: Ablation,
    opts: BenchOptions,
) -> Result<BenchReport, EvalError>
where
    T: Real,
    F: Fn(usize) -> Result<Vec<CameraModel<T>>, SynthError>,
{
    if opts.reps == 0 {
        return Err(EvalError::InvalidInput("reps must be >= 1".into()));
    }
    if counts.is_empty() || counts.contains(&0) {
        return Err(EvalError::InvalidInput(
            "camera counts must be non-empty and >= 1".into(),
        ));
    }
    scene.validate()?;
    params.validate().map_err(PipelineError::from)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| EvalError::ThreadPool(e.to_string()))?;
    let threads = pool.current_num_threads();

    let mut points = Vec::with_capacity(counts.len());
    for &n in counts {
        let cameras = rig_for(n)?;
        let frames: Vec<DepthFrame<T>> = pool.install(|| {
            cameras
                .iter()
                .map(|c| render_depth(scene, c, 0).observed)
                .collect()
        });
        let mut times = Vec::with_capacity(opts.reps);
        let mut workload = None;
        for rep in 0..opts.warmup + opts.reps {
            let start = Instant::now();
            let cloud = pool.install(|| fuse_frame(&cameras, &frames, params, ablation, 0))?;
            let ms = start.elapsed().as_secs_f64() * 1e3;
            let w = (cloud.stats.gated_points, cloud.len());
            debug_assert!(
                workload.is_none_or(|prev| prev == w),
                "workload changed between repetitions"
            );
            workload = Some(w);
            if rep >= opts.warmup {
                times.push(ms);
            }
        }
        let mean_ms = times.iter().sum::<f64>() / times.len() as f64;
        let (gated_points, fused_points) = workload.unwrap_or_default();
        points.push(BenchPoint {
            cameras: n,
            mean_ms,
            min_ms: times.iter().copied().fold(f64::INFINITY, f64::min),
            fps: 1e3 / mean_ms,
            gated_points,
            fused_points,
        });
    }
    let x: Vec<f64> = points.iter().map(|p| p.cameras as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.mean_ms).collect();
    Ok(BenchReport {
        reps: opts.reps,
        warmup: opts.warmup,
        threads,
        fit: linear_fit(&x, &y),
        points,
    })
}
