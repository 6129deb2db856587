//! Joint weighting and per-cell weighted averaging into the fused cloud, plus
//! the stateless per-frame pipeline that ties every stage together.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confidence::{confidence_map, ConfidenceParams, DepthFrame, ParamError};
use crate::consistency::{point_consistency, CameraView, ConsistencyParams};
use crate::geometry::{CameraModel, Vec3};
use crate::hashgrid::{build_grid, select_representatives, GridError, GridParams, PointTable};
use crate::pointgen::{
    generate_fragment, preprocess_depth, PointFragment, PointGenError, DEFAULT_TAU,
};
use crate::scalar::Real;

/// Cells whose weight mass falls below this are dropped.
pub const WEIGHT_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("{cameras} cameras but {frames} depth frames")]
    CountMismatch { cameras: usize, frames: usize },
    #[error("frame {index} belongs to camera {frame_camera}, expected camera {camera}")]
    CameraMismatch {
        index: usize,
        camera: u32,
        frame_camera: u32,
    },
    #[error("camera id {0} appears more than once")]
    DuplicateCamera(u32),
    #[error(transparent)]
    Dimensions(#[from] PointGenError),
    #[error(transparent)]
    Grid(GridError),
    #[error(transparent)]
    Params(#[from] ParamError),
}

/// `ω = C · V`.
#[inline]
pub fn joint_weight<T: Real>(confidence: T, consistency: T) -> T {
    confidence * consistency
}

/// A representative ready for fusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPoint<T> {
    pub position: Vec3<T>,
    pub weight: T,
    pub confidence: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedPoint<T> {
    pub position: Vec3<T>,
    /// Σω over the contributors.
    pub total_weight: T,
    /// Contributors with positive weight.
    pub contributor_count: u8,
    pub mean_confidence: T,
}

/// Normalized weighted mean `Σωp / Σω`; `None` when `Σω < ε`.
pub fn fuse_cell<T: Real>(points: &[WeightedPoint<T>]) -> Option<FusedPoint<T>> {
    let total: T = points.iter().map(|p| p.weight).sum();
    if !(total >= T::lit(WEIGHT_EPSILON)) {
        return None;
    }
    let mut acc = Vec3::zero();
    let mut conf = T::zero();
    let mut n = 0u8;
    for p in points.iter().filter(|p| p.weight > T::zero()) {
        acc += p.position * p.weight;
        conf = conf + p.confidence;
        n += 1;
    }
    Some(FusedPoint {
        position: acc / total,
        total_weight: total,
        contributor_count: n,
        mean_confidence: conf / T::from_u8(n).expect("small count"),
    })
}

/// Component switches; `true` means the component is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    /// Measurement confidence in the joint weight.
    pub measurement_confidence: bool,
    /// Cross-view distance consistency.
    pub distance_consistency: bool,
    /// Adaptive spatial-hash aggregation; off means point-wise fusion.
    pub spatial_aggregation: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation::FULL
    }
}

impl Ablation {
    pub const FULL: Ablation = Ablation {
        measurement_confidence: true,
        distance_consistency: true,
        spatial_aggregation: true,
    };
    pub const NO_MF: Ablation = Ablation {
        measurement_confidence: false,
        ..Ablation::FULL
    };
    pub const NO_DC: Ablation = Ablation {
        distance_consistency: false,
        ..Ablation::FULL
    };
    pub const NO_SA: Ablation = Ablation {
        spatial_aggregation: false,
        ..Ablation::FULL
    };

    /// Short label as used in reports.
    pub fn label(&self) -> String {
        let mut off = Vec::new();
        if !self.measurement_confidence {
            off.push("no-mf");
        }
        if !self.distance_consistency {
            off.push("no-dc");
        }
        if !self.spatial_aggregation {
            off.push("no-sa");
        }
        if off.is_empty() {
            "full".to_string()
        } else {
            off.join("+")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound = "T: Real")]
pub struct PipelineParams<T> {
    pub confidence: ConfidenceParams<T>,
    pub consistency: ConsistencyParams<T>,
    pub grid: GridParams<T>,
    pub tau: T,
    pub median_filter: bool,
}

impl<T: Real> Default for PipelineParams<T> {
    fn default() -> Self {
        PipelineParams {
            confidence: ConfidenceParams::default(),
            consistency: ConsistencyParams::default(),
            grid: GridParams::default(),
            tau: T::lit(DEFAULT_TAU),
            median_filter: false,
        }
    }
}

impl<T: Real> PipelineParams<T> {
    pub fn validate(&self) -> Result<(), ParamError> {
        self.confidence.validate()?;
        self.consistency.validate()?;
        self.grid.validate()?;
        if !(self.tau >= T::zero() && self.tau < T::one()) {
            return Err(ParamError::Invalid {
                field: "tau",
                reason: format!("must lie in [0, 1), got {}", self.tau),
            });
        }
        Ok(())
    }
}

/// Counters describing one fused frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FusionStats {
    /// Valid depth pixels across all cameras.
    pub valid_pixels: usize,
    /// Points that passed the confidence gate.
    pub gated_points: usize,
    /// Occupied leaf cells; equals `gated_points` with aggregation off.
    pub occupied_cells: usize,
    pub refined_coarse_cells: usize,
    /// Observations that received a consistency weight and entered fusion.
    pub fused_inputs: usize,
    /// Cells dropped for insufficient weight.
    pub dropped_cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedCloud<T> {
    pub points: Vec<FusedPoint<T>>,
    pub frame_index: u64,
    pub camera_count: usize,
    pub stats: FusionStats,
}

impl<T> FusedCloud<T> {
    pub fn empty(frame_index: u64, camera_count: usize) -> Self {
        FusedCloud {
            points: Vec::new(),
            frame_index,
            camera_count,
            stats: FusionStats::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Checks that `frames[i]` belongs to `cameras[i]` and that ids are unique.
pub fn check_inputs<T: Real>(
    cameras: &[CameraModel<T>],
    frames: &[DepthFrame<T>],
) -> Result<(), PipelineError> {
    if cameras.len() != frames.len() {
        return Err(PipelineError::CountMismatch {
            cameras: cameras.len(),
            frames: frames.len(),
        });
    }
    for (i, (c, f)) in cameras.iter().zip(frames).enumerate() {
        if c.id != f.camera_id {
            return Err(PipelineError::CameraMismatch {
                index: i,
                camera: c.id,
                frame_camera: f.camera_id,
            });
        }
    }
    let mut ids: Vec<u32> = cameras.iter().map(|c| c.id).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(PipelineError::DuplicateCamera(w[0]));
    }
    Ok(())
}

/// Fuses one time step of depth frames into a point cloud.
///
/// `frames[i]` must belong to `cameras[i]`. The result depends only on the
/// arguments; nothing is carried between calls.
pub fn fuse_frame<T: Real>(
    cameras: &[CameraModel<T>],
    frames: &[DepthFrame<T>],
    params: &PipelineParams<T>,
    ablation: Ablation,
    frame_index: u64,
) -> Result<FusedCloud<T>, PipelineError> {
    check_inputs(cameras, frames)?;
    params.validate()?;

    let prepared: Vec<DepthFrame<T>> = frames
        .par_iter()
        .map(|f| preprocess_depth(f, params.median_filter))
        .collect();
    let mut views: Vec<CameraView<'_, T>> = cameras
        .iter()
        .zip(&prepared)
        .map(|(c, f)| CameraView::new(c, f))
        .collect();
    // Camera id order makes the output independent of argument order.
    views.sort_by_key(|v| v.id());

    let fragments: Vec<PointFragment<T>> = views
        .par_iter()
        .map(|v| {
            let conf = confidence_map(v.frame, &params.confidence);
            generate_fragment(v.camera, v.frame, &conf, params.tau)
        })
        .collect::<Result<_, _>>()?;

    let mut stats = FusionStats {
        valid_pixels: prepared.iter().map(DepthFrame::valid_count).sum(),
        ..FusionStats::default()
    };
    let table = PointTable::from_fragments(&fragments);
    stats.gated_points = table.len();
    if table.is_empty() {
        return Ok(FusedCloud {
            stats,
            ..FusedCloud::empty(frame_index, cameras.len())
        });
    }

    let consistency = ConsistencyParams {
        k_cams: params.consistency.k_cams.min(views.len().max(1)),
        ..params.consistency
    };
    let weigh = |i: u32| -> WeightedPoint<T> {
        let p = &table.points[i as usize];
        let v = if ablation.distance_consistency {
            point_consistency(p.position, p.camera_id, &views, &consistency)
        } else {
            T::one()
        };
        let c = if ablation.measurement_confidence {
            p.confidence
        } else {
            T::one()
        };
        WeightedPoint {
            position: p.position,
            weight: joint_weight(c, v),
            confidence: p.confidence,
        }
    };

    let fused: Vec<Option<FusedPoint<T>>> = if ablation.spatial_aggregation {
        let grid = build_grid(&table, &params.grid).map_err(PipelineError::Grid)?;
        let reps = select_representatives(&grid, &table);
        stats.occupied_cells = grid.occupied_cells();
        stats.refined_coarse_cells = grid.refined_coarse_cells;
        stats.fused_inputs = reps.iter().map(|r| r.reps.len()).sum();
        reps.par_iter()
            .map(|cell| {
                let pts: Vec<WeightedPoint<T>> = cell.reps.iter().map(|r| weigh(r.index)).collect();
                fuse_cell(&pts)
            })
            .collect()
    } else {
        stats.occupied_cells = table.len();
        stats.fused_inputs = table.len();
        (0..table.len() as u32)
            .into_par_iter()
            .map(|i| fuse_cell(&[weigh(i)]))
            .collect()
    };

    stats.dropped_cells = fused.iter().filter(|f| f.is_none()).count();
    let points: Vec<FusedPoint<T>> = fused.into_iter().flatten().collect();
    Ok(FusedCloud {
        points,
        frame_index,
        camera_count: cameras.len(),
        stats,
    })
}
