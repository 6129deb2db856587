//! Rig configuration: calibrated cameras plus every pipeline and evaluation
//! parameter. Loading validates everything and names each offending field.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::confidence::{ConfidenceParams, ParamError};
use crate::consistency::ConsistencyParams;
use crate::fusion::{Ablation, PipelineParams};
use crate::geometry::{CameraModel, GeometryError, Mat3, RigidTransform, Vec3};
use crate::hashgrid::GridParams;
use crate::pointgen::DEFAULT_TAU;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub id: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// World→camera rotation, row-major.
    pub rotation: [f64; 9],
    /// World→camera translation, mm.
    pub translation: [f64; 3],
}

impl CameraSpec {
    pub fn to_camera(&self) -> Result<CameraModel<f64>, GeometryError> {
        let pose = RigidTransform::new(
            Mat3::from_row_slice(&self.rotation),
            Vec3::from(self.translation),
        );
        CameraModel::new(
            self.id,
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

impl From<&CameraModel<f64>> for CameraSpec {
    fn from(c: &CameraModel<f64>) -> Self {
        CameraSpec {
            id: c.id,
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            rotation: c.pose.rotation.to_row_array(),
            translation: c.pose.translation.into(),
        }
    }
}

/// Consistency section; `k_cams` defaults to `min(4, N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsistencyConfig {
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_cams: Option<usize>,
}

fn default_sigma() -> f64 {
    ConsistencyParams::<f64>::default().sigma
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        ConsistencyConfig {
            sigma: default_sigma(),
            k_cams: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub seed: u64,
    /// Points drawn for the consistency error; defaults to min(10 000, cloud size).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunParams {
    #[serde(default)]
    pub confidence: ConfidenceParams<f64>,
    #[serde(default)]
    pub consistency: ConsistencyConfig,
    #[serde(default)]
    pub grid: GridParams<f64>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub median_filter: bool,
    #[serde(default)]
    pub ablation: Ablation,
    pub eval: EvalConfig,
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

impl RunParams {
    pub fn with_seed(seed: u64) -> Self {
        RunParams {
            confidence: ConfidenceParams::default(),
            consistency: ConsistencyConfig::default(),
            grid: GridParams::default(),
            tau: DEFAULT_TAU,
            median_filter: false,
            ablation: Ablation::FULL,
            eval: EvalConfig {
                seed,
                sample_size: None,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigConfig {
    pub cameras: Vec<CameraSpec>,
    pub params: RunParams,
}

/// Hashed subset of the configuration: everything that shapes the fused cloud
/// except the ablation switches and evaluation settings.
#[derive(Serialize)]
struct HashInput<'a> {
    cameras: &'a [CameraSpec],
    pipeline: &'a PipelineParams<f64>,
}

fn prefixed(section: &str, e: ParamError) -> String {
    let ParamError::Invalid { field, reason } = e;
    format!("params.{section}.{field}: {reason}")
}

impl RigConfig {
    pub fn from_cameras(cameras: &[CameraModel<f64>], params: RunParams) -> Self {
        RigConfig {
            cameras: cameras.iter().map(CameraSpec::from).collect(),
            params,
        }
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: RigConfig = serde_json::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Every violated invariant, each prefixed with its field path.
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.cameras.is_empty() {
            errs.push("cameras: at least one camera is required".to_string());
        }
        for (i, c) in self.cameras.iter().enumerate() {
            if let Err(GeometryError::InvalidCamera { field, reason }) = c.to_camera() {
                errs.push(format!("cameras[{i}].{field}: {reason}"));
            }
            if let Some(j) = self.cameras[..i].iter().position(|o| o.id == c.id) {
                errs.push(format!(
                    "cameras[{i}].id: duplicate id {} (also cameras[{j}])",
                    c.id
                ));
            }
        }
        let p = &self.params;
        if let Err(e) = p.confidence.validate() {
            errs.push(prefixed("confidence", e));
        }
        if let Err(e) = self.consistency().validate_for_rig(self.cameras.len()) {
            errs.push(prefixed("consistency", e));
        }
        if let Err(e) = p.grid.validate() {
            errs.push(prefixed("grid", e));
        }
        if !(p.tau >= 0.0 && p.tau < 1.0) {
            errs.push(format!("params.tau: must lie in [0, 1), got {}", p.tau));
        }
        if p.eval.sample_size == Some(0) {
            errs.push("params.eval.sample_size: must be >= 1".to_string());
        }
        errs
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let errs = self.validation_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    pub fn consistency(&self) -> ConsistencyParams<f64> {
        let c = &self.params.consistency;
        let n = self.cameras.len();
        ConsistencyParams {
            sigma: c.sigma,
            k_cams: c
                .k_cams
                .unwrap_or_else(|| ConsistencyParams::<f64>::for_rig(n).k_cams),
        }
    }

    /// Cameras of a validated configuration.
    pub fn camera_models(&self) -> Vec<CameraModel<f64>> {
        self.cameras
            .iter()
            .map(|c| c.to_camera().expect("validated camera"))
            .collect()
    }

    pub fn pipeline(&self) -> PipelineParams<f64> {
        let p = &self.params;
        PipelineParams {
            confidence: p.confidence,
            consistency: self.consistency(),
            grid: p.grid,
            tau: p.tau,
            median_filter: p.median_filter,
        }
    }

    /// First 16 hex digits of the SHA-256 of the cameras and pipeline
    /// parameters. Ablation switches and evaluation settings are excluded.
    pub fn param_hash(&self) -> String {
        let pipeline = self.pipeline();
        let bytes = serde_json::to_vec(&HashInput {
            cameras: &self.cameras,
            pipeline: &pipeline,
        })
        .expect("hash input serializes");
        Sha256::digest(&bytes)
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
