//! On-disk layout of a multi-camera recording.
//!
//! ```text
//! <dir>/f0000/cam00.pgm     observed depth, frame 0, camera 0 (.raw also accepted)
//! <dir>/f0000/cam01.pgm
//! <dir>/f0001/...
//! <dir>/gt/f0000/cam00.pgm  noiseless twin written by `synth`
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::depth::{read_depth_frame, write_depth_frame, DepthFormat, DepthIoError};
use crate::confidence::DepthFrame;
use crate::geometry::CameraModel;
use crate::scalar::Real;

pub const GROUND_TRUTH_DIR: &str = "gt";

#[derive(Debug, Error)]
pub enum FrameSetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Depth { path: PathBuf, source: DepthIoError },
    #[error("no frame directories (f0000, f0001, ...) under {0}")]
    NoFrames(PathBuf),
    #[error(
        "frame {frame}: depth files do not match the {cameras} configured cameras:\n{listing}"
    )]
    Mismatch {
        frame: u64,
        cameras: usize,
        listing: String,
    },
}

pub fn frame_dir(root: &Path, frame: u64) -> PathBuf {
    root.join(format!("f{frame:04}"))
}

pub fn camera_file(id: u32, format: DepthFormat) -> String {
    format!("cam{id:02}.{}", format.extension())
}

fn parse_frame_name(name: &str) -> Option<u64> {
    let digits = name.strip_prefix('f')?;
    (digits.len() >= 4 && digits.bytes().all(|b| b.is_ascii_digit()))
        .then(|| digits.parse().ok())
        .flatten()
}

/// Frame indices present under `root`, ascending.
pub fn list_frames(root: &Path) -> Result<Vec<u64>, FrameSetError> {
    let io = |source| FrameSetError::Io {
        path: root.to_path_buf(),
        source,
    };
    let mut frames = Vec::new();
    for entry in fs::read_dir(root).map_err(io)? {
        let entry = entry.map_err(io)?;
        if entry.file_type().map_err(io)?.is_dir() {
            if let Some(t) = entry.file_name().to_str().and_then(parse_frame_name) {
                frames.push(t);
            }
        }
    }
    if frames.is_empty() {
        return Err(FrameSetError::NoFrames(root.to_path_buf()));
    }
    frames.sort_unstable();
    Ok(frames)
}

/// Camera ids with a depth file in `dir` and the files themselves.
fn depth_files(dir: &Path) -> Result<Vec<(Option<u32>, PathBuf)>, FrameSetError> {
    let io = |source| FrameSetError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some((stem, ext)) = name.rsplit_once('.') else {
            continue;
        };
        if ext != "pgm" && ext != "raw" {
            continue;
        }
        let id = stem.strip_prefix("cam").and_then(|d| d.parse().ok());
        out.push((id, path));
    }
    out.sort();
    Ok(out)
}

/// Loads frame `frame` for `cameras`, in camera order.
///
/// Any missing, duplicated, unexpected or wrongly sized file is reported in
/// one per-camera listing.
pub fn load_frame<T: Real>(
    root: &Path,
    frame: u64,
    cameras: &[CameraModel<T>],
) -> Result<Vec<DepthFrame<T>>, FrameSetError> {
    let dir = frame_dir(root, frame);
    let files = depth_files(&dir)?;
    let mut lines = Vec::new();
    let mut ok = true;
    let mut loaded = Vec::with_capacity(cameras.len());
    for cam in cameras {
        let mine: Vec<&PathBuf> = files
            .iter()
            .filter(|(id, _)| *id == Some(cam.id))
            .map(|(_, p)| p)
            .collect();
        match mine.as_slice() {
            [] => {
                ok = false;
                lines.push(format!(
                    "  camera {}: missing ({})",
                    cam.id,
                    camera_file(cam.id, DepthFormat::Pgm)
                ));
            }
            [path] => {
                let f: DepthFrame<T> =
                    read_depth_frame(path, cam.id).map_err(|source| FrameSetError::Depth {
                        path: (*path).clone(),
                        source,
                    })?;
                let name = path.file_name().unwrap_or_default().to_string_lossy();
                if (f.width, f.height) != (cam.width, cam.height) {
                    ok = false;
                    lines.push(format!(
                        "  camera {}: {name} is {}x{}, expected {}x{}",
                        cam.id, f.width, f.height, cam.width, cam.height
                    ));
                } else {
                    lines.push(format!("  camera {}: {name}", cam.id));
                }
                loaded.push(f);
            }
            many => {
                ok = false;
                lines.push(format!(
                    "  camera {}: {} candidate files",
                    cam.id,
                    many.len()
                ));
            }
        }
    }
    let known: BTreeSet<u32> = cameras.iter().map(|c| c.id).collect();
    for (id, path) in &files {
        if !id.is_some_and(|i| known.contains(&i)) {
            ok = false;
            lines.push(format!(
                "  unexpected: {}",
                path.file_name().unwrap_or_default().to_string_lossy()
            ));
        }
    }
    if !ok {
        return Err(FrameSetError::Mismatch {
            frame,
            cameras: cameras.len(),
            listing: lines.join("\n"),
        });
    }
    Ok(loaded)
}

/// Writes one camera's frame under `root`, creating directories as needed.
pub fn store_frame<T: Real>(
    root: &Path,
    frame: u64,
    depth: &DepthFrame<T>,
    format: DepthFormat,
) -> Result<PathBuf, FrameSetError> {
    let dir = frame_dir(root, frame);
    fs::create_dir_all(&dir).map_err(|source| FrameSetError::Io {
        path: dir.clone(),
        source,
    })?;
    let path = dir.join(camera_file(depth.camera_id, format));
    write_depth_frame(&path, depth, format).map_err(|source| FrameSetError::Depth {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}
