//! PLY output for fused clouds, plus a reader for the same layout.
//!
//! Vertices carry `x y z` (float32, mm), `weight` (float32) and
//! `contributors` (uint8). Binary mode is little-endian. A comment line
//! records the frame index and the parameter hash.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::fusion::FusedCloud;
use crate::scalar::Real;

const PROPERTIES: [(&str, &str); 5] = [
    ("float", "x"),
    ("float", "y"),
    ("float", "z"),
    ("float", "weight"),
    ("uchar", "contributors"),
];
const RECORD_BYTES: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyMode {
    Ascii,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlyVertex {
    pub position: [f32; 3],
    pub weight: f32,
    pub contributors: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlyCloud {
    pub frame_index: Option<u64>,
    pub param_hash: Option<String>,
    pub vertices: Vec<PlyVertex>,
}

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed PLY: {0}")]
    Format(String),
}

fn fmt_err(msg: impl Into<String>) -> PlyError {
    PlyError::Format(msg.into())
}

pub fn vertices_of<T: Real>(cloud: &FusedCloud<T>) -> Vec<PlyVertex> {
    let f = |v: T| v.to_f32().unwrap_or(f32::NAN);
    cloud
        .points
        .iter()
        .map(|p| PlyVertex {
            position: [f(p.position.x), f(p.position.y), f(p.position.z)],
            weight: f(p.total_weight),
            contributors: p.contributor_count,
        })
        .collect()
}

pub fn encode_ply(
    vertices: &[PlyVertex],
    frame_index: u64,
    param_hash: &str,
    mode: PlyMode,
) -> Vec<u8> {
    let mut out = Vec::with_capacity(256 + vertices.len() * RECORD_BYTES);
    let format = match mode {
        PlyMode::Ascii => "ascii",
        PlyMode::Binary => "binary_little_endian",
    };
    let mut header = format!(
        "ply\nformat {format} 1.0\ncomment fuseflow frame_index {frame_index} param_hash {param_hash}\nelement vertex {}\n",
        vertices.len()
    );
    for (ty, name) in PROPERTIES {
        header.push_str(&format!("property {ty} {name}\n"));
    }
    header.push_str("end_header\n");
    out.extend(header.as_bytes());
    for v in vertices {
        match mode {
            PlyMode::Ascii => {
                let [x, y, z] = v.position;
                // `Display` for f32 prints the shortest string that parses back exactly.
                writeln!(out, "{x} {y} {z} {} {}", v.weight, v.contributors).expect("write to Vec");
            }
            PlyMode::Binary => {
                for c in v.position {
                    out.extend(c.to_le_bytes());
                }
                out.extend(v.weight.to_le_bytes());
                out.push(v.contributors);
            }
        }
    }
    out
}

pub fn write_ply<T: Real>(
    path: &Path,
    cloud: &FusedCloud<T>,
    param_hash: &str,
    mode: PlyMode,
) -> Result<(), PlyError> {
    let io = |source| PlyError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_ply(
        &vertices_of(cloud),
        cloud.frame_index,
        param_hash,
        mode,
    ))
    .map_err(io)?;
    w.flush().map_err(io)
}

pub fn decode_ply(bytes: &[u8]) -> Result<PlyCloud, PlyError> {
    let mut pos = 0;
    let mut next_line = || -> Result<&str, PlyError> {
        let rest = &bytes[pos..];
        let end = rest
            .iter()
            .position(|b| *b == b'\n')
            .ok_or_else(|| fmt_err("header ends without end_header"))?;
        pos += end + 1;
        std::str::from_utf8(&rest[..end])
            .map(str::trim_end)
            .map_err(|_| fmt_err("header is not UTF-8"))
    };
    if next_line()? != "ply" {
        return Err(fmt_err("missing 'ply' magic line"));
    }
    let mut mode = None;
    let mut count = None;
    let mut props = Vec::new();
    let mut frame_index = None;
    let mut param_hash = None;
    loop {
        let line = next_line()?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", "1.0"] => mode = Some(PlyMode::Ascii),
            ["format", "binary_little_endian", "1.0"] => mode = Some(PlyMode::Binary),
            ["format", other, ..] => return Err(fmt_err(format!("unsupported format {other}"))),
            ["comment", "fuseflow", rest @ ..] => {
                for kv in rest.chunks(2) {
                    match kv {
                        ["frame_index", v] => {
                            frame_index = Some(
                                v.parse()
                                    .map_err(|_| fmt_err(format!("bad frame_index {v}")))?,
                            )
                        }
                        ["param_hash", v] => param_hash = Some(v.to_string()),
                        _ => {}
                    }
                }
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", "vertex", n] => {
                count = Some(
                    n.parse::<usize>()
                        .map_err(|_| fmt_err(format!("bad vertex count {n}")))?,
                )
            }
            ["element", other, ..] => return Err(fmt_err(format!("unexpected element {other}"))),
            ["property", ty, name] => props.push((ty.to_string(), name.to_string())),
            _ => return Err(fmt_err(format!("unrecognized header line {line:?}"))),
        }
    }
    let mode = mode.ok_or_else(|| fmt_err("missing format line"))?;
    let count = count.ok_or_else(|| fmt_err("missing vertex element"))?;
    let expected: Vec<(String, String)> = PROPERTIES
        .iter()
        .map(|(t, n)| (t.to_string(), n.to_string()))
        .collect();
    if props != expected {
        return Err(fmt_err(
            "vertex properties must be float x, y, z, weight and uchar contributors",
        ));
    }

    let body = &bytes[pos..];
    let vertices = match mode {
        PlyMode::Binary => {
            let need = count
                .checked_mul(RECORD_BYTES)
                .ok_or_else(|| fmt_err("vertex count overflows"))?;
            if body.len() < need {
                return Err(fmt_err(format!(
                    "truncated body: expected {need} bytes, found {}",
                    body.len()
                )));
            }
            body[..need]
                .chunks_exact(RECORD_BYTES)
                .map(|r| {
                    let f = |i: usize| {
                        f32::from_le_bytes(r[i..i + 4].try_into().expect("4-byte slice"))
                    };
                    PlyVertex {
                        position: [f(0), f(4), f(8)],
                        weight: f(12),
                        contributors: r[16],
                    }
                })
                .collect()
        }
        PlyMode::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| fmt_err("ascii body is not UTF-8"))?;
            let mut lines = text.lines().filter(|l| !l.trim().is_empty());
            (0..count)
                .map(|i| {
                    let line = lines
                        .next()
                        .ok_or_else(|| fmt_err(format!("expected {count} vertices, found {i}")))?;
                    let w: Vec<&str> = line.split_whitespace().collect();
                    if w.len() != 5 {
                        return Err(fmt_err(format!(
                            "vertex {i}: expected 5 values, found {}",
                            w.len()
                        )));
                    }
                    let f = |s: &str| {
                        s.parse::<f32>()
                            .map_err(|_| fmt_err(format!("vertex {i}: bad float {s:?}")))
                    };
                    Ok(PlyVertex {
                        position: [f(w[0])?, f(w[1])?, f(w[2])?],
                        weight: f(w[3])?,
                        contributors: w[4]
                            .parse()
                            .map_err(|_| fmt_err(format!("vertex {i}: bad uchar {:?}", w[4])))?,
                    })
                })
                .collect::<Result<_, _>>()?
        }
    };
    Ok(PlyCloud {
        frame_index,
        param_hash,
        vertices,
    })
}

pub fn read_ply(path: &Path) -> Result<PlyCloud, PlyError> {
    let bytes = fs::read(path).map_err(|source| PlyError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_ply(&bytes)
}
