//! 16-bit millimeter depth images: binary PGM and a raw little-endian format.
//!
//! PGM: `P5`, maxval 65535, big-endian samples. Raw: 16-byte header
//! `"FFD1"`, u32 width, u32 height, u32 reserved (all little-endian), then
//! `width·height` little-endian u16 samples. 0 marks an invalid pixel.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::confidence::DepthFrame;
use crate::scalar::Real;

pub const RAW_MAGIC: &[u8; 4] = b"FFD1";
pub const RAW_HEADER_LEN: usize = 16;
/// Largest accepted frame, in pixels.
pub const MAX_PIXELS: u64 = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthFormat {
    Pgm,
    Raw,
}

impl DepthFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DepthFormat::Pgm => "pgm",
            DepthFormat::Raw => "raw",
        }
    }
}

#[derive(Debug, Error)]
pub enum DepthIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad magic {found:?}: expected \"P5\" (PGM) or \"FFD1\" (raw)")]
    BadMagic { found: String },
    #[error("malformed PGM header: {0}")]
    Header(String),
    #[error("unsupported PGM maxval {0}: only 16-bit (65535) depth is accepted")]
    Maxval(u32),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("dimension overflow: {width}x{height} exceeds {MAX_PIXELS} pixels or is empty")]
    DimensionOverflow { width: u64, height: u64 },
}

fn check_dims(width: u64, height: u64) -> Result<(usize, usize), DepthIoError> {
    match width.checked_mul(height) {
        Some(n) if n > 0 && n <= MAX_PIXELS => Ok((width as usize, height as usize)),
        _ => Err(DepthIoError::DimensionOverflow { width, height }),
    }
}

fn check_payload(data: &[u8], width: usize, height: usize) -> Result<(), DepthIoError> {
    let expected = (width * height * 2) as u64;
    let actual = data.len() as u64;
    if actual < expected {
        return Err(DepthIoError::Truncated { expected, actual });
    }
    Ok(())
}

/// Next whitespace-delimited header token; `#` comments run to end of line.
fn pgm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8], DepthIoError> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|b| *b != b'\n') {
                    *pos += 1;
                }
            }
            Some(_) => break,
            None => return Err(DepthIoError::Header("unexpected end of header".into())),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
        *pos += 1;
    }
    Ok(&bytes[start..*pos])
}

fn pgm_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<u64, DepthIoError> {
    let tok = pgm_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| {
            DepthIoError::Header(format!(
                "{what} is not a number: {:?}",
                String::from_utf8_lossy(tok)
            ))
        })
}

/// Parses PGM or raw bytes, chosen by magic.
pub fn decode_depth<T: Real>(bytes: &[u8], camera_id: u32) -> Result<DepthFrame<T>, DepthIoError> {
    let (width, height, samples, big_endian) = if bytes.starts_with(b"P5") {
        let mut pos = 2;
        let w = pgm_number(bytes, &mut pos, "width")?;
        let h = pgm_number(bytes, &mut pos, "height")?;
        let maxval = pgm_number(bytes, &mut pos, "maxval")?;
        if maxval != 65535 {
            return Err(DepthIoError::Maxval(maxval.min(u64::from(u32::MAX)) as u32));
        }
        // Exactly one whitespace byte separates the header from the samples.
        if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
            return Err(DepthIoError::Header(
                "missing whitespace after maxval".into(),
            ));
        }
        let (w, h) = check_dims(w, h)?;
        (w, h, &bytes[pos + 1..], true)
    } else if bytes.starts_with(RAW_MAGIC) {
        if bytes.len() < RAW_HEADER_LEN {
            return Err(DepthIoError::Truncated {
                expected: RAW_HEADER_LEN as u64,
                actual: bytes.len() as u64,
            });
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4-byte slice"));
        let (w, h) = check_dims(u64::from(word(4)), u64::from(word(8)))?;
        (w, h, &bytes[RAW_HEADER_LEN..], false)
    } else {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(4)]).into_owned();
        return Err(DepthIoError::BadMagic { found });
    };
    check_payload(samples, width, height)?;
    let depth = samples[..width * height * 2]
        .chunks_exact(2)
        .map(|c| {
            let v = if big_endian {
                u16::from_be_bytes([c[0], c[1]])
            } else {
                u16::from_le_bytes([c[0], c[1]])
            };
            T::from_u16(v).expect("u16 fits scalar")
        })
        .collect();
    Ok(DepthFrame::new(camera_id, width, height, depth).expect("u16 samples are valid depths"))
}

pub fn read_depth_frame<T: Real>(
    path: &Path,
    camera_id: u32,
) -> Result<DepthFrame<T>, DepthIoError> {
    let bytes = fs::read(path).map_err(|source| DepthIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_depth(&bytes, camera_id)
}

/// Rounds to whole millimeters; values beyond 65535 mm become invalid (0).
pub fn quantize_mm<T: Real>(v: T) -> u16 {
    let r = v.round();
    if r > T::zero() && r <= T::lit(65535.0) {
        r.to_u16().unwrap_or(0)
    } else {
        0
    }
}

pub fn encode_depth<T: Real>(frame: &DepthFrame<T>, format: DepthFormat) -> Vec<u8> {
    let n = frame.width * frame.height;
    let mut out = match format {
        DepthFormat::Pgm => format!("P5\n{} {}\n65535\n", frame.width, frame.height).into_bytes(),
        DepthFormat::Raw => {
            let mut h = RAW_MAGIC.to_vec();
            h.extend((frame.width as u32).to_le_bytes());
            h.extend((frame.height as u32).to_le_bytes());
            h.extend(0u32.to_le_bytes());
            h
        }
    };
    out.reserve(n * 2);
    for &v in frame.values() {
        let q = quantize_mm(v);
        match format {
            DepthFormat::Pgm => out.extend(q.to_be_bytes()),
            DepthFormat::Raw => out.extend(q.to_le_bytes()),
        }
    }
    out
}

pub fn write_depth_frame<T: Real>(
    path: &Path,
    frame: &DepthFrame<T>,
    format: DepthFormat,
) -> Result<(), DepthIoError> {
    fs::write(path, encode_depth(frame, format)).map_err(|source| DepthIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}
