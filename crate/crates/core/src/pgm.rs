//! Binary PGM (`P5`, 8-bit) mask files.
//!
//! Foreground is written as 255 and background as 0. On read, samples
//! `>= 128` are foreground.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::geometry::{GeometryError, MaskGrid};

pub const FOREGROUND_THRESHOLD: u8 = 128;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("malformed PGM: {0}")]
    Malformed(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Header fields plus raw 8-bit samples.
struct RawPgm {
    width: u32,
    height: u32,
    maxval: u32,
    samples: Vec<u8>,
}

fn parse_raw(bytes: &[u8]) -> Result<RawPgm, PgmError> {
    let mut pos = 0usize;
    let mut fields: Vec<u32> = Vec::with_capacity(3);

    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(PgmError::Malformed("missing P5 magic".into()));
    }
    pos += 2;

    while fields.len() < 3 {
        // whitespace and comments between header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' || b == b'\r' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err(PgmError::Malformed("truncated header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(PgmError::Malformed(format!(
                "expected number at byte {start}"
            )));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        let value = text
            .parse::<u32>()
            .map_err(|e| PgmError::Malformed(format!("header value {text:?}: {e}")))?;
        fields.push(value);
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(PgmError::Malformed("missing separator after maxval".into())),
    }

    let (width, height, maxval) = (fields[0], fields[1], fields[2]);
    if width == 0 || height == 0 {
        return Err(PgmError::Malformed("zero dimension".into()));
    }
    if maxval == 0 || maxval > 255 {
        return Err(PgmError::Malformed(format!(
            "only 8-bit PGM is supported, maxval {maxval}"
        )));
    }
    let n = width as usize * height as usize;
    let raster = &bytes[pos..];
    if raster.len() < n {
        return Err(PgmError::Malformed(format!(
            "expected {n} samples, found {}",
            raster.len()
        )));
    }
    Ok(RawPgm {
        width,
        height,
        maxval,
        samples: raster[..n].to_vec(),
    })
}

/// Decodes a binary mask, thresholding samples at 128.
pub fn decode_mask(bytes: &[u8]) -> Result<MaskGrid, PgmError> {
    let raw = parse_raw(bytes)?;
    let values = raw
        .samples
        .iter()
        .map(|&s| if s >= FOREGROUND_THRESHOLD { 1.0 } else { 0.0 })
        .collect();
    Ok(MaskGrid::new(raw.width, raw.height, values)?)
}

/// Decodes samples as intensities in `[0, 1]` (sample / maxval).
pub fn decode_intensity(bytes: &[u8]) -> Result<MaskGrid, PgmError> {
    let raw = parse_raw(bytes)?;
    let scale = f64::from(raw.maxval);
    let values = raw
        .samples
        .iter()
        .map(|&s| (f64::from(s) / scale).min(1.0))
        .collect();
    Ok(MaskGrid::new(raw.width, raw.height, values)?)
}

/// Encodes a mask; any value `> 0` becomes foreground (255).
pub fn encode_mask(mask: &MaskGrid) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(
        mask.values()
            .iter()
            .map(|&v| if v > 0.0 { 255u8 } else { 0 }),
    );
    out
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<MaskGrid, PgmError> {
    decode_mask(&read_bytes(path.as_ref())?)
}

pub fn read_intensity(path: impl AsRef<Path>) -> Result<MaskGrid, PgmError> {
    decode_intensity(&read_bytes(path.as_ref())?)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &MaskGrid) -> Result<(), PgmError> {
    let path = path.as_ref();
    fs::write(path, encode_mask(mask)).map_err(|source| PgmError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, PgmError> {
    fs::read(path).map_err(|source| PgmError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_binary_mask() {
        let m = MaskGrid::from_bools(3, 2, &[true, false, true, false, false, true]).unwrap();
        let bytes = encode_mask(&m);
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(decode_mask(&bytes).unwrap(), m);
    }

    #[test]
    fn threshold_and_comments() {
        let mut bytes = b"P5 # a comment\n2 2\n# another\n255\n".to_vec();
        bytes.extend([0u8, 127, 128, 255]);
        let m = decode_mask(&bytes).unwrap();
        assert_eq!(m.values(), &[0.0, 0.0, 1.0, 1.0]);
        let g = decode_intensity(&bytes).unwrap();
        assert_eq!(g.get(1, 1), 1.0);
        assert!((g.get(0, 1) - 128.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(decode_mask(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_mask(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode_mask(b"P5\n1 1\n65535\n\x00\x00").is_err());
        assert!(decode_mask(b"P5\n0 1\n255\n").is_err());
        assert!(decode_mask(b"P5\n1").is_err());
    }
}
