//! Binary PGM (P5) reading and writing, 8-bit maxval 255 only.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::{Error, Result};

fn decode_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Parse one ASCII integer from the header, skipping whitespace and
/// `#`-comments before it.
fn read_header_int(bytes: &[u8], pos: &mut usize, path: &Path) -> Result<usize> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if *pos == start {
        return Err(decode_err(path, "malformed PGM header: expected an integer"));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| decode_err(path, "malformed PGM header: bad integer"))
}

/// Decode a binary P5 PGM into intensities in `[0, 1]` (byte value / 255),
/// returned as a `height x width` array.
pub fn read_pgm(path: &Path) -> Result<Array2<f64>> {
    let bytes = fs::read(path).map_err(|e| decode_err(path, format!("cannot read file: {e}")))?;
    parse_pgm(&bytes, path)
}

pub(crate) fn parse_pgm(bytes: &[u8], path: &Path) -> Result<Array2<f64>> {
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(decode_err(path, "missing P5 magic"));
    }
    let mut pos = 2;
    let width = read_header_int(bytes, &mut pos, path)?;
    let height = read_header_int(bytes, &mut pos, path)?;
    let maxval = read_header_int(bytes, &mut pos, path)?;
    if width == 0 || height == 0 {
        return Err(decode_err(path, "zero image dimension"));
    }
    if maxval != 255 {
        return Err(decode_err(
            path,
            format!("unsupported maxval {maxval} (expected 255)"),
        ));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(decode_err(path, "missing whitespace before pixel data"));
    }
    pos += 1;
    let expected = width * height;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(decode_err(
            path,
            format!(
                "truncated pixel payload: expected {expected} bytes, got {}",
                payload.len()
            ),
        ));
    }
    let data: Vec<f64> = payload[..expected]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    Ok(Array2::from_shape_vec((height, width), data).expect("shape checked above"))
}

/// Write intensities in `[0, 1]` as a binary P5 PGM with maxval 255.
pub fn write_pgm(path: &Path, pixels: &Array2<f64>) -> Result<()> {
    Ok(fs::write(path, encode_pgm(pixels))?)
}

pub(crate) fn encode_pgm(pixels: &Array2<f64>) -> Vec<u8> {
    let (height, width) = pixels.dim();
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.reserve(width * height);
    for row in pixels.rows() {
        for &v in row {
            out.push((v * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}
