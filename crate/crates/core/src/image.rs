//! Binary PGM output and raw `f32` dumps.

use std::path::Path;

use crate::error::{Error, Result};

/// Clamps to `[-1, 1]` and maps linearly onto `0..=255`.
pub fn to_gray(values: &[f64]) -> Vec<u8> {
    values
        .iter()
        .map(|v| {
            let c = if v.is_nan() { 0.0 } else { v.clamp(-1.0, 1.0) };
            ((c + 1.0) * 127.5).round() as u8
        })
        .collect()
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if pixels.len() != width * height {
        return Err(Error::Shape(format!(
            "{} pixels for a {width}x{height} image",
            pixels.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    Ok(out)
}

/// Parses a binary PGM with maxval 255; returns `(width, height, pixels)`.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("PGM", "truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let header = |i: usize| -> Result<usize> {
        fields[i]
            .parse()
            .map_err(|_| Error::format("PGM", format!("bad header field `{}`", fields[i])))
    };
    if fields[0] != "P5" || header(3)? != 255 {
        return Err(Error::format("PGM", "expected P5 with maxval 255"));
    }
    let (w, h) = (header(1)?, header(2)?);
    let data = bytes
        .get(pos..pos + w * h)
        .ok_or_else(|| Error::format("PGM", "truncated pixels"))?;
    Ok((w, h, data.to_vec()))
}

pub fn write_pgm(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    let bytes = encode_pgm(width, height, &to_gray(values))?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Little-endian `f32` values, no header.
pub fn write_raw(path: &Path, values: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = values
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_raw(path: &Path) -> Result<Vec<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::format("raw dump", "length is not a multiple of 4"));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}
