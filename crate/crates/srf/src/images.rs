//! Image file formats: binary PPM (P6) for color, PFM for float depth and
//! normal maps, and PGM (P5) for masks.
//!
//! PFM files follow the de-facto standard: little-endian float32 signalled by
//! a negative scale, scanlines stored bottom-up. Big-endian files (positive
//! scale) are rejected explicitly.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

#[derive(Debug)]
pub enum ImageError {
    Io(io::Error),
    MalformedHeader(String),
    Truncated { expected: usize, found: usize },
    UnsupportedEndianness,
}

impl std::fmt::Display for ImageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ImageError::Io(e) => write!(f, "io error: {e}"),
            ImageError::MalformedHeader(m) => write!(f, "malformed header: {m}"),
            ImageError::Truncated { expected, found } => {
                write!(f, "truncated payload: expected {expected} bytes, found {found}")
            }
            ImageError::UnsupportedEndianness => {
                write!(f, "big-endian PFM (positive scale) is not supported")
            }
        }
    }
}

impl std::error::Error for ImageError {}

impl From<io::Error> for ImageError {
    fn from(e: io::Error) -> Self {
        ImageError::Io(e)
    }
}

fn quantize(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn write_ppm(path: &Path, width: u32, height: u32, pixels: &[[f64; 3]]) -> Result<(), ImageError> {
    assert_eq!(pixels.len(), (width * height) as usize);
    let mut out = Vec::with_capacity(pixels.len() * 3 + 32);
    write!(out, "P6\n{width} {height}\n255\n")?;
    for px in pixels {
        out.push(quantize(px[0]));
        out.push(quantize(px[1]));
        out.push(quantize(px[2]));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_ppm(path: &Path) -> Result<(u32, u32, Vec<[f64; 3]>), ImageError> {
    let bytes = fs::read(path)?;
    let (magic, rest) = take_token(&bytes, 0)?;
    if magic != b"P6" {
        return Err(ImageError::MalformedHeader("expected P6".into()));
    }
    let (w, rest) = take_u32(&bytes, rest)?;
    let (h, rest) = take_u32(&bytes, rest)?;
    let (maxval, rest) = take_u32(&bytes, rest)?;
    if maxval != 255 {
        return Err(ImageError::MalformedHeader(format!("unsupported maxval {maxval}")));
    }
    let n = (w * h) as usize * 3;
    let payload = &bytes[rest..];
    if payload.len() < n {
        return Err(ImageError::Truncated { expected: n, found: payload.len() });
    }
    let pixels = payload[..n]
        .chunks_exact(3)
        .map(|c| [c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0])
        .collect();
    Ok((w, h, pixels))
}

fn write_pfm(
    path: &Path,
    magic: &str,
    width: u32,
    height: u32,
    channels: usize,
    sample: impl Fn(usize, usize) -> f32,
) -> Result<(), ImageError> {
    let mut out = Vec::with_capacity((width * height) as usize * channels * 4 + 32);
    write!(out, "{magic}\n{width} {height}\n-1.0\n")?;
    // Bottom-up scanlines per the PFM convention.
    for j in (0..height as usize).rev() {
        for i in 0..width as usize {
            for c in 0..channels {
                out.extend_from_slice(&sample(j * width as usize + i, c).to_le_bytes());
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

fn read_pfm(path: &Path, expect_magic: &str, channels: usize) -> Result<(u32, u32, Vec<f32>), ImageError> {
    let bytes = fs::read(path)?;
    let (magic, rest) = take_token(&bytes, 0)?;
    if magic != expect_magic.as_bytes() {
        return Err(ImageError::MalformedHeader(format!(
            "expected {expect_magic}, found {}",
            String::from_utf8_lossy(magic)
        )));
    }
    let (w, rest) = take_u32(&bytes, rest)?;
    let (h, rest) = take_u32(&bytes, rest)?;
    let (scale_tok, rest) = take_token(&bytes, rest)?;
    let scale: f64 = std::str::from_utf8(scale_tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ImageError::MalformedHeader("bad scale".into()))?;
    if scale > 0.0 {
        return Err(ImageError::UnsupportedEndianness);
    }
    let n = (w * h) as usize * channels;
    let payload = &bytes[rest..];
    if payload.len() < n * 4 {
        return Err(ImageError::Truncated { expected: n * 4, found: payload.len() });
    }
    let mut flipped = vec![0f32; n];
    let row = w as usize * channels;
    for j in 0..h as usize {
        for k in 0..row {
            let src = (j * row + k) * 4;
            let v = f32::from_le_bytes(payload[src..src + 4].try_into().unwrap());
            // Undo the bottom-up storage.
            flipped[(h as usize - 1 - j) * row + k] = v;
        }
    }
    Ok((w, h, flipped))
}

pub fn write_pfm_gray(path: &Path, width: u32, height: u32, data: &[f64]) -> Result<(), ImageError> {
    assert_eq!(data.len(), (width * height) as usize);
    write_pfm(path, "Pf", width, height, 1, |i, _| data[i] as f32)
}

pub fn read_pfm_gray(path: &Path) -> Result<(u32, u32, Vec<f64>), ImageError> {
    let (w, h, raw) = read_pfm(path, "Pf", 1)?;
    Ok((w, h, raw.into_iter().map(f64::from).collect()))
}

pub fn write_pfm_rgb(path: &Path, width: u32, height: u32, data: &[[f64; 3]]) -> Result<(), ImageError> {
    assert_eq!(data.len(), (width * height) as usize);
    write_pfm(path, "PF", width, height, 3, |i, c| data[i][c] as f32)
}

pub fn read_pfm_rgb(path: &Path) -> Result<(u32, u32, Vec<[f64; 3]>), ImageError> {
    let (w, h, raw) = read_pfm(path, "PF", 3)?;
    let pixels = raw
        .chunks_exact(3)
        .map(|c| [f64::from(c[0]), f64::from(c[1]), f64::from(c[2])])
        .collect();
    Ok((w, h, pixels))
}

pub fn write_pgm_mask(path: &Path, width: u32, height: u32, mask: &[bool]) -> Result<(), ImageError> {
    assert_eq!(mask.len(), (width * height) as usize);
    let mut out = Vec::with_capacity(mask.len() + 32);
    write!(out, "P5\n{width} {height}\n255\n")?;
    out.extend(mask.iter().map(|&m| if m { 255u8 } else { 0 }));
    fs::write(path, out)?;
    Ok(())
}

pub fn read_pgm_mask(path: &Path) -> Result<(u32, u32, Vec<bool>), ImageError> {
    let bytes = fs::read(path)?;
    let (magic, rest) = take_token(&bytes, 0)?;
    if magic != b"P5" {
        return Err(ImageError::MalformedHeader("expected P5".into()));
    }
    let (w, rest) = take_u32(&bytes, rest)?;
    let (h, rest) = take_u32(&bytes, rest)?;
    let (_maxval, rest) = take_u32(&bytes, rest)?;
    let n = (w * h) as usize;
    let payload = &bytes[rest..];
    if payload.len() < n {
        return Err(ImageError::Truncated { expected: n, found: payload.len() });
    }
    Ok((w, h, payload[..n].iter().map(|&b| b >= 128).collect()))
}

/// Skip whitespace and comments, returning the next header token.
fn take_token(bytes: &[u8], mut pos: usize) -> Result<(&[u8], usize), ImageError> {
    while pos < bytes.len() {
        match bytes[pos] {
            b' ' | b'\t' | b'\r' | b'\n' => pos += 1,
            b'#' => {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            }
            _ => break,
        }
    }
    let start = pos;
    while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    if start == pos {
        return Err(ImageError::MalformedHeader("unexpected end of header".into()));
    }
    // The single whitespace byte after the last header token is the
    // payload separator.
    Ok((&bytes[start..pos], (pos + 1).min(bytes.len())))
}

fn take_u32(bytes: &[u8], pos: usize) -> Result<(u32, usize), ImageError> {
    let (tok, next) = take_token(bytes, pos)?;
    let v = std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| ImageError::MalformedHeader("expected integer".into()))?;
    Ok((v, next))
}
