//! Linear radiance images, sRGB PNG export, and a raw float dump format.
//!
//! Images hold linear RGB throughout the pipeline; the sRGB transfer is
//! applied only when exporting to 8-bit PNG. The float dump is a flat binary
//! for test harnesses: magic `OCULIN01`, width and height as little-endian
//! u32, then row-major little-endian f32 RGB triples.

use std::io::{Read, Write};
use std::path::Path;

use super::TracerError;

pub const FLOAT_DUMP_MAGIC: &[u8; 8] = b"OCULIN01";

/// Row-major linear RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Image {
        Image { width, height, pixels: vec![[0.0; 3]; width * height] }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, value: [f64; 3]) {
        self.pixels[y * self.width + x] = value;
    }

    /// Mean over pixels of the per-channel mean (a scalar brightness).
    pub fn mean_value(&self) -> f64 {
        let sum: f64 = self.pixels.iter().map(|p| (p[0] + p[1] + p[2]) / 3.0).sum();
        sum / self.pixels.len() as f64
    }
}

/// Standard piecewise sRGB transfer on a clamped linear value, to one byte.
pub fn srgb_byte(linear: f64) -> u8 {
    let c = linear.clamp(0.0, 1.0);
    let s = if c <= 0.003_130_8 { 12.92 * c } else { 1.055 * c.powf(1.0 / 2.4) - 0.055 };
    (s * 255.0).round() as u8
}

/// Encodes the image as 8-bit sRGB bytes (RGB, row-major).
pub fn to_srgb_bytes(img: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(img.pixels.len() * 3);
    for p in &img.pixels {
        out.extend_from_slice(&[srgb_byte(p[0]), srgb_byte(p[1]), srgb_byte(p[2])]);
    }
    out
}

/// Writes the image as an 8-bit sRGB PNG.
pub fn tone_map_export(img: &Image, path: &Path) -> Result<(), TracerError> {
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, to_srgb_bytes(img))
        .expect("byte buffer matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| TracerError::Io(std::io::Error::other(e)))
}

/// Writes the raw linear dump (see module docs for the layout).
pub fn write_float_dump(img: &Image, path: &Path) -> Result<(), TracerError> {
    let mut bytes = Vec::with_capacity(16 + img.pixels.len() * 12);
    bytes.extend_from_slice(FLOAT_DUMP_MAGIC);
    bytes.extend_from_slice(&(img.width as u32).to_le_bytes());
    bytes.extend_from_slice(&(img.height as u32).to_le_bytes());
    for p in &img.pixels {
        for c in p {
            bytes.extend_from_slice(&(*c as f32).to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(TracerError::Io)?;
    f.write_all(&bytes).map_err(TracerError::Io)
}

/// Reads a float dump back into a linear image.
pub fn read_float_dump(path: &Path) -> Result<Image, TracerError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path).map_err(TracerError::Io)?.read_to_end(&mut bytes).map_err(TracerError::Io)?;
    let bad = |reason: &str| TracerError::Io(std::io::Error::other(reason.to_string()));
    if bytes.len() < 16 || &bytes[..8] != FLOAT_DUMP_MAGIC {
        return Err(bad("missing float dump magic"));
    }
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if bytes.len() != 16 + width * height * 12 {
        return Err(bad("float dump payload length mismatch"));
    }
    let mut pixels = Vec::with_capacity(width * height);
    for chunk in bytes[16..].chunks_exact(12) {
        let c = |i: usize| f32::from_le_bytes(chunk[i..i + 4].try_into().unwrap()) as f64;
        pixels.push([c(0), c(4), c(8)]);
    }
    Ok(Image { width, height, pixels })
}
