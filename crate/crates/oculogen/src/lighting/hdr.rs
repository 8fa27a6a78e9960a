//! Radiance RGBE (.hdr) reader and writer.
//!
//! Pixels are stored as four bytes (r, g, b, e) sharing one exponent:
//! component = byte * 2^(e-136), with e = 0 encoding black. Scanlines may be
//! flat four-byte pixels, old-style run-length (a (1,1,1,n) pixel repeats the
//! previous pixel), or new-style RLE (per-component byte streams). The writer
//! emits new-style RLE when the width allows it and flat pixels otherwise.

use std::io::{self, BufRead, Write};

use super::{EnvironmentMap, LightingError};

/// Component scale for a shared exponent byte.
fn rgbe_scale(e: u8) -> f64 {
    f64::powi(2.0, e as i32 - 136)
}

/// Packs linear RGB into an RGBE quad (truncating mantissas, per the
/// reference encoding).
pub fn float_to_rgbe(rgb: [f64; 3]) -> [u8; 4] {
    let max = rgb[0].max(rgb[1]).max(rgb[2]);
    if max < 1e-32 {
        return [0, 0, 0, 0];
    }
    // Decompose max = m * 2^e with m in [0.5, 1).
    let mut e = max.log2().floor() as i32 + 1;
    let mut m = max * f64::powi(2.0, -e);
    if m >= 1.0 {
        m *= 0.5;
        e += 1;
    }
    if m < 0.5 {
        m *= 2.0;
        e -= 1;
    }
    debug_assert!((0.5..1.0).contains(&m));
    let scale = m * 256.0 / max;
    [
        (rgb[0] * scale) as u8,
        (rgb[1] * scale) as u8,
        (rgb[2] * scale) as u8,
        (e + 128) as u8,
    ]
}

/// Unpacks an RGBE quad into linear RGB.
pub fn rgbe_to_float(q: [u8; 4]) -> [f64; 3] {
    if q[3] == 0 {
        return [0.0, 0.0, 0.0];
    }
    let f = rgbe_scale(q[3]);
    [q[0] as f64 * f, q[1] as f64 * f, q[2] as f64 * f]
}

fn malformed(reason: &str) -> LightingError {
    LightingError::MalformedHdr { reason: reason.to_string() }
}

fn read_exact(r: &mut impl BufRead, buf: &mut [u8]) -> Result<(), LightingError> {
    r.read_exact(buf).map_err(|_| malformed("truncated pixel data"))
}

/// Decodes one new-style RLE component stream of `width` bytes.
fn read_rle_component(r: &mut impl BufRead, out: &mut [u8]) -> Result<(), LightingError> {
    let mut pos = 0;
    while pos < out.len() {
        let mut code = [0u8; 1];
        read_exact(r, &mut code)?;
        if code[0] > 128 {
            let count = (code[0] - 128) as usize;
            if pos + count > out.len() {
                return Err(malformed("RLE run overflows scanline"));
            }
            let mut value = [0u8; 1];
            read_exact(r, &mut value)?;
            out[pos..pos + count].fill(value[0]);
            pos += count;
        } else {
            let count = code[0] as usize;
            if count == 0 || pos + count > out.len() {
                return Err(malformed("RLE literal overflows scanline"));
            }
            read_exact(r, &mut out[pos..pos + count])?;
            pos += count;
        }
    }
    Ok(())
}

/// Reads one scanline of RGBE quads, handling flat, old-RLE, and new-RLE.
fn read_scanline(r: &mut impl BufRead, width: usize, out: &mut Vec<[u8; 4]>) -> Result<(), LightingError> {
    let mut first = [0u8; 4];
    read_exact(r, &mut first)?;
    if first[0] == 2 && first[1] == 2 && ((first[2] as usize) << 8 | first[3] as usize) == width && width >= 8 {
        // New-style: four independent component streams.
        let mut comp = vec![0u8; width * 4];
        for c in 0..4 {
            read_rle_component(r, &mut comp[c * width..(c + 1) * width])?;
        }
        for i in 0..width {
            out.push([comp[i], comp[width + i], comp[2 * width + i], comp[3 * width + i]]);
        }
        return Ok(());
    }
    // Flat or old-style RLE: `first` is already the first pixel.
    let mut pixel = first;
    let mut written = 0;
    let mut shift = 0u32;
    loop {
        if pixel[0] == 1 && pixel[1] == 1 && pixel[2] == 1 && written > 0 {
            let count = (pixel[3] as usize) << shift;
            let prev = *out.last().ok_or_else(|| malformed("old RLE with no previous pixel"))?;
            if written + count > width {
                return Err(malformed("old RLE overflows scanline"));
            }
            for _ in 0..count {
                out.push(prev);
            }
            written += count;
            shift += 8;
        } else {
            out.push(pixel);
            written += 1;
            shift = 0;
        }
        if written >= width {
            return Ok(());
        }
        read_exact(r, &mut pixel)?;
    }
}

/// Reads a Radiance HDR stream into an environment map.
pub fn read_hdr(mut r: impl BufRead, id: &str) -> Result<EnvironmentMap, LightingError> {
    let mut line = String::new();
    r.read_line(&mut line).map_err(LightingError::Io)?;
    if !line.starts_with("#?") {
        return Err(malformed("missing #? magic"));
    }
    // Header lines until the blank separator.
    let mut format_seen = false;
    loop {
        line.clear();
        if r.read_line(&mut line).map_err(LightingError::Io)? == 0 {
            return Err(malformed("header never ends"));
        }
        let t = line.trim_end();
        if t.is_empty() {
            break;
        }
        if let Some(fmt) = t.strip_prefix("FORMAT=") {
            if fmt != "32-bit_rle_rgbe" {
                return Err(malformed("unsupported FORMAT"));
            }
            format_seen = true;
        }
    }
    if !format_seen {
        return Err(malformed("missing FORMAT line"));
    }
    line.clear();
    r.read_line(&mut line).map_err(LightingError::Io)?;
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "-Y" || parts[2] != "+X" {
        return Err(malformed("unsupported resolution orientation"));
    }
    let height: usize = parts[1].parse().map_err(|_| malformed("bad height"))?;
    let width: usize = parts[3].parse().map_err(|_| malformed("bad width"))?;
    if width == 0 || height == 0 || width != 2 * height {
        return Err(malformed("expected a 2:1 equirectangular image"));
    }

    let mut quads = Vec::with_capacity(width * height);
    for _ in 0..height {
        read_scanline(&mut r, width, &mut quads)?;
    }
    let pixels = quads.into_iter().map(rgbe_to_float).collect();
    EnvironmentMap::from_pixels(width, height, pixels, id)
}

/// Loads an HDR file from disk.
pub fn load_hdr(path: &std::path::Path) -> Result<EnvironmentMap, LightingError> {
    let file = std::fs::File::open(path).map_err(LightingError::Io)?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    read_hdr(io::BufReader::new(file), &id)
}

/// Writes one component stream with new-style RLE.
fn write_rle_component(w: &mut impl Write, data: &[u8]) -> io::Result<()> {
    let mut i = 0;
    while i < data.len() {
        // Measure the run starting here.
        let mut run = 1;
        while i + run < data.len() && data[i + run] == data[i] && run < 127 {
            run += 1;
        }
        if run >= 4 {
            w.write_all(&[(128 + run) as u8, data[i]])?;
            i += run;
        } else {
            // Gather literals until the next long run (or 128 bytes).
            let start = i;
            let mut n = 0;
            while i < data.len() && n < 128 {
                let mut ahead = 1;
                while i + ahead < data.len() && data[i + ahead] == data[i] && ahead < 4 {
                    ahead += 1;
                }
                if ahead >= 4 {
                    break;
                }
                i += 1;
                n += 1;
            }
            w.write_all(&[n as u8])?;
            w.write_all(&data[start..start + n])?;
        }
    }
    Ok(())
}

/// Writes a Radiance HDR stream (ignores rotation/intensity metadata: the
/// stored grid is what is written).
pub fn write_hdr(mut w: impl Write, env: &EnvironmentMap) -> io::Result<()> {
    write!(w, "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y {} +X {}\n", env.height, env.width)?;
    let rle = (8..32768).contains(&env.width);
    for row in 0..env.height {
        let quads: Vec<[u8; 4]> =
            (0..env.width).map(|col| float_to_rgbe(env.texel(col, row))).collect();
        if rle {
            w.write_all(&[2, 2, (env.width >> 8) as u8, (env.width & 0xff) as u8])?;
            for c in 0..4 {
                let stream: Vec<u8> = quads.iter().map(|q| q[c]).collect();
                write_rle_component(&mut w, &stream)?;
            }
        } else {
            for q in &quads {
                w.write_all(q)?;
            }
        }
    }
    Ok(())
}

/// Saves an HDR file to disk.
pub fn save_hdr(path: &std::path::Path, env: &EnvironmentMap) -> Result<(), LightingError> {
    let file = std::fs::File::create(path).map_err(LightingError::Io)?;
    write_hdr(io::BufWriter::new(file), env).map_err(LightingError::Io)
}
