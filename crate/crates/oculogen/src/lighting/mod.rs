//! Image-based lighting: equirectangular environment maps, a Radiance HDR
//! codec, procedural environment generation, and luminance-proportional
//! importance sampling.
//!
//! Maps are stored latitude-longitude with row 0 at the +Y pole: a direction
//! maps to u = azimuth / 2pi (azimuth = atan2(x, z)) and v = inclination / pi.
//! Rotation is a metadata-only turn about the vertical (+Y) axis; intensity is
//! a metadata-only radiance scale. Width is always twice height.

pub mod hdr;

pub use hdr::{float_to_rgbe, load_hdr, read_hdr, rgbe_to_float, save_hdr, write_hdr};

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::field::{seed_chain, value_noise_periodic_x};
use crate::geom::{UnitVec3, Vec3};

#[derive(Debug, thiserror::Error)]
pub enum LightingError {
    #[error("malformed hdr stream: {reason}")]
    MalformedHdr { reason: String },
    #[error("hdr i/o failed: {0}")]
    Io(std::io::Error),
    #[error("intensity scale {scale} must be positive")]
    NonPositiveScale { scale: f64 },
    #[error("environment has zero total luminance; nothing to sample")]
    BlackEnvironment,
}

/// Rec. 709 luminance of a linear RGB triple.
pub fn luminance(rgb: [f64; 3]) -> f64 {
    0.2126 * rgb[0] + 0.7152 * rgb[1] + 0.0722 * rgb[2]
}

/// Equirectangular radiance map with orientation and exposure metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentMap {
    pub width: usize,
    pub height: usize,
    /// Row-major linear RGB radiance; row 0 spans the +Y pole.
    pub pixels: Vec<[f64; 3]>,
    /// Turn about the vertical (+Y) axis, degrees.
    pub rotation_deg: f64,
    /// Radiance multiplier applied at evaluation time.
    pub intensity: f64,
    pub id: String,
}

impl EnvironmentMap {
    /// Builds a map from a pixel grid, enforcing the 2:1 shape and that every
    /// sample is finite and non-negative.
    pub fn from_pixels(
        width: usize,
        height: usize,
        pixels: Vec<[f64; 3]>,
        id: &str,
    ) -> Result<Self, LightingError> {
        let fail = |reason: String| Err(LightingError::MalformedHdr { reason });
        if height == 0 || width != 2 * height {
            return fail(format!("expected width = 2 * height, got {width}x{height}"));
        }
        if pixels.len() != width * height {
            return fail(format!("pixel count {} != {width}x{height}", pixels.len()));
        }
        for (k, p) in pixels.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite() && *c >= 0.0) {
                return fail(format!("pixel {k} is negative or non-finite"));
            }
        }
        Ok(EnvironmentMap {
            width,
            height,
            pixels,
            rotation_deg: 0.0,
            intensity: 1.0,
            id: id.to_string(),
        })
    }

    /// Raw grid texel (no rotation or intensity applied).
    pub fn texel(&self, col: usize, row: usize) -> [f64; 3] {
        self.pixels[row * self.width + col]
    }

    /// Solid angle of every texel in `row`: (2pi/W) * (cos th_j - cos th_j+1).
    pub fn texel_solid_angle(&self, row: usize) -> f64 {
        let t0 = row as f64 * PI / self.height as f64;
        let t1 = (row + 1) as f64 * PI / self.height as f64;
        (TAU / self.width as f64) * (t0.cos() - t1.cos())
    }

    /// Maps a world direction to grid (u, v), undoing the metadata rotation.
    fn dir_to_uv(&self, dir: UnitVec3) -> (f64, f64) {
        let d = dir.as_vec();
        let az = d.x.atan2(d.z);
        let u = (az / TAU - self.rotation_deg / 360.0).rem_euclid(1.0);
        let v = d.y.clamp(-1.0, 1.0).acos() / PI;
        (u, v)
    }

    /// Incoming radiance from a world direction: bilinear in the grid (u wraps
    /// azimuthally, v clamps at the poles), times the intensity scale.
    pub fn eval_radiance(&self, dir: UnitVec3) -> [f64; 3] {
        let (u, v) = self.dir_to_uv(dir);
        let x = u * self.width as f64 - 0.5;
        let y = (v * self.height as f64 - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor();
        let fx = x - x0;
        let i0 = (x0 as i64).rem_euclid(self.width as i64) as usize;
        let i1 = (i0 + 1) % self.width;
        let j0 = y.floor() as usize;
        let j1 = (j0 + 1).min(self.height - 1);
        let fy = y - j0 as f64;
        let mut out = [0.0; 3];
        for c in 0..3 {
            let top = self.texel(i0, j0)[c] * (1.0 - fx) + self.texel(i1, j0)[c] * fx;
            let bot = self.texel(i0, j1)[c] * (1.0 - fx) + self.texel(i1, j1)[c] * fx;
            out[c] = (top * (1.0 - fy) + bot * fy) * self.intensity;
        }
        out
    }

    /// Per-channel integral of radiance over the sphere by direct texel
    /// quadrature (intensity included; rotation does not change it).
    pub fn quadrature_integral(&self) -> [f64; 3] {
        let mut sum = [0.0; 3];
        for j in 0..self.height {
            let omega = self.texel_solid_angle(j);
            for i in 0..self.width {
                let t = self.texel(i, j);
                for c in 0..3 {
                    sum[c] += t[c] * omega * self.intensity;
                }
            }
        }
        sum
    }

    /// Mean texel luminance (unweighted pixel statistic, intensity included).
    pub fn mean_luminance(&self) -> f64 {
        self.pixels.iter().map(|p| luminance(*p)).sum::<f64>() * self.intensity
            / self.pixels.len() as f64
    }

    /// Median texel luminance (intensity included).
    pub fn median_luminance(&self) -> f64 {
        let mut l: Vec<f64> = self.pixels.iter().map(|p| luminance(*p)).collect();
        l.sort_by(f64::total_cmp);
        l[l.len() / 2] * self.intensity
    }

    /// Maximum texel luminance (intensity included).
    pub fn max_luminance(&self) -> f64 {
        self.pixels.iter().map(|p| luminance(*p)).fold(0.0, f64::max) * self.intensity
    }
}

/// Returns a copy rotated by `deg` more about the vertical axis. Metadata
/// only: the pixel grid is shared unchanged.
pub fn rotate_env(env: &EnvironmentMap, deg: f64) -> EnvironmentMap {
    let mut out = env.clone();
    out.rotation_deg += deg;
    out
}

/// Returns a copy with radiance scaled by `k > 0`. Metadata only.
pub fn scale_intensity(env: &EnvironmentMap, k: f64) -> Result<EnvironmentMap, LightingError> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(LightingError::NonPositiveScale { scale: k });
    }
    let mut out = env.clone();
    out.intensity *= k;
    Ok(out)
}

/// Procedural environment archetypes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    BrightOutdoor,
    CloudyOutdoor,
    BrightIndoor,
    DarkIndoor,
}

impl EnvKind {
    pub const ALL: [EnvKind; 4] =
        [EnvKind::BrightOutdoor, EnvKind::CloudyOutdoor, EnvKind::BrightIndoor, EnvKind::DarkIndoor];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::BrightOutdoor => "bright_outdoor",
            EnvKind::CloudyOutdoor => "cloudy_outdoor",
            EnvKind::BrightIndoor => "bright_indoor",
            EnvKind::DarkIndoor => "dark_indoor",
        }
    }
}

const ENV_WIDTH: usize = 128;
const ENV_HEIGHT: usize = 64;

/// Uniform f64 in [0, 1) from a seed, for scalar layout choices.
fn seeded_unit(seed: u64, tag: u64) -> f64 {
    (seed_chain(seed, &[tag]) >> 11) as f64 / (1u64 << 53) as f64
}

/// Azimuthally periodic fractal noise in [0, 1] (seam-free in u).
fn sky_noise(seed: u64, u: f64, v: f64, octaves: u32) -> f64 {
    let mut sum = 0.0;
    let mut amp = 1.0;
    let mut norm = 0.0;
    let mut period = 6i64;
    for o in 0..octaves {
        let s = seed_chain(seed, &[o as u64]);
        sum += amp * value_noise_periodic_x(s, u * period as f64, v * period as f64 * 0.5, period);
        norm += amp;
        amp *= 0.5;
        period *= 2;
    }
    sum / norm
}

fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t]
}

/// Shortest azimuthal distance |a - b| on the circle, radians.
fn az_dist(a: f64, b: f64) -> f64 {
    ((a - b + PI).rem_euclid(TAU) - PI).abs()
}

/// Generates a deterministic archetype map (128x64). The four kinds differ by
/// construction and by absolute radiance scale: the sunny sky carries a
/// concentrated disc two orders of magnitude above its median, and the dark
/// interior sits well below a tenth of the bright interior's mean.
pub fn generate_procedural_env(kind: EnvKind, seed: u64) -> EnvironmentMap {
    let seed = seed_chain(seed, &[kind as u64 + 1]);
    let (w, h) = (ENV_WIDTH, ENV_HEIGHT);
    let mut pixels = Vec::with_capacity(w * h);

    // Seeded layout: one strong luminaire direction plus a secondary one.
    let sun_az = TAU * seeded_unit(seed, 0);
    let sun_elev_deg = 25.0 + 35.0 * seeded_unit(seed, 1);
    let sun_theta = (90.0 - sun_elev_deg).to_radians();
    let sun_dir =
        Vec3::new(sun_theta.sin() * sun_az.sin(), sun_theta.cos(), sun_theta.sin() * sun_az.cos());
    let win_az = [TAU * seeded_unit(seed, 2), 0.0];
    let win_az = [win_az[0], win_az[0] + PI * (0.8 + 0.4 * seeded_unit(seed, 3))];

    for j in 0..h {
        let theta = (j as f64 + 0.5) * PI / h as f64;
        let y = theta.cos();
        let s = theta.sin();
        for i in 0..w {
            let az = (i as f64 + 0.5) * TAU / w as f64;
            let dir = Vec3::new(s * az.sin(), y, s * az.cos());
            let u = (i as f64 + 0.5) / w as f64;
            let v = (j as f64 + 0.5) / h as f64;
            let px = match kind {
                EnvKind::BrightOutdoor => {
                    let base = if y >= 0.0 {
                        let t = y.powf(0.65);
                        let clouds = 0.85 + 0.3 * sky_noise(seed_chain(seed, &[10]), u, v, 3);
                        let c = lerp3([0.86, 0.84, 0.79], [0.31, 0.50, 0.94], t);
                        [c[0] * clouds, c[1] * clouds, c[2] * clouds]
                    } else {
                        lerp3([0.86, 0.84, 0.79], [0.19, 0.16, 0.12], (-y).powf(0.7))
                    };
                    let ang = dir.dot(sun_dir).clamp(-1.0, 1.0).acos().to_degrees();
                    if ang < 9.0 {
                        [150.0, 144.0, 135.0]
                    } else if ang < 11.0 {
                        lerp3(base, [150.0, 144.0, 135.0], (11.0 - ang) / 2.0)
                    } else {
                        base
                    }
                }
                EnvKind::CloudyOutdoor => {
                    if y >= 0.0 {
                        let g = 0.42 + 0.36 * y.powf(0.8);
                        let m = 0.75 + 0.5 * sky_noise(seed_chain(seed, &[11]), u, v, 3);
                        [g * m * 0.98, g * m, g * m * 1.04]
                    } else {
                        let m = 1.0 + 0.3 * (sky_noise(seed_chain(seed, &[12]), u, v, 2) - 0.5);
                        [0.15 * m, 0.14 * m, 0.12 * m]
                    }
                }
                EnvKind::BrightIndoor => {
                    let theta_deg = theta.to_degrees();
                    let in_window = (55.0..100.0).contains(&theta_deg)
                        && win_az.iter().any(|c| az_dist(az, *c) < 15f64.to_radians());
                    if in_window {
                        [17.0, 18.0, 20.0]
                    } else if theta_deg < 22.0 {
                        [5.5, 5.3, 4.8]
                    } else if theta_deg > 150.0 {
                        [0.07, 0.062, 0.055]
                    } else {
                        let m = 0.8 + 0.4 * sky_noise(seed_chain(seed, &[13]), u, v, 2);
                        [0.16 * m, 0.145 * m, 0.12 * m]
                    }
                }
                EnvKind::DarkIndoor => {
                    let theta_deg = theta.to_degrees();
                    let lamp = (65.0..95.0).contains(&theta_deg)
                        && az_dist(az, win_az[0]) < 7f64.to_radians();
                    let sliver = (60.0..100.0).contains(&theta_deg)
                        && az_dist(az, win_az[1]) < 5f64.to_radians();
                    if lamp {
                        [5.5, 3.8, 2.2]
                    } else if sliver {
                        [0.35, 0.40, 0.50]
                    } else {
                        let m = 0.7 + 0.6 * sky_noise(seed_chain(seed, &[14]), u, v, 2);
                        [0.009 * m, 0.0095 * m, 0.012 * m]
                    }
                }
            };
            pixels.push(px);
        }
    }
    EnvironmentMap::from_pixels(w, h, pixels, kind.name()).expect("procedural maps are valid")
}

/// Tabulated luminance-proportional sampler over an environment grid.
///
/// Texel weights are luminance times sin(inclination at the row center); a row
/// marginal CDF and per-row conditional CDFs drive the pick, and the draw is
/// uniform in solid angle inside the chosen texel (azimuth uniform, cos(theta)
/// uniform over the texel's range). The returned pdf is exactly
/// P(texel) / solid_angle(texel), so a constant map yields 1 / 4pi.
#[derive(Debug, Clone)]
pub struct EnvSampler {
    width: usize,
    height: usize,
    row_cdf: Vec<f64>,
    cond_cdf: Vec<f64>,
    prob: Vec<f64>,
}

impl EnvSampler {
    /// Tabulates CDFs from the map's grid. Rotation and intensity metadata do
    /// not matter here: rotation is applied at draw time and a global scale
    /// cancels in the normalization.
    pub fn build(env: &EnvironmentMap) -> Result<EnvSampler, LightingError> {
        let (w, h) = (env.width, env.height);
        let mut weight = vec![0.0f64; w * h];
        for j in 0..h {
            let sin_c = ((j as f64 + 0.5) * PI / h as f64).sin();
            for i in 0..w {
                weight[j * w + i] = luminance(env.texel(i, j)) * sin_c;
            }
        }
        let total: f64 = weight.iter().sum();
        if !(total > 0.0) {
            return Err(LightingError::BlackEnvironment);
        }

        let mut row_cdf = Vec::with_capacity(h);
        let mut cond_cdf = vec![0.0f64; w * h];
        let mut prob = vec![0.0f64; w * h];
        let mut acc = 0.0;
        for j in 0..h {
            let row = &weight[j * w..(j + 1) * w];
            let row_sum: f64 = row.iter().sum();
            acc += row_sum / total;
            row_cdf.push(acc);
            let mut c = 0.0;
            for i in 0..w {
                // Zero rows keep a uniform conditional; they are never drawn.
                c += if row_sum > 0.0 { row[i] / row_sum } else { 1.0 / w as f64 };
                cond_cdf[j * w + i] = c;
                prob[j * w + i] = row[i] / total;
            }
            cond_cdf[(j + 1) * w - 1] = 1.0;
        }
        *row_cdf.last_mut().unwrap() = 1.0;
        Ok(EnvSampler { width: w, height: h, row_cdf, cond_cdf, prob })
    }

    /// Pdf (per steradian) of the texel containing the interval coordinate.
    fn texel_pdf(&self, env: &EnvironmentMap, col: usize, row: usize) -> f64 {
        self.prob[row * self.width + col] / env.texel_solid_angle(row)
    }

    /// Draws a world-space direction from two uniforms in [0, 1); returns the
    /// direction and its pdf per steradian.
    pub fn sample_direction(
        &self,
        env: &EnvironmentMap,
        u1: f64,
        u2: f64,
    ) -> (UnitVec3, f64) {
        let (w, h) = (self.width, self.height);
        // Row pick; the remainder within the row's CDF slab re-stretches to a
        // fresh uniform that places the draw inside the texel.
        let j = self.row_cdf.partition_point(|&c| c <= u1).min(h - 1);
        let lo = if j == 0 { 0.0 } else { self.row_cdf[j - 1] };
        let span = self.row_cdf[j] - lo;
        let uj = if span > 0.0 { ((u1 - lo) / span).clamp(0.0, 1.0 - 1e-12) } else { 0.5 };

        let cond = &self.cond_cdf[j * w..(j + 1) * w];
        let i = cond.partition_point(|&c| c <= u2).min(w - 1);
        let clo = if i == 0 { 0.0 } else { cond[i - 1] };
        let cspan = cond[i] - clo;
        let ui = if cspan > 0.0 { ((u2 - clo) / cspan).clamp(0.0, 1.0 - 1e-12) } else { 0.5 };

        // Uniform in solid angle inside the texel.
        let cos_hi = (j as f64 * PI / h as f64).cos();
        let cos_lo = ((j + 1) as f64 * PI / h as f64).cos();
        let y = cos_hi + (cos_lo - cos_hi) * uj;
        let sin_t = (1.0 - y * y).max(0.0).sqrt();
        let az = (i as f64 + ui) * TAU / w as f64 + env.rotation_deg.to_radians();
        let dir = Vec3::new(sin_t * az.sin(), y, sin_t * az.cos())
            .normalized()
            .expect("sampled direction is unit");
        (dir, self.texel_pdf(env, i, j))
    }

    /// Pdf (per steradian) that `sample_direction` would produce `dir`.
    pub fn pdf_direction(&self, env: &EnvironmentMap, dir: UnitVec3) -> f64 {
        let (u, v) = env.dir_to_uv(dir);
        let i = ((u * self.width as f64) as usize).min(self.width - 1);
        let j = ((v * self.height as f64) as usize).min(self.height - 1);
        self.texel_pdf(env, i, j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rotation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(x: f64, y: f64, z: f64) -> UnitVec3 {
        Vec3::new(x, y, z).normalized().unwrap()
    }

    fn rand_dir(rng: &mut ChaCha8Rng) -> UnitVec3 {
        loop {
            let v = Vec3::new(
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
            );
            if v.norm_squared() > 1e-6 && v.norm_squared() <= 1.0 {
                return v.normalized().unwrap();
            }
        }
    }

    #[test]
    fn rgbe_known_quads() {
        assert_eq!(float_to_rgbe([1.0, 0.0, 0.0]), [128, 0, 0, 129]);
        assert_eq!(float_to_rgbe([0.0, 1.0, 0.0]), [0, 128, 0, 129]);
        assert_eq!(rgbe_to_float([128, 0, 0, 129]), [1.0, 0.0, 0.0]);
        assert_eq!(float_to_rgbe([0.0, 0.0, 0.0]), [0, 0, 0, 0]);
        assert_eq!(rgbe_to_float([0, 0, 0, 0]), [0.0, 0.0, 0.0]);
        // Shared exponent follows the max component.
        let q = float_to_rgbe([0.5, 2.0, 0.25]);
        assert_eq!(q[3], 130);
        let back = rgbe_to_float(q);
        assert!((back[1] - 2.0).abs() <= 2.0 / 128.0);
    }

    #[test]
    fn hdr_hand_encoded_two_by_one_decodes_exactly() {
        let mut bytes = b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y 1 +X 2\n".to_vec();
        bytes.extend_from_slice(&[128, 0, 0, 129, 0, 128, 0, 129]);
        let env = read_hdr(std::io::Cursor::new(bytes), "tiny").unwrap();
        assert_eq!((env.width, env.height), (2, 1));
        assert_eq!(env.pixels, vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
    }

    #[test]
    fn hdr_old_rle_scanline_decodes() {
        let mut bytes = b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y 2 +X 4\n".to_vec();
        // Row 0: pixel A, then (1,1,1,3) repeating A three times.
        bytes.extend_from_slice(&[128, 64, 32, 129, 1, 1, 1, 3]);
        // Row 1: four literal pixels (none matching the (1,1,1,n) marker).
        for k in 0..4u8 {
            bytes.extend_from_slice(&[k + 10, k, k, 128]);
        }
        let env = read_hdr(std::io::Cursor::new(bytes), "old").unwrap();
        assert_eq!(env.texel(3, 0), env.texel(0, 0));
        assert_eq!(env.texel(0, 0), rgbe_to_float([128, 64, 32, 129]));
        assert_eq!(env.texel(2, 1), rgbe_to_float([12, 2, 2, 128]));
    }

    #[test]
    fn hdr_malformed_streams_are_rejected() {
        let cases: Vec<Vec<u8>> = vec![
            b"not radiance\n".to_vec(),
            b"#?RADIANCE\nFORMAT=32-bit_rle_xyze\n\n-Y 1 +X 2\n".to_vec(),
            b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y 2 +X 2\n".to_vec(),
            b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n+Y 1 +X 2\n".to_vec(),
            {
                let mut b = b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y 1 +X 2\n".to_vec();
                b.extend_from_slice(&[128, 0, 0]); // truncated pixel data
                b
            },
        ];
        for bytes in cases {
            match read_hdr(std::io::Cursor::new(bytes), "bad") {
                Err(LightingError::MalformedHdr { .. }) => {}
                other => panic!("expected MalformedHdr, got {other:?}"),
            }
        }
    }

    #[test]
    fn hdr_round_trip_stays_within_shared_exponent_quantization() {
        for kind in EnvKind::ALL {
            let env = generate_procedural_env(kind, 42);
            let mut buf = Vec::new();
            write_hdr(&mut buf, &env).unwrap();
            let back = read_hdr(std::io::Cursor::new(buf), &env.id).unwrap();
            assert_eq!((back.width, back.height), (env.width, env.height));
            for (a, b) in env.pixels.iter().zip(&back.pixels) {
                let max = a[0].max(a[1]).max(a[2]);
                for c in 0..3 {
                    assert!(
                        (a[c] - b[c]).abs() <= max / 100.0 + 1e-12,
                        "round trip moved {a:?} -> {b:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn eval_checker_plus_x_matches_hand_bilinear() {
        let a = [1.0, 2.0, 3.0];
        let b = [4.0, 5.0, 6.0];
        let pixels = vec![a, b, a, b, b, a, b, a];
        let env = EnvironmentMap::from_pixels(4, 2, pixels, "checker").unwrap();
        // +X has azimuth pi/2 (u = 0.25) and inclination pi/2 (v = 0.5): the
        // bilinear sits midway between texels (0,0), (1,0), (0,1), (1,1).
        let got = env.eval_radiance(UnitVec3::X);
        for c in 0..3 {
            let want = (a[c] + b[c] + b[c] + a[c]) / 4.0;
            assert!((got[c] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_constant_map_everywhere_including_poles() {
        let env =
            EnvironmentMap::from_pixels(8, 4, vec![[0.7, 0.7, 0.7]; 32], "flat").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut dirs =
            vec![UnitVec3::Y, -UnitVec3::Y, UnitVec3::X, -UnitVec3::X, UnitVec3::Z, -UnitVec3::Z];
        dirs.extend((0..64).map(|_| rand_dir(&mut rng)));
        for d in dirs {
            let r = env.eval_radiance(d);
            for c in r {
                assert!((c - 0.7).abs() < 1e-12 && c.is_finite());
            }
        }
    }

    #[test]
    fn eval_is_continuous_across_the_azimuth_seam() {
        let env = generate_procedural_env(EnvKind::CloudyOutdoor, 9);
        for &y in &[-0.6, -0.2, 0.0, 0.3, 0.7] {
            let s = (1.0f64 - y * y).sqrt();
            let e = 1e-7f64; // azimuth just either side of zero (the u seam)
            let d0 = unit(s * (-e).sin(), y, s * (-e).cos());
            let d1 = unit(s * e.sin(), y, s * e.cos());
            let r0 = env.eval_radiance(d0);
            let r1 = env.eval_radiance(d1);
            for c in 0..3 {
                assert!(
                    (r0[c] - r1[c]).abs() < 1e-5 * (1.0 + r0[c].abs()),
                    "seam jump {r0:?} vs {r1:?}"
                );
            }
        }
    }

    #[test]
    fn rotation_is_consistent_with_rotating_the_direction() {
        let env = generate_procedural_env(EnvKind::BrightOutdoor, 4);
        let psi = 137.3;
        let rotated = rotate_env(&env, psi);
        let back = Rotation::from_axis_angle(UnitVec3::Y, -psi);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..64 {
            let d = rand_dir(&mut rng);
            let a = rotated.eval_radiance(d);
            let b = env.eval_radiance(back.apply_unit(d));
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-6 * (1.0 + a[c].abs()));
            }
        }
        // A full turn is the identity.
        let full = rotate_env(&env, 360.0);
        for _ in 0..16 {
            let d = rand_dir(&mut rng);
            let a = full.eval_radiance(d);
            let b = env.eval_radiance(d);
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-9 * (1.0 + a[c].abs()));
            }
        }
    }

    #[test]
    fn intensity_scale_is_multiplicative_and_validated() {
        let env = generate_procedural_env(EnvKind::BrightIndoor, 2);
        let doubled = scale_intensity(&env, 2.0).unwrap();
        let d = unit(0.3, 0.4, 0.5);
        let a = env.eval_radiance(d);
        let b = doubled.eval_radiance(d);
        for c in 0..3 {
            assert!((b[c] - 2.0 * a[c]).abs() < 1e-12);
        }
        let restored = scale_intensity(&doubled, 0.5).unwrap();
        assert_eq!(restored.intensity, 1.0);
        assert!(matches!(
            scale_intensity(&env, 0.0),
            Err(LightingError::NonPositiveScale { .. })
        ));
        assert!(matches!(
            scale_intensity(&env, -2.0),
            Err(LightingError::NonPositiveScale { .. })
        ));
    }

    #[test]
    fn archetypes_are_deterministic_and_well_formed() {
        for kind in EnvKind::ALL {
            let a = generate_procedural_env(kind, 7);
            let b = generate_procedural_env(kind, 7);
            assert_eq!(a.pixels, b.pixels, "{} not deterministic", kind.name());
            assert_eq!(a.width, 2 * a.height);
            assert!(a.pixels.iter().all(|p| p.iter().all(|c| c.is_finite() && *c >= 0.0)));
            let c = generate_procedural_env(kind, 8);
            assert_ne!(a.pixels, c.pixels, "{} ignores its seed", kind.name());
        }
    }

    #[test]
    fn sunny_sky_carries_a_concentrated_sun() {
        for seed in [1, 2, 3, 11] {
            let env = generate_procedural_env(EnvKind::BrightOutdoor, seed);
            let ratio = env.max_luminance() / env.median_luminance();
            assert!(ratio >= 100.0, "seed {seed}: max/median = {ratio}");
        }
    }

    #[test]
    fn dark_interior_sits_an_order_below_the_bright_one() {
        for seed in [1, 5] {
            let dark = generate_procedural_env(EnvKind::DarkIndoor, seed);
            let bright = generate_procedural_env(EnvKind::BrightIndoor, seed);
            let ratio = dark.mean_luminance() / bright.mean_luminance();
            assert!(ratio <= 0.1, "seed {seed}: mean ratio = {ratio}");
        }
    }

    #[test]
    fn sampler_constant_map_pdf_is_one_over_four_pi() {
        let env =
            EnvironmentMap::from_pixels(16, 8, vec![[0.3, 0.5, 0.2]; 128], "flat").unwrap();
        let sampler = EnvSampler::build(&env).unwrap();
        let want = 1.0 / (4.0 * PI);
        for a in 0..20 {
            for b in 0..20 {
                let (dir, pdf) = sampler.sample_direction(&env, a as f64 / 20.0, b as f64 / 20.0);
                assert!((pdf - want).abs() < 1e-9 * want, "pdf {pdf} != 1/4pi");
                assert!((dir.as_vec().norm() - 1.0).abs() < 1e-12);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let pdf = sampler.pdf_direction(&env, rand_dir(&mut rng));
            assert!((pdf - want).abs() < 1e-9 * want);
        }
    }

    #[test]
    fn sampler_cdfs_are_monotone_and_end_at_one() {
        let env = generate_procedural_env(EnvKind::BrightOutdoor, 13);
        let s = EnvSampler::build(&env).unwrap();
        assert_eq!(*s.row_cdf.last().unwrap(), 1.0);
        for w in s.row_cdf.windows(2) {
            assert!(w[1] >= w[0]);
        }
        for j in 0..s.height {
            let row = &s.cond_cdf[j * s.width..(j + 1) * s.width];
            assert_eq!(*row.last().unwrap(), 1.0);
            for w in row.windows(2) {
                assert!(w[1] >= w[0]);
            }
        }
    }

    #[test]
    fn sampler_concentrates_on_a_hot_texel() {
        let mut pixels = vec![[1e-3, 1e-3, 1e-3]; 32];
        pixels[2 * 8 + 5] = [1e6, 1e6, 1e6];
        let env = EnvironmentMap::from_pixels(8, 4, pixels, "hot").unwrap();
        let sampler = EnvSampler::build(&env).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut hits = 0;
        for _ in 0..10_000 {
            let (dir, pdf) = sampler.sample_direction(&env, rng.gen(), rng.gen());
            assert!(pdf > 0.0);
            let (u, v) = env.dir_to_uv(dir);
            if (u * 8.0) as usize == 5 && (v * 4.0) as usize == 2 {
                hits += 1;
            }
        }
        assert!(hits >= 9_900, "only {hits}/10000 draws hit the hot texel");
    }

    #[test]
    fn sampler_black_environment_is_an_error() {
        let env = EnvironmentMap::from_pixels(4, 2, vec![[0.0; 3]; 8], "black").unwrap();
        assert!(matches!(EnvSampler::build(&env), Err(LightingError::BlackEnvironment)));
    }

    #[test]
    fn importance_sampled_integral_matches_quadrature() {
        let env = generate_procedural_env(EnvKind::CloudyOutdoor, 3);
        let sampler = EnvSampler::build(&env).unwrap();
        let want = luminance(env.quadrature_integral());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let (dir, pdf) = sampler.sample_direction(&env, rng.gen(), rng.gen());
            sum += luminance(env.eval_radiance(dir)) / pdf;
        }
        let got = sum / n as f64;
        assert!(
            (got - want).abs() <= 0.005 * want,
            "integral {got} vs quadrature {want}"
        );
    }

    #[test]
    fn irradiance_estimates_agree_for_every_archetype() {
        // Cosine-weighted integral against a fixed normal: the importance
        // sampler must agree with direct texel quadrature within 1%.
        let normal = unit(0.0, 0.5, 0.8);
        for kind in EnvKind::ALL {
            let env = generate_procedural_env(kind, 9);
            let sampler = EnvSampler::build(&env).unwrap();
            let mut want = 0.0;
            for j in 0..env.height {
                let theta = (j as f64 + 0.5) * PI / env.height as f64;
                let omega = env.texel_solid_angle(j);
                for i in 0..env.width {
                    let az = (i as f64 + 0.5) * TAU / env.width as f64;
                    let d = Vec3::new(
                        theta.sin() * az.sin(),
                        theta.cos(),
                        theta.sin() * az.cos(),
                    );
                    let cosine = d.dot(normal.as_vec()).max(0.0);
                    want += luminance(env.texel(i, j)) * cosine * omega;
                }
            }
            // Jittered-stratified uniforms: strata pin the high-variance
            // luminaire-edge texels so the estimate converges tightly.
            let mut rng = ChaCha8Rng::seed_from_u64(kind as u64 + 21);
            let g = 500;
            let mut sum = 0.0;
            for a in 0..g {
                for b in 0..g {
                    let u1 = (a as f64 + rng.gen::<f64>()) / g as f64;
                    let u2 = (b as f64 + rng.gen::<f64>()) / g as f64;
                    let (dir, pdf) = sampler.sample_direction(&env, u1, u2);
                    let cosine = dir.as_vec().dot(normal.as_vec()).max(0.0);
                    sum += luminance(env.eval_radiance(dir)) * cosine / pdf;
                }
            }
            let got = sum / (g * g) as f64;
            assert!(
                (got - want).abs() <= 0.01 * want.max(1e-12),
                "{}: irradiance {got} vs {want}",
                kind.name()
            );
        }
    }

    #[test]
    fn sampling_commutes_with_rotation() {
        let env = generate_procedural_env(EnvKind::BrightOutdoor, 6);
        let rotated = rotate_env(&env, 90.0);
        let s0 = EnvSampler::build(&env).unwrap();
        let s1 = EnvSampler::build(&rotated).unwrap();
        let turn = Rotation::from_axis_angle(UnitVec3::Y, 90.0);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let (u1, u2) = (rng.gen(), rng.gen());
            let (d0, p0) = s0.sample_direction(&env, u1, u2);
            let (d1, p1) = s1.sample_direction(&rotated, u1, u2);
            assert!((p0 - p1).abs() < 1e-12 * p0);
            assert!(turn.apply_unit(d0).angle_deg(d1) < 1e-9);
            // The draw's pdf is recoverable from the direction alone.
            assert!((s1.pdf_direction(&rotated, d1) - p1).abs() < 1e-12 * p1);
        }
    }
}
