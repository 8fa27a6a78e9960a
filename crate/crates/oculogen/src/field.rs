//! Small 2D scalar-field toolkit: deterministic value noise and grid fields.
//!
//! Used for iris/sclera texture variation and skin wrinkle displacement. All
//! noise is seeded explicitly so identical seeds reproduce identical fields.

/// 64-bit avalanche mix (splitmix64 finalizer). The crate's only hash; it backs
/// noise lattices and the hierarchical RNG seeding in the generator.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Combine a seed with a stream of indices into a new 64-bit seed.
pub fn seed_chain(seed: u64, parts: &[u64]) -> u64 {
    let mut h = mix64(seed);
    for &p in parts {
        h = mix64(h ^ p);
    }
    h
}

/// Lattice value in [0, 1) at integer coordinates.
fn lattice(seed: u64, ix: i64, iy: i64) -> f64 {
    let h = seed_chain(seed, &[ix as u64, iy as u64]);
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Smoothly interpolated value noise in [0, 1], one octave, unit lattice.
pub fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let ix = x.floor();
    let iy = y.floor();
    let fx = smoothstep(x - ix);
    let fy = smoothstep(y - iy);
    let (ix, iy) = (ix as i64, iy as i64);
    let v00 = lattice(seed, ix, iy);
    let v10 = lattice(seed, ix + 1, iy);
    let v01 = lattice(seed, ix, iy + 1);
    let v11 = lattice(seed, ix + 1, iy + 1);
    let a = v00 + (v10 - v00) * fx;
    let b = v01 + (v11 - v01) * fx;
    a + (b - a) * fy
}

/// Fractal (octave-summed) value noise in [0, 1].
pub fn fbm_noise(seed: u64, x: f64, y: f64, octaves: u32) -> f64 {
    let mut sum = 0.0;
    let mut amp = 1.0;
    let mut freq = 1.0;
    let mut total = 0.0;
    for o in 0..octaves {
        sum += amp * value_noise(seed_chain(seed, &[o as u64]), x * freq, y * freq);
        total += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    sum / total
}

/// Periodic value noise: tiles with period `px` in x (for seam-free azimuthal
/// textures). One octave.
pub fn value_noise_periodic_x(seed: u64, x: f64, y: f64, px: i64) -> f64 {
    debug_assert!(px > 0);
    let ix = x.floor();
    let iy = y.floor();
    let fx = smoothstep(x - ix);
    let fy = smoothstep(y - iy);
    let (ix, iy) = (ix as i64, iy as i64);
    let wrap = |i: i64| i.rem_euclid(px);
    let v00 = lattice(seed, wrap(ix), iy);
    let v10 = lattice(seed, wrap(ix + 1), iy);
    let v01 = lattice(seed, wrap(ix), iy + 1);
    let v11 = lattice(seed, wrap(ix + 1), iy + 1);
    let a = v00 + (v10 - v00) * fx;
    let b = v01 + (v11 - v01) * fx;
    a + (b - a) * fy
}

/// Row-major 2D scalar grid with bilinear sampling at unit-square coordinates.
#[derive(Debug, Clone)]
pub struct ScalarField2D {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ScalarField2D {
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        assert!(width >= 2 && height >= 2, "field needs at least 2x2 samples");
        let mut data = Vec::with_capacity(width * height);
        for j in 0..height {
            let v = j as f64 / (height - 1) as f64;
            for i in 0..width {
                let u = i as f64 / (width - 1) as f64;
                data.push(f(u, v));
            }
        }
        ScalarField2D { width, height, data }
    }

    /// Bilinear sample at (u, v) in [0, 1]^2; clamps outside.
    pub fn sample(&self, u: f64, v: f64) -> f64 {
        let x = (u.clamp(0.0, 1.0)) * (self.width - 1) as f64;
        let y = (v.clamp(0.0, 1.0)) * (self.height - 1) as f64;
        let x0 = (x.floor() as usize).min(self.width - 2);
        let y0 = (y.floor() as usize).min(self.height - 2);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let at = |i: usize, j: usize| self.data[j * self.width + i];
        let a = at(x0, y0) + (at(x0 + 1, y0) - at(x0, y0)) * fx;
        let b = at(x0, y0 + 1) + (at(x0 + 1, y0 + 1) - at(x0, y0 + 1)) * fx;
        a + (b - a) * fy
    }
}
