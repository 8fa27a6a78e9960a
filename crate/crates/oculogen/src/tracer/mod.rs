//! Monte Carlo path tracer over triangle soups under environment lighting.
//!
//! Materials: a Fresnel dielectric for the corneal shell, textured and plain
//! diffuse surfaces, and a two-lobe skin model (wrap-diffuse plus a normalized
//! glossy lobe mixed energy-preservingly by `gloss_strength`). Direct light
//! uses next-event estimation against the environment importance sampler,
//! combined with the diffuse continuation by balance-heuristic weights; the
//! specular and glossy lobes carry their light through path continuation
//! alone. Rendering is deterministic for a fixed seed regardless of worker
//! count: every pixel owns a counter-derived RNG substream.

pub mod bvh;
mod image_io;

pub use bvh::{build_bvh, Aabb, Bvh};
pub use image_io::{
    read_float_dump, srgb_byte, to_srgb_bytes, tone_map_export, write_float_dump, Image,
    FLOAT_DUMP_MAGIC,
};

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eyeball::EyeTexture;
use crate::field::seed_chain;
use crate::geom::{intersect_triangle, Ray, TriHit, TriMesh, UnitVec3, Vec3};
use crate::lighting::{EnvSampler, EnvironmentMap, LightingError};
use crate::staging::CameraPose;

#[derive(Debug, thiserror::Error)]
pub enum TracerError {
    #[error("scene has no triangles")]
    EmptyScene,
    #[error("invalid material: {reason}")]
    InvalidMaterial { reason: String },
    #[error("invalid render settings: {reason}")]
    InvalidSettings { reason: String },
    #[error("image i/o failed: {0}")]
    Io(std::io::Error),
}

/// Offset applied along the geometric normal when spawning secondary rays.
const RAY_EPS_MM: f64 = 1e-4;
/// Minimum ray parameter for intersection queries.
const T_MIN: f64 = 1e-6;
/// Albedo of lash fibers: strongly absorbing, slightly warm dark diffuse.
const LASH_ALBEDO: [f64; 3] = [0.05, 0.04, 0.035];

/// Surface appearance attached to a material id.
#[derive(Debug, Clone)]
pub enum Material {
    /// Clear refractive interface (the corneal shell). `ior > 1`.
    Dielectric { ior: f64 },
    /// Lambertian surface shaded by a texture lookup at the hit UV.
    TexturedDiffuse { texture: EyeTexture },
    /// Two-lobe skin: wrap-diffuse (softened cosine falloff) mixed with a
    /// normalized glossy lobe by `gloss_strength`.
    Skin { diffuse: [f64; 3], wrap: f64, gloss_strength: f64, gloss_exponent: f64 },
    /// Absorbing dark fiber for eyelashes.
    LashFiber,
}

impl Material {
    pub fn validate(&self) -> Result<(), TracerError> {
        let fail = |reason: String| Err(TracerError::InvalidMaterial { reason });
        match self {
            Material::Dielectric { ior } => {
                if !(*ior > 1.0 && ior.is_finite()) {
                    return fail(format!("dielectric ior {ior} must be > 1"));
                }
            }
            Material::TexturedDiffuse { texture } => {
                if texture.resolution < 2 || texture.pixels.len() != texture.resolution.pow(2) {
                    return fail("texture grid is malformed".to_string());
                }
                if !texture.pixels.iter().all(|p| p.iter().all(|c| (0.0..=1.0).contains(c))) {
                    return fail("texture albedo outside [0, 1]".to_string());
                }
            }
            Material::Skin { diffuse, wrap, gloss_strength, gloss_exponent } => {
                if !diffuse.iter().all(|c| (0.0..=1.0).contains(c)) {
                    return fail(format!("skin diffuse {diffuse:?} outside [0, 1]"));
                }
                if !(0.0..=1.0).contains(wrap) {
                    return fail(format!("wrap {wrap} outside [0, 1]"));
                }
                if !(0.0..=1.0).contains(gloss_strength) {
                    return fail(format!("gloss_strength {gloss_strength} outside [0, 1]"));
                }
                if !(*gloss_exponent >= 1.0 && gloss_exponent.is_finite()) {
                    return fail(format!("gloss_exponent {gloss_exponent} must be >= 1"));
                }
            }
            Material::LashFiber => {}
        }
        Ok(())
    }
}

/// One triangle of the flattened scene: positions, shading normals, UVs, and
/// the material id.
#[derive(Debug, Clone)]
pub struct SceneTriangle {
    pub a: Vec3,
    pub b: Vec3,
    pub c: Vec3,
    pub na: Vec3,
    pub nb: Vec3,
    pub nc: Vec3,
    pub uva: [f64; 2],
    pub uvb: [f64; 2],
    pub uvc: [f64; 2],
    pub material: u32,
}

impl SceneTriangle {
    pub fn centroid(&self) -> Vec3 {
        (self.a + self.b + self.c) * (1.0 / 3.0)
    }
}

/// Immutable render scene: triangle soup, materials, environment, sampler.
#[derive(Debug)]
pub struct Scene {
    pub triangles: Vec<SceneTriangle>,
    pub materials: Vec<Material>,
    pub env: EnvironmentMap,
    /// None when the environment is black; next-event estimation is skipped.
    pub sampler: Option<EnvSampler>,
    bvh: Option<Bvh>,
}

impl Scene {
    /// Validates materials and tabulates the environment sampler.
    pub fn new(materials: Vec<Material>, env: EnvironmentMap) -> Result<Scene, TracerError> {
        for m in &materials {
            m.validate()?;
        }
        let sampler = match EnvSampler::build(&env) {
            Ok(s) => Some(s),
            Err(LightingError::BlackEnvironment) => None,
            Err(e) => unreachable!("sampler build can only fail on black maps: {e}"),
        };
        Ok(Scene { triangles: Vec::new(), materials, env, sampler, bvh: None })
    }

    /// Appends a mesh's triangles under one material id. The mesh must carry
    /// vertex normals; missing UVs default to the texture center.
    pub fn add_mesh(&mut self, mesh: &TriMesh, material: u32) -> Result<(), TracerError> {
        if material as usize >= self.materials.len() {
            return Err(TracerError::InvalidMaterial {
                reason: format!("material id {material} out of range"),
            });
        }
        assert_eq!(
            mesh.normals.len(),
            mesh.vertices.len(),
            "scene meshes must carry vertex normals"
        );
        let uv = |i: u32| -> [f64; 2] {
            if mesh.uvs.is_empty() { [0.5, 0.5] } else { mesh.uvs[i as usize] }
        };
        for f in &mesh.faces {
            self.triangles.push(SceneTriangle {
                a: mesh.vertices[f[0] as usize],
                b: mesh.vertices[f[1] as usize],
                c: mesh.vertices[f[2] as usize],
                na: mesh.normals[f[0] as usize],
                nb: mesh.normals[f[1] as usize],
                nc: mesh.normals[f[2] as usize],
                uva: uv(f[0]),
                uvb: uv(f[1]),
                uvc: uv(f[2]),
                material,
            });
        }
        self.bvh = None;
        Ok(())
    }

    /// Builds the acceleration structure. A scene with no triangles stays
    /// valid (all rays escape to the environment).
    pub fn finalize(&mut self) -> Result<(), TracerError> {
        if self.triangles.is_empty() {
            self.bvh = None;
            return Ok(());
        }
        self.bvh = Some(build_bvh(&self.triangles)?);
        Ok(())
    }

    /// Nearest hit; uses the hierarchy when built, brute force otherwise.
    pub fn intersect(&self, ray: &Ray, t_min: f64) -> Option<(usize, TriHit)> {
        match &self.bvh {
            Some(b) => b.intersect(&self.triangles, ray, t_min),
            None => self.intersect_brute(ray, t_min),
        }
    }

    /// Reference nearest-hit over every triangle (lowest index wins ties).
    pub fn intersect_brute(&self, ray: &Ray, t_min: f64) -> Option<(usize, TriHit)> {
        let mut best: Option<(usize, TriHit)> = None;
        for (i, tri) in self.triangles.iter().enumerate() {
            if let Some(h) = intersect_triangle(ray, tri.a, tri.b, tri.c, t_min) {
                if best.map_or(true, |(_, bh)| h.t < bh.t) {
                    best = Some((i, h));
                }
            }
        }
        best
    }

    /// Whether anything blocks the ray strictly inside (t_min, t_max).
    pub fn any_hit(&self, ray: &Ray, t_min: f64, t_max: f64) -> bool {
        match &self.bvh {
            Some(b) => b.any_hit(&self.triangles, ray, t_min, t_max),
            None => self
                .intersect_brute(ray, t_min)
                .map_or(false, |(_, h)| h.t < t_max),
        }
    }
}

/// Unpolarized Fresnel reflectance crossing from `eta_i` into `eta_t`.
/// Returns 1 beyond the critical angle (total internal reflection).
pub fn fresnel_dielectric(cos_theta_i: f64, eta_i: f64, eta_t: f64) -> f64 {
    let cos_i = cos_theta_i.clamp(0.0, 1.0);
    let ratio = eta_i / eta_t;
    let sin2_t = ratio * ratio * (1.0 - cos_i * cos_i);
    if sin2_t >= 1.0 {
        return 1.0;
    }
    let cos_t = (1.0 - sin2_t).sqrt();
    let rs = (eta_i * cos_i - eta_t * cos_t) / (eta_i * cos_i + eta_t * cos_t);
    let rp = (eta_t * cos_i - eta_i * cos_t) / (eta_t * cos_i + eta_i * cos_t);
    0.5 * (rs * rs + rp * rp)
}

/// Mirror reflection of `dir` about `n`.
pub fn reflect(dir: UnitVec3, n: UnitVec3) -> UnitVec3 {
    let d = dir.as_vec();
    (d - n.as_vec() * (2.0 * d.dot(n.as_vec())))
        .normalized()
        .expect("reflection of a unit vector is unit")
}

/// Snell-law transmission. `n` faces the incoming side (dir . n <= 0) and
/// `eta_ratio` = eta_incident / eta_transmitted. None on total internal
/// reflection.
pub fn refract(dir: UnitVec3, n: UnitVec3, eta_ratio: f64) -> Option<UnitVec3> {
    let d = dir.as_vec();
    let cos_i = (-d.dot(n.as_vec())).clamp(-1.0, 1.0);
    let sin2_t = eta_ratio * eta_ratio * (1.0 - cos_i * cos_i);
    if sin2_t > 1.0 {
        return None;
    }
    let cos_t = (1.0 - sin2_t).sqrt();
    let t = d * eta_ratio + n.as_vec() * (eta_ratio * cos_i - cos_t);
    Some(t.normalized().expect("refracted direction is unit"))
}

/// Wrap-diffuse scattering kernel (BRDF x cosine), normalized to integrate to
/// one over the hemisphere: (cos + w) / (pi (1 + 2w)) for cos >= 0.
fn wrap_kernel(cos_theta: f64, wrap: f64) -> f64 {
    (cos_theta + wrap) / (PI * (1.0 + 2.0 * wrap))
}

/// Samples the wrap lobe around `n`; the returned pdf equals the kernel, so
/// kernel/pdf cancels exactly.
fn sample_wrap(n: UnitVec3, wrap: f64, rng: &mut ChaCha8Rng) -> (UnitVec3, f64) {
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen();
    let mu = (-wrap + (wrap * wrap + u1 * (1.0 + 2.0 * wrap)).sqrt()).clamp(0.0, 1.0);
    let s = (1.0 - mu * mu).max(0.0).sqrt();
    let phi = TAU * u2;
    let (t, b) = n.orthonormal_basis();
    let dir = (t * (s * phi.cos()) + b * (s * phi.sin()) + n.as_vec() * mu)
        .normalized()
        .expect("hemisphere sample is unit");
    (dir, wrap_kernel(mu, wrap))
}

/// Samples the normalized glossy lobe: a Phong cone around the mirror
/// direction, rejection-clipped to the upper hemisphere (the rejection
/// renormalizes the lobe, keeping the mix energy-preserving).
fn sample_phong_clipped(
    mirror: UnitVec3,
    n_shade: UnitVec3,
    n_geom: UnitVec3,
    exponent: f64,
    rng: &mut ChaCha8Rng,
) -> Option<UnitVec3> {
    let (t, b) = mirror.orthonormal_basis();
    for _ in 0..256 {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        let cg = u1.powf(1.0 / (exponent + 1.0));
        let sg = (1.0 - cg * cg).max(0.0).sqrt();
        let phi = TAU * u2;
        let dir = (t * (sg * phi.cos()) + b * (sg * phi.sin()) + mirror.as_vec() * cg)
            .normalized()
            .expect("lobe sample is unit");
        if dir.as_vec().dot(n_shade.as_vec()) > 1e-9 && dir.as_vec().dot(n_geom.as_vec()) > 1e-9 {
            return Some(dir);
        }
    }
    None
}

/// What the previous bounce was, for balance-heuristic weighting when a ray
/// escapes to the environment.
enum PrevBounce {
    /// Camera ray, specular, or glossy: the environment hit counts in full.
    Delta,
    /// Wrap-diffuse continuation with its effective solid-angle pdf.
    Diffuse { pdf: f64 },
}

/// Traces one path and returns its linear RGB radiance estimate.
pub fn trace_path(scene: &Scene, ray: &Ray, rng: &mut ChaCha8Rng, max_depth: u32) -> [f64; 3] {
    let mut radiance = [0.0f64; 3];
    let mut throughput = [1.0f64; 3];
    let mut ray = *ray;
    let mut prev = PrevBounce::Delta;

    for depth in 0..max_depth {
        let Some((tri_idx, hit)) = scene.intersect(&ray, T_MIN) else {
            let env = scene.env.eval_radiance(ray.dir);
            let w = match prev {
                PrevBounce::Delta => 1.0,
                PrevBounce::Diffuse { pdf } => {
                    let pdf_env = scene
                        .sampler
                        .as_ref()
                        .map_or(0.0, |s| s.pdf_direction(&scene.env, ray.dir));
                    pdf / (pdf + pdf_env)
                }
            };
            for c in 0..3 {
                radiance[c] += throughput[c] * env[c] * w;
            }
            break;
        };

        let tri = &scene.triangles[tri_idx];
        let p = ray.at(hit.t);
        let wa = 1.0 - hit.u - hit.v;
        let n_geom = (tri.b - tri.a)
            .cross(tri.c - tri.a)
            .normalized()
            .unwrap_or(UnitVec3::Z);
        let n_shade = (tri.na * wa + tri.nb * hit.u + tri.nc * hit.v)
            .normalized()
            .unwrap_or(n_geom);
        let d = ray.dir;

        match &scene.materials[tri.material as usize] {
            Material::Dielectric { ior } => {
                let entering = d.as_vec().dot(n_shade.as_vec()) < 0.0;
                let n_or = if entering { n_shade } else { -n_shade };
                let g_or =
                    if n_geom.dot(n_or) >= 0.0 { n_geom } else { -n_geom };
                let cos_i = (-d.as_vec().dot(n_or.as_vec())).clamp(0.0, 1.0);
                let (eta_i, eta_t) = if entering { (1.0, *ior) } else { (*ior, 1.0) };
                let r = fresnel_dielectric(cos_i, eta_i, eta_t);
                if rng.gen::<f64>() < r {
                    ray = Ray::new(p + g_or.as_vec() * RAY_EPS_MM, reflect(d, n_or));
                } else {
                    // Fresnel < 1 guarantees transmission exists.
                    let t = refract(d, n_or, eta_i / eta_t).unwrap_or_else(|| reflect(d, n_or));
                    ray = Ray::new(p - g_or.as_vec() * RAY_EPS_MM, t);
                }
                prev = PrevBounce::Delta;
            }
            mat => {
                let (albedo, wrap, gloss_s, gloss_e) = match mat {
                    Material::TexturedDiffuse { texture } => {
                        let u = tri.uva[0] * wa + tri.uvb[0] * hit.u + tri.uvc[0] * hit.v;
                        let v = tri.uva[1] * wa + tri.uvb[1] * hit.u + tri.uvc[1] * hit.v;
                        (texture.sample(u, v), 0.0, 0.0, 1.0)
                    }
                    Material::Skin { diffuse, wrap, gloss_strength, gloss_exponent } => {
                        (*diffuse, *wrap, *gloss_strength, *gloss_exponent)
                    }
                    Material::LashFiber => (LASH_ALBEDO, 0.0, 0.0, 1.0),
                    Material::Dielectric { .. } => unreachable!(),
                };
                // Two-sided shading: face the normals toward the incoming ray.
                let mut ns = n_shade;
                if d.as_vec().dot(ns.as_vec()) > 0.0 {
                    ns = -ns;
                }
                let ng = if n_geom.dot(ns) >= 0.0 { n_geom } else { -n_geom };

                // Next-event estimation on the wrap lobe, weighted against
                // the chance the continuation would find the light itself.
                if let Some(sampler) = &scene.sampler {
                    let (dl, pdf_env) = sampler.sample_direction(&scene.env, rng.gen(), rng.gen());
                    let cos_l = dl.as_vec().dot(ns.as_vec());
                    if cos_l > 0.0 && dl.as_vec().dot(ng.as_vec()) > 0.0 && pdf_env > 0.0 {
                        let shadow = Ray::new(p + ng.as_vec() * RAY_EPS_MM, dl);
                        if !scene.any_hit(&shadow, T_MIN, f64::INFINITY) {
                            let k = wrap_kernel(cos_l, wrap);
                            let pdf_b = (1.0 - gloss_s) * k;
                            let w_mis = pdf_env / (pdf_env + pdf_b);
                            let le = scene.env.eval_radiance(dl);
                            for c in 0..3 {
                                radiance[c] += throughput[c] * (1.0 - gloss_s) * albedo[c] * k
                                    * le[c]
                                    * w_mis
                                    / pdf_env;
                            }
                        }
                    }
                }

                // Continuation: pick a lobe; selection probability cancels
                // against the lobe mix weight, so throughput takes only the
                // lobe's own albedo.
                if rng.gen::<f64>() < gloss_s {
                    let mirror = reflect(d, ns);
                    let Some(dir) = sample_phong_clipped(mirror, ns, ng, gloss_e, rng) else {
                        break;
                    };
                    ray = Ray::new(p + ng.as_vec() * RAY_EPS_MM, dir);
                    prev = PrevBounce::Delta;
                } else {
                    let (dir, pdf) = sample_wrap(ns, wrap, rng);
                    if dir.as_vec().dot(ng.as_vec()) <= 0.0 {
                        break; // absorbed at a shading/geometric silhouette mismatch
                    }
                    for c in 0..3 {
                        throughput[c] *= albedo[c];
                    }
                    ray = Ray::new(p + ng.as_vec() * RAY_EPS_MM, dir);
                    prev = PrevBounce::Diffuse { pdf: (1.0 - gloss_s) * pdf };
                }
            }
        }

        // Russian roulette once paths are deep enough to have paid for the
        // corneal enter/exit events.
        if depth >= 4 {
            let p_continue =
                throughput[0].max(throughput[1]).max(throughput[2]).clamp(0.05, 0.95);
            if rng.gen::<f64>() >= p_continue {
                break;
            }
            for c in 0..3 {
                throughput[c] /= p_continue;
            }
        }
    }
    radiance
}

/// Raster and sampling parameters for a render call.
#[derive(Debug, Clone, Copy)]
pub struct RenderSettings {
    pub image_width: usize,
    pub image_height: usize,
    pub samples_per_pixel: u32,
    pub max_depth: u32,
    pub seed: u64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            image_width: 120,
            image_height: 80,
            samples_per_pixel: 150,
            max_depth: 8,
            seed: 0,
        }
    }
}

impl RenderSettings {
    pub fn validate(&self) -> Result<(), TracerError> {
        let fail = |reason: String| Err(TracerError::InvalidSettings { reason });
        if self.image_width == 0 || self.image_height == 0 {
            return fail(format!("raster {}x{} is empty", self.image_width, self.image_height));
        }
        if self.samples_per_pixel < 1 {
            return fail("samples_per_pixel must be >= 1".to_string());
        }
        if self.max_depth < 1 {
            return fail("max_depth must be >= 1".to_string());
        }
        Ok(())
    }
}

/// Worker strategy for `render`. `Rayon` falls back to sequential execution
/// when the `parallel` feature is disabled; results are bit-identical either
/// way.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Threading {
    Sequential,
    Rayon,
}

/// Diagnostics from a render call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RenderReport {
    /// Path samples that came back non-finite and were clamped to black.
    pub nonfinite_samples: u64,
}

/// Renders the scene through an orthographic camera: per-pixel average of
/// stratified jittered rays, each pixel on its own seed-chained RNG stream.
pub fn render(
    scene: &Scene,
    camera: &CameraPose,
    settings: &RenderSettings,
    threading: Threading,
) -> (Image, RenderReport) {
    settings.validate().expect("render settings must be valid");
    assert_eq!(
        (camera.image_width as usize, camera.image_height as usize),
        (settings.image_width, settings.image_height),
        "camera raster must match render settings"
    );
    let (w, h) = (settings.image_width, settings.image_height);
    let spp = settings.samples_per_pixel;
    let grid = (spp as f64).sqrt().ceil() as u32;

    let render_row = |py: usize| -> (Vec<[f64; 3]>, u64) {
        let mut row = Vec::with_capacity(w);
        let mut nonfinite = 0u64;
        for px in 0..w {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed_chain(settings.seed, &[px as u64, py as u64]));
            let mut acc = [0.0f64; 3];
            for s in 0..spp {
                let jx = ((s % grid) as f64 + rng.gen::<f64>()) / grid as f64;
                let jy = ((s / grid) as f64 + rng.gen::<f64>()) / grid as f64;
                let ray = camera.pixel_ray(px as f64 + jx, py as f64 + jy);
                let v = trace_path(scene, &ray, &mut rng, settings.max_depth);
                if v.iter().all(|c| c.is_finite()) {
                    for c in 0..3 {
                        acc[c] += v[c];
                    }
                } else {
                    nonfinite += 1; // clamp the sample to black
                }
            }
            row.push([acc[0] / spp as f64, acc[1] / spp as f64, acc[2] / spp as f64]);
        }
        (row, nonfinite)
    };

    let rows: Vec<(Vec<[f64; 3]>, u64)> = match threading {
        Threading::Sequential => (0..h).map(render_row).collect(),
        Threading::Rayon => {
            #[cfg(feature = "parallel")]
            {
                use rayon::prelude::*;
                (0..h).into_par_iter().map(render_row).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..h).map(render_row).collect()
            }
        }
    };

    let mut img = Image::new(w, h);
    let mut report = RenderReport::default();
    for (py, (row, bad)) in rows.into_iter().enumerate() {
        for (px, v) in row.into_iter().enumerate() {
            img.set_pixel(px, py, v);
        }
        report.nonfinite_samples += bad;
    }
    (img, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lighting::{generate_procedural_env, rotate_env, EnvKind};
    use crate::staging::place_camera;

    fn white_texture() -> EyeTexture {
        EyeTexture { resolution: 2, pixels: vec![[1.0; 3]; 4] }
    }

    fn constant_env(l: f64) -> EnvironmentMap {
        EnvironmentMap::from_pixels(8, 4, vec![[l; 3]; 32], "const").unwrap()
    }

    fn uv_sphere(center: Vec3, radius: f64, rings: usize, segs: usize) -> TriMesh {
        let mut vertices = Vec::new();
        let mut normals = Vec::new();
        let mut uvs = Vec::new();
        for k in 0..=rings {
            let theta = k as f64 * PI / rings as f64;
            for i in 0..segs {
                let phi = i as f64 * TAU / segs as f64;
                let n = Vec3::new(theta.sin() * phi.cos(), theta.cos(), theta.sin() * phi.sin());
                vertices.push(center + n * radius);
                normals.push(n);
                uvs.push([i as f64 / segs as f64, k as f64 / rings as f64]);
            }
        }
        let mut faces = Vec::new();
        let id = |k: usize, i: usize| (k * segs + i % segs) as u32;
        for k in 0..rings {
            for i in 0..segs {
                faces.push([id(k, i), id(k + 1, i), id(k + 1, i + 1)]);
                faces.push([id(k, i), id(k + 1, i + 1), id(k, i + 1)]);
            }
        }
        let mut mesh = TriMesh::new(vertices, faces);
        mesh.normals = normals;
        mesh.uvs = uvs;
        mesh
    }

    fn skin_material() -> Material {
        Material::Skin {
            diffuse: [0.55, 0.40, 0.32],
            wrap: 0.35,
            gloss_strength: 0.2,
            gloss_exponent: 24.0,
        }
    }

    fn sphere_scene(material: Material, env: EnvironmentMap) -> Scene {
        let mut scene = Scene::new(vec![material], env).unwrap();
        scene.add_mesh(&uv_sphere(Vec3::ZERO, 10.0, 16, 32), 0).unwrap();
        scene.finalize().unwrap();
        scene
    }

    fn rand_unit(rng: &mut ChaCha8Rng) -> UnitVec3 {
        loop {
            let v = Vec3::new(
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
            );
            if v.norm_squared() > 1e-4 && v.norm_squared() <= 1.0 {
                return v.normalized().unwrap();
            }
        }
    }

    fn raw_tri(a: Vec3, b: Vec3, c: Vec3) -> SceneTriangle {
        let n = (b - a).cross(c - a);
        SceneTriangle {
            a,
            b,
            c,
            na: n,
            nb: n,
            nc: n,
            uva: [0.0, 0.0],
            uvb: [1.0, 0.0],
            uvc: [0.0, 1.0],
            material: 0,
        }
    }

    #[test]
    fn bvh_single_triangle_is_one_leaf() {
        let tris =
            vec![raw_tri(Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0))];
        let bvh = build_bvh(&tris).unwrap();
        assert_eq!(bvh.depth(), 1);
        let ray = Ray::new(Vec3::new(0.2, 0.2, -1.0), UnitVec3::Z);
        let (i, h) = bvh.intersect(&tris, &ray, 1e-9).unwrap();
        assert_eq!(i, 0);
        assert!((h.t - 1.0).abs() < 1e-12);
        assert!(matches!(build_bvh(&[]), Err(TracerError::EmptyScene)));
    }

    #[test]
    fn bvh_matches_brute_force_on_random_soup() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let mut rv = |s: f64| {
            Vec3::new(
                (rng.gen::<f64>() * 2.0 - 1.0) * s,
                (rng.gen::<f64>() * 2.0 - 1.0) * s,
                (rng.gen::<f64>() * 2.0 - 1.0) * s,
            )
        };
        let tris: Vec<SceneTriangle> = (0..1000)
            .map(|_| {
                let a = rv(1.0);
                raw_tri(a, a + rv(0.3), a + rv(0.3))
            })
            .collect();
        let bvh = build_bvh(&tris).unwrap();
        let brute = |ray: &Ray| -> Option<(usize, TriHit)> {
            let mut best: Option<(usize, TriHit)> = None;
            for (i, t) in tris.iter().enumerate() {
                if let Some(h) = intersect_triangle(ray, t.a, t.b, t.c, 1e-9) {
                    if best.map_or(true, |(_, bh)| h.t < bh.t) {
                        best = Some((i, h));
                    }
                }
            }
            best
        };
        let mut rng2 = ChaCha8Rng::seed_from_u64(77);
        let mut hits = 0;
        for _ in 0..10_000 {
            let origin = rand_unit(&mut rng2).as_vec() * 3.0;
            let target = Vec3::new(
                rng2.gen::<f64>() * 2.0 - 1.0,
                rng2.gen::<f64>() * 2.0 - 1.0,
                rng2.gen::<f64>() * 2.0 - 1.0,
            );
            let ray = Ray::new(origin, (target - origin).normalized().unwrap());
            let fast = bvh.intersect(&tris, &ray, 1e-9);
            let slow = brute(&ray);
            match (fast, slow) {
                (None, None) => {}
                (Some((fi, fh)), Some((si, sh))) => {
                    hits += 1;
                    assert_eq!(fi, si, "different nearest triangle");
                    assert!((fh.t - sh.t).abs() <= 1e-7);
                    assert!(bvh.any_hit(&tris, &ray, 1e-9, f64::INFINITY));
                }
                other => panic!("bvh/brute disagree on hit existence: {other:?}"),
            }
        }
        assert!(hits > 1000, "test geometry too sparse ({hits} hits)");
    }

    #[test]
    fn bvh_degenerate_coincident_triangles_terminate() {
        let a = Vec3::new(0.1, 0.2, 0.3);
        let tris: Vec<SceneTriangle> = (0..64)
            .map(|_| raw_tri(a, a + Vec3::new(1.0, 0.0, 0.0), a + Vec3::new(0.0, 1.0, 0.0)))
            .collect();
        let bvh = build_bvh(&tris).unwrap();
        assert!(bvh.depth() <= 8, "depth {} not bounded", bvh.depth());
        let ray = Ray::new(Vec3::new(0.4, 0.5, -2.0), UnitVec3::Z);
        let (i, h) = bvh.intersect(&tris, &ray, 1e-9).unwrap();
        assert_eq!(i, 0, "tie must resolve to the lowest triangle index");
        assert!((h.t - 2.3).abs() < 1e-12);
    }

    #[test]
    fn fresnel_normal_incidence_matches_closed_form() {
        let r0 = fresnel_dielectric(1.0, 1.0, 1.376);
        assert!((r0 - 0.02504279608656712).abs() < 1e-15);
    }

    #[test]
    fn fresnel_limits_and_tir() {
        assert!(fresnel_dielectric(1e-7, 1.0, 1.376) > 0.999);
        for cos in [1.0, 0.8, 0.5, 0.2, 0.05] {
            assert!(fresnel_dielectric(cos, 1.0, 1.0).abs() < 1e-12);
            let r = fresnel_dielectric(cos, 1.0, 1.376);
            assert!((0.0..=1.0).contains(&r));
        }
        // Interior to exterior beyond the critical angle reflects totally.
        let critical = (1.0f64 / 1.376).asin().to_degrees();
        assert!((critical - 46.61413759620998).abs() < 1e-11);
        let beyond = (critical + 0.1).to_radians().cos();
        assert_eq!(fresnel_dielectric(beyond, 1.376, 1.0), 1.0);
        let below = (critical - 0.1).to_radians().cos();
        assert!(fresnel_dielectric(below, 1.376, 1.0) < 1.0);
    }

    #[test]
    fn refract_normal_incidence_is_straight() {
        let t = refract(-UnitVec3::Z, UnitVec3::Z, 1.0 / 1.376).unwrap();
        assert!(t.angle_deg(-UnitVec3::Z) < 1e-12);
    }

    #[test]
    fn refract_tir_at_the_critical_angle() {
        let critical = (1.0f64 / 1.376).asin().to_degrees();
        let mk = |deg: f64| {
            let r = deg.to_radians();
            Vec3::new(r.sin(), -r.cos(), 0.0).normalized().unwrap()
        };
        assert!(refract(mk(critical + 0.01), UnitVec3::Y, 1.376).is_none());
        assert!(refract(mk(critical - 0.01), UnitVec3::Y, 1.376).is_some());
    }

    #[test]
    fn refract_satisfies_snell_and_stays_in_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..300 {
            let n = rand_unit(&mut rng);
            let mut d = rand_unit(&mut rng);
            if d.as_vec().dot(n.as_vec()) > 0.0 {
                d = -d;
            }
            for eta in [1.0 / 1.376, 1.376, 1.2, 0.9] {
                if let Some(t) = refract(d, n, eta) {
                    let sin_i = d.as_vec().cross(n.as_vec()).norm();
                    let sin_t = t.as_vec().cross(n.as_vec()).norm();
                    assert!((sin_t - eta * sin_i).abs() < 1e-9);
                    if sin_i > 1e-6 {
                        let plane = d.as_vec().cross(n.as_vec()).normalized().unwrap();
                        assert!(t.as_vec().dot(plane.as_vec()).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn scene_rejects_invalid_materials() {
        let env = constant_env(1.0);
        let bad: Vec<Material> = vec![
            Material::Dielectric { ior: 1.0 },
            Material::Skin { diffuse: [1.2, 0.0, 0.0], wrap: 0.2, gloss_strength: 0.1, gloss_exponent: 8.0 },
            Material::Skin { diffuse: [0.5; 3], wrap: 1.5, gloss_strength: 0.1, gloss_exponent: 8.0 },
            Material::Skin { diffuse: [0.5; 3], wrap: 0.5, gloss_strength: -0.1, gloss_exponent: 8.0 },
            Material::Skin { diffuse: [0.5; 3], wrap: 0.5, gloss_strength: 0.1, gloss_exponent: 0.5 },
        ];
        for m in bad {
            assert!(matches!(
                Scene::new(vec![m], env.clone()),
                Err(TracerError::InvalidMaterial { .. })
            ));
        }
        assert!(Scene::new(vec![Material::LashFiber], env).is_ok());
    }

    #[test]
    fn empty_scene_returns_environment_exactly() {
        let env = generate_procedural_env(EnvKind::BrightOutdoor, 3);
        let scene = Scene::new(vec![], env.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let ray = Ray::new(Vec3::new(0.0, 0.0, 50.0), rand_unit(&mut rng));
            let mut path_rng = ChaCha8Rng::seed_from_u64(1);
            let got = trace_path(&scene, &ray, &mut path_rng, 8);
            assert_eq!(got, env.eval_radiance(ray.dir));
        }
    }

    #[test]
    fn black_environment_renders_exactly_zero() {
        let env = EnvironmentMap::from_pixels(8, 4, vec![[0.0; 3]; 32], "black").unwrap();
        let scene = sphere_scene(Material::TexturedDiffuse { texture: white_texture() }, env);
        assert!(scene.sampler.is_none());
        let camera = place_camera(0.0, 0.0, 100.0, (16, 12), 0.5).unwrap();
        let settings = RenderSettings {
            image_width: 16,
            image_height: 12,
            samples_per_pixel: 8,
            max_depth: 8,
            seed: 1,
        };
        let (img, report) = render(&scene, &camera, &settings, Threading::Sequential);
        assert!(img.pixels.iter().all(|p| *p == [0.0; 3]));
        assert_eq!(report.nonfinite_samples, 0);
    }

    #[test]
    fn furnace_holds_for_diffuse_and_skin() {
        let l0 = 0.7;
        let materials = [
            Material::TexturedDiffuse { texture: white_texture() },
            Material::Skin { diffuse: [1.0; 3], wrap: 0.35, gloss_strength: 0.3, gloss_exponent: 24.0 },
        ];
        for material in materials {
            let scene = sphere_scene(material, constant_env(l0));
            let camera = place_camera(0.0, 0.0, 100.0, (24, 16), 0.5).unwrap();
            let settings = RenderSettings {
                image_width: 24,
                image_height: 16,
                samples_per_pixel: 150,
                max_depth: 8,
                seed: 11,
            };
            let (img, report) = render(&scene, &camera, &settings, Threading::Sequential);
            assert_eq!(report.nonfinite_samples, 0);
            // Energy conservation: the image mean must reproduce the wall
            // radiance (pixels are independent estimates, so the mean is far
            // tighter than any single pixel).
            let mean = img.mean_value();
            assert!(
                (mean - l0).abs() < 0.02 * l0,
                "furnace mean {mean} vs radiance {l0}"
            );
            // No pixel may sit grossly off: catches localized artifacts that
            // a global mean could wash out.
            let worst = img
                .pixels
                .iter()
                .flat_map(|p| p.iter())
                .map(|c| (c - l0).abs())
                .fold(0.0f64, f64::max);
            assert!(worst < 0.15 * l0, "worst pixel deviation {worst}");
        }
    }

    #[test]
    fn interior_paths_terminate_and_stay_dark() {
        // A ray trapped inside a closed sphere has no escape; Russian
        // roulette must finish the path and no light can be collected.
        let scene = sphere_scene(
            Material::TexturedDiffuse { texture: white_texture() },
            constant_env(0.9),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in 0..20 {
            let ray = Ray::new(Vec3::new(0.0, 0.0, 0.0), rand_unit(&mut rng));
            let mut path_rng = ChaCha8Rng::seed_from_u64(k);
            let v = trace_path(&scene, &ray, &mut path_rng, 64);
            assert_eq!(v, [0.0; 3]);
        }
    }

    #[test]
    fn render_is_deterministic_across_threading_and_seeded() {
        let scene = sphere_scene(skin_material(), generate_procedural_env(EnvKind::BrightOutdoor, 2));
        let camera = place_camera(15.0, 5.0, 90.0, (20, 14), 1.2).unwrap();
        let settings = RenderSettings {
            image_width: 20,
            image_height: 14,
            samples_per_pixel: 9,
            max_depth: 8,
            seed: 123,
        };
        let (a, _) = render(&scene, &camera, &settings, Threading::Sequential);
        let (b, _) = render(&scene, &camera, &settings, Threading::Sequential);
        let (c, _) = render(&scene, &camera, &settings, Threading::Rayon);
        assert_eq!(a.pixels, b.pixels, "same seed must be bit-identical");
        assert_eq!(a.pixels, c.pixels, "worker count must not change output");
        let (d, _) = render(
            &scene,
            &camera,
            &RenderSettings { seed: 124, ..settings },
            Threading::Sequential,
        );
        assert_ne!(a.pixels, d.pixels, "different seed should differ");
    }

    #[test]
    fn render_of_empty_scene_is_direct_environment_lookup() {
        let scene = Scene::new(vec![], constant_env(0.37)).unwrap();
        let camera = place_camera(0.0, 0.0, 100.0, (16, 8), 0.5).unwrap();
        let settings = RenderSettings {
            image_width: 16,
            image_height: 8,
            samples_per_pixel: 5,
            max_depth: 8,
            seed: 2,
        };
        let (img, report) = render(&scene, &camera, &settings, Threading::Sequential);
        assert_eq!(report.nonfinite_samples, 0);
        for p in &img.pixels {
            for c in p {
                assert!((c - 0.37).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn doubling_spp_shrinks_standard_error_by_sqrt_two() {
        let scene = sphere_scene(skin_material(), generate_procedural_env(EnvKind::BrightOutdoor, 4));
        let camera = place_camera(0.0, 0.0, 90.0, (12, 8), 2.0).unwrap();
        let se_at = |spp: u32| -> f64 {
            let runs: Vec<Image> = (0..24)
                .map(|k| {
                    let settings = RenderSettings {
                        image_width: 12,
                        image_height: 8,
                        samples_per_pixel: spp,
                        max_depth: 8,
                        seed: 9000 + k,
                    };
                    render(&scene, &camera, &settings, Threading::Rayon).0
                })
                .collect();
            let n_px = 12 * 8;
            let mut total = 0.0;
            for i in 0..n_px {
                let vals: Vec<f64> =
                    runs.iter().map(|im| (im.pixels[i][0] + im.pixels[i][1] + im.pixels[i][2]) / 3.0).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / (vals.len() - 1) as f64;
                total += var.sqrt();
            }
            total / n_px as f64
        };
        let ratio = se_at(8) / se_at(16);
        let want = 2.0f64.sqrt();
        assert!(
            (ratio - want).abs() <= 0.1 * want,
            "se ratio {ratio} not within 10% of sqrt(2)"
        );
    }

    #[test]
    fn rotating_environment_and_camera_together_is_equivariant() {
        let env = generate_procedural_env(EnvKind::BrightOutdoor, 8);
        let psi = 40.0;
        let scene_a = sphere_scene(skin_material(), env.clone());
        let scene_b = sphere_scene(skin_material(), rotate_env(&env, psi));
        let cam_a = place_camera(10.0, 0.0, 90.0, (16, 12), 1.5).unwrap();
        let cam_b = place_camera(10.0 + psi, 0.0, 90.0, (16, 12), 1.5).unwrap();
        let mk = |seed: u64| RenderSettings {
            image_width: 16,
            image_height: 12,
            samples_per_pixel: 24,
            max_depth: 8,
            seed,
        };
        let (a, _) = render(&scene_a, &cam_a, &mk(5), Threading::Rayon);
        let (b, _) = render(&scene_b, &cam_b, &mk(5), Threading::Rayon);
        // Per-pixel standard error measured from replicates of configuration A.
        let reps: Vec<Image> =
            (0..6).map(|k| render(&scene_a, &cam_a, &mk(100 + k), Threading::Rayon).0).collect();
        let n_px = 16 * 12;
        let mut mean_se = 0.0;
        for i in 0..n_px {
            let vals: Vec<f64> =
                reps.iter().map(|im| (im.pixels[i][0] + im.pixels[i][1] + im.pixels[i][2]) / 3.0).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var =
                vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
            mean_se += var.sqrt();
        }
        mean_se /= n_px as f64;
        let mad: f64 = (0..n_px)
            .map(|i| {
                let pa = (a.pixels[i][0] + a.pixels[i][1] + a.pixels[i][2]) / 3.0;
                let pb = (b.pixels[i][0] + b.pixels[i][1] + b.pixels[i][2]) / 3.0;
                (pa - pb).abs()
            })
            .sum::<f64>()
            / n_px as f64;
        // A and B are independent draws: their difference carries sqrt(2)
        // times the per-render noise.
        assert!(
            mad <= 3.0 * mean_se * 2.0f64.sqrt(),
            "mean abs diff {mad} exceeds noise bound (se {mean_se})"
        );
    }

    #[test]
    fn mis_estimator_agrees_with_bsdf_only_reference() {
        let env = generate_procedural_env(EnvKind::CloudyOutdoor, 5);
        let mut with_nee = sphere_scene(skin_material(), env.clone());
        let camera = place_camera(0.0, 0.0, 90.0, (10, 8), 2.2).unwrap();
        let mk = |spp: u32| RenderSettings {
            image_width: 10,
            image_height: 8,
            samples_per_pixel: spp,
            max_depth: 8,
            seed: 31,
        };
        let (a, _) = render(&with_nee, &camera, &mk(64), Threading::Rayon);
        // Disabling the sampler leaves pure BSDF path tracing, an independent
        // unbiased estimator of the same image.
        with_nee.sampler = None;
        let (b, _) = render(&with_nee, &camera, &mk(256), Threading::Rayon);
        let (ma, mb) = (a.mean_value(), b.mean_value());
        assert!(
            (ma - mb).abs() <= 0.03 * mb,
            "NEE+MIS mean {ma} vs BSDF-only mean {mb}"
        );
    }

    #[test]
    fn tone_map_oracles_and_png_round_trip() {
        assert_eq!(srgb_byte(0.0), 0);
        assert_eq!(srgb_byte(1.0), 255);
        assert_eq!(srgb_byte(0.5), 188);
        assert_eq!(srgb_byte(3.0), 255);
        assert_eq!(srgb_byte(-1.0), 0);

        let mut img = Image::new(3, 2);
        for (k, p) in img.pixels.iter_mut().enumerate() {
            *p = [k as f64 * 0.2, 1.0 - k as f64 * 0.15, 0.5];
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.png");
        tone_map_export(&img, &path).unwrap();
        let back = image::open(&path).unwrap().to_rgb8();
        assert_eq!(back.dimensions(), (3, 2));
        assert_eq!(back.into_raw(), to_srgb_bytes(&img));
    }

    #[test]
    fn float_dump_round_trips_and_rejects_garbage() {
        let mut img = Image::new(5, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for p in img.pixels.iter_mut() {
            *p = [rng.gen::<f64>() * 4.0, rng.gen(), rng.gen()];
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.bin");
        write_float_dump(&img, &path).unwrap();
        let back = read_float_dump(&path).unwrap();
        assert_eq!((back.width, back.height), (5, 3));
        for (a, b) in img.pixels.iter().zip(&back.pixels) {
            for c in 0..3 {
                assert_eq!(b[c], a[c] as f32 as f64);
            }
        }
        std::fs::write(dir.path().join("bad.bin"), b"NOTMAGIC123456789").unwrap();
        assert!(read_float_dump(&dir.path().join("bad.bin")).is_err());
    }

    #[test]
    fn render_settings_validation() {
        assert!(RenderSettings::default().validate().is_ok());
        let bad = RenderSettings { samples_per_pixel: 0, ..Default::default() };
        assert!(matches!(bad.validate(), Err(TracerError::InvalidSettings { .. })));
        let bad = RenderSettings { max_depth: 0, ..Default::default() };
        assert!(matches!(bad.validate(), Err(TracerError::InvalidSettings { .. })));
    }
}
