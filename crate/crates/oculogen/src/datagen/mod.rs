//! Batch engine: parse dataset configs, enumerate camera/gaze grids, drive
//! posing, lighting, rendering, and annotation in parallel, and write
//! images, labels, and a manifest deterministically. Also hosts the preview
//! contact sheet, distribution statistics, and the nearest-neighbor label
//! consistency evaluation.

pub mod knn;
pub mod stats;

pub use knn::{eval_knn, KnnReport};
pub use stats::{stats, Histogram2D, StatsReport};

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotate::{
    collect_landmarks_3d, make_label_record, pose_eye_region, pose_eyeball, AnnotateError,
    LabelRecord, LandmarkSet, PosedEyeRegion, PosedEyeball,
};
use crate::eyeball::{
    apply_sclera_displacement, composite_eye_texture, sclera_bump_field, EyeballError,
    EyeballModel, EyeballParams, CORNEA_IOR,
};
use crate::eyeregion::{
    build_eye_region, grow_eyelashes, lash_ribbon, EyeRegionError, EyeRegionModel,
    EyeRegionParams,
};
use crate::field::seed_chain;
use crate::geom::TriMesh;
use crate::lighting::{
    generate_procedural_env, load_hdr, rotate_env, scale_intensity, EnvKind, EnvironmentMap,
    LightingError,
};
use crate::staging::{
    gaze_direction, head_frame_angles, place_camera, pupil_visible, sample_scene_randomness,
    within_constraints, CameraPose, EyeConfig, GazeSpec, LightingSpec, SceneConfig, StagingError,
};
use crate::tracer::{
    render, tone_map_export, Image, Material, RenderReport, RenderSettings, Scene, Threading,
    TracerError,
};

#[derive(Debug, thiserror::Error)]
pub enum DatagenError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unknown config key `{key}`")]
    UnknownKey { key: String },
    #[error("config value out of range: {reason}")]
    Range { reason: String },
    #[error("enumeration produced no poses")]
    EmptyEnumeration,
    #[error("need at least {required} labeled images, found {found}")]
    TooFewImages { found: usize, required: usize },
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Eyeball(#[from] EyeballError),
    #[error(transparent)]
    EyeRegion(#[from] EyeRegionError),
    #[error(transparent)]
    Staging(#[from] StagingError),
    #[error(transparent)]
    Lighting(#[from] LightingError),
    #[error(transparent)]
    Tracer(#[from] TracerError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
}

// ---------------------------------------------------------------------------
// Dataset configuration (the config file schema).
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraGridSpec {
    pub theta_range: [f64; 2],
    pub phi_range: [f64; 2],
    pub increment_deg: f64,
    pub radius_mm: f64,
}

impl Default for CameraGridSpec {
    fn default() -> Self {
        CameraGridSpec {
            theta_range: [-20.0, 20.0],
            phi_range: [-20.0, 20.0],
            increment_deg: 10.0,
            radius_mm: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GazeGridSpec {
    /// Offset range applied to both the pitch (alpha) and yaw (beta) axes.
    pub range_deg: [f64; 2],
    pub increment_deg: f64,
}

impl Default for GazeGridSpec {
    fn default() -> Self {
        GazeGridSpec { range_deg: [-45.0, 45.0], increment_deg: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintSpec {
    pub max_pitch_deg: f64,
    pub max_yaw_deg: f64,
}

impl Default for ConstraintSpec {
    fn default() -> Self {
        ConstraintSpec { max_pitch_deg: 25.0, max_yaw_deg: 35.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImageSpec {
    pub width: u32,
    pub height: u32,
    pub spp: u32,
    pub mm_per_px: f64,
    pub max_depth: u32,
}

impl Default for ImageSpec {
    fn default() -> Self {
        ImageSpec { width: 120, height: 80, spp: 150, mm_per_px: 0.5, max_depth: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LightingPool {
    /// Procedural archetypes, one environment per kind (seeded from the
    /// master seed).
    pub kinds: Vec<EnvKind>,
    /// Additional radiance maps loaded from .hdr files.
    pub hdr_paths: Vec<PathBuf>,
}

impl Default for LightingPool {
    fn default() -> Self {
        LightingPool { kinds: EnvKind::ALL.to_vec(), hdr_paths: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    /// Mesh resolution: ring segments are 8x this value.
    pub subdivisions: usize,
    /// Side length of the square eye-albedo texture.
    pub texture_resolution: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec { subdivisions: 16, texture_resolution: 256 }
    }
}

/// Full description of one dataset run; an empty config file yields the
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub master_seed: u64,
    /// How many procedural eye-region identities to synthesize.
    pub identities: usize,
    pub camera: CameraGridSpec,
    pub gaze: GazeGridSpec,
    pub constraints: ConstraintSpec,
    pub image: ImageSpec,
    pub lighting: LightingPool,
    pub model: ModelSpec,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            master_seed: 0,
            identities: 10,
            camera: CameraGridSpec::default(),
            gaze: GazeGridSpec::default(),
            constraints: ConstraintSpec::default(),
            image: ImageSpec::default(),
            lighting: LightingPool::default(),
            model: ModelSpec::default(),
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<(), DatagenError> {
        let fail = |reason: String| Err(DatagenError::Range { reason });
        if self.identities == 0 {
            return fail("identities must be >= 1".into());
        }
        for (name, range, inc) in [
            ("camera.theta_range", self.camera.theta_range, self.camera.increment_deg),
            ("camera.phi_range", self.camera.phi_range, self.camera.increment_deg),
            ("gaze.range_deg", self.gaze.range_deg, self.gaze.increment_deg),
        ] {
            if !(inc > 0.0 && inc.is_finite()) {
                return fail(format!("increment for {name} must be > 0, got {inc}"));
            }
            if !(range[0] <= range[1] && range.iter().all(|v| v.is_finite())) {
                return fail(format!("{name} = [{}, {}] is not well-ordered", range[0], range[1]));
            }
        }
        if self.camera.phi_range[0] <= -90.0 || self.camera.phi_range[1] >= 90.0 {
            return fail("camera.phi_range must stay within (-90, 90)".into());
        }
        if !(self.camera.radius_mm > 0.0) {
            return fail(format!("camera.radius_mm = {} must be > 0", self.camera.radius_mm));
        }
        if !(self.constraints.max_pitch_deg > 0.0 && self.constraints.max_yaw_deg > 0.0) {
            return fail("constraints must be positive".into());
        }
        if self.image.width == 0 || self.image.height == 0 {
            return fail(format!("image {}x{} is empty", self.image.width, self.image.height));
        }
        if self.image.spp == 0 || self.image.max_depth == 0 {
            return fail("image.spp and image.max_depth must be >= 1".into());
        }
        if !(self.image.mm_per_px > 0.0 && self.image.mm_per_px.is_finite()) {
            return fail(format!("image.mm_per_px = {} must be > 0", self.image.mm_per_px));
        }
        if self.lighting.kinds.is_empty() && self.lighting.hdr_paths.is_empty() {
            return fail("lighting pool must name at least one source".into());
        }
        if self.model.subdivisions < 3 {
            return fail("model.subdivisions must be >= 3".into());
        }
        if self.model.texture_resolution < 256 {
            return fail("model.texture_resolution must be >= 256".into());
        }
        Ok(())
    }
}

/// Parses the documented TOML config; an empty document yields all defaults.
pub fn parse_config(text: &str) -> Result<DatasetSpec, DatagenError> {
    let spec: DatasetSpec = toml::from_str(text).map_err(|e| {
        let msg = e.to_string();
        // Surface unknown keys as their own error class.
        if let Some(start) = msg.find("unknown field `") {
            let rest = &msg[start + "unknown field `".len()..];
            if let Some(end) = rest.find('`') {
                return DatagenError::UnknownKey { key: rest[..end].to_string() };
            }
        }
        DatagenError::Parse(msg)
    })?;
    spec.validate()?;
    Ok(spec)
}

/// Inclusive arithmetic grid: lo, lo+inc, ... up to hi (within epsilon).
pub fn grid_values(range: [f64; 2], increment: f64) -> Vec<f64> {
    let steps = ((range[1] - range[0]) / increment + 1e-9).floor() as usize;
    (0..=steps).map(|i| range[0] + increment * i as f64).collect()
}

// ---------------------------------------------------------------------------
// Manifest.
// ---------------------------------------------------------------------------

/// The grid coordinates an image was enumerated at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseKey {
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub alpha_deg: f64,
    pub beta_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: String,
    pub label: String,
    pub seed: u64,
    pub identity: usize,
    pub pose_index: usize,
    pub pose: PoseKey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SkipReason {
    /// The implied eyeball rotation exceeded the anatomical constraints.
    Constraint,
    /// The pupil center fell outside the projected fissure polygon.
    Visibility,
    /// The pipeline failed for this image; the run continued.
    Failure { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipEntry {
    pub identity: usize,
    pub pose_index: usize,
    pub pose: PoseKey,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub enumerated: u64,
    pub emitted: u64,
    pub skipped_constraint: u64,
    pub skipped_visibility: u64,
    pub failed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub artifact_version: String,
    /// Unix seconds at generation time (informational; not part of the
    /// reproducibility contract).
    pub created_unix: u64,
    pub spec: DatasetSpec,
    pub counts: ManifestCounts,
    pub entries: Vec<ManifestEntry>,
    pub skipped: Vec<SkipEntry>,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<(), DatagenError> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| DatagenError::Manifest(e.to_string()))?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<DatasetManifest, DatagenError> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| DatagenError::Manifest(e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// Identity synthesis and scene assembly.
// ---------------------------------------------------------------------------

/// Samples one procedural eye-region identity. Fissure dimensions stay
/// inside the box where the lid margin verifiably tracks the eyeball over
/// the whole legal pose range (the snap cap rejects anything outside it).
pub fn sample_identity_params(seed: u64) -> EyeRegionParams {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fissure_width_mm = rng.gen_range(21.5..23.0);
    let fissure_height_mm = rng.gen_range(9.8..11.2);
    let tone = rng.gen_range(0.25..0.55);
    let skin_albedo = [(tone * 1.3f64).min(1.0), tone, tone * 0.82];
    EyeRegionParams {
        fissure_width_mm,
        fissure_height_mm,
        skin_albedo,
        wrinkle_amplitude_mm: rng.gen_range(0.15..0.7),
        lash_length_mm: rng.gen_range(5.0..8.5),
        lash_count: rng.gen_range(8..16),
        seed,
    }
}

/// Everything per-identity that is reused across that identity's images.
pub struct IdentityModels {
    pub eyeball: EyeballModel,
    pub region: EyeRegionModel,
    /// Outer-mesh faces below the limbus (textured sclera).
    sclera_faces: Vec<[u32; 3]>,
    /// Outer-mesh faces of the corneal cap (dielectric).
    cornea_faces: Vec<[u32; 3]>,
    /// Planar texture UVs for the outer mesh (same mapping as the inner one).
    outer_planar_uvs: Vec<[f64; 2]>,
    /// Both lids' lash ribbons, merged, in the neutral (head) frame.
    lashes: TriMesh,
}

/// Builds the reusable models for one identity index.
pub fn build_identity(spec: &DatasetSpec, identity: usize) -> Result<IdentityModels, DatagenError> {
    let id_seed = seed_chain(spec.master_seed, &[0x1D, identity as u64]);
    let region = build_eye_region(&sample_identity_params(id_seed))?;
    let mut eyeball = EyeballModel::build(
        &EyeballParams::default(),
        spec.model.subdivisions,
        spec.model.texture_resolution,
        seed_chain(id_seed, &[2]),
    )?;
    // Subtle per-identity sclera relief; the limbus ring and cornea stay put.
    let bumps = sclera_bump_field(seed_chain(id_seed, &[3]), 64, 32, 0.05);
    eyeball.outer = apply_sclera_displacement(&eyeball.outer, &bumps, eyeball.params.limbus_z());

    let z_seam = eyeball.params.limbus_z();
    let mut sclera_faces = Vec::new();
    let mut cornea_faces = Vec::new();
    for f in &eyeball.outer.faces {
        let zc = (eyeball.outer.vertices[f[0] as usize].z
            + eyeball.outer.vertices[f[1] as usize].z
            + eyeball.outer.vertices[f[2] as usize].z)
            / 3.0;
        if zc > z_seam {
            cornea_faces.push(*f);
        } else {
            sclera_faces.push(*f);
        }
    }
    let diam = 2.0 * eyeball.params.r1_mm;
    let outer_planar_uvs = eyeball
        .outer
        .vertices
        .iter()
        .map(|v| [0.5 + v.x / diam, 0.5 + v.y / diam])
        .collect();

    let mut lashes = TriMesh::default();
    for sign in [-1, 1] {
        for strand in grow_eyelashes(&region, sign) {
            let ribbon = lash_ribbon(&strand);
            let base = lashes.vertices.len() as u32;
            lashes.vertices.extend_from_slice(&ribbon.vertices);
            lashes
                .faces
                .extend(ribbon.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
        }
    }
    if !lashes.faces.is_empty() {
        lashes
            .compute_vertex_normals()
            .map_err(|e| DatagenError::Manifest(format!("lash ribbons degenerate: {e}")))?;
    }

    Ok(IdentityModels { eyeball, region, sclera_faces, cornea_faces, outer_planar_uvs, lashes })
}

/// Skin shading constants shared by every identity.
const SKIN_WRAP: f64 = 0.35;
const SKIN_GLOSS_STRENGTH: f64 = 0.15;
const SKIN_GLOSS_EXPONENT: f64 = 24.0;

/// Result of posing one configured scene (before any rendering).
pub struct StagedPose {
    pub eye: PosedEyeball,
    pub region: PosedEyeRegion,
    pub landmarks: LandmarkSet,
    pub pupil_visible: bool,
}

/// Poses the models for one sampled configuration and evaluates the
/// visibility filter.
pub fn stage_pose(id: &IdentityModels, cfg: &SceneConfig) -> Result<StagedPose, DatagenError> {
    let eye = pose_eyeball(&id.eyeball, cfg.gaze.gaze_vec, cfg.eye.pupil_dilation, cfg.eye.iris_scale)?;
    let region = pose_eye_region(&id.region, &eye.outer, eye.pitch_deg)?;
    let landmarks = collect_landmarks_3d(&eye, &region)?;
    let eyelid_2d: [[f64; 2]; 12] = std::array::from_fn(|k| {
        let (x, y, _) = cfg.camera.project(landmarks.eyelid[k]);
        [x, y]
    });
    let visible = pupil_visible(&cfg.camera, landmarks.pupil_center, &eyelid_2d);
    Ok(StagedPose { eye, region, landmarks, pupil_visible: visible })
}

/// Builds the render scene for a staged pose: textured inner surface and
/// sclera, dielectric cornea, skin patch, and lash fibers under the selected
/// environment.
pub fn assemble_scene(
    id: &IdentityModels,
    cfg: &SceneConfig,
    staged: &StagedPose,
    envs: &[EnvironmentMap],
) -> Result<Scene, DatagenError> {
    let texture = composite_eye_texture(
        &cfg.eye.to_eyeball_params(),
        id.eyeball.texture.resolution,
        seed_chain(cfg.seed, &[7]),
    );
    let base_env = &envs[cfg.lighting.env_index % envs.len()];
    let env = scale_intensity(
        &rotate_env(base_env, cfg.lighting.rotation_deg),
        cfg.lighting.intensity_scale,
    )?;
    let materials = vec![
        Material::TexturedDiffuse { texture },
        Material::Dielectric { ior: CORNEA_IOR },
        Material::Skin {
            diffuse: id.region.params.skin_albedo,
            wrap: SKIN_WRAP,
            gloss_strength: SKIN_GLOSS_STRENGTH,
            gloss_exponent: SKIN_GLOSS_EXPONENT,
        },
        Material::LashFiber,
    ];
    let mut scene = Scene::new(materials, env)?;

    // Outer shell, split at the limbus into sclera and cornea submeshes. The
    // posed outer already carries the rotation; reuse its vertex data.
    let mut sclera = TriMesh::new(staged.eye.outer.vertices.clone(), id.sclera_faces.clone());
    sclera.normals = staged.eye.outer.normals.clone();
    sclera.uvs = id.outer_planar_uvs.clone();
    scene.add_mesh(&sclera, 0)?;
    let mut cornea = TriMesh::new(staged.eye.outer.vertices.clone(), id.cornea_faces.clone());
    cornea.normals = staged.eye.outer.normals.clone();
    scene.add_mesh(&cornea, 1)?;
    scene.add_mesh(&staged.eye.inner, 0)?;
    scene.add_mesh(&staged.region.face, 2)?;
    if !id.lashes.faces.is_empty() {
        scene.add_mesh(&id.lashes, 3)?;
    }
    scene.finalize()?;
    Ok(scene)
}

/// One fully rendered and labeled image.
pub struct RenderedImage {
    pub image: Image,
    pub record: LabelRecord,
    pub report: RenderReport,
}

/// Renders one configured scene and assembles its label record.
pub fn render_scene_image(
    spec: &DatasetSpec,
    id: &IdentityModels,
    cfg: &SceneConfig,
    envs: &[EnvironmentMap],
    image_name: &str,
    spp: u32,
) -> Result<RenderedImage, DatagenError> {
    let staged = stage_pose(id, cfg)?;
    let scene = assemble_scene(id, cfg, &staged, envs)?;
    let settings = RenderSettings {
        image_width: spec.image.width as usize,
        image_height: spec.image.height as usize,
        samples_per_pixel: spp,
        max_depth: spec.image.max_depth,
        seed: cfg.seed,
    };
    let (image, report) = render(&scene, &cfg.camera, &settings, Threading::Rayon);
    let env_id = envs[cfg.lighting.env_index % envs.len()].id.clone();
    let record = make_label_record(cfg, &staged.landmarks, image_name, &env_id);
    Ok(RenderedImage { image, record, report })
}

/// Builds the lighting pool: one seeded environment per procedural kind plus
/// any configured .hdr files, in configuration order.
pub fn build_env_pool(spec: &DatasetSpec) -> Result<Vec<EnvironmentMap>, DatagenError> {
    let mut envs = Vec::new();
    for (k, kind) in spec.lighting.kinds.iter().enumerate() {
        let seed = seed_chain(spec.master_seed, &[0x11E, k as u64]);
        let mut env = generate_procedural_env(*kind, seed);
        env.id = format!("{}_s{seed}", kind.name());
        envs.push(env);
    }
    for path in &spec.lighting.hdr_paths {
        envs.push(load_hdr(path)?);
    }
    Ok(envs)
}

// ---------------------------------------------------------------------------
// Parallel helpers (sequential when the feature is off).
// ---------------------------------------------------------------------------

/// Runs `body` inside a worker pool of the requested size (None = default).
pub fn run_with_jobs<R: Send>(jobs: Option<usize>, body: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = jobs {
            builder = builder.num_threads(n.max(1));
        }
        builder.build().expect("worker pool").install(body)
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = jobs;
        body()
    }
}

fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

// ---------------------------------------------------------------------------
// generate.
// ---------------------------------------------------------------------------

struct RawPose {
    pose_index: usize,
    key: PoseKey,
    camera: CameraPose,
    gaze: GazeSpec,
    keep: bool,
}

/// Row-major (theta, phi, alpha, beta) product with constraint flags.
fn enumerate_raw_poses(spec: &DatasetSpec) -> Result<Vec<RawPose>, DatagenError> {
    let thetas = grid_values(spec.camera.theta_range, spec.camera.increment_deg);
    let phis = grid_values(spec.camera.phi_range, spec.camera.increment_deg);
    let alphas = grid_values(spec.gaze.range_deg, spec.gaze.increment_deg);
    let betas = alphas.clone();
    let mut out = Vec::new();
    let mut pose_index = 0usize;
    for &theta in &thetas {
        for &phi in &phis {
            let camera = place_camera(
                theta,
                phi,
                spec.camera.radius_mm,
                (spec.image.width, spec.image.height),
                spec.image.mm_per_px,
            )?;
            for &alpha in &alphas {
                for &beta in &betas {
                    let gaze_vec = gaze_direction(&camera, alpha, beta);
                    let (pitch, yaw) = head_frame_angles(gaze_vec);
                    let keep = within_constraints(
                        pitch,
                        yaw,
                        (spec.constraints.max_pitch_deg, spec.constraints.max_yaw_deg),
                    );
                    out.push(RawPose {
                        pose_index,
                        key: PoseKey {
                            theta_deg: theta,
                            phi_deg: phi,
                            alpha_deg: alpha,
                            beta_deg: beta,
                        },
                        camera,
                        gaze: GazeSpec { alpha_deg: alpha, beta_deg: beta, gaze_vec },
                        keep,
                    });
                    pose_index += 1;
                }
            }
        }
    }
    if out.is_empty() {
        return Err(DatagenError::EmptyEnumeration);
    }
    Ok(out)
}

/// Per-image seed: a stable hash chain over (identity, pose index), so any
/// subset of the dataset regenerates identically.
pub fn image_seed(master_seed: u64, identity: usize, pose_index: usize) -> u64 {
    seed_chain(master_seed, &[1, identity as u64, pose_index as u64])
}

/// Samples the per-image randomness for one (identity, pose) cell.
fn sampled_config(
    camera: CameraPose,
    gaze: GazeSpec,
    seed: u64,
    n_envs: usize,
) -> SceneConfig {
    let base = SceneConfig {
        camera,
        gaze,
        lighting: LightingSpec::default(),
        eye: EyeConfig::default(),
        seed,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_scene_randomness(&base, &mut rng, n_envs)
}

/// Renders the whole dataset described by `spec` into `out_dir` and writes
/// `manifest.json`. Deterministic for a fixed spec regardless of `jobs`.
pub fn generate(
    spec: &DatasetSpec,
    out_dir: &Path,
    jobs: Option<usize>,
) -> Result<DatasetManifest, DatagenError> {
    spec.validate()?;
    fs::create_dir_all(out_dir.join("imgs"))?;
    fs::create_dir_all(out_dir.join("labels"))?;
    let envs = build_env_pool(spec)?;
    let poses = enumerate_raw_poses(spec)?;
    if !poses.iter().any(|p| p.keep) {
        return Err(DatagenError::EmptyEnumeration);
    }

    run_with_jobs(jobs, || {
        let identities: Vec<IdentityModels> = (0..spec.identities)
            .map(|i| build_identity(spec, i))
            .collect::<Result<_, _>>()?;

        // Every (identity, pose) cell, in manifest order.
        struct Cell<'a> {
            identity: usize,
            pose: &'a RawPose,
            seed: u64,
        }
        let cells: Vec<Cell> = (0..spec.identities)
            .flat_map(|identity| {
                poses.iter().map(move |pose| Cell {
                    identity,
                    pose,
                    seed: image_seed(spec.master_seed, identity, pose.pose_index),
                })
            })
            .collect();

        let mut skipped: Vec<SkipEntry> = Vec::new();
        let mut counts = ManifestCounts { enumerated: cells.len() as u64, ..Default::default() };

        // Pass 1: sample randomness and run the cheap filters (no rendering).
        enum Staging {
            SkipConstraint,
            Hidden,
            Visible(Box<SceneConfig>),
            Failed(String),
        }
        let staged: Vec<Staging> = par_map(&cells, |cell| {
            if !cell.pose.keep {
                return Staging::SkipConstraint;
            }
            let cfg = sampled_config(cell.pose.camera, cell.pose.gaze, cell.seed, envs.len());
            match stage_pose(&identities[cell.identity], &cfg) {
                Ok(s) if s.pupil_visible => Staging::Visible(Box::new(cfg)),
                Ok(_) => Staging::Hidden,
                Err(e) => Staging::Failed(e.to_string()),
            }
        });

        // Assign contiguous numbers to the surviving cells.
        struct RenderJob<'a> {
            number: usize,
            cell_index: usize,
            cfg: SceneConfig,
            cell: &'a Cell<'a>,
        }
        let mut render_jobs: Vec<RenderJob> = Vec::new();
        for (i, (cell, staging)) in cells.iter().zip(staged.into_iter()).enumerate() {
            match staging {
                Staging::SkipConstraint => {
                    counts.skipped_constraint += 1;
                    skipped.push(SkipEntry {
                        identity: cell.identity,
                        pose_index: cell.pose.pose_index,
                        pose: cell.pose.key,
                        reason: SkipReason::Constraint,
                    });
                }
                Staging::Hidden => {
                    counts.skipped_visibility += 1;
                    skipped.push(SkipEntry {
                        identity: cell.identity,
                        pose_index: cell.pose.pose_index,
                        pose: cell.pose.key,
                        reason: SkipReason::Visibility,
                    });
                }
                Staging::Failed(message) => {
                    counts.failed += 1;
                    skipped.push(SkipEntry {
                        identity: cell.identity,
                        pose_index: cell.pose.pose_index,
                        pose: cell.pose.key,
                        reason: SkipReason::Failure { message },
                    });
                }
                Staging::Visible(cfg) => {
                    render_jobs.push(RenderJob {
                        number: render_jobs.len(),
                        cell_index: i,
                        cfg: *cfg,
                        cell,
                    });
                }
            }
        }

        // Pass 2: render and write, one worker per image, one writer per file.
        let results: Vec<Result<ManifestEntry, (usize, String)>> =
            par_map(&render_jobs, |job| {
                let image_rel = format!("imgs/{:06}.png", job.number);
                let label_rel = format!("labels/{:06}.json", job.number);
                let rendered = render_scene_image(
                    spec,
                    &identities[job.cell.identity],
                    &job.cfg,
                    &envs,
                    &image_rel,
                    spec.image.spp,
                )
                .map_err(|e| (job.cell_index, e.to_string()))?;
                tone_map_export(&rendered.image, &out_dir.join(&image_rel))
                    .map_err(|e| (job.cell_index, e.to_string()))?;
                fs::write(out_dir.join(&label_rel), rendered.record.to_json())
                    .map_err(|e| (job.cell_index, e.to_string()))?;
                Ok(ManifestEntry {
                    image: image_rel,
                    label: label_rel,
                    seed: job.cell.seed,
                    identity: job.cell.identity,
                    pose_index: job.cell.pose.pose_index,
                    pose: job.cell.pose.key,
                })
            });

        let mut entries = Vec::with_capacity(results.len());
        for r in results {
            match r {
                Ok(entry) => entries.push(entry),
                Err((cell_index, message)) => {
                    let cell = &cells[cell_index];
                    counts.failed += 1;
                    skipped.push(SkipEntry {
                        identity: cell.identity,
                        pose_index: cell.pose.pose_index,
                        pose: cell.pose.key,
                        reason: SkipReason::Failure { message },
                    });
                }
            }
        }
        counts.emitted = entries.len() as u64;
        debug_assert_eq!(
            counts.enumerated,
            counts.emitted + counts.skipped_constraint + counts.skipped_visibility + counts.failed
        );

        let manifest = DatasetManifest {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            spec: spec.clone(),
            counts,
            entries,
            skipped,
        };
        manifest.save(&out_dir.join("manifest.json"))?;
        Ok(manifest)
    })
}

// ---------------------------------------------------------------------------
// preview.
// ---------------------------------------------------------------------------

/// Pixel gutter between contact-sheet tiles.
pub const PREVIEW_GUTTER_PX: usize = 2;

/// Evenly spaced samples across a range; a single sample takes the midpoint.
fn span_value(range: [f64; 2], n: usize, idx: usize) -> f64 {
    if n <= 1 {
        (range[0] + range[1]) / 2.0
    } else {
        range[0] + (range[1] - range[0]) * idx as f64 / (n - 1) as f64
    }
}

/// Renders a (cols x rows) contact sheet of gaze variations for identity 0 at
/// a frontal camera, ignoring the constraint and visibility filters, and
/// writes it as a PNG. Returns the composed linear image.
pub fn preview(
    spec: &DatasetSpec,
    grid: (usize, usize),
    spp: u32,
    out_path: &Path,
    jobs: Option<usize>,
) -> Result<Image, DatagenError> {
    spec.validate()?;
    let (cols, rows) = grid;
    if cols == 0 || rows == 0 {
        return Err(DatagenError::Range { reason: "preview grid must be at least 1x1".into() });
    }
    let envs = build_env_pool(spec)?;
    let camera = place_camera(
        0.0,
        0.0,
        spec.camera.radius_mm,
        (spec.image.width, spec.image.height),
        spec.image.mm_per_px,
    )?;

    run_with_jobs(jobs, || {
        let identity = build_identity(spec, 0)?;
        struct Tile {
            index: usize,
            alpha: f64,
            beta: f64,
        }
        // Tile gazes span the configured range but stay inside the eyelid
        // travel and rotation constraints so every tile can be posed.
        let max_alpha = spec.constraints.max_pitch_deg.min(25.0);
        let max_beta = spec.constraints.max_yaw_deg;
        let tiles: Vec<Tile> = (0..rows)
            .flat_map(|i| {
                (0..cols).map(move |j| Tile {
                    index: i * cols + j,
                    // Top row looks up; left column looks toward -beta.
                    alpha: span_value(spec.gaze.range_deg, rows, rows - 1 - i)
                        .clamp(-max_alpha, max_alpha),
                    beta: span_value(spec.gaze.range_deg, cols, j).clamp(-max_beta, max_beta),
                })
            })
            .collect();
        let rendered: Vec<Result<Image, DatagenError>> = par_map(&tiles, |tile| {
            let gaze_vec = gaze_direction(&camera, tile.alpha, tile.beta);
            let gaze = GazeSpec { alpha_deg: tile.alpha, beta_deg: tile.beta, gaze_vec };
            let seed = image_seed(spec.master_seed, 0, tile.index);
            let cfg = sampled_config(camera, gaze, seed, envs.len());
            let name = format!("preview_{:03}", tile.index);
            Ok(render_scene_image(spec, &identity, &cfg, &envs, &name, spp)?.image)
        });

        let (tw, th) = (spec.image.width as usize, spec.image.height as usize);
        let g = PREVIEW_GUTTER_PX;
        let mut sheet = Image::new(cols * tw + (cols + 1) * g, rows * th + (rows + 1) * g);
        for (tile, img) in tiles.iter().zip(rendered) {
            let img = img?;
            let (row, col) = (tile.index / cols, tile.index % cols);
            let (x0, y0) = (g + col * (tw + g), g + row * (th + g));
            for y in 0..th {
                for x in 0..tw {
                    sheet.set_pixel(x0 + x, y0 + y, img.pixel(x, y));
                }
            }
        }
        tone_map_export(&sheet, out_path)?;
        Ok(sheet)
    })
}

/// Renders a single image at an explicit camera/gaze pose, writes the
/// tone-mapped PNG (and optionally the linear float dump), and returns the
/// label record. Identity 0 and the pose-0 randomness stream are used, so
/// the output matches `generate` for a spec whose grids pin the same pose.
pub fn render_one(
    spec: &DatasetSpec,
    pose: PoseKey,
    png_out: &Path,
    float_out: Option<&Path>,
    spp: u32,
    jobs: Option<usize>,
) -> Result<LabelRecord, DatagenError> {
    spec.validate()?;
    let envs = build_env_pool(spec)?;
    let camera = place_camera(
        pose.theta_deg,
        pose.phi_deg,
        spec.camera.radius_mm,
        (spec.image.width, spec.image.height),
        spec.image.mm_per_px,
    )?;
    let gaze_vec = gaze_direction(&camera, pose.alpha_deg, pose.beta_deg);
    let gaze = GazeSpec { alpha_deg: pose.alpha_deg, beta_deg: pose.beta_deg, gaze_vec };
    let cfg = sampled_config(camera, gaze, image_seed(spec.master_seed, 0, 0), envs.len());
    run_with_jobs(jobs, || {
        let identity = build_identity(spec, 0)?;
        let name = png_out
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "render_one.png".into());
        let rendered = render_scene_image(spec, &identity, &cfg, &envs, &name, spp)?;
        tone_map_export(&rendered.image, png_out)?;
        if let Some(p) = float_out {
            crate::tracer::write_float_dump(&rendered.image, p)?;
        }
        Ok(rendered.record)
    })
}
