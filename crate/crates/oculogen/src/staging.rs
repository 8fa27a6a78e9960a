//! Scene staging: cameras, gaze vectors, pose filters, and enumeration.
//!
//! A scene is determined by (camera, gaze, lighting, eye-config). Cameras
//! orbit the eyeball center on spherical coordinates and render
//! orthographically, emulating an eye-region crop from a wide-angle image.
//! Gaze starts at eye contact (pointing at the camera) and is offset by a
//! pitch/yaw pair in the camera frame. Poses are kept only when the implied
//! eyeball-in-head rotation is anatomically plausible, and later only when
//! the projected pupil center falls inside the eyelid-landmark polygon.

use crate::eyeball::{IrisColor, ScleraTint};
use crate::geom::{spherical_to_cartesian, Ray, Rotation, SphericalCoord, UnitVec3, Vec3};

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Anatomical eyeball-rotation limits, degrees.
pub const MAX_EYE_PITCH_DEG: f64 = 25.0;
pub const MAX_EYE_YAW_DEG: f64 = 35.0;
/// Tolerance when testing grid angles against the limits, so boundary poses
/// like pitch = 25 survive trig round-trips.
const LIMIT_EPS: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum StagingError {
    #[error("camera at (theta={theta_deg}, phi={phi_deg}) has no stable up frame")]
    DegenerateFrame { theta_deg: f64, phi_deg: f64 },
    #[error("no pose survived the constraints")]
    EmptyEnumeration,
}

/// An orthographic camera orbiting the eyeball center.
#[derive(Debug, Clone, Copy)]
pub struct CameraPose {
    pub spherical: SphericalCoord,
    pub position: Vec3,
    /// Maps camera-local axes into the world; local −Z is the view direction.
    pub orientation: Rotation,
    pub ortho_width_mm: f64,
    pub ortho_height_mm: f64,
    pub image_width: u32,
    pub image_height: u32,
}

impl CameraPose {
    pub fn mm_per_px(&self) -> f64 {
        self.ortho_width_mm / self.image_width as f64
    }

    /// Camera right axis (+X of the local frame) in the world.
    pub fn right(&self) -> UnitVec3 {
        self.orientation.apply_unit(UnitVec3::X)
    }

    /// Camera up axis (+Y of the local frame) in the world.
    pub fn up(&self) -> UnitVec3 {
        self.orientation.apply_unit(UnitVec3::Y)
    }

    /// View direction (local −Z) in the world.
    pub fn forward(&self) -> UnitVec3 {
        self.orientation.apply_unit(-UnitVec3::Z)
    }

    /// Orthographic projection to pixel coordinates; the flag is false for
    /// points behind the image plane.
    pub fn project(&self, p: Vec3) -> (f64, f64, bool) {
        let q = self.orientation.inverse().apply(p - self.position);
        let mmpp = self.mm_per_px();
        let x = self.image_width as f64 / 2.0 + q.x / mmpp;
        let y = self.image_height as f64 / 2.0 - q.y / mmpp;
        (x, y, q.z < 0.0)
    }

    /// World-space ray through a pixel (orthographic: parallel rays).
    pub fn pixel_ray(&self, x_px: f64, y_px: f64) -> Ray {
        let mmpp = self.mm_per_px();
        let x_mm = (x_px - self.image_width as f64 / 2.0) * mmpp;
        let y_mm = (self.image_height as f64 / 2.0 - y_px) * mmpp;
        let origin = self.position + self.right().as_vec() * x_mm + self.up().as_vec() * y_mm;
        Ray::new(origin, self.forward())
    }
}

/// Gaze offsets from eye contact plus the derived world gaze vector.
#[derive(Debug, Clone, Copy)]
pub struct GazeSpec {
    pub alpha_deg: f64,
    pub beta_deg: f64,
    pub gaze_vec: UnitVec3,
}

/// Eye-model configuration sampled per image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyeConfig {
    pub iris_color: IrisColor,
    pub sclera_tint: ScleraTint,
    pub vein_density: f64,
    pub pupil_dilation: f64,
    pub iris_scale: f64,
}

impl Default for EyeConfig {
    fn default() -> Self {
        EyeConfig {
            iris_color: IrisColor::Brown,
            sclera_tint: ScleraTint::White,
            vein_density: 0.3,
            pupil_dilation: 0.2,
            iris_scale: 1.0,
        }
    }
}

impl EyeConfig {
    /// Eyeball parameters with this configuration over the default geometry.
    pub fn to_eyeball_params(self) -> crate::eyeball::EyeballParams {
        crate::eyeball::EyeballParams {
            iris_color: self.iris_color,
            sclera_tint: self.sclera_tint,
            vein_density: self.vein_density,
            pupil_dilation: self.pupil_dilation,
            // Geometry is built neutral; iris_scale applies at blend time.
            iris_scale: 1.0,
            ..Default::default()
        }
    }
}

/// Environment-lighting selection for one image.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LightingSpec {
    pub env_index: usize,
    pub rotation_deg: f64,
    pub intensity_scale: f64,
}

impl Default for LightingSpec {
    fn default() -> Self {
        LightingSpec { env_index: 0, rotation_deg: 0.0, intensity_scale: 1.0 }
    }
}

/// Full staging of one image.
#[derive(Debug, Clone)]
pub struct SceneConfig {
    pub camera: CameraPose,
    pub gaze: GazeSpec,
    pub lighting: LightingSpec,
    pub eye: EyeConfig,
    pub seed: u64,
}

/// Places an orthographic camera at spherical (theta, phi, radius) about the
/// eyeball center, looking at the center with +Y up. The footprint is
/// image dims x mm_per_px.
pub fn place_camera(
    theta_deg: f64,
    phi_deg: f64,
    radius_mm: f64,
    image_dims: (u32, u32),
    mm_per_px: f64,
) -> Result<CameraPose, StagingError> {
    assert!(radius_mm > 0.0 && image_dims.0 > 0 && image_dims.1 > 0 && mm_per_px > 0.0);
    if !(phi_deg.abs() < 90.0) {
        return Err(StagingError::DegenerateFrame { theta_deg, phi_deg });
    }
    let spherical = SphericalCoord::new(theta_deg, phi_deg, radius_mm)
        .expect("elevation validated above");
    let position = spherical_to_cartesian(spherical, Vec3::ZERO);
    let orientation = Rotation::look_at(position, Vec3::ZERO, Vec3::new(0.0, 1.0, 0.0))
        .map_err(|_| StagingError::DegenerateFrame { theta_deg, phi_deg })?;
    Ok(CameraPose {
        spherical,
        position,
        orientation,
        ortho_width_mm: image_dims.0 as f64 * mm_per_px,
        ortho_height_mm: image_dims.1 as f64 * mm_per_px,
        image_width: image_dims.0,
        image_height: image_dims.1,
    })
}

/// World gaze direction: eye contact with the camera, then pitch `alpha`
/// about the camera's right axis (positive looks up) and yaw `beta` about the
/// camera's up axis (positive looks toward camera-right).
pub fn gaze_direction(camera: &CameraPose, alpha_deg: f64, beta_deg: f64) -> UnitVec3 {
    let g0 = camera.position.normalized().expect("camera radius is positive");
    let pitch = Rotation::from_axis_angle(camera.right(), -alpha_deg);
    let yaw = Rotation::from_axis_angle(camera.up(), beta_deg);
    yaw.apply_unit(pitch.apply_unit(g0))
}

/// Eyeball rotation in the head frame implied by a world gaze vector:
/// (pitch up, yaw toward +X), degrees. The head looks along +Z.
pub fn head_frame_angles(gaze: UnitVec3) -> (f64, f64) {
    let g = gaze.as_vec();
    (g.y.clamp(-1.0, 1.0).asin().to_degrees(), g.x.atan2(g.z).to_degrees())
}

/// Anatomical validity of an eyeball-in-head rotation.
pub fn validate_pose(pitch_deg: f64, yaw_deg: f64) -> bool {
    within_constraints(pitch_deg, yaw_deg, (MAX_EYE_PITCH_DEG, MAX_EYE_YAW_DEG))
}

/// Whether a head-frame rotation is inside configurable (pitch, yaw) limits,
/// with the same tolerance the pose enumerator applies at grid boundaries.
pub fn within_constraints(pitch_deg: f64, yaw_deg: f64, constraints: (f64, f64)) -> bool {
    pitch_deg.abs() <= constraints.0 + LIMIT_EPS && yaw_deg.abs() <= constraints.1 + LIMIT_EPS
}

/// Even-odd point-in-polygon test in pixel space.
fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x_cross = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// True when the pupil center projects strictly inside the polygon of the 12
/// projected eyelid landmarks. Degenerate polygons (or a pupil behind the
/// camera) are never visible.
pub fn pupil_visible(camera: &CameraPose, pupil_center_3d: Vec3, eyelid_landmarks_2d: &[[f64; 2]; 12]) -> bool {
    let (x, y, in_front) = camera.project(pupil_center_3d);
    if !in_front || !x.is_finite() || !y.is_finite() {
        return false;
    }
    if eyelid_landmarks_2d.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return false;
    }
    point_in_polygon([x, y], eyelid_landmarks_2d)
}

/// Cartesian product of camera and gaze grids, keeping poses whose implied
/// head-frame eyeball rotation is within `constraints` (pitch, yaw). Output
/// order is row-major over (theta, phi, alpha, beta). Lighting and eye config
/// are left at defaults for later sampling.
pub fn enumerate_poses(
    camera_grid: &[(f64, f64)],
    gaze_alphas: &[f64],
    gaze_betas: &[f64],
    constraints: (f64, f64),
    camera_radius_mm: f64,
    image_dims: (u32, u32),
    mm_per_px: f64,
) -> Result<Vec<SceneConfig>, StagingError> {
    assert!(!camera_grid.is_empty() && !gaze_alphas.is_empty() && !gaze_betas.is_empty());
    let mut out = Vec::new();
    for &(theta, phi) in camera_grid {
        let camera = place_camera(theta, phi, camera_radius_mm, image_dims, mm_per_px)?;
        for &alpha in gaze_alphas {
            for &beta in gaze_betas {
                let gaze_vec = gaze_direction(&camera, alpha, beta);
                let (pitch, yaw) = head_frame_angles(gaze_vec);
                if within_constraints(pitch, yaw, constraints) {
                    out.push(SceneConfig {
                        camera,
                        gaze: GazeSpec { alpha_deg: alpha, beta_deg: beta, gaze_vec },
                        lighting: LightingSpec::default(),
                        eye: EyeConfig::default(),
                        seed: 0,
                    });
                }
            }
        }
    }
    if out.is_empty() {
        return Err(StagingError::EmptyEnumeration);
    }
    Ok(out)
}

/// The gaze-offset grid used for dataset enumeration: −45° to +45° in 10°
/// steps (no exact zero; 90° of variation).
pub fn default_gaze_grid() -> Vec<f64> {
    (0..10).map(|i| -45.0 + 10.0 * i as f64).collect()
}

/// Fills the randomized per-image fields of a staged pose: eye configuration
/// (uniform colors/tints, uniform dilation and vein density, uniform iris
/// scale) and lighting (uniform environment id, uniform rotation, log-uniform
/// intensity in [0.5, 2]). Sampling order is fixed for determinism.
pub fn sample_scene_randomness(base: &SceneConfig, rng: &mut impl Rng, n_envs: usize) -> SceneConfig {
    assert!(n_envs > 0);
    let mut out = base.clone();
    out.eye.iris_color = IrisColor::ALL[rng.gen_range(0..IrisColor::ALL.len())];
    out.eye.sclera_tint = ScleraTint::ALL[rng.gen_range(0..ScleraTint::ALL.len())];
    out.eye.pupil_dilation = rng.gen::<f64>();
    out.eye.vein_density = rng.gen::<f64>();
    out.eye.iris_scale = 0.95 + 0.1 * rng.gen::<f64>();
    out.lighting.env_index = rng.gen_range(0..n_envs);
    out.lighting.rotation_deg = 360.0 * rng.gen::<f64>();
    let (lo, hi) = (0.5f64.ln(), 2.0f64.ln());
    out.lighting.intensity_scale = (lo + (hi - lo) * rng.gen::<f64>()).exp();
    out
}
