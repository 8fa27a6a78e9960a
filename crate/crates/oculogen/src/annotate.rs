//! Ground-truth machinery: pose the eyeball and eye region consistently,
//! collect the 28 named 3D landmarks (12 eyelid, 8 iris boundary, 8 pupil
//! boundary), project them through the camera, and assemble the per-image
//! label record that rides alongside every rendered frame.

use serde::{Deserialize, Serialize};

use crate::eyeball::{apply_blend_shapes, EyeballError, EyeballModel};
use crate::eyeregion::{
    eyelid_landmarks_3d, eyelid_weight, pose_eyelids, snap_eyelids, EyeRegionError,
    EyeRegionModel, SNAP_CAP_MM,
};
use crate::geom::{Rotation, TriMesh, UnitVec3, Vec3};
use crate::staging::{head_frame_angles, pupil_visible, validate_pose, CameraPose, SceneConfig};

/// Version tag written into every label record.
pub const SCHEMA_VERSION: &str = "1";
/// Total named landmarks per image: 12 eyelid + 8 iris + 8 pupil.
pub const LANDMARK_COUNT: usize = 28;

#[derive(Debug, thiserror::Error)]
pub enum AnnotateError {
    #[error("eyelid weight {weight} does not match the gaze pitch (expected {expected})")]
    InconsistentPose { weight: f64, expected: f64 },
    #[error(transparent)]
    Eyeball(#[from] EyeballError),
    #[error(transparent)]
    EyeRegion(#[from] EyeRegionError),
}

/// Returns the mesh rigidly rotated about the origin (vertices and normals).
pub fn rotated_mesh(mesh: &TriMesh, rot: Rotation) -> TriMesh {
    let mut out = mesh.clone();
    for v in &mut out.vertices {
        *v = rot.apply(*v);
    }
    for n in &mut out.normals {
        *n = rot.apply(*n);
    }
    out
}

/// An eyeball with blend shapes applied and rotated to a world gaze.
#[derive(Debug, Clone)]
pub struct PosedEyeball {
    pub outer: TriMesh,
    pub inner: TriMesh,
    pub rotation: Rotation,
    pub gaze: UnitVec3,
    /// Head-frame pitch of the gaze, degrees (positive up).
    pub pitch_deg: f64,
    /// Head-frame yaw of the gaze, degrees (positive temporal, +X).
    pub yaw_deg: f64,
    /// Rotated center of the iris/pupil disc.
    pub pupil_center: Vec3,
    pub iris_ids: [u32; 8],
    pub pupil_ids: [u32; 8],
}

/// Applies pupil/iris morphs, then rotates the eyeball (about its center at
/// the origin) so the optical axis +Z lines up with `gaze`.
pub fn pose_eyeball(
    model: &EyeballModel,
    gaze: UnitVec3,
    pupil_dilation: f64,
    iris_scale: f64,
) -> Result<PosedEyeball, EyeballError> {
    let blended = apply_blend_shapes(model, pupil_dilation, iris_scale)?;
    let rotation = Rotation::between(UnitVec3::Z, gaze);
    let (pitch_deg, yaw_deg) = head_frame_angles(gaze);
    Ok(PosedEyeball {
        outer: rotated_mesh(&model.outer, rotation),
        inner: rotated_mesh(&blended, rotation),
        rotation,
        gaze,
        pitch_deg,
        yaw_deg,
        pupil_center: rotation.apply(Vec3::new(0.0, 0.0, model.layout.disc_z)),
        iris_ids: model.iris_landmark_vertex_ids,
        pupil_ids: model.pupil_landmark_vertex_ids,
    })
}

/// The eye region driven to a lid opening and snapped onto a posed eyeball.
#[derive(Debug, Clone)]
pub struct PosedEyeRegion {
    pub face: TriMesh,
    pub eyelid_weight: f64,
    pub eyelid_landmarks: [Vec3; 12],
}

/// Derives the lid weight from the gaze pitch, poses the lids, and snaps the
/// fissure boundary onto the rotated eyeball surface.
pub fn pose_eye_region(
    model: &EyeRegionModel,
    posed_outer: &TriMesh,
    gaze_pitch_deg: f64,
) -> Result<PosedEyeRegion, EyeRegionError> {
    let w = eyelid_weight(gaze_pitch_deg)?;
    let posed = pose_eyelids(model, w)?;
    let snapped = snap_eyelids(&posed, posed_outer, SNAP_CAP_MM)?;
    let eyelid_landmarks = eyelid_landmarks_3d(model, &snapped);
    Ok(PosedEyeRegion { face: snapped, eyelid_weight: w, eyelid_landmarks })
}

/// The 28 named 3D landmarks plus the pupil center and gaze vector.
#[derive(Debug, Clone)]
pub struct LandmarkSet {
    pub eyelid: [Vec3; 12],
    pub iris: [Vec3; 8],
    pub pupil: [Vec3; 8],
    pub pupil_center: Vec3,
    pub gaze: UnitVec3,
}

impl LandmarkSet {
    /// Landmarks in canonical order with their stable names: eyelid_0..11
    /// (starting at the temporal corner, counter-clockwise), iris_0..7,
    /// pupil_0..7.
    pub fn named_points(&self) -> Vec<(String, Vec3)> {
        let mut out = Vec::with_capacity(LANDMARK_COUNT);
        for (k, p) in self.eyelid.iter().enumerate() {
            out.push((format!("eyelid_{k}"), *p));
        }
        for (k, p) in self.iris.iter().enumerate() {
            out.push((format!("iris_{k}"), *p));
        }
        for (k, p) in self.pupil.iter().enumerate() {
            out.push((format!("pupil_{k}"), *p));
        }
        out
    }
}

/// Reads the 28 landmarks off consistently posed models. The iris and pupil
/// points come from their fixed inner-mesh vertex ids, so they follow blend
/// shapes automatically; eyelid points come from the snapped face patch.
pub fn collect_landmarks_3d(
    eye: &PosedEyeball,
    region: &PosedEyeRegion,
) -> Result<LandmarkSet, AnnotateError> {
    let expected = eyelid_weight(eye.pitch_deg)?;
    if (region.eyelid_weight - expected).abs() > 1e-6 {
        return Err(AnnotateError::InconsistentPose {
            weight: region.eyelid_weight,
            expected,
        });
    }
    let pick = |ids: &[u32; 8]| -> [Vec3; 8] {
        std::array::from_fn(|k| eye.inner.vertices[ids[k] as usize])
    };
    Ok(LandmarkSet {
        eyelid: region.eyelid_landmarks,
        iris: pick(&eye.iris_ids),
        pupil: pick(&eye.pupil_ids),
        pupil_center: eye.pupil_center,
        gaze: eye.gaze,
    })
}

/// Projects a world point to pixel coordinates (origin top-left, +x right,
/// +y down, sub-pixel reals).
pub fn project_point(camera: &CameraPose, p: Vec3) -> [f64; 2] {
    let (x, y, _) = camera.project(p);
    [x, y]
}

/// One projected landmark in the label record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark2D {
    pub name: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraLabel {
    pub theta_deg: f64,
    pub phi_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeLabel {
    pub alpha_deg: f64,
    pub beta_deg: f64,
    /// Unit gaze vector in camera coordinates: +x camera-right, +y camera-up,
    /// +z toward the camera, so exact eye contact is (0, 0, 1).
    pub vector_cam: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightingLabel {
    pub env_id: String,
    pub rotation_deg: f64,
    pub intensity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityFlags {
    pub pupil_visible: bool,
    pub pose_within_limits: bool,
}

/// Everything saved alongside one rendered image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub schema_version: String,
    pub image: String,
    pub camera: CameraLabel,
    pub gaze: GazeLabel,
    pub lighting: LightingLabel,
    pub eye: crate::staging::EyeConfig,
    pub landmarks_2d: Vec<Landmark2D>,
    pub pupil_center_2d: [f64; 2],
    pub valid: ValidityFlags,
}

impl LabelRecord {
    /// Deterministic serialization: struct field order is fixed and the
    /// landmark list is in canonical order.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("label record serializes");
        s.push('\n');
        s
    }
}

/// Expresses a world gaze vector in the camera basis (eye contact = (0,0,1)).
pub fn gaze_in_camera_frame(camera: &CameraPose, gaze: UnitVec3) -> [f64; 3] {
    let g = gaze.as_vec();
    [
        g.dot(camera.right().as_vec()),
        g.dot(camera.up().as_vec()),
        -g.dot(camera.forward().as_vec()),
    ]
}

/// Assembles the label record for one image: projects the landmarks, derives
/// the camera-frame gaze, and recomputes the validity flags from the saved
/// quantities themselves.
pub fn make_label_record(
    scene: &SceneConfig,
    lm: &LandmarkSet,
    image_name: &str,
    env_id: &str,
) -> LabelRecord {
    let camera = &scene.camera;
    let landmarks_2d: Vec<Landmark2D> = lm
        .named_points()
        .into_iter()
        .map(|(name, p)| {
            let [x, y] = project_point(camera, p);
            Landmark2D { name, x, y }
        })
        .collect();
    let eyelid_2d: [[f64; 2]; 12] =
        std::array::from_fn(|k| [landmarks_2d[k].x, landmarks_2d[k].y]);
    let (pitch, yaw) = head_frame_angles(lm.gaze);
    LabelRecord {
        schema_version: SCHEMA_VERSION.to_string(),
        image: image_name.to_string(),
        camera: CameraLabel {
            theta_deg: camera.spherical.theta_deg,
            phi_deg: camera.spherical.phi_deg,
        },
        gaze: GazeLabel {
            alpha_deg: scene.gaze.alpha_deg,
            beta_deg: scene.gaze.beta_deg,
            vector_cam: gaze_in_camera_frame(camera, lm.gaze),
        },
        lighting: LightingLabel {
            env_id: env_id.to_string(),
            rotation_deg: scene.lighting.rotation_deg,
            intensity: scene.lighting.intensity_scale,
        },
        eye: scene.eye,
        landmarks_2d,
        pupil_center_2d: project_point(camera, lm.pupil_center),
        valid: ValidityFlags {
            pupil_visible: pupil_visible(camera, lm.pupil_center, &eyelid_2d),
            pose_within_limits: validate_pose(pitch, yaw),
        },
    }
}
