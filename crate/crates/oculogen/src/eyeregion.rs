//! Procedural eye-region (skin/eyelid) model.
//!
//! An elliptical skin patch, roughly 60x40 mm, is lofted between the
//! palpebral fissure boundary (an ellipse draped onto the eyeball) and an
//! outer rim on a background dome. Eyelid motion is expressed as two morph
//! targets — fully-up and fully-down gaze — built by rotating lid vertices
//! about the inter-corner axis so they slide over the eyeball; a gaze pitch
//! maps linearly onto the blend weight. After posing, the fissure boundary is
//! snapped along vertex normals onto the eyeball shell so no gap opens
//! between skin and eye. Lash strands grow from root polylines under each lid
//! margin, curling against their per-lid gravity. Twelve landmark vertices
//! (2 corners, 5 upper margin, 5 lower margin) ride the fissure boundary.

use crate::eyeball::{self, BlendDelta};
use crate::field::{seed_chain, value_noise_periodic_x, ScalarField2D};
use crate::geom::{intersect_mesh_brute, Ray, TriMesh, UnitVec3, Vec3};

use serde::{Deserialize, Serialize};

/// Skin patch half-extent in x, mm.
pub const PATCH_HALF_WIDTH_MM: f64 = 30.0;
/// Skin patch half-extent in y, mm.
pub const PATCH_HALF_HEIGHT_MM: f64 = 20.0;
/// Neutral skin hovers this far off the eyeball; snapping closes the gap.
pub const REST_OFFSET_MM: f64 = 0.4;
/// Grid resolution: vertices around the fissure loop and rings outward.
const N_AROUND: usize = 48;
const N_RINGS: usize = 10;
/// Upper-lid rotation from neutral at full-up / full-down gaze, degrees.
const UPPER_LID_UP_DEG: f64 = 22.0;
const UPPER_LID_DOWN_DEG: f64 = -24.0;
/// Lower-lid rotation at full-up / full-down gaze, degrees.
const LOWER_LID_UP_DEG: f64 = 6.0;
const LOWER_LID_DOWN_DEG: f64 = -8.0;
/// Downward gaze smooths upper-lid wrinkles to this fraction.
const WRINKLE_DOWN_FACTOR: f64 = 0.25;
/// Lash strands: fixed segment count; gravity step per design note.
const LASH_SEGMENTS: usize = 6;
const LASH_GRAVITY_FACTOR: f64 = 0.15;
/// Snap cap the rendering pipeline uses: posed margins sit within ~0.5 mm of
/// the ball radially, but oblique boundary normals lengthen the travel.
pub const SNAP_CAP_MM: f64 = 2.0;

/// Parameters of one procedural eye-region instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EyeRegionParams {
    /// Palpebral fissure width at neutral gaze, mm.
    pub fissure_width_mm: f64,
    /// Palpebral fissure height at neutral gaze, mm.
    pub fissure_height_mm: f64,
    /// Linear-RGB skin albedo.
    pub skin_albedo: [f64; 3],
    /// Peak wrinkle displacement on the upper lid, mm.
    pub wrinkle_amplitude_mm: f64,
    /// Nominal lash strand length, mm.
    pub lash_length_mm: f64,
    /// Strands per lid.
    pub lash_count: usize,
    pub seed: u64,
}

impl Default for EyeRegionParams {
    fn default() -> Self {
        EyeRegionParams {
            fissure_width_mm: 22.0,
            fissure_height_mm: 10.0,
            skin_albedo: [0.55, 0.40, 0.32],
            wrinkle_amplitude_mm: 0.4,
            lash_length_mm: 7.0,
            lash_count: 12,
            seed: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EyeRegionError {
    #[error("invalid eye-region parameters: {reason}")]
    InvalidParams { reason: String },
    #[error("{name} = {value} outside [{lo}, {hi}]")]
    OutOfRange { name: &'static str, value: f64, lo: f64, hi: f64 },
    #[error("fissure vertex {vertex} is {distance_mm:.3} mm from the eyeball, over the {max_snap_mm} mm snap cap")]
    SnapFailed { vertex: u32, distance_mm: f64, max_snap_mm: f64 },
}

impl EyeRegionParams {
    pub fn validate(&self) -> Result<(), EyeRegionError> {
        let fail = |reason: String| Err(EyeRegionError::InvalidParams { reason });
        let ball = 2.0 * eyeball::SCLERA_RADIUS_MM;
        if !(self.fissure_width_mm > 4.0 && self.fissure_width_mm < ball) {
            return fail(format!("fissure width {} must fit the eyeball (< {ball})", self.fissure_width_mm));
        }
        if !(self.fissure_height_mm > 2.0 && self.fissure_height_mm < ball) {
            return fail(format!("fissure height {} must fit the eyeball (< {ball})", self.fissure_height_mm));
        }
        if self.fissure_height_mm >= self.fissure_width_mm {
            return fail("fissure must be wider than tall".into());
        }
        if !self.skin_albedo.iter().all(|c| (0.0..=1.0).contains(c)) {
            return fail(format!("skin albedo {:?} outside [0,1]", self.skin_albedo));
        }
        if !(0.0..=2.0).contains(&self.wrinkle_amplitude_mm) {
            return fail(format!("wrinkle amplitude {} outside [0,2] mm", self.wrinkle_amplitude_mm));
        }
        if !(self.lash_length_mm > 0.0 && self.lash_length_mm <= 15.0) {
            return fail(format!("lash length {} outside (0,15] mm", self.lash_length_mm));
        }
        Ok(())
    }
}

/// One eyelash: a polyline strand with its root index and draw thickness.
#[derive(Debug, Clone)]
pub struct LashStrand {
    pub points: Vec<Vec3>,
    pub root_index: usize,
    pub thickness_mm: f64,
}

/// Root polylines the lashes grow from, one per lid margin.
#[derive(Debug, Clone, Default)]
pub struct LashRoots {
    pub upper: Vec<Vec3>,
    pub lower: Vec<Vec3>,
}

/// Built eye-region: neutral face, lid morph targets, wrinkle fields,
/// landmark anchors, lash roots.
#[derive(Debug, Clone)]
pub struct EyeRegionModel {
    pub params: EyeRegionParams,
    pub face: TriMesh,
    pub blend_up: BlendDelta,
    pub blend_down: BlendDelta,
    pub wrinkle_field_neutral: ScalarField2D,
    pub wrinkle_field_down: ScalarField2D,
    /// Fissure-boundary vertex ids in fixed anatomical order: lateral corner,
    /// 5 upper-margin lateral-to-medial, medial corner, 5 lower-margin
    /// medial-to-lateral.
    pub eyelid_landmark_vertex_ids: [u32; 12],
    pub lash_roots: LashRoots,
}

fn rot_x_toward_y(v: Vec3, deg: f64) -> Vec3 {
    // Positive angles slide points at +Z toward +Y: lids moving up.
    let (s, c) = deg.to_radians().sin_cos();
    Vec3::new(v.x, v.y * c + v.z * s, -v.y * s + v.z * c)
}

fn smooth01(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Height of the background face dome the patch relaxes onto away from the eye.
fn background_z(x: f64, y: f64) -> f64 {
    6.0 - 0.004 * (x * x + y * y)
}

/// Builds the neutral skin patch plus lid morph targets, wrinkle fields,
/// landmarks, and lash roots. Deterministic for a fixed seed.
pub fn build_eye_region(p: &EyeRegionParams) -> Result<EyeRegionModel, EyeRegionError> {
    p.validate()?;
    let (a, b) = (0.5 * p.fissure_width_mm, 0.5 * p.fissure_height_mm);
    let r_off = eyeball::SCLERA_RADIUS_MM + REST_OFFSET_MM;

    // Vertex grid: rings of N_AROUND vertices from the fissure boundary
    // (ring 0) out to the patch rim, lofted toward the background dome.
    let mut vertices = Vec::with_capacity(N_AROUND * N_RINGS);
    let mut uvs = Vec::with_capacity(N_AROUND * N_RINGS);
    for k in 0..N_RINGS {
        let t = k as f64 / (N_RINGS - 1) as f64;
        let dome_mix = smooth01(t / 0.7);
        for i in 0..N_AROUND {
            let phi = 2.0 * std::f64::consts::PI * i as f64 / N_AROUND as f64;
            let inner = (a * phi.cos(), b * phi.sin());
            let outer = (PATCH_HALF_WIDTH_MM * phi.cos(), PATCH_HALF_HEIGHT_MM * phi.sin());
            let x = inner.0 + (outer.0 - inner.0) * t;
            let y = inner.1 + (outer.1 - inner.1) * t;
            // Boundary height: draped on the offset eyeball sphere.
            let z_margin = (r_off * r_off - inner.0 * inner.0 - inner.1 * inner.1).sqrt();
            let z = z_margin * (1.0 - dome_mix) + background_z(x, y) * dome_mix;
            vertices.push(Vec3::new(x, y, z));
            uvs.push([i as f64 / N_AROUND as f64, t]);
        }
    }
    let vid = |k: usize, i: usize| (k * N_AROUND + i % N_AROUND) as u32;
    let mut faces = Vec::with_capacity((N_RINGS - 1) * N_AROUND * 2);
    for k in 0..N_RINGS - 1 {
        for i in 0..N_AROUND {
            faces.push([vid(k, i), vid(k, i + 1), vid(k + 1, i + 1)]);
            faces.push([vid(k, i), vid(k + 1, i + 1), vid(k + 1, i)]);
        }
    }
    let mut face = TriMesh::new(vertices, faces);
    face.uvs = uvs;
    face.compute_vertex_normals()
        .map_err(|e| EyeRegionError::InvalidParams { reason: format!("degenerate patch: {e}") })?;

    // Morph targets: rotate lid vertices about the corner-to-corner (X) axis,
    // scaled by margin proximity and distance from the corners, so lids slide
    // over the ball. Corners carry zero influence and stay fixed.
    let mut blend_up = BlendDelta::default();
    let mut blend_down = BlendDelta::default();
    for k in 0..N_RINGS {
        let t = k as f64 / (N_RINGS - 1) as f64;
        let falloff = (1.0 - t) * (1.0 - t);
        for i in 0..N_AROUND {
            let phi = 2.0 * std::f64::consts::PI * i as f64 / N_AROUND as f64;
            let shape = phi.sin().abs().powf(0.6) * falloff;
            if shape < 1e-9 {
                continue;
            }
            let upper = phi.sin() > 0.0;
            let (deg_up, deg_down) =
                if upper { (UPPER_LID_UP_DEG, UPPER_LID_DOWN_DEG) } else { (LOWER_LID_UP_DEG, LOWER_LID_DOWN_DEG) };
            let id = vid(k, i);
            let v = face.vertices[id as usize];
            blend_up.entries.push((id, rot_x_toward_y(v, deg_up * shape) - v));
            blend_down.entries.push((id, rot_x_toward_y(v, deg_down * shape) - v));
        }
    }

    // Wrinkle fields over the patch UV chart: a noise band on the upper lid,
    // zero at the margin itself and beyond mid-patch. The downward-gaze field
    // is the same pattern at reduced amplitude (smoothed skin).
    let seed = p.seed;
    let amp = p.wrinkle_amplitude_mm;
    let wrinkle_field_neutral = ScalarField2D::from_fn(128, 32, move |u, v| {
        let upper_mask = if u < 0.5 { (std::f64::consts::PI * u / 0.5).sin() } else { 0.0 };
        let band = if v < 0.5 { (std::f64::consts::PI * v / 0.5).sin() } else { 0.0 };
        let ridges = 0.5 + 0.5 * value_noise_periodic_x(seed, u * 24.0, v * 8.0, 24);
        amp * upper_mask * band * ridges
    });
    let wrinkle_field_down = ScalarField2D::from_fn(128, 32, |u, v| {
        WRINKLE_DOWN_FACTOR * wrinkle_field_neutral.sample(u, v)
    });

    // Landmarks: boundary-ring ids at fixed loop angles. 45..135 degrees for
    // the upper margin, 225..315 for the lower, corners at 0 and 180.
    let eyelid_landmark_vertex_ids =
        [0u32, 6, 9, 12, 15, 18, 24, 30, 33, 36, 39, 42].map(|i| vid(0, i as usize));

    // Lash roots: continuous samples along each margin, just off the corners.
    let margin_point = |phi: f64| {
        let (x, y) = (a * phi.cos(), b * phi.sin());
        Vec3::new(x, y, (r_off * r_off - x * x - y * y).sqrt())
    };
    let mut lash_roots = LashRoots::default();
    for j in 0..p.lash_count {
        let f = (j as f64 + 0.5) / p.lash_count as f64;
        let span = 150.0 - 30.0;
        lash_roots.upper.push(margin_point((30.0 + span * f).to_radians()));
        lash_roots.lower.push(margin_point((210.0 + span * f).to_radians()));
    }

    Ok(EyeRegionModel {
        params: p.clone(),
        face,
        blend_up,
        blend_down,
        wrinkle_field_neutral,
        wrinkle_field_down,
        eyelid_landmark_vertex_ids,
        lash_roots,
    })
}

/// Maps gaze pitch (degrees, positive up) onto the lid blend weight:
/// full-down at -25 maps to 0, full-up at +25 maps to 1.
pub fn eyelid_weight(gaze_pitch_deg: f64) -> Result<f64, EyeRegionError> {
    // Tolerate the same hair's-breadth overshoot the pose validity check
    // does, so a pitch reconstructed through asin(sin(25 degrees)) still
    // poses at the travel limit.
    if !(-25.0 - 1e-9..=25.0 + 1e-9).contains(&gaze_pitch_deg) {
        return Err(EyeRegionError::OutOfRange {
            name: "gaze_pitch",
            value: gaze_pitch_deg,
            lo: -25.0,
            hi: 25.0,
        });
    }
    Ok((gaze_pitch_deg.clamp(-25.0, 25.0) + 25.0) / 50.0)
}

/// Poses the lids: vertices = neutral + w·blend_up + (1−w)·blend_down, plus a
/// wrinkle displacement along the neutral normals sampled from the w-mixed
/// wrinkle field. Affine in w vertex-wise.
pub fn pose_eyelids(m: &EyeRegionModel, w: f64) -> Result<TriMesh, EyeRegionError> {
    if !(0.0..=1.0).contains(&w) {
        return Err(EyeRegionError::OutOfRange { name: "eyelid_weight", value: w, lo: 0.0, hi: 1.0 });
    }
    let mut out = m.face.clone();
    for &(id, d) in &m.blend_up.entries {
        out.vertices[id as usize] += d * w;
    }
    for &(id, d) in &m.blend_down.entries {
        out.vertices[id as usize] += d * (1.0 - w);
    }
    for i in 0..out.vertices.len() {
        let [u, v] = m.face.uvs[i];
        let wrinkle = (1.0 - w) * m.wrinkle_field_down.sample(u, v) + w * m.wrinkle_field_neutral.sample(u, v);
        if wrinkle != 0.0 {
            out.vertices[i] += m.face.normals[i] * wrinkle;
        }
    }
    out.compute_vertex_normals()
        .map_err(|e| EyeRegionError::InvalidParams { reason: format!("posed patch degenerate: {e}") })?;
    Ok(out)
}

/// Vertex ids on the mesh's inner (fissure) boundary loop: boundary edges
/// split into the loop nearer the axis and the outer patch rim.
pub fn fissure_boundary_ids(face: &TriMesh) -> Vec<u32> {
    use std::collections::HashMap;
    let mut edge_count: HashMap<(u32, u32), u32> = HashMap::new();
    for &[a, b, c] in &face.faces {
        for (u, v) in [(a, b), (b, c), (c, a)] {
            *edge_count.entry((u.min(v), u.max(v))).or_insert(0) += 1;
        }
    }
    let mut boundary: Vec<u32> = Vec::new();
    for (&(u, v), &n) in &edge_count {
        if n == 1 {
            boundary.push(u);
            boundary.push(v);
        }
    }
    boundary.sort_unstable();
    boundary.dedup();
    let radius = |id: u32| {
        let v = face.vertices[id as usize];
        (v.x * v.x + v.y * v.y).sqrt()
    };
    let min_r = boundary.iter().map(|&i| radius(i)).fold(f64::INFINITY, f64::min);
    let max_r = boundary.iter().map(|&i| radius(i)).fold(0.0f64, f64::max);
    let split = 0.5 * (min_r + max_r);
    boundary.into_iter().filter(|&i| radius(i) < split).collect()
}

/// Moves every fissure-boundary vertex along its normal onto the eyeball
/// shell. A vertex already on the surface (within 1e-9 mm) stays put; one
/// whose normal-line hit lies beyond `max_snap_mm` raises SnapFailed rather
/// than being clamped.
pub fn snap_eyelids(face: &TriMesh, eyeball_outer: &TriMesh, max_snap_mm: f64) -> Result<TriMesh, EyeRegionError> {
    assert_eq!(face.normals.len(), face.vertices.len(), "snap needs vertex normals");
    let mut out = face.clone();
    for id in fissure_boundary_ids(face) {
        let v = face.vertices[id as usize];
        let distance = eyeball_outer.distance_to_point(v);
        if distance <= 1e-9 {
            continue;
        }
        let n = face.normals[id as usize];
        let mut best: Option<(f64, Vec3)> = None;
        for dir in [n, -n] {
            if let Ok(d) = dir.normalized() {
                if let Some((_, hit)) = intersect_mesh_brute(eyeball_outer, &Ray::new(v, d), 1e-9) {
                    if best.map_or(true, |(t, _)| hit.t < t) {
                        best = Some((hit.t, v + d.as_vec() * hit.t));
                    }
                }
            }
        }
        match best {
            Some((t, p)) if t <= max_snap_mm => out.vertices[id as usize] = p,
            Some((t, _)) => {
                return Err(EyeRegionError::SnapFailed { vertex: id, distance_mm: t, max_snap_mm })
            }
            None => {
                return Err(EyeRegionError::SnapFailed { vertex: id, distance_mm: distance, max_snap_mm })
            }
        }
    }
    out.compute_vertex_normals()
        .map_err(|e| EyeRegionError::InvalidParams { reason: format!("snapped patch degenerate: {e}") })?;
    Ok(out)
}

/// Grows lash strands from the given roots: march along the current
/// direction, nudge the vertical component by the gravity step each segment,
/// renormalize. `gravity_sign` −1 (upper lid) curls strands upward, +1
/// (lower lid) downward.
pub fn grow_lash_strands(
    roots: &[Vec3],
    initial_dirs: &[UnitVec3],
    lash_length_mm: f64,
    gravity_step: f64,
    gravity_sign: i32,
) -> Vec<LashStrand> {
    assert_eq!(roots.len(), initial_dirs.len());
    assert!(gravity_sign == 1 || gravity_sign == -1);
    let seg = lash_length_mm / LASH_SEGMENTS as f64;
    roots
        .iter()
        .zip(initial_dirs)
        .enumerate()
        .map(|(root_index, (&root, &d0))| {
            let mut points = Vec::with_capacity(LASH_SEGMENTS + 1);
            points.push(root);
            let mut pos = root;
            let mut dir = d0.as_vec();
            for _ in 0..LASH_SEGMENTS {
                pos += dir * seg;
                points.push(pos);
                // Negative gravity on the upper lid lifts the tip.
                dir.y += -(gravity_sign as f64) * gravity_step;
                dir = dir.normalized().expect("gravity step keeps direction finite").as_vec();
            }
            LashStrand { points, root_index, thickness_mm: 0.05 }
        })
        .collect()
}

/// Grows the model's lashes for one lid: `gravity_sign` +1 selects the lower
/// lid, −1 the upper. Deterministic per model seed.
pub fn grow_eyelashes(m: &EyeRegionModel, gravity_sign: i32) -> Vec<LashStrand> {
    assert!(gravity_sign == 1 || gravity_sign == -1);
    let roots = if gravity_sign > 0 { &m.lash_roots.lower } else { &m.lash_roots.upper };
    let a = 0.5 * m.params.fissure_width_mm;
    let dirs: Vec<UnitVec3> = roots
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let jitter = seed_chain(m.params.seed, &[0x1a5, gravity_sign.unsigned_abs() as u64 + gravity_sign.is_positive() as u64, j as u64]);
            let jx = ((jitter & 0xffff) as f64 / 65535.0 - 0.5) * 0.08;
            let tilt = if gravity_sign > 0 { -0.18 } else { 0.18 };
            Vec3::new(0.15 * r.x / a + jx, tilt, 0.95).normalized().expect("lash direction is well-formed")
        })
        .collect();
    let seg = m.params.lash_length_mm / LASH_SEGMENTS as f64;
    grow_lash_strands(roots, &dirs, m.params.lash_length_mm, LASH_GRAVITY_FACTOR * seg, gravity_sign)
}

/// Current positions of the 12 eyelid landmarks on a posed face, in the
/// model's fixed anatomical order.
pub fn eyelid_landmarks_3d(m: &EyeRegionModel, posed_face: &TriMesh) -> [Vec3; 12] {
    m.eyelid_landmark_vertex_ids.map(|id| posed_face.vertices[id as usize])
}

/// Ribbon mesh for drawing one lash strand: two offset copies of the
/// polyline joined into thin quads (camera-independent, normal-offset).
pub fn lash_ribbon(strand: &LashStrand) -> TriMesh {
    let n = strand.points.len();
    assert!(n >= 2);
    let half = 0.5 * strand.thickness_mm;
    let mut vertices = Vec::with_capacity(2 * n);
    for (i, &p) in strand.points.iter().enumerate() {
        let t = if i + 1 < n { strand.points[i + 1] - p } else { p - strand.points[i - 1] };
        // Widen sideways: perpendicular to the strand in the x-tangent plane.
        let side = t.cross(Vec3::new(0.0, 0.0, 1.0));
        let side = side.normalized().map(|u| u.as_vec()).unwrap_or(Vec3::new(1.0, 0.0, 0.0));
        vertices.push(p - side * half);
        vertices.push(p + side * half);
    }
    let mut faces = Vec::with_capacity(2 * (n - 1));
    for i in 0..n - 1 {
        let (a, b) = ((2 * i) as u32, (2 * i + 1) as u32);
        let (c, d) = ((2 * i + 2) as u32, (2 * i + 3) as u32);
        faces.push([a, b, d]);
        faces.push([a, d, c]);
    }
    TriMesh::new(vertices, faces)
}
