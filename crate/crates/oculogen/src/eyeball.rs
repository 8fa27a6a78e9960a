//! Parametric two-part eyeball.
//!
//! The outer part is a single closed mesh: a sclera sphere (radius `r1`, at
//! the origin) joined to a corneal cap (radius `r2`, center displaced `d`
//! along +Z) at their circle of intersection — the limbus ring. It renders as
//! a transparent refractive shell. The inner part is a slightly smaller
//! sphere whose +Z cap is flattened into a planar disc carrying the iris and
//! pupil; it renders as a textured diffuse surface seen through the shell.
//!
//! Pupil dilation and iris size are morph targets: sparse per-vertex
//! displacement sets over the disc, blended linearly at pose time. Landmark
//! vertex ids on the pupil and iris rings ride along with the deformation.

use crate::field::{fbm_noise, seed_chain, value_noise_periodic_x, ScalarField2D};
use crate::geom::{Ray, TriMesh, UnitVec3, Vec3};

use serde::{Deserialize, Serialize};

/// Sclera sphere radius, mm.
pub const SCLERA_RADIUS_MM: f64 = 12.0;
/// Corneal sphere radius, mm.
pub const CORNEA_RADIUS_MM: f64 = 8.0;
/// Corneal sphere center displacement along +Z, mm.
pub const CORNEA_OFFSET_MM: f64 = 5.0;
/// Gap between the iris disc and the corneal shell, mm.
pub const CORNEAL_GAP_MM: f64 = 0.5;
/// Refractive index of the corneal shell.
pub const CORNEA_IOR: f64 = 1.376;
/// The inner mesh is inset from the outer shell so the two surfaces never
/// coincide (avoids intersection ambiguity where both would overlap).
pub const INNER_CLEARANCE_MM: f64 = 0.1;
/// Pupil ring radius of the as-built (neutral) disc, mm.
pub const PUPIL_RADIUS_BASE_MM: f64 = 2.0;
/// Pupil radius commanded by dilation 0, mm.
pub const PUPIL_RADIUS_MIN_MM: f64 = 1.5;
/// Pupil radius commanded by dilation 1, mm.
pub const PUPIL_RADIUS_MAX_MM: f64 = 4.0;

/// Iris color family for the procedural iris texture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IrisColor {
    Amber,
    Blue,
    Brown,
    Grey,
}

impl IrisColor {
    pub const ALL: [IrisColor; 4] = [IrisColor::Amber, IrisColor::Blue, IrisColor::Brown, IrisColor::Grey];
}

/// Overall sclera tint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScleraTint {
    White,
    Pink,
    Yellow,
}

impl ScleraTint {
    pub const ALL: [ScleraTint; 3] = [ScleraTint::White, ScleraTint::Pink, ScleraTint::Yellow];
}

/// Full parameterization of one eyeball instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EyeballParams {
    pub r1_mm: f64,
    pub r2_mm: f64,
    pub cornea_offset_mm: f64,
    pub corneal_gap_mm: f64,
    pub pupil_dilation: f64,
    pub iris_scale: f64,
    pub iris_color: IrisColor,
    pub sclera_tint: ScleraTint,
    pub vein_density: f64,
}

impl Default for EyeballParams {
    fn default() -> Self {
        EyeballParams {
            r1_mm: SCLERA_RADIUS_MM,
            r2_mm: CORNEA_RADIUS_MM,
            cornea_offset_mm: CORNEA_OFFSET_MM,
            corneal_gap_mm: CORNEAL_GAP_MM,
            pupil_dilation: 0.2, // commands the as-built 2.0 mm pupil
            iris_scale: 1.0,
            iris_color: IrisColor::Brown,
            sclera_tint: ScleraTint::White,
            vein_density: 0.3,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EyeballError {
    #[error("invalid eyeball parameters: {reason}")]
    InvalidParams { reason: String },
    #[error("{name} = {value} outside [{lo}, {hi}]")]
    OutOfRange { name: &'static str, value: f64, lo: f64, hi: f64 },
}

impl EyeballParams {
    pub fn validate(&self) -> Result<(), EyeballError> {
        let fail = |reason: String| Err(EyeballError::InvalidParams { reason });
        if !(self.r2_mm > 0.0 && self.r2_mm < self.r1_mm) {
            return fail(format!("need 0 < r2 < r1, got r1={} r2={}", self.r1_mm, self.r2_mm));
        }
        let d = self.cornea_offset_mm;
        if !(d > 0.0 && d < self.r1_mm) {
            return fail(format!("cornea offset {d} outside (0, r1)"));
        }
        if !(d > self.r1_mm - self.r2_mm && d < self.r1_mm + self.r2_mm) {
            return fail(format!("spheres do not intersect at offset {d}"));
        }
        if !(self.corneal_gap_mm >= 0.0) {
            return fail(format!("corneal gap {} must be >= 0", self.corneal_gap_mm));
        }
        if !(0.0..=1.0).contains(&self.pupil_dilation) {
            return Err(EyeballError::OutOfRange {
                name: "pupil_dilation",
                value: self.pupil_dilation,
                lo: 0.0,
                hi: 1.0,
            });
        }
        if !(0.95..=1.05).contains(&self.iris_scale) {
            return Err(EyeballError::OutOfRange {
                name: "iris_scale",
                value: self.iris_scale,
                lo: 0.95,
                hi: 1.05,
            });
        }
        if !(0.0..=1.0).contains(&self.vein_density) {
            return Err(EyeballError::OutOfRange {
                name: "vein_density",
                value: self.vein_density,
                lo: 0.0,
                hi: 1.0,
            });
        }
        Ok(())
    }

    /// Height of the limbus plane: the two spheres intersect on the circle
    /// z = (d^2 + r1^2 - r2^2) / (2 d).
    pub fn limbus_z(&self) -> f64 {
        let (r1, r2, d) = (self.r1_mm, self.r2_mm, self.cornea_offset_mm);
        (d * d + r1 * r1 - r2 * r2) / (2.0 * d)
    }

    /// Radius of the limbus ring.
    pub fn limbus_radius(&self) -> f64 {
        let z = self.limbus_z();
        (self.r1_mm * self.r1_mm - z * z).sqrt()
    }

    /// Height of the flattened iris/pupil disc.
    pub fn disc_z(&self) -> f64 {
        self.limbus_z() - self.corneal_gap_mm
    }

    /// Pupil radius commanded by a dilation value in [0, 1].
    pub fn pupil_radius_for_dilation(dilation: f64) -> f64 {
        PUPIL_RADIUS_MIN_MM + (PUPIL_RADIUS_MAX_MM - PUPIL_RADIUS_MIN_MM) * dilation
    }
}

// ---------------------------------------------------------------------------
// Surface-of-revolution scaffolding shared by the outer and inner meshes.
// ---------------------------------------------------------------------------

/// Builds a closed surface of revolution around +Z from a profile of
/// (radius, z) rings, capped by a bottom pole at `z_bottom` and a top pole at
/// `z_top`. Vertex layout: bottom pole, then rings bottom-to-top each with
/// `segments` vertices, then top pole. Winding is outward.
fn revolve(profile: &[(f64, f64)], z_bottom: f64, z_top: f64, segments: usize) -> TriMesh {
    assert!(profile.len() >= 2 && segments >= 3);
    let mut vertices = Vec::with_capacity(2 + profile.len() * segments);
    vertices.push(Vec3::new(0.0, 0.0, z_bottom));
    for &(r, z) in profile {
        for i in 0..segments {
            let a = 2.0 * std::f64::consts::PI * i as f64 / segments as f64;
            vertices.push(Vec3::new(r * a.cos(), r * a.sin(), z));
        }
    }
    let top = vertices.len() as u32;
    vertices.push(Vec3::new(0.0, 0.0, z_top));

    let ring = |k: usize, i: usize| (1 + k * segments + i % segments) as u32;
    let mut faces = Vec::new();
    for i in 0..segments {
        faces.push([0, ring(0, i + 1), ring(0, i)]);
    }
    for k in 0..profile.len() - 1 {
        for i in 0..segments {
            let (a0, a1) = (ring(k, i), ring(k, i + 1));
            let (b0, b1) = (ring(k + 1, i), ring(k + 1, i + 1));
            faces.push([a0, a1, b1]);
            faces.push([a0, b1, b0]);
        }
    }
    let last = profile.len() - 1;
    for i in 0..segments {
        faces.push([top, ring(last, i), ring(last, i + 1)]);
    }
    TriMesh::new(vertices, faces)
}

fn ring_vertex_id(k: usize, i: usize, segments: usize) -> u32 {
    (1 + k * segments + i % segments) as u32
}

// ---------------------------------------------------------------------------
// Outer mesh: sclera sphere + corneal cap, joined at the limbus.
// ---------------------------------------------------------------------------

/// Maximum crease allowed across the limbus seam after smoothing, degrees.
const SEAM_DIHEDRAL_LIMIT_DEG: f64 = 15.0;
const SEAM_SMOOTH_MAX_ITERS: usize = 50;

/// Builds the closed transparent shell: sclera sphere joined to the corneal
/// cap at the limbus ring, with the rings adjacent to the seam
/// Laplacian-smoothed until the crease across every seam edge is below 15
/// degrees. The seam ring itself is never moved, so the built limbus radius
/// is exact.
pub fn build_outer_mesh(p: &EyeballParams, subdivisions: usize) -> Result<TriMesh, EyeballError> {
    p.validate()?;
    assert!(subdivisions >= 3, "subdivisions must be >= 3");
    let segments = 8 * subdivisions;
    let (r1, r2, d) = (p.r1_mm, p.r2_mm, p.cornea_offset_mm);
    let z_seam = p.limbus_z();
    let rho = p.limbus_radius();

    // Sclera: polar angle from the back pole (pi) up to the seam.
    let psi_seam = (z_seam / r1).acos();
    let n_sclera = 4 * subdivisions;
    let mut profile = Vec::new();
    for k in 1..=n_sclera {
        let psi = std::f64::consts::PI + (psi_seam - std::f64::consts::PI) * k as f64 / (n_sclera + 1) as f64;
        profile.push((r1 * psi.sin(), r1 * psi.cos()));
    }
    let seam_ring = profile.len();
    profile.push((rho, z_seam));
    // Cornea: polar angle on the displaced sphere from the seam to the apex.
    let alpha_seam = ((z_seam - d) / r2).acos();
    let n_cornea = 2 * subdivisions;
    for k in 1..=n_cornea {
        let a = alpha_seam * (1.0 - k as f64 / (n_cornea + 1) as f64);
        profile.push((r2 * a.sin(), d + r2 * a.cos()));
    }

    let mut mesh = revolve(&profile, -r1, d + r2, segments);
    smooth_seam(&mut mesh, &profile, seam_ring, segments);

    // UVs: azimuth fraction, profile-arc fraction (poles share u across the
    // wrap; adequate for displacement-field lookups).
    let n_rings = profile.len();
    let mut uvs = vec![[0.0, 0.0]; mesh.vertices.len()];
    uvs[0] = [0.0, 0.0];
    for k in 0..n_rings {
        for i in 0..segments {
            uvs[ring_vertex_id(k, i, segments) as usize] =
                [i as f64 / segments as f64, (k + 1) as f64 / (n_rings + 1) as f64];
        }
    }
    uvs[mesh.vertices.len() - 1] = [0.0, 1.0];
    mesh.uvs = uvs;
    mesh.compute_vertex_normals().expect("revolved shell has no degenerate vertices");
    Ok(mesh)
}

/// Laplacian-relaxes the profile rings on either side of the seam until the
/// maximum dihedral across seam edges is under the limit. Ring topology is
/// the regular revolve grid, so neighbors are (ring +/- 1, same azimuth) and
/// (same ring, azimuth +/- 1).
fn smooth_seam(mesh: &mut TriMesh, profile: &[(f64, f64)], seam_ring: usize, segments: usize) {
    let lambda = 0.5;
    for _ in 0..SEAM_SMOOTH_MAX_ITERS {
        if max_seam_dihedral_deg(mesh, seam_ring, segments) < SEAM_DIHEDRAL_LIMIT_DEG {
            return;
        }
        for &k in &[seam_ring - 1, seam_ring + 1] {
            if k == 0 || k + 1 >= profile.len() {
                continue;
            }
            let current: Vec<Vec3> =
                (0..segments).map(|i| mesh.vertices[ring_vertex_id(k, i, segments) as usize]).collect();
            for i in 0..segments {
                let mut avg = mesh.vertices[ring_vertex_id(k - 1, i, segments) as usize]
                    + mesh.vertices[ring_vertex_id(k + 1, i, segments) as usize]
                    + current[(i + segments - 1) % segments]
                    + current[(i + 1) % segments];
                avg = avg * 0.25;
                let id = ring_vertex_id(k, i, segments) as usize;
                mesh.vertices[id] = mesh.vertices[id].lerp(avg, lambda);
            }
        }
    }
}

/// Largest angle between the face normals meeting across each seam-ring edge.
fn max_seam_dihedral_deg(mesh: &TriMesh, seam_ring: usize, segments: usize) -> f64 {
    let at = |k: usize, i: usize| mesh.vertices[ring_vertex_id(k, i, segments) as usize];
    let mut worst: f64 = 0.0;
    for i in 0..segments {
        // Band below the seam contributes triangle (below_i, seam_{i+1}, seam_i);
        // band above contributes (seam_i, seam_{i+1}, above_{i+1}).
        let n_below = (at(seam_ring, i + 1) - at(seam_ring - 1, i))
            .cross(at(seam_ring, i) - at(seam_ring - 1, i));
        let n_above = (at(seam_ring, i + 1) - at(seam_ring, i))
            .cross(at(seam_ring + 1, i + 1) - at(seam_ring, i));
        let (Ok(a), Ok(b)) = (n_below.normalized(), n_above.normalized()) else {
            continue;
        };
        worst = worst.max(a.angle_deg(b));
    }
    worst
}

// ---------------------------------------------------------------------------
// Inner mesh: inset sphere with the +Z cap flattened into the iris disc.
// ---------------------------------------------------------------------------

/// Describes the inner mesh's disc rings so blending and landmarks can find
/// them again.
#[derive(Debug, Clone)]
pub struct InnerLayout {
    /// Radius of the sphere carrying the scleral part (r1 minus clearance).
    pub sphere_radius: f64,
    /// Disc plane height.
    pub disc_z: f64,
    /// Disc radius where it meets the sphere.
    pub rim_radius: f64,
    /// As-built iris ring radius.
    pub iris_radius: f64,
    /// As-built pupil ring radius (always [`PUPIL_RADIUS_BASE_MM`]).
    pub pupil_radius: f64,
    segments: usize,
    iris_ring: usize,
    pupil_ring: usize,
}

impl InnerLayout {
    pub fn iris_ring_vertex_ids(&self) -> Vec<u32> {
        (0..self.segments).map(|i| ring_vertex_id(self.iris_ring, i, self.segments)).collect()
    }
    pub fn pupil_ring_vertex_ids(&self) -> Vec<u32> {
        (0..self.segments).map(|i| ring_vertex_id(self.pupil_ring, i, self.segments)).collect()
    }
}

/// Builds the interior surface and reports its ring layout.
///
/// The sphere is inset by [`INNER_CLEARANCE_MM`] so it sits strictly inside
/// the shell; the flattening plane is `limbus_z - corneal_gap`, which leaves
/// exactly the commanded gap between the disc and the corneal cap above it.
pub fn build_inner_mesh(p: &EyeballParams, subdivisions: usize) -> Result<(TriMesh, InnerLayout), EyeballError> {
    p.validate()?;
    assert!(subdivisions >= 3, "subdivisions must be >= 3");
    let segments = 8 * subdivisions;
    let r_in = p.r1_mm - INNER_CLEARANCE_MM;
    let z_disc = p.disc_z();
    assert!(
        z_disc < r_in && z_disc > 0.0,
        "disc plane must cut the inset sphere above its equator"
    );
    let rim_radius = (r_in * r_in - z_disc * z_disc).sqrt();
    // Near-zero gaps raise the disc to where the inset sphere narrows below
    // the nominal iris radius; keep the iris ring strictly inside the rim.
    let iris_radius = (p.limbus_radius() * p.iris_scale).min(0.98 * rim_radius);
    let pupil_radius = PUPIL_RADIUS_BASE_MM;
    assert!(pupil_radius < iris_radius && iris_radius < rim_radius);

    // Sphere part: back pole up to the rim circle.
    let psi_rim = (z_disc / r_in).acos();
    let n_sphere = 3 * subdivisions;
    let mut profile = Vec::new();
    for k in 1..=n_sphere {
        let psi = std::f64::consts::PI + (psi_rim - std::f64::consts::PI) * k as f64 / (n_sphere + 1) as f64;
        profile.push((r_in * psi.sin(), r_in * psi.cos()));
    }
    let rim_ring = profile.len();
    profile.push((rim_radius, z_disc));

    // Disc rings, outside-in, with exact rings at the iris and pupil radii.
    let mut disc_radii = Vec::new();
    let push_span = |radii: &mut Vec<f64>, from: f64, to: f64, steps: usize| {
        for k in 1..=steps {
            radii.push(from + (to - from) * k as f64 / (steps + 1) as f64);
        }
        radii.push(to);
    };
    push_span(&mut disc_radii, rim_radius, iris_radius, 2);
    let iris_ring = rim_ring + disc_radii.len();
    push_span(&mut disc_radii, iris_radius, pupil_radius, subdivisions);
    let pupil_ring = rim_ring + disc_radii.len();
    push_span(&mut disc_radii, pupil_radius, pupil_radius / (subdivisions as f64), subdivisions / 2);
    for r in disc_radii {
        profile.push((r, z_disc));
    }

    // `revolve` treats rings in order and caps with poles; the top pole at the
    // disc plane closes the disc center.
    let mut mesh = revolve(&profile, -r_in, z_disc, segments);

    // Planar UVs (x, y footprint over the full eyeball diameter) so the disc
    // regions land at fixed texture radii.
    let diam = 2.0 * p.r1_mm;
    mesh.uvs = mesh
        .vertices
        .iter()
        .map(|v| [0.5 + v.x / diam, 0.5 + v.y / diam])
        .collect();
    mesh.compute_vertex_normals().expect("inner surface has no degenerate vertices");

    let layout = InnerLayout {
        sphere_radius: r_in,
        disc_z: z_disc,
        rim_radius,
        iris_radius,
        pupil_radius,
        segments,
        iris_ring,
        pupil_ring,
    };
    Ok((mesh, layout))
}

// ---------------------------------------------------------------------------
// Blend shapes.
// ---------------------------------------------------------------------------

/// Sparse per-vertex displacement set (a morph target).
#[derive(Debug, Clone, Default)]
pub struct BlendDelta {
    pub entries: Vec<(u32, Vec3)>,
}

impl BlendDelta {
    fn scaled(&self, w: f64) -> impl Iterator<Item = (u32, Vec3)> + '_ {
        self.entries.iter().map(move |&(i, d)| (i, d * w))
    }
}

/// The four named morph targets over the inner disc.
#[derive(Debug, Clone)]
pub struct BlendDeltas {
    pub pupil_dilate: BlendDelta,
    pub pupil_constrict: BlendDelta,
    pub iris_large: BlendDelta,
    pub iris_small: BlendDelta,
}

/// Unit radial influence field for the pupil ring: 1 at the pupil ring,
/// falling to 0 at the disc center and at the iris ring.
fn pupil_influence(r: f64, pupil_r: f64, iris_r: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else if r <= pupil_r {
        r / pupil_r
    } else if r < iris_r {
        (iris_r - r) / (iris_r - pupil_r)
    } else {
        0.0
    }
}

/// Unit radial influence field for the iris ring: 1 at the iris ring, 0 at
/// the pupil ring and at the disc rim (the rim stays glued to the sphere).
fn iris_influence(r: f64, pupil_r: f64, iris_r: f64, rim_r: f64) -> f64 {
    if r <= pupil_r {
        0.0
    } else if r <= iris_r {
        (r - pupil_r) / (iris_r - pupil_r)
    } else if r < rim_r {
        (rim_r - r) / (rim_r - iris_r)
    } else {
        0.0
    }
}

fn build_blend_deltas(mesh: &TriMesh, layout: &InnerLayout) -> BlendDeltas {
    let mut pupil_unit = Vec::new();
    let mut iris_unit = Vec::new();
    for (idx, v) in mesh.vertices.iter().enumerate() {
        // Only disc vertices (at the disc plane) participate.
        if (v.z - layout.disc_z).abs() > 1e-9 {
            continue;
        }
        let r = (v.x * v.x + v.y * v.y).sqrt();
        if r < 1e-12 {
            continue;
        }
        let radial = Vec3::new(v.x / r, v.y / r, 0.0);
        let wp = pupil_influence(r, layout.pupil_radius, layout.iris_radius);
        if wp > 0.0 {
            pupil_unit.push((idx as u32, radial * wp));
        }
        let wi = iris_influence(r, layout.pupil_radius, layout.iris_radius, layout.rim_radius);
        if wi > 0.0 {
            iris_unit.push((idx as u32, radial * wi));
        }
    }
    let scale = |unit: &[(u32, Vec3)], s: f64| BlendDelta {
        entries: unit.iter().map(|&(i, d)| (i, d * s)).collect(),
    };
    // Iris morph extent: 5% of the base limbus radius each way.
    let iris_step = 0.05 * layout.iris_radius;
    BlendDeltas {
        pupil_dilate: scale(&pupil_unit, PUPIL_RADIUS_MAX_MM - PUPIL_RADIUS_BASE_MM),
        pupil_constrict: scale(&pupil_unit, PUPIL_RADIUS_MIN_MM - PUPIL_RADIUS_BASE_MM),
        iris_large: scale(&iris_unit, iris_step),
        iris_small: scale(&iris_unit, -iris_step),
    }
}

// ---------------------------------------------------------------------------
// Assembled model.
// ---------------------------------------------------------------------------

/// The two-part eyeball with morph targets, texture, and landmark anchors.
#[derive(Debug, Clone)]
pub struct EyeballModel {
    pub params: EyeballParams,
    pub outer: TriMesh,
    pub inner: TriMesh,
    pub layout: InnerLayout,
    pub blend_deltas: BlendDeltas,
    pub texture: EyeTexture,
    /// 8 inner-mesh vertex ids on the iris ring, evenly spaced in azimuth.
    pub iris_landmark_vertex_ids: [u32; 8],
    /// 8 inner-mesh vertex ids on the pupil ring.
    pub pupil_landmark_vertex_ids: [u32; 8],
}

impl EyeballModel {
    /// Builds meshes, morph targets, landmarks, and a texture in one go.
    pub fn build(
        p: &EyeballParams,
        subdivisions: usize,
        texture_resolution: usize,
        texture_seed: u64,
    ) -> Result<EyeballModel, EyeballError> {
        let outer = build_outer_mesh(p, subdivisions)?;
        let (inner, layout) = build_inner_mesh(p, subdivisions)?;
        let blend_deltas = build_blend_deltas(&inner, &layout);
        let texture = composite_eye_texture(p, texture_resolution, texture_seed);
        let stride = layout.segments / 8;
        let pick = |ring_ids: Vec<u32>| {
            let mut out = [0u32; 8];
            for (k, slot) in out.iter_mut().enumerate() {
                *slot = ring_ids[k * stride];
            }
            out
        };
        Ok(EyeballModel {
            params: p.clone(),
            iris_landmark_vertex_ids: pick(layout.iris_ring_vertex_ids()),
            pupil_landmark_vertex_ids: pick(layout.pupil_ring_vertex_ids()),
            outer,
            inner,
            layout,
            blend_deltas,
            texture,
        })
    }

    /// Replaces the texture (per-image recompositing with new color/seed).
    pub fn with_texture(mut self, texture: EyeTexture) -> EyeballModel {
        self.texture = texture;
        self
    }
}

/// Applies the pupil and iris morph targets for one configuration.
///
/// `pupil_dilation` in [0, 1] commands a pupil radius on the physiological
/// range [1.5, 4.0] mm; `iris_scale` in [0.95, 1.05] scales the iris ring
/// about the disc center. Returns the deformed inner mesh; vertex order (and
/// hence landmark ids) is unchanged. The disc stays planar, so normals are
/// kept as built.
pub fn apply_blend_shapes(
    m: &EyeballModel,
    pupil_dilation: f64,
    iris_scale: f64,
) -> Result<TriMesh, EyeballError> {
    if !(0.0..=1.0).contains(&pupil_dilation) {
        return Err(EyeballError::OutOfRange {
            name: "pupil_dilation",
            value: pupil_dilation,
            lo: 0.0,
            hi: 1.0,
        });
    }
    if !(0.95..=1.05).contains(&iris_scale) {
        return Err(EyeballError::OutOfRange { name: "iris_scale", value: iris_scale, lo: 0.95, hi: 1.05 });
    }
    let mut mesh = m.inner.clone();
    // Decompose the commanded pupil radius into morph weights relative to the
    // as-built 2.0 mm ring.
    let target = EyeballParams::pupil_radius_for_dilation(pupil_dilation);
    let shift = target - m.layout.pupil_radius;
    let (w_dilate, w_constrict) = if shift >= 0.0 {
        (shift / (PUPIL_RADIUS_MAX_MM - PUPIL_RADIUS_BASE_MM), 0.0)
    } else {
        (0.0, shift / (PUPIL_RADIUS_MIN_MM - PUPIL_RADIUS_BASE_MM))
    };
    // Iris morphs are defined relative to the as-built ring, which already
    // honors the params' own iris_scale.
    let iris_shift = (iris_scale - m.params.iris_scale) * m.params.limbus_radius();
    let step = 0.05 * m.layout.iris_radius;
    let (w_large, w_small) = if iris_shift >= 0.0 { (iris_shift / step, 0.0) } else { (0.0, -iris_shift / step) };

    for (set, w) in [
        (&m.blend_deltas.pupil_dilate, w_dilate),
        (&m.blend_deltas.pupil_constrict, w_constrict),
        (&m.blend_deltas.iris_large, w_large),
        (&m.blend_deltas.iris_small, w_small),
    ] {
        if w == 0.0 {
            continue;
        }
        for (idx, delta) in set.scaled(w) {
            mesh.vertices[idx as usize] += delta;
        }
    }
    Ok(mesh)
}

/// Mean distance of a vertex-id ring from the +Z axis; the measured radius of
/// a blended pupil/iris ring.
pub fn measured_ring_radius(mesh: &TriMesh, ids: &[u32]) -> f64 {
    let sum: f64 = ids
        .iter()
        .map(|&i| {
            let v = mesh.vertices[i as usize];
            (v.x * v.x + v.y * v.y).sqrt()
        })
        .sum();
    sum / ids.len() as f64
}

// ---------------------------------------------------------------------------
// Sclera displacement.
// ---------------------------------------------------------------------------

/// Value-noise bump field for the sclera, resolution `width x height`,
/// amplitude clamped to the 0.2 mm safety bound.
pub fn sclera_bump_field(seed: u64, width: usize, height: usize, amplitude_mm: f64) -> ScalarField2D {
    let amp = amplitude_mm.min(0.2);
    // Periodic in u so revolved surfaces see no wrap seam.
    const PERIOD: i64 = 8;
    ScalarField2D::from_fn(width, height, |u, v| {
        amp * value_noise_periodic_x(seed, u * PERIOD as f64, v * PERIOD as f64, PERIOD)
    })
}

/// Displaces vertices along their normals by the field value sampled at their
/// UV, restricted to the scleral region `z < sclera_z_max` (pass the limbus
/// height for the outer shell, the disc height for the inner surface; pass
/// infinity to displace everything). Requires normals and UVs.
pub fn apply_sclera_displacement(mesh: &TriMesh, field: &ScalarField2D, sclera_z_max: f64) -> TriMesh {
    assert!(
        mesh.normals.len() == mesh.vertices.len() && mesh.uvs.len() == mesh.vertices.len(),
        "displacement needs per-vertex normals and UVs"
    );
    let mut out = mesh.clone();
    for i in 0..out.vertices.len() {
        if out.vertices[i].z < sclera_z_max - 1e-9 {
            let [u, v] = out.uvs[i];
            out.vertices[i] += out.normals[i] * field.sample(u, v);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Procedural eye texture.
// ---------------------------------------------------------------------------

/// Composited albedo texture for the inner surface, addressed by the inner
/// mesh's planar UVs (disc center at (0.5, 0.5), one UV unit spanning the
/// eyeball diameter).
#[derive(Debug, Clone)]
pub struct EyeTexture {
    pub resolution: usize,
    /// Row-major linear RGB in [0, 1].
    pub pixels: Vec<[f64; 3]>,
}

impl EyeTexture {
    /// Bilinear albedo lookup at UV (clamped).
    pub fn sample(&self, u: f64, v: f64) -> [f64; 3] {
        let n = self.resolution;
        let x = u.clamp(0.0, 1.0) * (n - 1) as f64;
        let y = v.clamp(0.0, 1.0) * (n - 1) as f64;
        let x0 = (x.floor() as usize).min(n - 2);
        let y0 = (y.floor() as usize).min(n - 2);
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let at = |i: usize, j: usize| self.pixels[j * n + i];
        let mut out = [0.0; 3];
        for (c, slot) in out.iter_mut().enumerate() {
            let a = at(x0, y0)[c] * (1.0 - fx) + at(x0 + 1, y0)[c] * fx;
            let b = at(x0, y0 + 1)[c] * (1.0 - fx) + at(x0 + 1, y0 + 1)[c] * fx;
            *slot = a + (b - a) * fy;
        }
        out
    }
}

fn iris_palette(color: IrisColor) -> ([f64; 3], [f64; 3]) {
    // (inner, outer) base albedos per family, linear RGB.
    match color {
        IrisColor::Amber => ([0.58, 0.36, 0.10], [0.42, 0.24, 0.07]),
        IrisColor::Blue => ([0.22, 0.36, 0.55], [0.12, 0.22, 0.40]),
        IrisColor::Brown => ([0.30, 0.17, 0.09], [0.18, 0.10, 0.06]),
        IrisColor::Grey => ([0.44, 0.47, 0.49], [0.30, 0.34, 0.37]),
    }
}

fn sclera_palette(tint: ScleraTint) -> [f64; 3] {
    match tint {
        ScleraTint::White => [0.90, 0.90, 0.90],
        ScleraTint::Pink => [0.91, 0.82, 0.82],
        ScleraTint::Yellow => [0.90, 0.87, 0.76],
    }
}

fn smooth01(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Composites the three texture layers — sclera tint, procedural radial-fiber
/// iris, vein network — into one albedo grid. Deterministic per seed; zero
/// vein density reproduces the two-layer composite bit-for-bit.
pub fn composite_eye_texture(p: &EyeballParams, resolution: usize, seed: u64) -> EyeTexture {
    assert!(resolution >= 256, "texture resolution must be >= 256");
    let diam = 2.0 * p.r1_mm;
    let iris_r = p.limbus_radius(); // texture keyed to base radii; morphs carry UVs along
    let pupil_r = PUPIL_RADIUS_BASE_MM;
    let (iris_in, iris_out) = iris_palette(p.iris_color);
    let sclera = sclera_palette(p.sclera_tint);
    let fiber_seed = seed_chain(seed, &[1]);
    let mottle_seed = seed_chain(seed, &[2]);
    let vein_seed = seed_chain(seed, &[3]);

    let mut pixels = Vec::with_capacity(resolution * resolution);
    for j in 0..resolution {
        for i in 0..resolution {
            let u = (i as f64 + 0.5) / resolution as f64;
            let v = (j as f64 + 0.5) / resolution as f64;
            let x = (u - 0.5) * diam;
            let y = (v - 0.5) * diam;
            let r = (x * x + y * y).sqrt();

            let mut rgb = if r < iris_r {
                if r < pupil_r {
                    [0.015, 0.015, 0.015]
                } else {
                    // Radial fibers: angular noise streaked along radius.
                    let ang = y.atan2(x).rem_euclid(2.0 * std::f64::consts::PI);
                    const FIBERS: i64 = 96;
                    let streak = value_noise_periodic_x(
                        fiber_seed,
                        ang / (2.0 * std::f64::consts::PI) * FIBERS as f64,
                        r * 1.5,
                        FIBERS,
                    );
                    let t = (r - pupil_r) / (iris_r - pupil_r);
                    let shade = 0.7 + 0.6 * streak;
                    // Limbal darkening toward the iris edge, pupil-edge soften.
                    let limbal = 1.0 - 0.55 * smooth01((r - (iris_r - 1.0)) / 1.0);
                    let pupil_soft = smooth01((r - pupil_r) / 0.15);
                    let mut c = [0.0; 3];
                    for k in 0..3 {
                        let base = iris_in[k] + (iris_out[k] - iris_in[k]) * t;
                        c[k] = (base * shade * limbal * pupil_soft).clamp(0.0, 1.0);
                    }
                    c
                }
            } else {
                // Sclera: tint with an achromatic mottle so white stays white.
                let mottle = 1.0 - 0.05 * fbm_noise(mottle_seed, x * 0.4, y * 0.4, 3);
                [sclera[0] * mottle, sclera[1] * mottle, sclera[2] * mottle]
            };

            // Vein layer, sclera only. Ridged noise thresholded into thin
            // red curves; density 0 contributes exactly nothing.
            if p.vein_density > 0.0 && r >= iris_r {
                let n = fbm_noise(vein_seed, x * 0.55, y * 0.55, 4);
                let ridge = 1.0 - (2.0 * n - 1.0).abs();
                let threshold = 1.0 - 0.07 * p.vein_density;
                if ridge > threshold {
                    let alpha = (((ridge - threshold) / 0.03).min(1.0)) * 0.65;
                    let vein = [0.62, 0.17, 0.15];
                    for k in 0..3 {
                        rgb[k] = rgb[k] * (1.0 - alpha) + vein[k] * alpha;
                    }
                }
            }
            for c in &mut rgb {
                *c = c.clamp(0.0, 1.0);
            }
            pixels.push(rgb);
        }
    }
    EyeTexture { resolution, pixels }
}

// ---------------------------------------------------------------------------
// Mesh quality probes shared with the test suites.
// ---------------------------------------------------------------------------

/// True when every edge of the mesh bounds exactly two faces.
pub fn is_closed_two_manifold(mesh: &TriMesh) -> bool {
    use std::collections::HashMap;
    let mut edges: HashMap<(u32, u32), u32> = HashMap::new();
    for &[a, b, c] in &mesh.faces {
        for (u, v) in [(a, b), (b, c), (c, a)] {
            *edges.entry((u.min(v), u.max(v))).or_insert(0) += 1;
        }
    }
    edges.values().all(|&n| n == 2)
}

/// Parity-based point-in-mesh test: counts crossings of a fixed oblique ray.
pub fn point_inside_mesh(mesh: &TriMesh, p: Vec3) -> bool {
    // Oblique irrational-ish direction to dodge edge/vertex grazing.
    let dir = Vec3::new(0.2137, 0.5391, 0.8127).normalized().unwrap();
    crate::geom::count_crossings(mesh, &Ray::new(p, dir), 1e-9) % 2 == 1
}

/// Minimum distance from any disc vertex to the corneal-cap faces of the
/// outer shell (faces whose vertices all sit at or above the limbus plane).
pub fn min_disc_to_cornea_distance(inner: &TriMesh, layout: &InnerLayout, outer: &TriMesh, limbus_z: f64) -> f64 {
    let cap_faces: Vec<usize> = (0..outer.faces.len())
        .filter(|&f| {
            let (a, b, c) = outer.face_vertices(f);
            a.z >= limbus_z - 1e-9 && b.z >= limbus_z - 1e-9 && c.z >= limbus_z - 1e-9
        })
        .collect();
    let mut best = f64::INFINITY;
    for v in inner.vertices.iter().filter(|v| (v.z - layout.disc_z).abs() < 1e-9) {
        for &f in &cap_faces {
            let (a, b, c) = outer.face_vertices(f);
            best = best.min(crate::geom::point_triangle_distance(*v, a, b, c));
        }
    }
    best
}

/// Convenience for tests: a unit direction from spherical test angles.
pub fn unit_from_angles(theta_deg: f64, phi_deg: f64) -> UnitVec3 {
    let t = theta_deg.to_radians();
    let p = phi_deg.to_radians();
    Vec3::new(p.cos() * t.sin(), p.sin(), p.cos() * t.cos()).normalized().unwrap()
}
