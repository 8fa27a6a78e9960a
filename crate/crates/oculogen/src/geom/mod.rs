//! Core geometry: vectors, rotations, triangle meshes, intersection, OBJ dump.
//!
//! Conventions used throughout the crate:
//! - Right-handed coordinates, +Z is the head's forward axis, +Y up.
//! - Lengths in millimetres, angles in degrees at API boundaries.

mod mesh;
mod obj;
mod rotation;
mod vec;

pub use mesh::{
    count_crossings, icosphere, intersect_mesh_brute, intersect_triangle,
    point_triangle_distance, Ray, TriHit, TriMesh,
};
pub use obj::ObjWriter;
pub use rotation::Rotation;
pub use vec::{
    cartesian_to_spherical, spherical_to_cartesian, SphericalCoord, UnitVec3, Vec3, UNIT_EPS,
};

/// Errors from geometric constructions.
#[derive(Debug, thiserror::Error)]
pub enum GeomError {
    #[error("vector is too short to normalize")]
    ZeroLength,
    #[error("vector is not unit length (norm {norm})")]
    NotUnit { norm: f64 },
    #[error("elevation {phi_deg} degrees outside [-90, 90]")]
    ElevationOutOfRange { phi_deg: f64 },
    #[error("radius {radius_mm} mm must be positive")]
    NonPositiveRadius { radius_mm: f64 },
    #[error("view direction parallel to up vector or zero-length")]
    DegenerateFrame,
    #[error("mesh vertex {vertex} has no usable normal")]
    DegenerateMesh { vertex: usize },
}
