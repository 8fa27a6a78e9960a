use serde::{Deserialize, Serialize};

use super::vec::{UnitVec3, Vec3};
use super::GeomError;

/// Rigid rotation stored as a unit quaternion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rotation {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Rotation {
    pub const IDENTITY: Rotation = Rotation { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Rotation by `angle_deg` about `axis` (right-hand rule).
    pub fn from_axis_angle(axis: UnitVec3, angle_deg: f64) -> Rotation {
        let half = angle_deg.to_radians() * 0.5;
        let (s, c) = half.sin_cos();
        let a = axis.as_vec();
        Rotation { w: c, x: a.x * s, y: a.y * s, z: a.z * s }
    }

    /// Minimal rotation carrying `from` onto `to`.
    ///
    /// For anti-parallel inputs the 180-degree axis is chosen deterministically.
    pub fn between(from: UnitVec3, to: UnitVec3) -> Rotation {
        let f = from.as_vec();
        let t = to.as_vec();
        let d = f.dot(t);
        if d > 1.0 - 1e-12 {
            return Rotation::IDENTITY;
        }
        if d < -1.0 + 1e-12 {
            // Any axis orthogonal to `from` works; pick one stably.
            let (axis, _) = from.orthonormal_basis();
            let a = axis.normalized().expect("basis vector is unit");
            return Rotation::from_axis_angle(a, 180.0);
        }
        let axis = f.cross(t);
        let w = 1.0 + d;
        let norm = (w * w + axis.norm_squared()).sqrt();
        Rotation { w: w / norm, x: axis.x / norm, y: axis.y / norm, z: axis.z / norm }
    }

    /// Camera orientation: maps camera-local axes (X right, Y up, -Z forward)
    /// into world coordinates so that local -Z looks from `eye` toward
    /// `target` and local +Y lies in the plane spanned by `up` and the view
    /// direction.
    ///
    /// A camera on +Z looking back at the origin gets the identity rotation.
    /// Fails when `eye == target` or the view direction is parallel to `up`.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Rotation, GeomError> {
        let backward = (eye - target).normalized()?.as_vec();
        let right = up
            .cross(backward)
            .normalized()
            .map_err(|_| GeomError::DegenerateFrame)?
            .as_vec();
        let up_ortho = backward.cross(right);
        Rotation::from_basis(right, up_ortho, backward)
    }

    /// Rotation whose columns (images of local X/Y/Z) are the given orthonormal
    /// right-handed triple.
    fn from_basis(x: Vec3, y: Vec3, z: Vec3) -> Result<Rotation, GeomError> {
        let det = x.cross(y).dot(z);
        if (det - 1.0).abs() > 1e-6 {
            return Err(GeomError::DegenerateFrame);
        }
        // Shepperd's method: pick the largest diagonal combination for stability.
        let trace = x.x + y.y + z.z;
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Rotation {
                w: 0.25 * s,
                x: (y.z - z.y) / s,
                y: (z.x - x.z) / s,
                z: (x.y - y.x) / s,
            }
        } else if x.x > y.y && x.x > z.z {
            let s = (1.0 + x.x - y.y - z.z).sqrt() * 2.0;
            Rotation {
                w: (y.z - z.y) / s,
                x: 0.25 * s,
                y: (y.x + x.y) / s,
                z: (z.x + x.z) / s,
            }
        } else if y.y > z.z {
            let s = (1.0 + y.y - x.x - z.z).sqrt() * 2.0;
            Rotation {
                w: (z.x - x.z) / s,
                x: (y.x + x.y) / s,
                y: 0.25 * s,
                z: (z.y + y.z) / s,
            }
        } else {
            let s = (1.0 + z.z - x.x - y.y).sqrt() * 2.0;
            Rotation {
                w: (x.y - y.x) / s,
                x: (z.x + x.z) / s,
                y: (z.y + y.z) / s,
                z: 0.25 * s,
            }
        };
        Ok(q.renormalized())
    }

    fn renormalized(self) -> Rotation {
        let n = (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        Rotation { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    /// Apply the rotation to a vector.
    pub fn apply(self, v: Vec3) -> Vec3 {
        // q v q* via the expanded two-cross-product form.
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v) * 2.0;
        v + t * self.w + u.cross(t)
    }

    /// Apply the rotation to a unit vector (norm is preserved).
    pub fn apply_unit(self, v: UnitVec3) -> UnitVec3 {
        self.apply(v.as_vec())
            .normalized()
            .expect("rotation preserves length")
    }

    pub fn inverse(self) -> Rotation {
        Rotation { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Composition: `(a.then(b)).apply(v) == b.apply(a.apply(v))`.
    pub fn then(self, after: Rotation) -> Rotation {
        let (a, b) = (after, self);
        Rotation {
            w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        }
        .renormalized()
    }
}
