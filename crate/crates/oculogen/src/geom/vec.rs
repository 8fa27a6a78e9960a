use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use super::GeomError;

/// Tolerance for unit-length checks.
pub const UNIT_EPS: f64 = 1e-9;

/// 3D vector. Millimetres for positions, dimensionless for directions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3 { x, y, z }
    }

    pub const fn splat(v: f64) -> Vec3 {
        Vec3::new(v, v, v)
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Normalize, erroring on vectors too short to carry a direction.
    pub fn normalized(self) -> Result<UnitVec3, GeomError> {
        let n = self.norm();
        if n < 1e-12 {
            return Err(GeomError::ZeroLength);
        }
        Ok(UnitVec3(self / n))
    }

    /// Component-wise multiplication.
    pub fn mul_elem(self, other: Vec3) -> Vec3 {
        Vec3::new(self.x * other.x, self.y * other.y, self.z * other.z)
    }

    pub fn max_component(self) -> f64 {
        self.x.max(self.y).max(self.z)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn lerp(self, other: Vec3, t: f64) -> Vec3 {
        self + (other - self) * t
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index out of range: {i}"),
        }
    }
}

/// Direction vector with Euclidean norm within [`UNIT_EPS`] of 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitVec3(Vec3);

impl UnitVec3 {
    pub const X: UnitVec3 = UnitVec3(Vec3::X);
    pub const Y: UnitVec3 = UnitVec3(Vec3::Y);
    pub const Z: UnitVec3 = UnitVec3(Vec3::Z);

    pub fn new(v: Vec3) -> Result<UnitVec3, GeomError> {
        if (v.norm() - 1.0).abs() > UNIT_EPS {
            return Err(GeomError::NotUnit { norm: v.norm() });
        }
        Ok(UnitVec3(v))
    }

    pub fn as_vec(self) -> Vec3 {
        self.0
    }

    pub fn dot(self, other: UnitVec3) -> f64 {
        self.0.dot(other.0)
    }

    /// Angle to another unit vector, in degrees. The atan2 form stays
    /// accurate for nearly parallel and nearly opposite vectors, where acos
    /// of the dot product loses half the mantissa.
    pub fn angle_deg(self, other: UnitVec3) -> f64 {
        self.0.cross(other.0).norm().atan2(self.dot(other)).to_degrees()
    }

    /// An arbitrary orthonormal frame (tangent, bitangent) around this normal.
    pub fn orthonormal_basis(self) -> (Vec3, Vec3) {
        let n = self.0;
        // Duff et al. branchless frame construction.
        let sign = if n.z >= 0.0 { 1.0 } else { -1.0 };
        let a = -1.0 / (sign + n.z);
        let b = n.x * n.y * a;
        let t = Vec3::new(1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x);
        let bt = Vec3::new(b, sign + n.y * n.y * a, -n.y);
        (t, bt)
    }
}

impl Neg for UnitVec3 {
    type Output = UnitVec3;
    fn neg(self) -> UnitVec3 {
        UnitVec3(-self.0)
    }
}

impl From<UnitVec3> for Vec3 {
    fn from(u: UnitVec3) -> Vec3 {
        u.0
    }
}

/// Spherical position about a center: azimuth/elevation in degrees, radius in mm.
///
/// Convention: +Z is the head's forward axis, +Y up. theta sweeps azimuth
/// around +Y, phi elevates toward +Y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalCoord {
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub radius_mm: f64,
}

impl SphericalCoord {
    pub fn new(theta_deg: f64, phi_deg: f64, radius_mm: f64) -> Result<Self, GeomError> {
        if !(-90.0..=90.0).contains(&phi_deg) || !phi_deg.is_finite() {
            return Err(GeomError::ElevationOutOfRange { phi_deg });
        }
        if !(radius_mm > 0.0) {
            return Err(GeomError::NonPositiveRadius { radius_mm });
        }
        Ok(SphericalCoord { theta_deg, phi_deg, radius_mm })
    }
}

/// Cartesian point for a spherical coordinate about `center`.
pub fn spherical_to_cartesian(s: SphericalCoord, center: Vec3) -> Vec3 {
    let theta = s.theta_deg.to_radians();
    let phi = s.phi_deg.to_radians();
    center
        + Vec3::new(
            phi.cos() * theta.sin(),
            phi.sin(),
            phi.cos() * theta.cos(),
        ) * s.radius_mm
}

/// Inverse of [`spherical_to_cartesian`]. Radius must be positive.
pub fn cartesian_to_spherical(p: Vec3, center: Vec3) -> Result<SphericalCoord, GeomError> {
    let v = p - center;
    let r = v.norm();
    if r < 1e-12 {
        return Err(GeomError::ZeroLength);
    }
    let phi = (v.y / r).clamp(-1.0, 1.0).asin().to_degrees();
    let theta = v.x.atan2(v.z).to_degrees();
    SphericalCoord::new(theta, phi, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn spherical_axis_aligned() {
        let p = spherical_to_cartesian(SphericalCoord::new(0.0, 0.0, 100.0).unwrap(), Vec3::ZERO);
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.z, 100.0, epsilon = 1e-12);

        let p = spherical_to_cartesian(SphericalCoord::new(90.0, 0.0, 100.0).unwrap(), Vec3::ZERO);
        assert_abs_diff_eq!(p.x, 100.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.z, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn spherical_oblique_matches_reference() {
        // Frozen from an independent scalar evaluation of the formula.
        let p = spherical_to_cartesian(SphericalCoord::new(20.0, 10.0, 100.0).unwrap(), Vec3::ZERO);
        assert_abs_diff_eq!(p.x, 33.68240888334651, epsilon = 1e-9);
        assert_abs_diff_eq!(p.y, 17.364817766693033, epsilon = 1e-9);
        assert_abs_diff_eq!(p.z, 92.54165783983234, epsilon = 1e-9);
    }

    #[test]
    fn spherical_rejects_bad_domain() {
        assert!(SphericalCoord::new(0.0, 95.0, 1.0).is_err());
        assert!(SphericalCoord::new(0.0, 0.0, 0.0).is_err());
        assert!(SphericalCoord::new(0.0, 0.0, -2.0).is_err());
    }

    proptest! {
        #[test]
        fn spherical_round_trip(theta in -179.0f64..179.0, phi in -89.0f64..89.0, r in 1.0f64..500.0) {
            let s = SphericalCoord::new(theta, phi, r).unwrap();
            let p = spherical_to_cartesian(s, Vec3::ZERO);
            let back = cartesian_to_spherical(p, Vec3::ZERO).unwrap();
            prop_assert!((back.theta_deg - theta).abs() < 1e-6);
            prop_assert!((back.phi_deg - phi).abs() < 1e-6);
            prop_assert!((back.radius_mm - r).abs() < 1e-6);
        }

        #[test]
        fn cross_is_orthogonal(ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0,
                               bx in -1.0f64..1.0, by in -1.0f64..1.0, bz in -1.0f64..1.0) {
            let a = Vec3::new(ax, ay, az);
            let b = Vec3::new(bx, by, bz);
            let c = a.cross(b);
            prop_assert!(c.dot(a).abs() < 1e-9);
            prop_assert!(c.dot(b).abs() < 1e-9);
        }
    }

    #[test]
    fn unit_vec_rejects_non_unit() {
        assert!(UnitVec3::new(Vec3::new(1.0, 1.0, 0.0)).is_err());
        assert!(UnitVec3::new(Vec3::X).is_ok());
    }

    #[test]
    fn orthonormal_basis_is_orthonormal() {
        for v in [Vec3::X, Vec3::Y, Vec3::Z, -Vec3::Z, Vec3::new(0.3, -0.8, 0.52)] {
            let n = v.normalized().unwrap();
            let (t, b) = n.orthonormal_basis();
            assert_abs_diff_eq!(t.norm(), 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(b.norm(), 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(t.dot(b), 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(t.dot(n.as_vec()), 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(t.cross(b).dot(n.as_vec()), 1.0, epsilon = 1e-9);
        }
    }
}
