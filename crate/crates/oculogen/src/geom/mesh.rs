use super::rotation::Rotation;
use super::vec::{UnitVec3, Vec3};
use super::GeomError;

/// Ray with unit direction. `t` parameters are in the same units as origin (mm).
#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: UnitVec3,
}

impl Ray {
    pub fn new(origin: Vec3, dir: UnitVec3) -> Ray {
        Ray { origin, dir }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir.as_vec() * t
    }
}

/// Ray-triangle intersection record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriHit {
    pub t: f64,
    /// Barycentric weight of vertex B.
    pub u: f64,
    /// Barycentric weight of vertex C.
    pub v: f64,
}

/// Watertight enough for our purposes: Moller-Trumbore with a relative epsilon.
///
/// Returns hits with `t > t_min`. Backfaces are reported (two-sided).
pub fn intersect_triangle(ray: &Ray, a: Vec3, b: Vec3, c: Vec3, t_min: f64) -> Option<TriHit> {
    let e1 = b - a;
    let e2 = c - a;
    let d = ray.dir.as_vec();
    let p = d.cross(e2);
    let det = e1.dot(p);
    if det.abs() < 1e-12 {
        return None; // Parallel to the triangle plane.
    }
    let inv_det = 1.0 / det;
    let s = ray.origin - a;
    let u = s.dot(p) * inv_det;
    if !(-1e-9..=1.0 + 1e-9).contains(&u) {
        return None;
    }
    let q = s.cross(e1);
    let v = d.dot(q) * inv_det;
    if v < -1e-9 || u + v > 1.0 + 1e-9 {
        return None;
    }
    let t = e2.dot(q) * inv_det;
    if t <= t_min {
        return None;
    }
    Some(TriHit { t, u, v })
}

/// Indexed triangle mesh with optional per-vertex normals and UVs.
///
/// Indices are `u32`; faces are counter-clockwise when viewed from outside.
#[derive(Debug, Clone, Default)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[u32; 3]>,
    pub normals: Vec<Vec3>,
    pub uvs: Vec<[f64; 2]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> TriMesh {
        TriMesh { vertices, faces, normals: Vec::new(), uvs: Vec::new() }
    }

    pub fn face_vertices(&self, f: usize) -> (Vec3, Vec3, Vec3) {
        let [i, j, k] = self.faces[f];
        (self.vertices[i as usize], self.vertices[j as usize], self.vertices[k as usize])
    }

    /// Geometric (face) normal, unnormalized; norm is twice the face area.
    pub fn face_normal_raw(&self, f: usize) -> Vec3 {
        let (a, b, c) = self.face_vertices(f);
        (b - a).cross(c - a)
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_normal_raw(f).norm() * 0.5).sum()
    }

    /// Area-weighted vertex normals.
    ///
    /// Fails if any vertex ends up with no usable normal (isolated vertex or
    /// all incident faces degenerate).
    pub fn compute_vertex_normals(&mut self) -> Result<(), GeomError> {
        let mut acc = vec![Vec3::ZERO; self.vertices.len()];
        for f in 0..self.faces.len() {
            let n = self.face_normal_raw(f);
            for &i in &self.faces[f] {
                acc[i as usize] += n;
            }
        }
        let mut normals = Vec::with_capacity(acc.len());
        for (i, n) in acc.into_iter().enumerate() {
            match n.normalized() {
                Ok(u) => normals.push(u.as_vec()),
                Err(_) => return Err(GeomError::DegenerateMesh { vertex: i }),
            }
        }
        self.normals = normals;
        Ok(())
    }

    /// Interpolated shading normal at a hit on face `f` (requires normals).
    pub fn shading_normal(&self, f: usize, u: f64, v: f64) -> Vec3 {
        let [i, j, k] = self.faces[f];
        let w = 1.0 - u - v;
        self.normals[i as usize] * w + self.normals[j as usize] * u + self.normals[k as usize] * v
    }

    /// Interpolated UV at a hit on face `f` (requires uvs).
    pub fn interpolate_uv(&self, f: usize, u: f64, v: f64) -> [f64; 2] {
        let [i, j, k] = self.faces[f];
        let w = 1.0 - u - v;
        let (a, b, c) = (self.uvs[i as usize], self.uvs[j as usize], self.uvs[k as usize]);
        [a[0] * w + b[0] * u + c[0] * v, a[1] * w + b[1] * u + c[1] * v]
    }

    /// Rigid transform: rotate about the origin, then translate.
    pub fn transformed(&self, rot: Rotation, translation: Vec3) -> TriMesh {
        let mut out = self.clone();
        for v in &mut out.vertices {
            *v = rot.apply(*v) + translation;
        }
        for n in &mut out.normals {
            *n = rot.apply(*n);
        }
        out
    }

    /// Append another mesh, offsetting its indices.
    pub fn append(&mut self, other: &TriMesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.faces.extend(other.faces.iter().map(|&[a, b, c]| [a + base, b + base, c + base]));
        // Normals/uvs only stay meaningful when both sides carry them.
        if !self.normals.is_empty() && !other.normals.is_empty() {
            self.normals.extend_from_slice(&other.normals);
        } else {
            self.normals.clear();
        }
        if !self.uvs.is_empty() && !other.uvs.is_empty() {
            self.uvs.extend_from_slice(&other.uvs);
        } else {
            self.uvs.clear();
        }
    }

    /// Axis-aligned bounds; None for empty meshes.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        let mut lo = first;
        let mut hi = first;
        for v in &self.vertices {
            lo = Vec3::new(lo.x.min(v.x), lo.y.min(v.y), lo.z.min(v.z));
            hi = Vec3::new(hi.x.max(v.x), hi.y.max(v.y), hi.z.max(v.z));
        }
        Some((lo, hi))
    }

    /// Closest distance from `p` to the mesh surface (brute force over faces).
    pub fn distance_to_point(&self, p: Vec3) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let (a, b, c) = self.face_vertices(f);
                point_triangle_distance(p, a, b, c)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Euclidean distance from a point to a triangle (region-based projection).
pub fn point_triangle_distance(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> f64 {
    // Ericson, "Real-Time Collision Detection": closest point via Voronoi regions.
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (p - a).norm();
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (p - b).norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let t = d1 / (d1 - d3);
        return (p - (a + ab * t)).norm();
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (p - c).norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let t = d2 / (d2 - d6);
        return (p - (a + ac * t)).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + (c - b) * t)).norm();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (p - (a + ab * v + ac * w)).norm()
}

/// Brute-force closest hit over every face of a mesh.
///
/// Reference implementation used to validate accelerated traversal; also fine
/// for small meshes (snapping, visibility probes).
pub fn intersect_mesh_brute(mesh: &TriMesh, ray: &Ray, t_min: f64) -> Option<(usize, TriHit)> {
    let mut best: Option<(usize, TriHit)> = None;
    for f in 0..mesh.faces.len() {
        let (a, b, c) = mesh.face_vertices(f);
        if let Some(h) = intersect_triangle(ray, a, b, c, t_min) {
            if best.map_or(true, |(_, bh)| h.t < bh.t) {
                best = Some((f, h));
            }
        }
    }
    best
}

/// Count of ray-mesh crossings; the parity gives inside/outside for closed meshes.
pub fn count_crossings(mesh: &TriMesh, ray: &Ray, t_min: f64) -> usize {
    let mut n = 0;
    for f in 0..mesh.faces.len() {
        let (a, b, c) = mesh.face_vertices(f);
        if intersect_triangle(ray, a, b, c, t_min).is_some() {
            n += 1;
        }
    }
    n
}

/// Unit icosphere with `subdivisions` rounds of 4-way face splitting.
pub fn icosphere(subdivisions: u32) -> TriMesh {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let verts = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ];
    let mut vertices: Vec<Vec3> = verts
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalized().unwrap().as_vec())
        .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    use std::collections::HashMap;
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let m = (vertices[a as usize] + vertices[b as usize]) * 0.5;
                let m = m.normalized().unwrap().as_vec();
                vertices.push(m);
                (vertices.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    TriMesh::new(vertices, faces)
}
