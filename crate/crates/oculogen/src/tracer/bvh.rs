//! Axis-aligned bounding-box hierarchy over scene triangles.
//!
//! Built by median split on the longest centroid axis with leaves of at most
//! four triangles; coincident centroids fall back to an index split so depth
//! stays logarithmic even for fully degenerate input. Traversal results must
//! match brute force exactly, which the tests enforce.

use crate::geom::{Ray, TriHit, Vec3};

use super::{SceneTriangle, TracerError};

/// Axis-aligned box, padded slightly so rays starting on a face still test.
#[derive(Debug, Clone, Copy)]
pub struct Aabb {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Aabb {
    const EMPTY: Aabb = Aabb {
        lo: Vec3 { x: f64::INFINITY, y: f64::INFINITY, z: f64::INFINITY },
        hi: Vec3 { x: f64::NEG_INFINITY, y: f64::NEG_INFINITY, z: f64::NEG_INFINITY },
    };

    fn grow(&mut self, p: Vec3) {
        self.lo = Vec3::new(self.lo.x.min(p.x), self.lo.y.min(p.y), self.lo.z.min(p.z));
        self.hi = Vec3::new(self.hi.x.max(p.x), self.hi.y.max(p.y), self.hi.z.max(p.z));
    }

    fn pad(mut self) -> Aabb {
        let e = 1e-9;
        self.lo = self.lo - Vec3::new(e, e, e);
        self.hi = self.hi + Vec3::new(e, e, e);
        self
    }

    /// Slab test against a ray with precomputed reciprocal direction.
    fn hit(&self, origin: Vec3, inv_dir: Vec3, t_min: f64, t_max: f64) -> bool {
        let mut t0 = t_min;
        let mut t1 = t_max;
        for axis in 0..3 {
            let (lo, hi, o, inv) = match axis {
                0 => (self.lo.x, self.hi.x, origin.x, inv_dir.x),
                1 => (self.lo.y, self.hi.y, origin.y, inv_dir.y),
                _ => (self.lo.z, self.hi.z, origin.z, inv_dir.z),
            };
            let (a, b) = ((lo - o) * inv, (hi - o) * inv);
            let (near, far) = if a < b { (a, b) } else { (b, a) };
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

#[derive(Debug)]
struct Node {
    aabb: Aabb,
    /// Left child index for interior nodes, first triangle slot for leaves.
    first: u32,
    /// Triangle count; zero marks an interior node (right child = first + skip).
    count: u32,
    /// Right child index (interior nodes only).
    right: u32,
}

/// Flattened hierarchy plus the leaf-ordered triangle permutation.
#[derive(Debug)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
}

/// Builds the hierarchy. Triangle order inside leaves follows `order`.
pub fn build_bvh(tris: &[SceneTriangle]) -> Result<Bvh, TracerError> {
    if tris.is_empty() {
        return Err(TracerError::EmptyScene);
    }
    let mut order: Vec<u32> = (0..tris.len() as u32).collect();
    let mut nodes = Vec::with_capacity(2 * tris.len());
    build_node(tris, &mut order, 0, tris.len(), &mut nodes);
    Ok(Bvh { nodes, order })
}

fn range_bounds(tris: &[SceneTriangle], order: &[u32], start: usize, end: usize) -> Aabb {
    let mut aabb = Aabb::EMPTY;
    for &t in &order[start..end] {
        let tri = &tris[t as usize];
        aabb.grow(tri.a);
        aabb.grow(tri.b);
        aabb.grow(tri.c);
    }
    aabb.pad()
}

fn build_node(
    tris: &[SceneTriangle],
    order: &mut [u32],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> u32 {
    let id = nodes.len() as u32;
    let aabb = range_bounds(tris, order, start, end);
    nodes.push(Node { aabb, first: start as u32, count: (end - start) as u32, right: 0 });
    if end - start <= 4 {
        return id;
    }

    // Longest axis of the centroid spread.
    let mut c_lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut c_hi = -c_lo;
    for &t in &order[start..end] {
        let c = tris[t as usize].centroid();
        c_lo = Vec3::new(c_lo.x.min(c.x), c_lo.y.min(c.y), c_lo.z.min(c.z));
        c_hi = Vec3::new(c_hi.x.max(c.x), c_hi.y.max(c.y), c_hi.z.max(c.z));
    }
    let extent = c_hi - c_lo;
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };
    let spread = [extent.x, extent.y, extent.z][axis];
    if spread > 1e-12 {
        order[start..end].sort_by(|&p, &q| {
            let a = tris[p as usize].centroid().to_array()[axis];
            let b = tris[q as usize].centroid().to_array()[axis];
            a.total_cmp(&b)
        });
    }
    // Median split; coincident centroids still halve the range, bounding depth.
    let mid = start + (end - start) / 2;
    let left = build_node(tris, order, start, mid, nodes);
    let right = build_node(tris, order, mid, end, nodes);
    nodes[id as usize].count = 0;
    nodes[id as usize].first = left;
    nodes[id as usize].right = right;
    id
}

impl Bvh {
    /// Maximum node depth (root = 1), for degeneracy guards.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: u32) -> usize {
            let n = &nodes[id as usize];
            if n.count > 0 {
                1
            } else {
                1 + walk(nodes, n.first).max(walk(nodes, n.right))
            }
        }
        walk(&self.nodes, 0)
    }

    fn inv_dir(ray: &Ray) -> Vec3 {
        let d = ray.dir.as_vec();
        Vec3::new(1.0 / d.x, 1.0 / d.y, 1.0 / d.z)
    }

    /// Nearest hit with `t > t_min`, identical to brute force over all
    /// triangles (ties broken by lowest triangle index).
    pub fn intersect(
        &self,
        tris: &[SceneTriangle],
        ray: &Ray,
        t_min: f64,
    ) -> Option<(usize, TriHit)> {
        let inv = Self::inv_dir(ray);
        let mut best: Option<(usize, TriHit)> = None;
        let mut best_t = f64::INFINITY;
        let mut stack = [0u32; 64];
        let mut top = 0;
        stack[top] = 0;
        top += 1;
        while top > 0 {
            top -= 1;
            let node = &self.nodes[stack[top] as usize];
            if !node.aabb.hit(ray.origin, inv, t_min, best_t) {
                continue;
            }
            if node.count > 0 {
                for &t in &self.order[node.first as usize..(node.first + node.count) as usize] {
                    let tri = &tris[t as usize];
                    if let Some(h) = crate::geom::intersect_triangle(ray, tri.a, tri.b, tri.c, t_min)
                    {
                        let better = h.t < best_t
                            || (h.t == best_t && best.map_or(true, |(i, _)| (t as usize) < i));
                        if better {
                            best_t = h.t;
                            best = Some((t as usize, h));
                        }
                    }
                }
            } else {
                stack[top] = node.first;
                stack[top + 1] = node.right;
                top += 2;
            }
        }
        best
    }

    /// True if anything lies along the ray strictly inside (t_min, t_max).
    pub fn any_hit(&self, tris: &[SceneTriangle], ray: &Ray, t_min: f64, t_max: f64) -> bool {
        let inv = Self::inv_dir(ray);
        let mut stack = [0u32; 64];
        let mut top = 0;
        stack[top] = 0;
        top += 1;
        while top > 0 {
            top -= 1;
            let node = &self.nodes[stack[top] as usize];
            if !node.aabb.hit(ray.origin, inv, t_min, t_max) {
                continue;
            }
            if node.count > 0 {
                for &t in &self.order[node.first as usize..(node.first + node.count) as usize] {
                    let tri = &tris[t as usize];
                    if let Some(h) = crate::geom::intersect_triangle(ray, tri.a, tri.b, tri.c, t_min)
                    {
                        if h.t < t_max {
                            return true;
                        }
                    }
                }
            } else {
                stack[top] = node.first;
                stack[top + 1] = node.right;
                top += 2;
            }
        }
        false
    }
}
