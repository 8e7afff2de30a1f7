//! Bounding-volume hierarchy over mesh triangles with exact nearest-hit ray
//! queries.
//!
//! The tree only prunes; every candidate triangle goes through the same
//! intersection routine as the brute-force path, so accelerated and
//! brute-force results are identical (ties on `t` break to the lower face id
//! in both).

use nalgebra::{Point3, Vector3};

use crate::mesh_io::TriangleMesh;

/// Determinant cutoff below which a ray is treated as parallel to a triangle.
const DET_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn grow(&mut self, p: &Point3<f64>) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(p[a]);
            self.max[a] = self.max[a].max(p[a]);
        }
    }

    pub fn merge(&mut self, other: &Aabb) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(other.min[a]);
            self.max[a] = self.max[a].max(other.max[a]);
        }
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    /// Entry distance of the ray into the box, or `None` when the ray misses
    /// or the box lies entirely before `t_min`.
    fn entry(&self, origin: &Point3<f64>, inv_dir: &Vector3<f64>, t_min: f64, t_max: f64) -> Option<f64> {
        let mut t0 = t_min;
        let mut t1 = t_max;
        for a in 0..3 {
            let ta = (self.min[a] - origin[a]) * inv_dir[a];
            let tb = (self.max[a] - origin[a]) * inv_dir[a];
            let (lo, hi) = if ta <= tb { (ta, tb) } else { (tb, ta) };
            // NaN from 0 * inf means the ray is parallel to this slab pair and
            // the origin sits on a face plane; treat the slab as unbounded.
            if lo.is_finite() || lo.is_infinite() {
                t0 = t0.max(lo);
            }
            if hi.is_finite() || hi.is_infinite() {
                t1 = t1.min(hi);
            }
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }
}

/// A ray hit: parametric distance and the face that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub face: usize,
}

#[derive(Debug, Clone)]
struct BvhNode {
    aabb: Aabb,
    /// Leaf: index of the first triangle; internal: index of the left child
    /// (right child is `index + 1` in `nodes` order is not used here; children
    /// are stored explicitly for clarity).
    left: i32,
    right: i32,
    first: u32,
    count: u32,
}

/// BVH-accelerated ray caster over a triangle mesh.
pub struct RayAccelerator {
    nodes: Vec<BvhNode>,
    /// Triangle order after the median splits; entries index into `faces`.
    order: Vec<u32>,
    tris: Vec<[Point3<f64>; 3]>,
    aabb: Aabb,
}

const LEAF_SIZE: usize = 4;

impl RayAccelerator {
    pub fn build(mesh: &TriangleMesh) -> Self {
        let tris: Vec<[Point3<f64>; 3]> = mesh
            .faces
            .iter()
            .map(|f| {
                [
                    mesh.vertices[f[0] as usize],
                    mesh.vertices[f[1] as usize],
                    mesh.vertices[f[2] as usize],
                ]
            })
            .collect();
        let centroids: Vec<Point3<f64>> = tris
            .iter()
            .map(|t| Point3::from((t[0].coords + t[1].coords + t[2].coords) / 3.0))
            .collect();
        let tri_boxes: Vec<Aabb> = tris
            .iter()
            .map(|t| {
                let mut b = Aabb::empty();
                b.grow(&t[0]);
                b.grow(&t[1]);
                b.grow(&t[2]);
                b
            })
            .collect();

        let mut order: Vec<u32> = (0..tris.len() as u32).collect();
        let mut nodes = Vec::new();
        if !order.is_empty() {
            Self::build_rec(&centroids, &tri_boxes, &mut order, 0, &mut nodes);
        }
        let aabb = if nodes.is_empty() {
            Aabb::empty()
        } else {
            nodes[0].aabb
        };
        RayAccelerator {
            nodes,
            order,
            tris,
            aabb,
        }
    }

    fn build_rec(
        centroids: &[Point3<f64>],
        tri_boxes: &[Aabb],
        order: &mut [u32],
        first: usize,
        nodes: &mut Vec<BvhNode>,
    ) -> i32 {
        let mut aabb = Aabb::empty();
        let mut cbox = Aabb::empty();
        for &i in order.iter() {
            aabb.merge(&tri_boxes[i as usize]);
            cbox.grow(&centroids[i as usize]);
        }
        let node_id = nodes.len() as i32;
        nodes.push(BvhNode {
            aabb,
            left: -1,
            right: -1,
            first: first as u32,
            count: order.len() as u32,
        });
        if order.len() <= LEAF_SIZE {
            return node_id;
        }
        let extent = cbox.max - cbox.min;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        if extent[axis] == 0.0 {
            // All centroids coincide; keep as a (possibly large) leaf.
            return node_id;
        }
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| {
            let ka = centroids[a as usize][axis];
            let kb = centroids[b as usize][axis];
            ka.partial_cmp(&kb).unwrap().then(a.cmp(&b))
        });
        let (lo, hi) = order.split_at_mut(mid);
        let left = Self::build_rec(centroids, tri_boxes, lo, first, nodes);
        let right = Self::build_rec(centroids, tri_boxes, hi, first + mid, nodes);
        nodes[node_id as usize].left = left;
        nodes[node_id as usize].right = right;
        nodes[node_id as usize].count = 0;
        node_id
    }

    pub fn aabb(&self) -> Aabb {
        self.aabb
    }

    pub fn num_triangles(&self) -> usize {
        self.tris.len()
    }

    /// Unit normal of triangle `face`, oriented by its winding; zero for a
    /// degenerate triangle. Callers that only need incidence magnitude should
    /// take the absolute dot product with the ray direction.
    pub fn face_normal(&self, face: usize) -> Vector3<f64> {
        let tri = &self.tris[face];
        let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0]));
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vector3::zeros()
        }
    }

    /// Nearest intersection with `t > t_min`, tie-broken to the lower face id.
    pub fn cast_ray(&self, origin: &Point3<f64>, dir: &Vector3<f64>, t_min: f64) -> Option<RayHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv_dir = Vector3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<RayHit> = None;
        let mut stack: Vec<i32> = vec![0];
        while let Some(node_id) = stack.pop() {
            let node = &self.nodes[node_id as usize];
            let t_cap = best.map_or(f64::INFINITY, |h| h.t);
            let entry = match node.aabb.entry(origin, &inv_dir, t_min, t_cap) {
                Some(e) => e,
                None => continue,
            };
            if entry > t_cap {
                continue;
            }
            if node.left < 0 {
                let first = node.first as usize;
                for &face in &self.order[first..first + node.count as usize] {
                    let tri = &self.tris[face as usize];
                    if let Some(t) = ray_triangle(origin, dir, &tri[0], &tri[1], &tri[2]) {
                        if t > t_min {
                            let cand = RayHit {
                                t,
                                face: face as usize,
                            };
                            best = Some(match best {
                                None => cand,
                                Some(b) => closer(b, cand),
                            });
                        }
                    }
                }
            } else {
                stack.push(node.right);
                stack.push(node.left);
            }
        }
        best
    }

    /// Brute-force reference path: every triangle, same intersection routine.
    pub fn cast_ray_brute(
        &self,
        origin: &Point3<f64>,
        dir: &Vector3<f64>,
        t_min: f64,
    ) -> Option<RayHit> {
        let mut best: Option<RayHit> = None;
        for (face, tri) in self.tris.iter().enumerate() {
            if let Some(t) = ray_triangle(origin, dir, &tri[0], &tri[1], &tri[2]) {
                if t > t_min {
                    let cand = RayHit { t, face };
                    best = Some(match best {
                        None => cand,
                        Some(b) => closer(b, cand),
                    });
                }
            }
        }
        best
    }

    /// Number of intersections with `t > t_min` along the ray, for parity
    /// inside/outside classification of watertight meshes.
    pub fn count_intersections(&self, origin: &Point3<f64>, dir: &Vector3<f64>, t_min: f64) -> usize {
        if self.nodes.is_empty() {
            return 0;
        }
        let inv_dir = Vector3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut count = 0;
        let mut stack: Vec<i32> = vec![0];
        while let Some(node_id) = stack.pop() {
            let node = &self.nodes[node_id as usize];
            if node
                .aabb
                .entry(origin, &inv_dir, t_min, f64::INFINITY)
                .is_none()
            {
                continue;
            }
            if node.left < 0 {
                let first = node.first as usize;
                for &face in &self.order[first..first + node.count as usize] {
                    let tri = &self.tris[face as usize];
                    if let Some(t) = ray_triangle(origin, dir, &tri[0], &tri[1], &tri[2]) {
                        if t > t_min {
                            count += 1;
                        }
                    }
                }
            } else {
                stack.push(node.right);
                stack.push(node.left);
            }
        }
        count
    }
}

fn closer(a: RayHit, b: RayHit) -> RayHit {
    if (b.t, b.face) < (a.t, a.face) {
        b
    } else {
        a
    }
}

/// Moller-Trumbore ray/triangle intersection. Returns the unclamped `t`.
pub fn ray_triangle(
    origin: &Point3<f64>,
    dir: &Vector3<f64>,
    v0: &Point3<f64>,
    v1: &Point3<f64>,
    v2: &Point3<f64>,
) -> Option<f64> {
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    if det.abs() < DET_EPS {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = origin - v0;
    let u = tvec.dot(&pvec) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&e1);
    let v = dir.dot(&qvec) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&qvec) * inv_det;
    if t.is_finite() {
        Some(t)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
        loop {
            let v = Vector3::new(
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
                rng.gen::<f64>() * 2.0 - 1.0,
            );
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                return v / n;
            }
        }
    }

    #[test]
    fn sphere_center_ray_hits_at_radius() {
        let mesh = shapes::icosphere(1.0, 3);
        let accel = RayAccelerator::build(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let dir = random_unit(&mut rng);
            let hit = accel.cast_ray(&Point3::origin(), &dir, 0.0).unwrap();
            // Faceting pulls the chord slightly inside the unit sphere.
            assert!((hit.t - 1.0).abs() < 0.02, "t = {}", hit.t);
        }
    }

    #[test]
    fn miss_returns_none() {
        let mesh = shapes::icosphere(1.0, 2);
        let accel = RayAccelerator::build(&mesh);
        let hit = accel.cast_ray(
            &Point3::new(5.0, 0.0, 0.0),
            &Vector3::new(1.0, 0.0, 0.0),
            0.0,
        );
        assert!(hit.is_none());
    }

    #[test]
    fn bvh_matches_brute_force_on_random_rays() {
        for mesh in [
            shapes::icosphere(0.9, 3),
            shapes::torus(0.6, 0.25, 48, 24),
            shapes::box_mesh(&Vector3::new(0.7, 0.5, 0.3)),
        ] {
            let accel = RayAccelerator::build(&mesh);
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            for _ in 0..1000 {
                let origin = Point3::new(
                    rng.gen::<f64>() * 4.0 - 2.0,
                    rng.gen::<f64>() * 4.0 - 2.0,
                    rng.gen::<f64>() * 4.0 - 2.0,
                );
                let dir = random_unit(&mut rng);
                let fast = accel.cast_ray(&origin, &dir, 0.0);
                let slow = accel.cast_ray_brute(&origin, &dir, 0.0);
                match (fast, slow) {
                    (None, None) => {}
                    (Some(a), Some(b)) => {
                        assert!((a.t - b.t).abs() < 1e-9, "t {} vs {}", a.t, b.t);
                    }
                    (a, b) => panic!("hit mismatch: {:?} vs {:?}", a, b),
                }
            }
        }
    }

    #[test]
    fn inward_ray_from_surface_hits_opposite_wall() {
        let mesh = shapes::icosphere(1.0, 3);
        let accel = RayAccelerator::build(&mesh);
        // A vertex of the icosphere lies exactly on the unit sphere.
        let p = mesh.vertices[0];
        let inward = -p.coords.normalize();
        let hit = accel.cast_ray(&p, &inward, 1e-4).unwrap();
        let brute = accel.cast_ray_brute(&p, &inward, 1e-4).unwrap();
        assert_eq!(hit.t, brute.t);
        assert!((hit.t - 2.0).abs() < 0.05, "t = {}", hit.t);
    }

    #[test]
    fn parity_counting_classifies_inside() {
        let mesh = shapes::icosphere(1.0, 3);
        let accel = RayAccelerator::build(&mesh);
        let dir = Vector3::new(0.9351, 0.3781, 0.2357).normalize();
        assert_eq!(accel.count_intersections(&Point3::origin(), &dir, 0.0) % 2, 1);
        let outside = Point3::new(1.7, 0.2, 0.1);
        assert_eq!(accel.count_intersections(&outside, &dir, 0.0) % 2, 0);
    }
}
