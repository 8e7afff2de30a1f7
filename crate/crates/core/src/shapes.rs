//! Procedural test fixtures with known analytic geometry: meshes whose
//! medial axes, signed distances, and volumes are available in closed form.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use crate::mesh_io::TriangleMesh;

/// Icosphere: subdivided icosahedron with vertices on the sphere of the
/// given radius. Faces wind counter-clockwise seen from outside.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    let t = (1.0 + 5.0f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ];
    let mut vertices: Vec<Point3<f64>> = raw
        .iter()
        .map(|&(x, y, z)| {
            let v = Vector3::new(x, y, z).normalize() * radius;
            Point3::from(v)
        })
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

    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next_faces = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mut mids = [0u32; 3];
            for e in 0..3 {
                let a = f[e];
                let b = f[(e + 1) % 3];
                let key = (a.min(b), a.max(b));
                mids[e] = *midpoint.entry(key).or_insert_with(|| {
                    let m = nalgebra::center(&vertices[a as usize], &vertices[b as usize]);
                    let v = m.coords.normalize() * radius;
                    vertices.push(Point3::from(v));
                    (vertices.len() - 1) as u32
                });
            }
            next_faces.push([f[0], mids[0], mids[2]]);
            next_faces.push([f[1], mids[1], mids[0]]);
            next_faces.push([f[2], mids[2], mids[1]]);
            next_faces.push([mids[0], mids[1], mids[2]]);
        }
        faces = next_faces;
    }
    TriangleMesh { vertices, faces }
}

/// UV torus around the z axis: major radius `big_r` (core circle), minor
/// radius `small_r` (tube). `nu` segments around the core, `nv` around the
/// tube. Watertight, genus 1, outward winding.
pub fn torus(big_r: f64, small_r: f64, nu: usize, nv: usize) -> TriangleMesh {
    assert!(nu >= 3 && nv >= 3);
    let mut vertices = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / nu as f64;
        for j in 0..nv {
            let phi = 2.0 * std::f64::consts::PI * j as f64 / nv as f64;
            let ring = big_r + small_r * phi.cos();
            vertices.push(Point3::new(
                ring * theta.cos(),
                ring * theta.sin(),
                small_r * phi.sin(),
            ));
        }
    }
    let idx = |i: usize, j: usize| (i % nu * nv + j % nv) as u32;
    let mut faces = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            faces.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            faces.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriangleMesh { vertices, faces }
}

/// Axis-aligned box centered at the origin with the given half extents.
pub fn box_mesh(half: &Vector3<f64>) -> TriangleMesh {
    let (x, y, z) = (half.x, half.y, half.z);
    let vertices = vec![
        Point3::new(-x, -y, -z), // 0
        Point3::new(x, -y, -z),  // 1
        Point3::new(x, y, -z),   // 2
        Point3::new(-x, y, -z),  // 3
        Point3::new(-x, -y, z),  // 4
        Point3::new(x, -y, z),   // 5
        Point3::new(x, y, z),    // 6
        Point3::new(-x, y, z),   // 7
    ];
    let quads: [[u32; 4]; 6] = [
        [0, 3, 2, 1], // -z
        [4, 5, 6, 7], // +z
        [0, 1, 5, 4], // -y
        [2, 3, 7, 6], // +y
        [1, 2, 6, 5], // +x
        [3, 0, 4, 7], // -x
    ];
    let mut faces = Vec::with_capacity(12);
    for q in quads {
        faces.push([q[0], q[1], q[2]]);
        faces.push([q[0], q[2], q[3]]);
    }
    TriangleMesh { vertices, faces }
}

/// The unit square [0,1]^2 in the z=0 plane, normal +z. Open surface.
pub fn unit_square() -> TriangleMesh {
    TriangleMesh {
        vertices: vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ],
        faces: vec![[0, 1, 2], [0, 2, 3]],
    }
}

/// Two square plates [-w,w]^2 at z = ±gap/2 with normals facing away from
/// the slab between them (top +z, bottom -z). The analytic medial surface
/// of the pair is the plane z = 0.
pub fn parallel_plates(half_width: f64, gap: f64) -> TriangleMesh {
    let w = half_width;
    let h = gap / 2.0;
    let vertices = vec![
        // bottom plate, outward normal -z
        Point3::new(-w, -w, -h),
        Point3::new(w, -w, -h),
        Point3::new(w, w, -h),
        Point3::new(-w, w, -h),
        // top plate, outward normal +z
        Point3::new(-w, -w, h),
        Point3::new(w, -w, h),
        Point3::new(w, w, h),
        Point3::new(-w, w, h),
    ];
    let faces = vec![
        [0, 2, 1],
        [0, 3, 2], // bottom, wound for -z
        [4, 5, 6],
        [4, 6, 7], // top, wound for +z
    ];
    TriangleMesh { vertices, faces }
}

/// Two icospheres: radius `r1` at the origin and `r2` at (d, 0, 0). The
/// triangles are concatenated (no CSG), so overlapping configurations keep
/// interior patches; the analytic union SDF is [`union_balls_sdf`].
pub fn two_ball_mesh(r1: f64, r2: f64, d: f64, subdivisions: u32) -> TriangleMesh {
    let a = icosphere(r1, subdivisions);
    let mut b = icosphere(r2, subdivisions);
    let offset = a.num_vertices() as u32;
    let mut vertices = a.vertices;
    for v in &mut b.vertices {
        v.x += d;
    }
    vertices.extend(b.vertices);
    let mut faces = a.faces;
    faces.extend(b.faces.iter().map(|f| [f[0] + offset, f[1] + offset, f[2] + offset]));
    TriangleMesh { vertices, faces }
}

// --- analytic signed distances and volumes ---

pub fn sphere_sdf(p: &Point3<f64>, center: &Point3<f64>, radius: f64) -> f64 {
    (p - center).norm() - radius
}

/// Signed distance to the torus of [`torus`] (core radius `big_r` around the
/// z axis, tube radius `small_r`).
pub fn torus_sdf(p: &Point3<f64>, big_r: f64, small_r: f64) -> f64 {
    let ring = (p.x * p.x + p.y * p.y).sqrt() - big_r;
    (ring * ring + p.z * p.z).sqrt() - small_r
}

/// Signed distance to a union of balls (centers, radii).
pub fn union_balls_sdf(p: &Point3<f64>, balls: &[(Point3<f64>, f64)]) -> f64 {
    balls
        .iter()
        .map(|(c, r)| sphere_sdf(p, c, *r))
        .fold(f64::INFINITY, f64::min)
}

pub fn sphere_volume(r: f64) -> f64 {
    4.0 / 3.0 * std::f64::consts::PI * r.powi(3)
}

/// Volume of the intersection (lens) of two spheres with radii `r1`, `r2`
/// and center distance `d`.
pub fn sphere_overlap_volume(r1: f64, r2: f64, d: f64) -> f64 {
    if d >= r1 + r2 {
        return 0.0;
    }
    if d + r1.min(r2) <= r1.max(r2) {
        return sphere_volume(r1.min(r2)); // one inside the other
    }
    let pi = std::f64::consts::PI;
    pi * (r1 + r2 - d).powi(2)
        * (d * d + 2.0 * d * (r1 + r2) - 3.0 * (r1 - r2).powi(2))
        / (12.0 * d)
}
