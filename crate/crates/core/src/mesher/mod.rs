//! Implicit-to-mesh extraction: scalar grids, marching cubes, and mesh
//! topology reports.

mod tables;

use std::collections::{HashMap, HashSet, VecDeque};

use nalgebra::Point3;
use rayon::prelude::*;

use crate::geometry::Aabb;
use crate::mesh_io::TriangleMesh;
use crate::{Error, Result};

/// Scalar samples on a regular corner lattice: `resolution` counts corners
/// per axis (so a resolution-`n` grid has `n-1` cells per axis), `values`
/// stored x-fastest.
#[derive(Debug, Clone)]
pub struct ScalarGrid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub bounds: Aabb,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.idx(i, j, k)]
    }

    /// World position of corner (i, j, k).
    pub fn corner(&self, i: usize, j: usize, k: usize) -> Point3<f64> {
        let e = self.bounds.max - self.bounds.min;
        Point3::new(
            self.bounds.min.x + e.x * i as f64 / (self.nx - 1) as f64,
            self.bounds.min.y + e.y * j as f64 / (self.ny - 1) as f64,
            self.bounds.min.z + e.z * k as f64 / (self.nz - 1) as f64,
        )
    }

    pub fn cell_size(&self) -> f64 {
        let e = self.bounds.max - self.bounds.min;
        (e.x / (self.nx - 1) as f64)
            .max(e.y / (self.ny - 1) as f64)
            .max(e.z / (self.nz - 1) as f64)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 || self.nz < 2 {
            return Err(Error::Precondition(format!(
                "grid resolution {}x{}x{} too small (need >= 2 corners per axis)",
                self.nx, self.ny, self.nz
            )));
        }
        if self.values.len() != self.nx * self.ny * self.nz {
            return Err(Error::Precondition("value count does not match resolution".into()));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite grid value at index {}", i)));
        }
        Ok(())
    }
}

/// Samples `f` on the corner lattice of `bounds` at the given per-axis
/// resolution. Parallelizes over z-slabs; output order is deterministic.
pub fn eval_on_grid<F>(f: F, resolution: (usize, usize, usize), bounds: Aabb) -> Result<ScalarGrid>
where
    F: Fn(&Point3<f64>) -> f64 + Sync,
{
    let (nx, ny, nz) = resolution;
    if nx < 2 || ny < 2 || nz < 2 {
        return Err(Error::Precondition(format!(
            "grid resolution {}x{}x{} too small (need >= 2 corners per axis)",
            nx, ny, nz
        )));
    }
    let grid = ScalarGrid {
        nx,
        ny,
        nz,
        bounds,
        values: Vec::new(),
    };
    let values: Vec<f64> = (0..nz)
        .into_par_iter()
        .flat_map_iter(|k| {
            let grid = &grid;
            let f = &f;
            (0..ny).flat_map(move |j| {
                (0..nx).map(move |i| f(&grid.corner(i, j, k)))
            })
        })
        .collect();
    let grid = ScalarGrid { values, ..grid };
    grid.validate()?;
    Ok(grid)
}

/// Default reconstruction resolution (corners per axis).
pub const DEFAULT_RESOLUTION: usize = 128;
/// Evaluation-grade resolution.
pub const EVAL_RESOLUTION: usize = 256;

// Local corner offsets in the conventional marching-cubes numbering.
const CORNER_OFFSET: [(usize, usize, usize); 8] = [
    (0, 0, 0),
    (1, 0, 0),
    (1, 1, 0),
    (0, 1, 0),
    (0, 0, 1),
    (1, 0, 1),
    (1, 1, 1),
    (0, 1, 1),
];

/// Extracts the iso-surface of the grid via a 256-case marching-cubes table
/// with linear edge interpolation. Vertices are welded by the lattice edge
/// they lie on, so coincident cell contributions share indices.
pub fn marching_cubes(grid: &ScalarGrid, iso: f64) -> Result<TriangleMesh> {
    grid.validate()?;
    let table = tables::case_table();

    // Phase 1: per z-slab, emit triangles as global edge keys (parallel).
    let slabs: Vec<Vec<[EdgeKey; 3]>> = (0..grid.nz - 1)
        .into_par_iter()
        .map(|k| {
            let mut tris = Vec::new();
            for j in 0..grid.ny - 1 {
                for i in 0..grid.nx - 1 {
                    let mut case = 0usize;
                    for (c, (dx, dy, dz)) in CORNER_OFFSET.iter().enumerate() {
                        if grid.value(i + dx, j + dy, k + dz) < iso {
                            case |= 1 << c;
                        }
                    }
                    for tri in &table[case] {
                        tris.push([
                            edge_key(i, j, k, tri[0]),
                            edge_key(i, j, k, tri[1]),
                            edge_key(i, j, k, tri[2]),
                        ]);
                    }
                }
            }
            tris
        })
        .collect();

    // Phase 2: sequential welding in deterministic slab/cell order.
    let mut vertex_of: HashMap<EdgeKey, u32> = HashMap::new();
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    for slab in slabs {
        for tri in slab {
            let mut idx = [0u32; 3];
            for (slot, key) in tri.iter().enumerate() {
                idx[slot] = *vertex_of.entry(*key).or_insert_with(|| {
                    vertices.push(edge_vertex(grid, *key, iso));
                    (vertices.len() - 1) as u32
                });
            }
            faces.push(idx);
        }
    }
    Ok(TriangleMesh { vertices, faces })
}

/// Marching cubes without materializing the full grid: `f` is evaluated
/// lazily at corner positions (identical arithmetic to [`eval_on_grid`] plus
/// [`marching_cubes`]), and only cells reachable from `seeds` through the
/// iso-surface are visited.
///
/// Starting from the 3x3x3 cell neighborhood of every seed, the flood
/// expands from each sign-mixed cell to its 26 neighbors. Any two cells that
/// contribute triangles sharing a welded vertex straddle a common lattice
/// edge and are therefore mutual 26-neighbors, so every connected component
/// of the dense extraction that contains at least one seeded cell is
/// recovered in full, bit-identically: active cells are emitted in dense
/// scan order, which reproduces the dense path's vertex and face ordering.
/// Components with no seed within one cell of them are the only thing the
/// sparse path can miss.
pub fn marching_cubes_sparse<F>(
    f: F,
    resolution: (usize, usize, usize),
    bounds: Aabb,
    iso: f64,
    seeds: &[Point3<f64>],
) -> Result<SparseExtraction>
where
    F: Fn(&Point3<f64>) -> f64,
{
    let (nx, ny, nz) = resolution;
    if nx < 2 || ny < 2 || nz < 2 {
        return Err(Error::Precondition(format!(
            "grid resolution {}x{}x{} too small (need >= 2 corners per axis)",
            nx, ny, nz
        )));
    }
    let frame = ScalarGrid {
        nx,
        ny,
        nz,
        bounds,
        values: Vec::new(),
    };
    let (ncx, ncy, ncz) = (nx - 1, ny - 1, nz - 1);
    let cell_id = |c: (usize, usize, usize)| (c.0 + ncx * (c.1 + ncy * c.2)) as u64;
    let corner_id = |i: usize, j: usize, k: usize| (i + nx * (j + ny * k)) as u64;

    let mut corner_values: HashMap<u64, f64> = HashMap::new();
    let mut corner_min = f64::INFINITY;
    let mut eval = |i: usize, j: usize, k: usize| -> Result<f64> {
        if let Some(&v) = corner_values.get(&corner_id(i, j, k)) {
            return Ok(v);
        }
        let v = f(&frame.corner(i, j, k));
        if !v.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite implicit value at corner ({}, {}, {})",
                i, j, k
            )));
        }
        corner_min = corner_min.min(v);
        corner_values.insert(corner_id(i, j, k), v);
        Ok(v)
    };

    // Phase 1: flood over sign-mixed cells.
    let mut queued: HashSet<u64> = HashSet::new();
    let mut queue: VecDeque<(usize, usize, usize)> = VecDeque::new();
    let extent = bounds.max - bounds.min;
    for s in seeds {
        let c = (
            cell_axis_index(s.x, bounds.min.x, extent.x, ncx),
            cell_axis_index(s.y, bounds.min.y, extent.y, ncy),
            cell_axis_index(s.z, bounds.min.z, extent.z, ncz),
        );
        for cell in neighborhood(c, (ncx, ncy, ncz)) {
            if queued.insert(cell_id(cell)) {
                queue.push_back(cell);
            }
        }
    }
    let mut active: Vec<(usize, usize, usize)> = Vec::new();
    while let Some((ci, cj, ck)) = queue.pop_front() {
        let mut case = 0usize;
        for (c, (dx, dy, dz)) in CORNER_OFFSET.iter().enumerate() {
            if eval(ci + dx, cj + dy, ck + dz)? < iso {
                case |= 1 << c;
            }
        }
        if case == 0 || case == 255 {
            continue;
        }
        active.push((ci, cj, ck));
        for cell in neighborhood((ci, cj, ck), (ncx, ncy, ncz)) {
            if queued.insert(cell_id(cell)) {
                queue.push_back(cell);
            }
        }
    }
    active.sort_unstable_by_key(|&c| cell_id(c));

    // Phase 2: emit and weld in dense scan order.
    let table = tables::case_table();
    let value = |i: usize, j: usize, k: usize| corner_values[&corner_id(i, j, k)];
    let mut vertex_of: HashMap<EdgeKey, u32> = HashMap::new();
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    for &(ci, cj, ck) in &active {
        let mut case = 0usize;
        for (c, (dx, dy, dz)) in CORNER_OFFSET.iter().enumerate() {
            if value(ci + dx, cj + dy, ck + dz) < iso {
                case |= 1 << c;
            }
        }
        for tri in &table[case] {
            let mut idx = [0u32; 3];
            for (slot, &edge) in tri.iter().enumerate() {
                let key = edge_key(ci, cj, ck, edge);
                idx[slot] = *vertex_of.entry(key).or_insert_with(|| {
                    vertices.push(edge_vertex_with(
                        value,
                        |i, j, k| frame.corner(i, j, k),
                        key,
                        iso,
                    ));
                    (vertices.len() - 1) as u32
                });
            }
            faces.push(idx);
        }
    }
    Ok(SparseExtraction {
        mesh: TriangleMesh { vertices, faces },
        corners_evaluated: corner_values.len(),
        min_value: corner_min,
    })
}

/// Result of [`marching_cubes_sparse`]: the extracted mesh plus evaluation
/// statistics (`min_value` is the minimum over *evaluated* corners, and is
/// `+inf` when no seed was given).
#[derive(Debug, Clone)]
pub struct SparseExtraction {
    pub mesh: TriangleMesh,
    pub corners_evaluated: usize,
    pub min_value: f64,
}

/// Cell index along one axis containing coordinate `x`, clamped into range.
fn cell_axis_index(x: f64, min: f64, extent: f64, ncells: usize) -> usize {
    let t = ((x - min) / extent * ncells as f64).floor();
    (t.max(0.0) as usize).min(ncells - 1)
}

/// In-range 26-neighborhood of a cell, itself included, in fixed scan order.
fn neighborhood(
    c: (usize, usize, usize),
    ncells: (usize, usize, usize),
) -> impl Iterator<Item = (usize, usize, usize)> {
    let lo = |v: usize| v.saturating_sub(1);
    let hi = |v: usize, n: usize| (v + 1).min(n - 1);
    let (xr, yr, zr) = (
        lo(c.0)..=hi(c.0, ncells.0),
        lo(c.1)..=hi(c.1, ncells.1),
        lo(c.2)..=hi(c.2, ncells.2),
    );
    zr.flat_map(move |k| {
        let xr = xr.clone();
        yr.clone()
            .flat_map(move |j| xr.clone().map(move |i| (i, j, k)))
    })
}

/// A lattice edge: corner (i, j, k) plus axis 0/1/2 toward its neighbor.
type EdgeKey = (u32, u32, u32, u8);

/// Maps a cell-local marching-cubes edge id to its global lattice edge.
fn edge_key(i: usize, j: usize, k: usize, edge: u8) -> EdgeKey {
    // (corner a, corner b) per conventional edge numbering; a is chosen as
    // the lexicographically smaller lattice corner so the key is canonical.
    const EDGE_BASE_AXIS: [(usize, u8); 12] = [
        (0, 0),  // e0: 0-1 along x
        (1, 1),  // e1: 1-2 along y
        (3, 0),  // e2: 3-2 along x
        (0, 1),  // e3: 0-3 along y
        (4, 0),  // e4: 4-5 along x
        (5, 1),  // e5: 5-6 along y
        (7, 0),  // e6: 7-6 along x
        (4, 1),  // e7: 4-7 along y
        (0, 2),  // e8: 0-4 along z
        (1, 2),  // e9: 1-5 along z
        (2, 2),  // e10: 2-6 along z
        (3, 2),  // e11: 3-7 along z
    ];
    let (base, axis) = EDGE_BASE_AXIS[edge as usize];
    let (dx, dy, dz) = CORNER_OFFSET[base];
    ((i + dx) as u32, (j + dy) as u32, (k + dz) as u32, axis)
}

/// Interpolated iso-crossing position on a lattice edge.
fn edge_vertex(grid: &ScalarGrid, key: EdgeKey, iso: f64) -> Point3<f64> {
    edge_vertex_with(
        |i, j, k| grid.value(i, j, k),
        |i, j, k| grid.corner(i, j, k),
        key,
        iso,
    )
}

/// `edge_vertex` against caller-supplied corner accessors, shared by the
/// dense and sparse extraction paths so their vertex arithmetic cannot
/// drift apart.
fn edge_vertex_with<V, C>(value: V, corner: C, key: EdgeKey, iso: f64) -> Point3<f64>
where
    V: Fn(usize, usize, usize) -> f64,
    C: Fn(usize, usize, usize) -> Point3<f64>,
{
    let (i, j, k, axis) = key;
    let (i, j, k) = (i as usize, j as usize, k as usize);
    let (i2, j2, k2) = match axis {
        0 => (i + 1, j, k),
        1 => (i, j + 1, k),
        _ => (i, j, k + 1),
    };
    let v0 = value(i, j, k);
    let v1 = value(i2, j2, k2);
    debug_assert!(
        (v0 < iso) != (v1 < iso),
        "marching-cubes vertex on a non-straddling edge"
    );
    let t = (iso - v0) / (v1 - v0);
    let a = corner(i, j, k);
    let b = corner(i2, j2, k2);
    a + t * (b - a)
}

/// Topology summary of a triangle mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct TopologyReport {
    pub num_vertices: usize,
    pub num_edges: usize,
    pub num_faces: usize,
    /// V - E + F.
    pub euler_characteristic: i64,
    pub connected_components: usize,
    /// Edges not shared by exactly two faces.
    pub non_manifold_edges: usize,
    /// Total genus over components; only reported for closed manifolds.
    pub genus: Option<i64>,
}

/// Exact Euler characteristic and (for closed manifold meshes) genus.
pub fn euler_characteristic(mesh: &TriangleMesh) -> TopologyReport {
    let mut edge_count: HashMap<(u32, u32), u32> = HashMap::new();
    for f in &mesh.faces {
        for e in 0..3 {
            let a = f[e];
            let b = f[(e + 1) % 3];
            *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let num_edges = edge_count.len();
    let non_manifold = edge_count.values().filter(|&&c| c != 2).count();
    let chi = mesh.num_vertices() as i64 - num_edges as i64 + mesh.num_faces() as i64;

    // Connected components over vertices used by faces (isolated vertices
    // count as their own components).
    let mut parent: Vec<u32> = (0..mesh.num_vertices() as u32).collect();
    fn find(parent: &mut [u32], x: u32) -> u32 {
        let mut root = x;
        while parent[root as usize] != root {
            root = parent[root as usize];
        }
        let mut cur = x;
        while parent[cur as usize] != root {
            let next = parent[cur as usize];
            parent[cur as usize] = root;
            cur = next;
        }
        root
    }
    for &(a, b) in edge_count.keys() {
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        if ra != rb {
            parent[ra.max(rb) as usize] = ra.min(rb);
        }
    }
    let mut components = 0;
    for v in 0..mesh.num_vertices() as u32 {
        if find(&mut parent, v) == v {
            components += 1;
        }
    }

    let genus = if non_manifold == 0 && !mesh.faces.is_empty() {
        // chi = 2 * components - 2 * total_genus for closed orientable
        // surfaces.
        Some(components as i64 - chi / 2)
    } else {
        None
    };
    TopologyReport {
        num_vertices: mesh.num_vertices(),
        num_edges,
        num_faces: mesh.num_faces(),
        euler_characteristic: chi,
        connected_components: components,
        non_manifold_edges: non_manifold,
        genus,
    }
}

/// Writes grid values as raw little-endian f32 (x-fastest) next to a JSON
/// sidecar `<path>.json` carrying resolution and bounds.
pub fn save_grid_raw(path: impl AsRef<std::path::Path>, grid: &ScalarGrid) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(grid.values.len() * 4);
    for v in &grid.values {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    crate::mesh_io::ply::write_atomic(path, &bytes)?;
    let sidecar = serde_json::json!({
        "resolution": [grid.nx, grid.ny, grid.nz],
        "bounds": {
            "min": [grid.bounds.min.x, grid.bounds.min.y, grid.bounds.min.z],
            "max": [grid.bounds.max.x, grid.bounds.max.y, grid.bounds.max.z],
        },
        "dtype": "f32_le",
        "order": "x_fastest",
    });
    let json = serde_json::to_vec_pretty(&sidecar)
        .map_err(|e| Error::Numeric(format!("sidecar encoding failed: {}", e)))?;
    let mut sidecar_path = path.as_os_str().to_owned();
    sidecar_path.push(".json");
    crate::mesh_io::ply::write_atomic(std::path::Path::new(&sidecar_path), &json)
}

/// The grid domain used throughout: [-1, 1]^3.
pub fn default_bounds() -> Aabb {
    Aabb {
        min: Point3::new(-1.0, -1.0, -1.0),
        max: Point3::new(1.0, 1.0, 1.0),
    }
}
