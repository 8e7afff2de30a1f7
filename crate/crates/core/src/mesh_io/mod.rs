//! Mesh, point-cloud, skeleton, and envelope-model interchange formats.
//!
//! Supported mesh formats: OBJ (`v`/`f` records), OFF, and PLY (ASCII and
//! binary little-endian). Skeletons and oriented point clouds use PLY with
//! `x y z [nx ny nz] [beta]` vertex properties. Envelope models use a binary
//! container with a JSON header (see [`container`]).

pub mod container;
mod obj;
mod off;
pub mod ply;

pub use container::{load_envelope_model, save_envelope_model};
pub use ply::{
    load_point_cloud, load_skeleton, save_point_cloud, save_skeleton, write_atomic, PlyEncoding,
};

use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::geometry::Aabb;
use crate::{Error, Result};

/// Indexed triangle surface. Faces are counter-clockwise when viewed from
/// outside (right-hand rule normals point outward).
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    /// Structural validity: indices in range, no repeated vertex in a face,
    /// finite coordinates.
    pub fn validate(&self) -> Result<()> {
        for (i, v) in self.vertices.iter().enumerate() {
            if !v.coords.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidMesh(format!(
                    "vertex {} has non-finite coordinates",
                    i
                )));
            }
        }
        let n = self.vertices.len() as u32;
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::InvalidMesh(format!(
                    "face {} references vertex out of range (indices {:?}, {} vertices)",
                    i, f, n
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!(
                    "face {} references the same vertex twice ({:?})",
                    i, f
                )));
            }
        }
        Ok(())
    }

    pub fn face_area(&self, f: &[u32; 3]) -> f64 {
        let v0 = self.vertices[f[0] as usize];
        let e1 = self.vertices[f[1] as usize] - v0;
        let e2 = self.vertices[f[2] as usize] - v0;
        0.5 * e1.cross(&e2).norm()
    }

    /// Unit face normal by winding; zero vector for degenerate faces.
    pub fn face_normal(&self, f: &[u32; 3]) -> Vector3<f64> {
        let v0 = self.vertices[f[0] as usize];
        let e1 = self.vertices[f[1] as usize] - v0;
        let e2 = self.vertices[f[2] as usize] - v0;
        let c = e1.cross(&e2);
        let n = c.norm();
        if n > 0.0 {
            c / n
        } else {
            Vector3::zeros()
        }
    }

    pub fn total_area(&self) -> f64 {
        self.faces.iter().map(|f| self.face_area(f)).sum()
    }

    pub fn aabb(&self) -> Aabb {
        let mut b = Aabb::empty();
        for v in &self.vertices {
            b.grow(v);
        }
        b
    }
}

/// The rigid + uniform-scale map taking original coordinates to normalized
/// ones: `x' = (x - center) * scale`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormalizationTransform {
    pub center: [f64; 3],
    pub scale: f64,
}

impl NormalizationTransform {
    pub fn identity() -> Self {
        NormalizationTransform {
            center: [0.0; 3],
            scale: 1.0,
        }
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::new(
            (p.x - self.center[0]) * self.scale,
            (p.y - self.center[1]) * self.scale,
            (p.z - self.center[2]) * self.scale,
        )
    }

    pub fn invert(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::new(
            p.x / self.scale + self.center[0],
            p.y / self.scale + self.center[1],
            p.z / self.scale + self.center[2],
        )
    }
}

/// Target half-extent after normalization; leaves margin to the grid bounds
/// [-1,1]^3 so marching cubes never clips the surface.
pub const NORMALIZED_HALF_EXTENT: f64 = 0.9;

/// Centers the mesh at the origin and scales it so the largest half-extent
/// equals [`NORMALIZED_HALF_EXTENT`].
pub fn normalize_to_unit_cube(mesh: &TriangleMesh) -> Result<(TriangleMesh, NormalizationTransform)> {
    if mesh.vertices.is_empty() {
        return Err(Error::InvalidMesh("cannot normalize an empty mesh".into()));
    }
    let bb = mesh.aabb();
    let center = bb.center();
    let half = (bb.max - bb.min) * 0.5;
    let max_half = half.x.max(half.y).max(half.z);
    if max_half <= 0.0 {
        return Err(Error::InvalidMesh(
            "mesh has zero extent on every axis".into(),
        ));
    }
    let transform = NormalizationTransform {
        center: [center.x, center.y, center.z],
        scale: NORMALIZED_HALF_EXTENT / max_half,
    };
    let vertices = mesh.vertices.iter().map(|v| transform.apply(v)).collect();
    Ok((
        TriangleMesh {
            vertices,
            faces: mesh.faces.clone(),
        },
        transform,
    ))
}

/// Mesh interchange formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Off,
    Ply,
}

/// Format from the file extension, falling back to content sniffing (PLY and
/// OFF magic lines) for unknown extensions.
pub fn detect_format(path: &Path) -> Result<MeshFormat> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("obj") => return Ok(MeshFormat::Obj),
        Some("off") => return Ok(MeshFormat::Off),
        Some("ply") => return Ok(MeshFormat::Ply),
        _ => {}
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let head: String = String::from_utf8_lossy(&bytes[..bytes.len().min(16)]).into_owned();
    if head.starts_with("ply") {
        Ok(MeshFormat::Ply)
    } else if head.starts_with("OFF") {
        Ok(MeshFormat::Off)
    } else {
        Err(Error::UnsupportedFormat(format!(
            "cannot determine mesh format of {}",
            path.display()
        )))
    }
}

/// Loads a triangle mesh, fan-triangulating polygons and dropping degenerate
/// faces (repeated vertex indices).
pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let format = detect_format(path)?;
    load_mesh_format(path, format)
}

pub fn load_mesh_format(path: impl AsRef<Path>, format: MeshFormat) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let mesh = match format {
        MeshFormat::Obj => obj::load(path)?,
        MeshFormat::Off => off::load(path)?,
        MeshFormat::Ply => ply::load_mesh(path)?,
    };
    if mesh.vertices.is_empty() || mesh.faces.is_empty() {
        return Err(Error::InvalidMesh(format!(
            "{}: mesh is empty ({} vertices, {} faces)",
            path.display(),
            mesh.vertices.len(),
            mesh.faces.len()
        )));
    }
    mesh.validate().map_err(|e| match e {
        Error::InvalidMesh(msg) => Error::InvalidMesh(format!("{}: {}", path.display(), msg)),
        other => other,
    })?;
    Ok(mesh)
}

pub fn save_mesh(path: impl AsRef<Path>, mesh: &TriangleMesh) -> Result<()> {
    let path = path.as_ref();
    let format = detect_format_for_save(path)?;
    match format {
        MeshFormat::Obj => obj::save(path, mesh),
        MeshFormat::Off => off::save(path, mesh),
        MeshFormat::Ply => ply::save_mesh(path, mesh, PlyEncoding::BinaryLittleEndian),
    }
}

fn detect_format_for_save(path: &Path) -> Result<MeshFormat> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("obj") => Ok(MeshFormat::Obj),
        Some("off") => Ok(MeshFormat::Off),
        Some("ply") => Ok(MeshFormat::Ply),
        _ => Err(Error::UnsupportedFormat(format!(
            "cannot determine mesh format of {} (use .obj/.off/.ply)",
            path.display()
        ))),
    }
}

/// Shared helper: fan-triangulates a polygon's index loop, dropping
/// degenerate triangles, and checks the index range.
pub(crate) fn push_polygon(
    faces: &mut Vec<[u32; 3]>,
    polygon: &[u32],
    num_vertices: usize,
    context: impl Fn() -> (std::path::PathBuf, usize),
) -> Result<()> {
    if polygon.len() < 3 {
        let (path, line) = context();
        return Err(Error::parse(
            &path,
            line,
            format!("face has {} vertices, need at least 3", polygon.len()),
        ));
    }
    for &idx in polygon {
        if idx as usize >= num_vertices {
            let (path, line) = context();
            return Err(Error::parse(
                &path,
                line,
                format!(
                    "face index {} out of range ({} vertices)",
                    idx, num_vertices
                ),
            ));
        }
    }
    for i in 1..polygon.len() - 1 {
        let tri = [polygon[0], polygon[i], polygon[i + 1]];
        if tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2] {
            faces.push(tri);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn offset_cube() -> TriangleMesh {
        let mut mesh = crate::shapes::box_mesh(&Vector3::new(0.5, 0.5, 0.5));
        for v in &mut mesh.vertices {
            v.coords += Vector3::new(5.0, 5.0, 5.0);
        }
        mesh
    }

    #[test]
    fn normalize_centers_and_scales() {
        let (norm, tf) = normalize_to_unit_cube(&offset_cube()).unwrap();
        let bb = norm.aabb();
        assert!((bb.center().coords.norm()) < 1e-12);
        let half = (bb.max - bb.min) * 0.5;
        assert!((half.x - 0.9).abs() < 1e-12);
        assert!((half.y - 0.9).abs() < 1e-12);
        assert!((half.z - 0.9).abs() < 1e-12);
        // Round-trip through the transform reproduces the original.
        let cube = offset_cube();
        for (v, orig) in norm.vertices.iter().zip(&cube.vertices) {
            assert!((tf.invert(v) - orig).norm() < 1e-6);
        }
    }

    #[test]
    fn normalize_is_idempotent() {
        let (once, _) = normalize_to_unit_cube(&offset_cube()).unwrap();
        let (twice, tf) = normalize_to_unit_cube(&once).unwrap();
        for (a, b) in once.vertices.iter().zip(&twice.vertices) {
            assert!((a - b).norm() < 1e-6);
        }
        assert!((tf.scale - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat_square_normalizes_by_planar_extent() {
        let mesh = crate::shapes::unit_square();
        let (norm, tf) = normalize_to_unit_cube(&mesh).unwrap();
        assert!((tf.scale - 1.8).abs() < 1e-12); // 0.9 / 0.5 half-extent
        let bb = norm.aabb();
        assert_eq!(bb.min.z, 0.0);
        assert_eq!(bb.max.z, 0.0);
    }

    #[test]
    fn zero_extent_mesh_is_rejected() {
        let mesh = TriangleMesh {
            vertices: vec![Point3::origin(); 3],
            faces: vec![[0, 1, 2]],
        };
        assert!(normalize_to_unit_cube(&mesh).is_err());
    }

    #[test]
    fn validate_flags_out_of_range_face() {
        let mesh = TriangleMesh {
            vertices: vec![Point3::origin(), Point3::new(1.0, 0.0, 0.0)],
            faces: vec![[0, 1, 2]],
        };
        let err = mesh.validate().unwrap_err().to_string();
        assert!(err.contains("face 0"), "{}", err);
    }
}
