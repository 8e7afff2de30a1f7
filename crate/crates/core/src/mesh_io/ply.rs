//! PLY reader/writer (ASCII and binary little-endian, format 1.0).
//!
//! The reader handles arbitrary scalar/list properties and skips the ones it
//! does not know, so files from other tools load as long as they carry the
//! expected `vertex` (and for meshes `face`) elements. Writers emit `double`
//! precision so round trips are bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};

use super::TriangleMesh;
use crate::geometry::OrientedPointCloud;
use crate::skeletonize::Skeleton;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyEncoding {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(tok: &str) -> Option<Self> {
        Some(match tok {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: ScalarType },
    List { name: String, count_ty: ScalarType, item_ty: ScalarType },
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar { name, .. } | Property::List { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone)]
struct ElementDecl {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

/// One parsed element: per-row scalar values (by property) and list values.
struct ElementData {
    decl: ElementDecl,
    /// scalars[prop_index][row]; empty vec for list properties.
    scalars: Vec<Vec<f64>>,
    /// lists[prop_index][row]; empty vec for scalar properties.
    lists: Vec<Vec<Vec<f64>>>,
}

impl ElementData {
    fn column(&self, name: &str) -> Option<&Vec<f64>> {
        let idx = self
            .decl
            .properties
            .iter()
            .position(|p| p.name() == name && matches!(p, Property::Scalar { .. }))?;
        Some(&self.scalars[idx])
    }

    fn list_column(&self, name: &str) -> Option<&Vec<Vec<f64>>> {
        let idx = self
            .decl
            .properties
            .iter()
            .position(|p| p.name() == name && matches!(p, Property::List { .. }))?;
        Some(&self.lists[idx])
    }
}

struct PlyFile {
    elements: Vec<ElementData>,
}

impl PlyFile {
    fn element(&self, name: &str) -> Option<&ElementData> {
        self.elements.iter().find(|e| e.decl.name == name)
    }
}

struct LineReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    line_no: usize,
}

impl<'a> LineReader<'a> {
    fn next(&mut self) -> Option<(usize, String)> {
        if self.pos >= self.bytes.len() {
            return None;
        }
        let end = self.bytes[self.pos..]
            .iter()
            .position(|&b| b == b'\n')
            .map_or(self.bytes.len(), |p| self.pos + p);
        let raw = &self.bytes[self.pos..end];
        self.pos = end + 1;
        self.line_no += 1;
        Some((
            self.line_no,
            String::from_utf8_lossy(raw).trim_end_matches('\r').to_string(),
        ))
    }
}

fn read_ply(path: &Path) -> Result<PlyFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;

    // --- header ---
    let mut reader = LineReader {
        bytes: &bytes,
        pos: 0,
        line_no: 0,
    };

    let (l, magic) = reader
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    if magic.trim() != "ply" {
        return Err(Error::parse(path, l, "missing 'ply' magic"));
    }
    let mut encoding: Option<PlyEncoding> = None;
    let mut decls: Vec<ElementDecl> = Vec::new();
    let data_offset;
    loop {
        let last_line = reader.line_no;
        let (l, line) = reader
            .next()
            .ok_or_else(|| Error::parse(path, last_line, "header not terminated by end_header"))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.first().copied() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                encoding = Some(match toks.get(1).copied() {
                    Some("ascii") => PlyEncoding::Ascii,
                    Some("binary_little_endian") => PlyEncoding::BinaryLittleEndian,
                    other => {
                        return Err(Error::parse(
                            path,
                            l,
                            format!("unsupported PLY format '{}'", other.unwrap_or("")),
                        ))
                    }
                });
            }
            Some("element") => {
                let name = toks
                    .get(1)
                    .ok_or_else(|| Error::parse(path, l, "element needs a name"))?;
                let count: usize = toks
                    .get(2)
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::parse(path, l, "element needs a count"))?;
                decls.push(ElementDecl {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let decl = decls
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, l, "property before any element"))?;
                if toks.get(1).copied() == Some("list") {
                    let count_ty = toks
                        .get(2)
                        .and_then(|t| ScalarType::parse(t))
                        .ok_or_else(|| Error::parse(path, l, "bad list count type"))?;
                    let item_ty = toks
                        .get(3)
                        .and_then(|t| ScalarType::parse(t))
                        .ok_or_else(|| Error::parse(path, l, "bad list item type"))?;
                    let name = toks
                        .get(4)
                        .ok_or_else(|| Error::parse(path, l, "list property needs a name"))?;
                    decl.properties.push(Property::List {
                        name: name.to_string(),
                        count_ty,
                        item_ty,
                    });
                } else {
                    let ty = toks
                        .get(1)
                        .and_then(|t| ScalarType::parse(t))
                        .ok_or_else(|| Error::parse(path, l, "bad property type"))?;
                    let name = toks
                        .get(2)
                        .ok_or_else(|| Error::parse(path, l, "property needs a name"))?;
                    decl.properties.push(Property::Scalar {
                        name: name.to_string(),
                        ty,
                    });
                }
            }
            Some("end_header") => {
                data_offset = reader.pos;
                break;
            }
            Some(other) => {
                return Err(Error::parse(path, l, format!("unknown header keyword '{}'", other)));
            }
        }
    }
    let header_lines = reader.line_no;
    let encoding =
        encoding.ok_or_else(|| Error::parse(path, header_lines, "header missing 'format' line"))?;

    // --- payload ---
    let mut elements = Vec::with_capacity(decls.len());
    match encoding {
        PlyEncoding::Ascii => {
            let text = String::from_utf8_lossy(&bytes[data_offset..]);
            let mut tokens = text.split_whitespace();
            let mut next_tok = |what: &str| -> Result<f64> {
                let tok = tokens
                    .next()
                    .ok_or_else(|| Error::parse(path, header_lines, format!("unexpected end of data, expected {}", what)))?;
                tok.parse()
                    .map_err(|_| Error::parse(path, header_lines, format!("bad {} '{}'", what, tok)))
            };
            for decl in decls {
                let mut scalars = vec![Vec::new(); decl.properties.len()];
                let mut lists = vec![Vec::new(); decl.properties.len()];
                for _ in 0..decl.count {
                    for (pi, prop) in decl.properties.iter().enumerate() {
                        match prop {
                            Property::Scalar { name, .. } => {
                                scalars[pi].push(next_tok(name)?);
                            }
                            Property::List { name, .. } => {
                                let n = next_tok(name)? as usize;
                                let mut items = Vec::with_capacity(n);
                                for _ in 0..n {
                                    items.push(next_tok(name)?);
                                }
                                lists[pi].push(items);
                            }
                        }
                    }
                }
                elements.push(ElementData { decl, scalars, lists });
            }
        }
        PlyEncoding::BinaryLittleEndian => {
            let mut cursor = &bytes[data_offset..];
            for decl in decls {
                let mut scalars = vec![Vec::new(); decl.properties.len()];
                let mut lists = vec![Vec::new(); decl.properties.len()];
                for _ in 0..decl.count {
                    for (pi, prop) in decl.properties.iter().enumerate() {
                        match prop {
                            Property::Scalar { ty, .. } => {
                                scalars[pi].push(read_scalar(&mut cursor, *ty, path)?);
                            }
                            Property::List { count_ty, item_ty, .. } => {
                                let n = read_scalar(&mut cursor, *count_ty, path)? as usize;
                                let mut items = Vec::with_capacity(n);
                                for _ in 0..n {
                                    items.push(read_scalar(&mut cursor, *item_ty, path)?);
                                }
                                lists[pi].push(items);
                            }
                        }
                    }
                }
                elements.push(ElementData { decl, scalars, lists });
            }
        }
    }
    Ok(PlyFile { elements })
}

fn read_scalar(cursor: &mut &[u8], ty: ScalarType, path: &Path) -> Result<f64> {
    let size = ty.size();
    if cursor.len() < size {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "unexpected end of binary payload".into(),
        });
    }
    let mut buf = [0u8; 8];
    cursor.read_exact(&mut buf[..size]).expect("length checked");
    Ok(match ty {
        ScalarType::I8 => buf[0] as i8 as f64,
        ScalarType::U8 => buf[0] as f64,
        ScalarType::I16 => i16::from_le_bytes([buf[0], buf[1]]) as f64,
        ScalarType::U16 => u16::from_le_bytes([buf[0], buf[1]]) as f64,
        ScalarType::I32 => i32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
        ScalarType::U32 => u32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
        ScalarType::F32 => f32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
        ScalarType::F64 => f64::from_le_bytes(buf),
    })
}

fn vertex_positions(ply: &PlyFile, path: &Path) -> Result<Vec<Point3<f64>>> {
    let vertex = ply
        .element("vertex")
        .ok_or_else(|| Error::parse(path, 0, "missing 'vertex' element"))?;
    let (x, y, z) = match (
        vertex.column("x"),
        vertex.column("y"),
        vertex.column("z"),
    ) {
        (Some(x), Some(y), Some(z)) => (x, y, z),
        _ => return Err(Error::parse(path, 0, "vertex element missing x/y/z properties")),
    };
    Ok(x.iter()
        .zip(y)
        .zip(z)
        .map(|((&x, &y), &z)| Point3::new(x, y, z))
        .collect())
}

// --- meshes ---

pub fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    let ply = read_ply(path)?;
    let vertices = vertex_positions(&ply, path)?;
    let face_el = ply
        .element("face")
        .ok_or_else(|| Error::parse(path, 0, "missing 'face' element"))?;
    let indices = face_el
        .list_column("vertex_indices")
        .or_else(|| face_el.list_column("vertex_index"))
        .ok_or_else(|| Error::parse(path, 0, "face element missing vertex_indices list"))?;
    let mut faces = Vec::new();
    for (row, poly) in indices.iter().enumerate() {
        let polygon: Vec<u32> = poly.iter().map(|&v| v as u32).collect();
        super::push_polygon(&mut faces, &polygon, vertices.len(), || {
            (path.to_path_buf(), row + 1)
        })?;
    }
    Ok(TriangleMesh { vertices, faces })
}

pub fn save_mesh(path: &Path, mesh: &TriangleMesh, encoding: PlyEncoding) -> Result<()> {
    let mut header = String::new();
    header.push_str("ply\n");
    header.push_str(match encoding {
        PlyEncoding::Ascii => "format ascii 1.0\n",
        PlyEncoding::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    header.push_str(&format!("element vertex {}\n", mesh.num_vertices()));
    header.push_str("property double x\nproperty double y\nproperty double z\n");
    header.push_str(&format!("element face {}\n", mesh.num_faces()));
    header.push_str("property list uchar uint vertex_indices\n");
    header.push_str("end_header\n");

    let mut out: Vec<u8> = header.into_bytes();
    match encoding {
        PlyEncoding::Ascii => {
            for v in &mesh.vertices {
                out.extend_from_slice(format!("{} {} {}\n", v.x, v.y, v.z).as_bytes());
            }
            for f in &mesh.faces {
                out.extend_from_slice(format!("3 {} {} {}\n", f[0], f[1], f[2]).as_bytes());
            }
        }
        PlyEncoding::BinaryLittleEndian => {
            for v in &mesh.vertices {
                for c in [v.x, v.y, v.z] {
                    out.extend_from_slice(&c.to_le_bytes());
                }
            }
            for f in &mesh.faces {
                out.push(3);
                for &idx in f {
                    out.extend_from_slice(&idx.to_le_bytes());
                }
            }
        }
    }
    write_atomic(path, &out)
}

// --- skeletons ---

/// Skeleton PLY: `vertex` element with `x y z` plus optional `beta`.
pub fn save_skeleton(path: impl AsRef<Path>, skeleton: &Skeleton) -> Result<()> {
    let path = path.as_ref();
    let n = skeleton.points.len();
    let mut header = String::new();
    header.push_str("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", n));
    header.push_str("property double x\nproperty double y\nproperty double z\n");
    if skeleton.beta.is_some() {
        header.push_str("property double beta\n");
    }
    header.push_str("end_header\n");
    let mut out = header.into_bytes();
    for (i, p) in skeleton.points.iter().enumerate() {
        for c in [p.x, p.y, p.z] {
            out.extend_from_slice(&c.to_le_bytes());
        }
        if let Some(beta) = &skeleton.beta {
            out.extend_from_slice(&beta[i].to_le_bytes());
        }
    }
    write_atomic(path, &out)
}

pub fn load_skeleton(path: impl AsRef<Path>) -> Result<Skeleton> {
    let path = path.as_ref();
    let ply = read_ply(path)?;
    let points = vertex_positions(&ply, path)?;
    let vertex = ply.element("vertex").expect("checked above");
    let beta = vertex.column("beta").cloned();
    if let Some(beta) = &beta {
        if let Some(i) = beta.iter().position(|b| !(*b > 0.0)) {
            return Err(Error::parse(
                path,
                0,
                format!("beta[{}] = {} is not positive", i, beta[i]),
            ));
        }
    }
    let source_index = (0..points.len()).collect();
    Ok(Skeleton {
        points,
        source_index,
        beta,
    })
}

// --- oriented point clouds ---

/// Point-cloud PLY: `x y z nx ny nz` plus optional `beta`.
pub fn save_point_cloud(path: impl AsRef<Path>, cloud: &OrientedPointCloud) -> Result<()> {
    let path = path.as_ref();
    let mut header = String::new();
    header.push_str("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", cloud.len()));
    header.push_str("property double x\nproperty double y\nproperty double z\n");
    header.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    if cloud.beta.is_some() {
        header.push_str("property double beta\n");
    }
    header.push_str("end_header\n");
    let mut out = header.into_bytes();
    for i in 0..cloud.len() {
        let p = cloud.points[i];
        let n = cloud.normals[i];
        for c in [p.x, p.y, p.z, n.x, n.y, n.z] {
            out.extend_from_slice(&c.to_le_bytes());
        }
        if let Some(beta) = &cloud.beta {
            out.extend_from_slice(&beta[i].to_le_bytes());
        }
    }
    write_atomic(path, &out)
}

pub fn load_point_cloud(path: impl AsRef<Path>) -> Result<OrientedPointCloud> {
    let path = path.as_ref();
    let ply = read_ply(path)?;
    let points = vertex_positions(&ply, path)?;
    let vertex = ply.element("vertex").expect("checked above");
    let normals = match (vertex.column("nx"), vertex.column("ny"), vertex.column("nz")) {
        (Some(nx), Some(ny), Some(nz)) => nx
            .iter()
            .zip(ny)
            .zip(nz)
            .map(|((&x, &y), &z)| Vector3::new(x, y, z))
            .collect(),
        _ => {
            return Err(Error::parse(
                path,
                0,
                "point cloud missing nx/ny/nz normal properties",
            ))
        }
    };
    let beta = vertex.column("beta").cloned();
    let mut cloud = OrientedPointCloud::new(points, normals)?;
    cloud.beta = beta;
    cloud.validate()?;
    Ok(cloud)
}

/// Writes through a temp file + rename so readers never observe partial
/// output and failures leave no stray artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or(Path::new(".")))
        .map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
