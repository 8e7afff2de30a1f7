//! Wavefront OBJ reader/writer (geometry only: `v` and `f` records).

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::Point3;

use super::TriangleMesh;
use crate::{Error, Result};

pub fn load(path: &Path) -> Result<TriangleMesh> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();

    for (line_no, line) in reader.lines().enumerate() {
        let line_no = line_no + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut coords = [0.0f64; 3];
                for c in &mut coords {
                    let tok = tokens.next().ok_or_else(|| {
                        Error::parse(path, line_no, "vertex needs 3 coordinates")
                    })?;
                    *c = tok.parse().map_err(|_| {
                        Error::parse(path, line_no, format!("bad coordinate '{}'", tok))
                    })?;
                }
                vertices.push(Point3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut polygon = Vec::new();
                for tok in tokens {
                    // "f v", "f v/vt", "f v/vt/vn", "f v//vn" — take the
                    // vertex index before the first slash.
                    let head = tok.split('/').next().unwrap_or("");
                    let idx: i64 = head.parse().map_err(|_| {
                        Error::parse(path, line_no, format!("bad face index '{}'", tok))
                    })?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        vertices.len() as i64 + idx // OBJ relative indexing
                    } else {
                        return Err(Error::parse(path, line_no, "face index 0 is invalid"));
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(Error::parse(
                            path,
                            line_no,
                            format!(
                                "face index {} out of range ({} vertices)",
                                idx,
                                vertices.len()
                            ),
                        ));
                    }
                    polygon.push(resolved as u32);
                }
                super::push_polygon(&mut faces, &polygon, vertices.len(), || {
                    (path.to_path_buf(), line_no)
                })?;
            }
            // Normals, texcoords, groups, materials: ignored.
            _ => {}
        }
    }
    Ok(TriangleMesh { vertices, faces })
}

pub fn save(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let mut out = String::new();
    for v in &mesh.vertices {
        // `{}` prints the shortest representation that round-trips f64.
        writeln!(out, "v {} {} {}", v.x, v.y, v.z).unwrap();
    }
    for f in &mesh.faces {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::super::load_mesh;
    use super::*;

    fn write_temp(content: &str) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("m.obj"), content).unwrap();
        dir
    }

    #[test]
    fn quad_face_becomes_two_triangles() {
        let dir = write_temp(
            "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n",
        );
        let mesh = load_mesh(dir.path().join("m.obj")).unwrap();
        assert_eq!(mesh.num_vertices(), 4);
        assert_eq!(mesh.faces, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn slash_forms_and_comments_parse() {
        let dir = write_temp(
            "# comment\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\n",
        );
        let mesh = load_mesh(dir.path().join("m.obj")).unwrap();
        assert_eq!(mesh.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn out_of_range_face_reports_line() {
        let dir = write_temp("v 0 0 0\nv 1 0 0\nf 1 2 9\n");
        let err = load_mesh(dir.path().join("m.obj")).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{}", err);
        assert!(err.contains("out of range"), "{}", err);
    }

    #[test]
    fn negative_relative_indices_resolve() {
        let dir = write_temp("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n");
        let mesh = load_mesh(dir.path().join("m.obj")).unwrap();
        assert_eq!(mesh.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let mesh = crate::shapes::icosphere(0.73, 2);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.obj");
        save(&p, &mesh).unwrap();
        let back = load_mesh(&p).unwrap();
        assert_eq!(mesh, back); // `{}` float formatting round-trips exactly
    }
}
