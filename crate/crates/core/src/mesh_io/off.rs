//! Object File Format (OFF) reader/writer.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::Point3;

use super::TriangleMesh;
use crate::{Error, Result};

pub fn load(path: &Path) -> Result<TriangleMesh> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    // Token stream with line tracking; OFF allows counts on the magic line.
    let mut tokens: Vec<(usize, String)> = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let content = line.split('#').next().unwrap_or("");
        for tok in content.split_whitespace() {
            tokens.push((line_no + 1, tok.to_string()));
        }
    }
    let mut cursor = 0usize;
    let mut next = |what: &str| -> Result<(usize, String)> {
        let t = tokens
            .get(cursor)
            .cloned()
            .ok_or_else(|| Error::parse(path, tokens.last().map_or(1, |t| t.0), format!("unexpected end of file, expected {}", what)))?;
        cursor += 1;
        Ok(t)
    };

    let (line, magic) = next("OFF header")?;
    if magic != "OFF" {
        return Err(Error::parse(path, line, format!("expected 'OFF', found '{}'", magic)));
    }
    let parse_usize = |t: (usize, String), what: &str| -> Result<usize> {
        t.1.parse()
            .map_err(|_| Error::parse(path, t.0, format!("bad {} '{}'", what, t.1)))
    };
    let parse_f64 = |t: (usize, String), what: &str| -> Result<f64> {
        t.1.parse()
            .map_err(|_| Error::parse(path, t.0, format!("bad {} '{}'", what, t.1)))
    };

    let nv = parse_usize(next("vertex count")?, "vertex count")?;
    let nf = parse_usize(next("face count")?, "face count")?;
    let _ne = parse_usize(next("edge count")?, "edge count")?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let x = parse_f64(next("x")?, "coordinate")?;
        let y = parse_f64(next("y")?, "coordinate")?;
        let z = parse_f64(next("z")?, "coordinate")?;
        vertices.push(Point3::new(x, y, z));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let count_tok = next("face vertex count")?;
        let face_line = count_tok.0;
        let count = parse_usize(count_tok, "face vertex count")?;
        let mut polygon = Vec::with_capacity(count);
        for _ in 0..count {
            let idx = parse_usize(next("face index")?, "face index")? as u32;
            polygon.push(idx);
        }
        super::push_polygon(&mut faces, &polygon, vertices.len(), || {
            (path.to_path_buf(), face_line)
        })?;
    }
    Ok(TriangleMesh { vertices, faces })
}

pub fn save(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "OFF").unwrap();
    writeln!(out, "{} {} 0", mesh.num_vertices(), mesh.num_faces()).unwrap();
    for v in &mesh.vertices {
        writeln!(out, "{} {} {}", v.x, v.y, v.z).unwrap();
    }
    for f in &mesh.faces {
        writeln!(out, "3 {} {} {}", f[0], f[1], f[2]).unwrap();
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::super::load_mesh;
    use super::*;

    #[test]
    fn tetrahedron_loads() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.off");
        std::fs::write(
            &p,
            "OFF\n4 4 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n",
        )
        .unwrap();
        let mesh = load_mesh(&p).unwrap();
        assert_eq!(mesh.num_vertices(), 4);
        assert_eq!(mesh.num_faces(), 4);
    }

    #[test]
    fn counts_on_magic_line_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.off");
        std::fs::write(&p, "OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
        let mesh = load_mesh(&p).unwrap();
        assert_eq!(mesh.num_faces(), 1);
    }

    #[test]
    fn truncated_file_errors_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.off");
        std::fs::write(&p, "OFF\n4 4 0\n0 0 0\n1 0 0\n").unwrap();
        let err = load_mesh(&p).unwrap_err().to_string();
        assert!(err.contains("unexpected end of file"), "{}", err);
    }

    #[test]
    fn round_trip_is_exact() {
        let mesh = crate::shapes::torus(0.6, 0.25, 16, 8);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.off");
        save(&p, &mesh).unwrap();
        assert_eq!(load_mesh(&p).unwrap(), mesh);
    }
}
