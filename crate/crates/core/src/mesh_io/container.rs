//! Binary container for envelope models: fixed magic, little-endian u64
//! header length, JSON header, then flat little-endian f64 arrays.
//!
//! Payload layout (all f64 LE):
//! - direction lattice: `num_directions * 3`
//! - per envelope: center (3), bound_radius (1), radii (`num_directions`,
//!   `NaN` marking invalid entries)
//!
//! The encoding is byte-stable: saving the same model twice produces
//! identical files.

use std::path::Path;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::envelope::{EnvelopeMode, EnvelopeModel, MedialEnvelope};
use crate::geometry::DirectionSet;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"MENVLP01";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    mode: EnvelopeMode,
    num_envelopes: usize,
    num_directions: usize,
}

pub fn save_envelope_model(path: impl AsRef<Path>, model: &EnvelopeModel) -> Result<()> {
    let path = path.as_ref();
    let header = Header {
        version: VERSION,
        mode: model.mode,
        num_envelopes: model.envelopes.len(),
        num_directions: model.dirs.len(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::Numeric(format!("header encoding failed: {}", e)))?;

    let payload_len = 8 * (3 * model.dirs.len()
        + model.envelopes.len() * (4 + model.dirs.len()));
    let mut out = Vec::with_capacity(16 + header_json.len() + payload_len);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_json);
    for d in model.dirs.dirs() {
        for c in [d.x, d.y, d.z] {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for e in &model.envelopes {
        for c in [e.center.x, e.center.y, e.center.z, e.bound_radius] {
            out.extend_from_slice(&c.to_le_bytes());
        }
        for r in &e.radii {
            out.extend_from_slice(&r.to_le_bytes());
        }
    }
    super::ply::write_atomic(path, &out)
}

pub fn load_envelope_model(path: impl AsRef<Path>) -> Result<EnvelopeModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::UnsupportedFormat(format!(
            "{}: not an envelope container (bad magic)",
            path.display()
        )));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() < 16 + header_len {
        return Err(Error::parse(path, 0, "truncated header"));
    }
    let header: Header = serde_json::from_slice(&bytes[16..16 + header_len])
        .map_err(|e| Error::parse(path, 0, format!("bad header JSON: {}", e)))?;
    if header.version != VERSION {
        return Err(Error::parse(
            path,
            0,
            format!(
                "envelope container version mismatch: file has {}, reader supports {}",
                header.version, VERSION
            ),
        ));
    }
    if header.num_directions == 0 || header.num_envelopes == 0 {
        return Err(Error::parse(path, 0, "empty direction set or envelope list"));
    }
    let expected = 16
        + header_len
        + 8 * (3 * header.num_directions
            + header.num_envelopes * (4 + header.num_directions));
    if bytes.len() != expected {
        return Err(Error::parse(
            path,
            0,
            format!(
                "payload size mismatch for {} envelopes x {} directions: {} bytes, expected {}",
                header.num_envelopes,
                header.num_directions,
                bytes.len(),
                expected
            ),
        ));
    }

    let mut cursor = 16 + header_len;
    let mut next_f64 = || {
        let v = f64::from_le_bytes(bytes[cursor..cursor + 8].try_into().unwrap());
        cursor += 8;
        v
    };
    let dirs_vec: Vec<Vector3<f64>> = (0..header.num_directions)
        .map(|_| Vector3::new(next_f64(), next_f64(), next_f64()))
        .collect();
    let mut envelopes = Vec::with_capacity(header.num_envelopes);
    for _ in 0..header.num_envelopes {
        let center = Point3::new(next_f64(), next_f64(), next_f64());
        let bound_radius = next_f64();
        let radii: Vec<f64> = (0..header.num_directions).map(|_| next_f64()).collect();
        envelopes.push(MedialEnvelope {
            center,
            radii,
            bound_radius,
        });
    }
    drop(next_f64);
    let dirs = DirectionSet::new(dirs_vec).map_err(|e| {
        Error::parse(path, 0, format!("stored direction set invalid: {}", e))
    })?;
    if dirs.len() != header.num_directions {
        return Err(Error::parse(path, 0, "direction-set count mismatch"));
    }
    Ok(EnvelopeModel {
        envelopes,
        dirs,
        mode: header.mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::{balls_model, fit_envelopes};
    use crate::geometry::{fibonacci_directions, RayAccelerator};
    use crate::shapes;
    use crate::skeletonize::Skeleton;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fitted_model() -> EnvelopeModel {
        let mesh = shapes::torus(0.6, 0.25, 32, 16);
        let accel = RayAccelerator::build(&mesh);
        let skeleton = Skeleton {
            points: (0..16)
                .map(|i| {
                    let theta = 2.0 * std::f64::consts::PI * i as f64 / 16.0;
                    Point3::new(0.6 * theta.cos(), 0.6 * theta.sin(), 0.0)
                })
                .collect(),
            source_index: (0..16).collect(),
            beta: Some(vec![0.5; 16]),
        };
        let dirs = fibonacci_directions(200).unwrap();
        fit_envelopes(&accel, &skeleton, dirs, EnvelopeMode::ClosestEnvelope)
            .unwrap()
            .0
    }

    #[test]
    fn round_trip_preserves_implicit_values() {
        let model = fitted_model();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.env");
        save_envelope_model(&p, &model).unwrap();
        let back = load_envelope_model(&p).unwrap();
        assert_eq!(back.mode, model.mode);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let x = Point3::new(
                rng.gen::<f64>() * 2.4 - 1.2,
                rng.gen::<f64>() * 2.4 - 1.2,
                rng.gen::<f64>() * 2.4 - 1.2,
            );
            let a = model.eval_implicit(&x);
            let b = back.eval_implicit(&x);
            assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
        }
    }

    #[test]
    fn round_trip_is_byte_stable() {
        let model = fitted_model();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.env");
        let p2 = dir.path().join("b.env");
        save_envelope_model(&p1, &model).unwrap();
        let reloaded = load_envelope_model(&p1).unwrap();
        save_envelope_model(&p2, &reloaded).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn version_mismatch_rejected() {
        let dirs = fibonacci_directions(8).unwrap();
        let model = balls_model(&[(Point3::origin(), 0.5)], dirs, EnvelopeMode::ClosestEnvelope);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.env");
        save_envelope_model(&p, &model).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        // Bump the version digit inside the JSON header.
        let json_start = 16;
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header = String::from_utf8(bytes[json_start..json_start + header_len].to_vec()).unwrap();
        let bumped = header.replace("\"version\":1", "\"version\":9");
        assert_ne!(header, bumped);
        bytes.splice(json_start..json_start + header_len, bumped.into_bytes());
        std::fs::write(&p, &bytes).unwrap();
        let err = load_envelope_model(&p).unwrap_err().to_string();
        assert!(err.contains("version mismatch"), "{}", err);
    }

    #[test]
    fn size_mismatch_rejected() {
        let dirs = fibonacci_directions(8).unwrap();
        let model = balls_model(&[(Point3::origin(), 0.5)], dirs, EnvelopeMode::ClosestEnvelope);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.env");
        save_envelope_model(&p, &model).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
        let err = load_envelope_model(&p).unwrap_err().to_string();
        assert!(err.contains("size mismatch"), "{}", err);
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.env");
        std::fs::write(&p, b"NOTMAGIC" as &[u8]).unwrap();
        assert!(load_envelope_model(&p).is_err());
    }
}
