//! Local shape-diameter estimation by inward ray casting.

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use super::bvh::RayAccelerator;

/// Self-intersection offset for rays launched from the surface, in
/// normalized model units.
pub const T_MIN_SELF: f64 = 1e-4;

const CONE_RAYS: usize = 8;
const CONE_HALF_ANGLE: f64 = 30.0 * std::f64::consts::PI / 180.0;

/// How a diameter value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaSource {
    /// Single inward ray hit.
    Direct,
    /// Median over the 30-degree fallback cone.
    ConeMedian,
    /// Everything missed; bounding-box diagonal substituted.
    BboxFallback,
}

#[derive(Debug, Clone, Copy)]
pub struct BetaEstimate {
    pub beta: f64,
    pub source: BetaSource,
}

/// Aggregate outcome of a batch diameter estimation.
#[derive(Debug, Clone, Copy, Default)]
pub struct DiameterStats {
    pub n_direct: usize,
    pub n_cone: usize,
    pub n_fallback: usize,
}

impl DiameterStats {
    /// True when more than 5% of the inward rays missed the mesh, which
    /// suggests an open or inconsistently wound surface.
    pub fn suspicious(&self) -> bool {
        let total = self.n_direct + self.n_cone + self.n_fallback;
        total > 0 && (self.n_cone + self.n_fallback) * 20 > total
    }
}

/// Local shape diameter at a surface point: distance along the inward normal
/// to the first hit. When the inward ray misses, falls back to the median
/// over an 8-ray cone of half-angle 30 degrees, and finally to the
/// bounding-box diagonal.
pub fn shape_diameter(
    accel: &RayAccelerator,
    point: &Point3<f64>,
    normal: &Vector3<f64>,
) -> BetaEstimate {
    let inward = -normal;
    if let Some(hit) = accel.cast_ray(point, &inward, T_MIN_SELF) {
        return BetaEstimate {
            beta: hit.t,
            source: BetaSource::Direct,
        };
    }
    let (u, v) = orthonormal_basis(&inward);
    let mut hits = Vec::with_capacity(CONE_RAYS);
    for j in 0..CONE_RAYS {
        let az = 2.0 * std::f64::consts::PI * j as f64 / CONE_RAYS as f64;
        let dir = CONE_HALF_ANGLE.cos() * inward
            + CONE_HALF_ANGLE.sin() * (az.cos() * u + az.sin() * v);
        if let Some(hit) = accel.cast_ray(point, &dir, T_MIN_SELF) {
            hits.push(hit.t);
        }
    }
    if hits.is_empty() {
        return BetaEstimate {
            beta: accel.aabb().diagonal(),
            source: BetaSource::BboxFallback,
        };
    }
    hits.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = hits.len() / 2;
    let median = if hits.len() % 2 == 1 {
        hits[mid]
    } else {
        0.5 * (hits[mid - 1] + hits[mid])
    };
    BetaEstimate {
        beta: median,
        source: BetaSource::ConeMedian,
    }
}

/// Diameters for a whole point set (parallel, order-preserving).
pub fn estimate_beta(
    accel: &RayAccelerator,
    points: &[Point3<f64>],
    normals: &[Vector3<f64>],
) -> (Vec<f64>, DiameterStats) {
    assert_eq!(points.len(), normals.len());
    let estimates: Vec<BetaEstimate> = points
        .par_iter()
        .zip(normals.par_iter())
        .map(|(p, n)| shape_diameter(accel, p, n))
        .collect();
    let mut stats = DiameterStats::default();
    let betas = estimates
        .iter()
        .map(|e| {
            match e.source {
                BetaSource::Direct => stats.n_direct += 1,
                BetaSource::ConeMedian => stats.n_cone += 1,
                BetaSource::BboxFallback => stats.n_fallback += 1,
            }
            e.beta
        })
        .collect();
    (betas, stats)
}

/// Deterministic orthonormal complement of a unit vector.
fn orthonormal_basis(w: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let pick = if w.x.abs() <= w.y.abs() && w.x.abs() <= w.z.abs() {
        Vector3::x()
    } else if w.y.abs() <= w.z.abs() {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let u = w.cross(&pick).normalize();
    let v = w.cross(&u);
    (u, v)
}
