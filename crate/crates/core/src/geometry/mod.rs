//! Geometric foundations: point sampling, spatial indices, ray casting,
//! local shape-diameter estimation, and unit-direction lattices.

pub mod bvh;
pub mod diameter;
pub mod directions;
pub mod kdtree;
pub mod sampling;

pub use bvh::{ray_triangle, Aabb, RayAccelerator, RayHit};
pub use diameter::{estimate_beta, shape_diameter, BetaEstimate, BetaSource, DiameterStats};
pub use directions::{fibonacci_directions, DirectionSet};
pub use kdtree::KdTree;
pub use sampling::{farthest_point_sample, farthest_point_sample_from, sample_surface};

use nalgebra::{Point3, Vector3};

use crate::{Error, Result};

/// Surface samples with outward normals and (optionally) a per-point local
/// shape diameter.
#[derive(Debug, Clone)]
pub struct OrientedPointCloud {
    pub points: Vec<Point3<f64>>,
    pub normals: Vec<Vector3<f64>>,
    /// Local shape diameter per point, in model units, when estimated.
    pub beta: Option<Vec<f64>>,
}

impl OrientedPointCloud {
    pub fn new(points: Vec<Point3<f64>>, normals: Vec<Vector3<f64>>) -> Result<Self> {
        let cloud = OrientedPointCloud {
            points,
            normals,
            beta: None,
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks the structural invariants: matching lengths, unit normals
    /// (within 1e-4), and strictly positive diameters where present.
    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.normals.len() {
            return Err(Error::Precondition(format!(
                "point/normal count mismatch: {} vs {}",
                self.points.len(),
                self.normals.len()
            )));
        }
        if let Some(beta) = &self.beta {
            if beta.len() != self.points.len() {
                return Err(Error::Precondition(format!(
                    "point/beta count mismatch: {} vs {}",
                    self.points.len(),
                    beta.len()
                )));
            }
            if let Some(i) = beta.iter().position(|b| !(*b > 0.0)) {
                return Err(Error::Precondition(format!(
                    "beta[{}] = {} is not positive",
                    i, beta[i]
                )));
            }
        }
        for (i, n) in self.normals.iter().enumerate() {
            if (n.norm() - 1.0).abs() > 1e-4 {
                return Err(Error::Precondition(format!(
                    "normal[{}] has length {}, expected 1",
                    i,
                    n.norm()
                )));
            }
        }
        Ok(())
    }
}
