//! Cell-center occupancy grids and volumetric intersection-over-union.

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use crate::geometry::{Aabb, RayAccelerator};
use crate::mesh_io::TriangleMesh;
use crate::mesher::euler_characteristic;
use crate::{Error, Result};

/// Boolean occupancy sampled at the centers of a res^3 cell lattice
/// (x-fastest), unlike `ScalarGrid` which samples corners.
#[derive(Debug, Clone)]
pub struct OccupancyGrid {
    pub resolution: usize,
    pub bounds: Aabb,
    pub inside: Vec<bool>,
}

impl OccupancyGrid {
    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> Point3<f64> {
        let e = self.bounds.max - self.bounds.min;
        let r = self.resolution as f64;
        Point3::new(
            self.bounds.min.x + e.x * (i as f64 + 0.5) / r,
            self.bounds.min.y + e.y * (j as f64 + 0.5) / r,
            self.bounds.min.z + e.z * (k as f64 + 0.5) / r,
        )
    }

    pub fn count_inside(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }
}

fn centers_slab(bounds: &Aabb, resolution: usize, k: usize) -> impl Iterator<Item = Point3<f64>> + '_ {
    let e = bounds.max - bounds.min;
    let r = resolution as f64;
    let z = bounds.min.z + e.z * (k as f64 + 0.5) / r;
    (0..resolution).flat_map(move |j| {
        let y = bounds.min.y + e.y * (j as f64 + 0.5) / r;
        (0..resolution).map(move |i| Point3::new(bounds.min.x + e.x * (i as f64 + 0.5) / r, y, z))
    })
}

/// Occupancy of the implicit's negative region at cell centers.
pub fn occupancy_from_implicit<F>(f: F, resolution: usize, bounds: Aabb) -> Result<OccupancyGrid>
where
    F: Fn(&Point3<f64>) -> f64 + Sync,
{
    if resolution == 0 {
        return Err(Error::Precondition("occupancy resolution must be positive".into()));
    }
    let inside: Vec<bool> = (0..resolution)
        .into_par_iter()
        .flat_map_iter(|k| centers_slab(&bounds, resolution, k).map(|p| f(&p) < 0.0))
        .collect();
    Ok(OccupancyGrid {
        resolution,
        bounds,
        inside,
    })
}

// Fixed irrational parity-ray direction, chosen to avoid grazing
// lattice-aligned geometry.
const PARITY_DIR: [f64; 3] = [0.577_350_269_189_625_8, 0.267_261_241_912_424_4, 0.769_800_358_919_501_3];

/// Occupancy of a watertight mesh's interior by ray-crossing parity.
pub fn occupancy_from_mesh(
    mesh: &TriangleMesh,
    resolution: usize,
    bounds: Aabb,
) -> Result<OccupancyGrid> {
    if resolution == 0 {
        return Err(Error::Precondition("occupancy resolution must be positive".into()));
    }
    let topo = euler_characteristic(mesh);
    if topo.non_manifold_edges > 0 {
        return Err(Error::Precondition(format!(
            "parity occupancy needs a watertight mesh; found {} non-manifold edges",
            topo.non_manifold_edges
        )));
    }
    let accel = RayAccelerator::build(mesh);
    let dir = Vector3::new(PARITY_DIR[0], PARITY_DIR[1], PARITY_DIR[2]).normalize();
    let inside: Vec<bool> = (0..resolution)
        .into_par_iter()
        .flat_map_iter(|k| {
            let accel = &accel;
            centers_slab(&bounds, resolution, k)
                .map(move |p| accel.count_intersections(&p, &dir, 0.0) % 2 == 1)
        })
        .collect();
    Ok(OccupancyGrid {
        resolution,
        bounds,
        inside,
    })
}

/// |A and B| / |A or B| over matching grids.
pub fn volumetric_iou(a: &OccupancyGrid, b: &OccupancyGrid) -> Result<f64> {
    if a.resolution != b.resolution {
        return Err(Error::Precondition(format!(
            "occupancy resolution mismatch: {} vs {}",
            a.resolution, b.resolution
        )));
    }
    let same_bounds = (a.bounds.min - b.bounds.min).norm() < 1e-12
        && (a.bounds.max - b.bounds.max).norm() < 1e-12;
    if !same_bounds {
        return Err(Error::Precondition("occupancy bounds mismatch".into()));
    }
    let mut both = 0usize;
    let mut either = 0usize;
    for (&x, &y) in a.inside.iter().zip(&b.inside) {
        both += (x && y) as usize;
        either += (x || y) as usize;
    }
    if either == 0 {
        return Err(Error::Precondition("both occupancy grids are empty".into()));
    }
    Ok(both as f64 / either as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesher::default_bounds;
    use crate::shapes;

    #[test]
    fn identical_grids_unit_iou() {
        let g = occupancy_from_implicit(
            |p| shapes::sphere_sdf(p, &Point3::origin(), 0.5),
            32,
            default_bounds(),
        )
        .unwrap();
        assert!(g.count_inside() > 0);
        assert_eq!(volumetric_iou(&g, &g).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_boxes_zero_iou() {
        let box_at = |cx: f64| {
            occupancy_from_implicit(
                move |p: &Point3<f64>| {
                    let d = (p - Point3::new(cx, 0.0, 0.0)).abs();
                    d.x.max(d.y).max(d.z) - 0.2
                },
                32,
                default_bounds(),
            )
            .unwrap()
        };
        let a = box_at(-0.6);
        let b = box_at(0.6);
        assert_eq!(volumetric_iou(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn sphere_pair_iou_matches_lens_volume() {
        let (r, d) = (0.5, 0.5);
        let c1 = Point3::new(-d / 2.0, 0.0, 0.0);
        let c2 = Point3::new(d / 2.0, 0.0, 0.0);
        let a = occupancy_from_implicit(|p| shapes::sphere_sdf(p, &c1, r), 256, default_bounds())
            .unwrap();
        let b = occupancy_from_implicit(|p| shapes::sphere_sdf(p, &c2, r), 256, default_bounds())
            .unwrap();
        let iou = volumetric_iou(&a, &b).unwrap();
        let lens = shapes::sphere_overlap_volume(r, r, d);
        let union = 2.0 * shapes::sphere_volume(r) - lens;
        let analytic = lens / union;
        assert!(
            (iou - analytic).abs() / analytic < 0.02,
            "iou {} vs analytic {}",
            iou,
            analytic
        );
    }

    #[test]
    fn mesh_parity_occupancy_matches_implicit() {
        let mesh = shapes::icosphere(0.5, 3);
        let from_mesh = occupancy_from_mesh(&mesh, 64, default_bounds()).unwrap();
        let from_sdf = occupancy_from_implicit(
            |p| shapes::sphere_sdf(p, &Point3::origin(), 0.5),
            64,
            default_bounds(),
        )
        .unwrap();
        let iou = volumetric_iou(&from_mesh, &from_sdf).unwrap();
        assert!(iou > 0.95, "iou {}", iou);
    }

    #[test]
    fn open_mesh_rejected_for_parity() {
        let err = occupancy_from_mesh(&shapes::unit_square(), 8, default_bounds());
        assert!(matches!(err, Err(Error::Precondition(m)) if m.contains("watertight")));
    }

    #[test]
    fn mismatched_grids_rejected() {
        let g32 = occupancy_from_implicit(|_| -1.0, 32, default_bounds()).unwrap();
        let g16 = occupancy_from_implicit(|_| -1.0, 16, default_bounds()).unwrap();
        assert!(volumetric_iou(&g32, &g16).is_err());
    }
}
