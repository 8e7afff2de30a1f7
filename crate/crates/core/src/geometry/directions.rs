//! Spherical Fibonacci direction lattices with angular nearest-neighbor
//! queries.

use nalgebra::{Point3, Vector3};

use super::kdtree::KdTree;
use crate::{Error, Result};

/// A fixed set of unit directions plus an index for angular nearest-neighbor
/// lookups. Angular order equals chord-length order on the unit sphere, so
/// the index is an ordinary kd-tree over the direction endpoints.
///
/// A latitude/longitude cell table backs the fixed-size [`nearest3`]
/// fast path: each cell stores every direction that can appear among the
/// three angular nearest of any query falling in that cell, so a lookup
/// scans a short precomputed list instead of walking the tree.
///
/// [`nearest3`]: DirectionSet::nearest3
#[derive(Debug, Clone)]
pub struct DirectionSet {
    dirs: Vec<Vector3<f64>>,
    tree: KdTree,
    max_nn_angle: f64,
    cells: CellTable,
}

/// Per-cell candidate lists for exact 3-nearest queries, flattened as a CSR
/// layout over an `n_theta x n_phi` latitude/longitude grid.
#[derive(Debug, Clone)]
struct CellTable {
    n_theta: usize,
    n_phi: usize,
    starts: Vec<u32>,
    entries: Vec<u32>,
}

impl CellTable {
    /// Cell index of unit vector `u`.
    fn cell_of(&self, u: &Vector3<f64>) -> usize {
        let theta = u.z.clamp(-1.0, 1.0).acos();
        let phi = u.y.atan2(u.x) + std::f64::consts::PI;
        let it = ((theta / std::f64::consts::PI) * self.n_theta as f64) as usize;
        let ip = ((phi / (2.0 * std::f64::consts::PI)) * self.n_phi as f64) as usize;
        let it = it.min(self.n_theta - 1);
        let ip = ip.min(self.n_phi - 1);
        it * self.n_phi + ip
    }

    fn candidates(&self, cell: usize) -> &[u32] {
        &self.entries[self.starts[cell] as usize..self.starts[cell + 1] as usize]
    }

    /// Builds the table. For each cell the candidate set is every direction
    /// within `2 rho + a3` of the cell center, where `rho` bounds the angle
    /// from the center to any point of the cell and `a3` is the angle from
    /// the center to its third-nearest direction. Any query `u` in the cell
    /// has three directions within `rho + a3` (the center's own three), so
    /// its true three nearest lie within that angle of `u` and hence within
    /// `2 rho + a3` of the center.
    fn build(dirs: &[Vector3<f64>], tree: &KdTree) -> CellTable {
        use std::f64::consts::PI;
        // Aim for cells about one lattice spacing wide: candidate lists stay
        // short without the table growing past O(n) total entries.
        let n_theta = ((PI * (dirs.len() as f64 / 8.0).sqrt()).ceil() as usize).clamp(1, 96);
        let n_phi = 2 * n_theta;
        let d_theta = PI / n_theta as f64;
        let d_phi = 2.0 * PI / n_phi as f64;
        let mut starts = Vec::with_capacity(n_theta * n_phi + 1);
        let mut entries: Vec<u32> = Vec::new();
        starts.push(0u32);
        let pts: Vec<Point3<f64>> = dirs.iter().map(|d| Point3::from(*d)).collect();
        for it in 0..n_theta {
            let theta_lo = it as f64 * d_theta;
            let theta_hi = theta_lo + d_theta;
            let theta_mid = 0.5 * (theta_lo + theta_hi);
            // Max angle from the cell center to any point of the cell: a
            // meridian leg plus a latitude-circle leg.
            let sin_max = if (theta_lo..=theta_hi).contains(&(PI / 2.0)) {
                1.0
            } else {
                theta_lo.sin().max(theta_hi.sin())
            };
            let rho = 0.5 * d_theta + 0.5 * d_phi * sin_max;
            for ip in 0..n_phi {
                let phi_mid = (ip as f64 + 0.5) * d_phi - PI;
                let mid = Vector3::new(
                    theta_mid.sin() * phi_mid.cos(),
                    theta_mid.sin() * phi_mid.sin(),
                    theta_mid.cos(),
                );
                let k = 3.min(dirs.len());
                let a3 = tree
                    .knn(&Point3::from(mid), k)
                    .last()
                    .map(|&(_, d2)| chord2_to_angle(d2))
                    .unwrap_or(PI);
                let reach = (2.0 * rho + a3).min(PI);
                let max_chord2 = 2.0 - 2.0 * reach.cos();
                for (j, p) in pts.iter().enumerate() {
                    if (Point3::from(mid) - p).norm_squared() <= max_chord2 {
                        entries.push(j as u32);
                    }
                }
                starts.push(entries.len() as u32);
            }
        }
        CellTable {
            n_theta,
            n_phi,
            starts,
            entries,
        }
    }
}

impl DirectionSet {
    pub fn new(dirs: Vec<Vector3<f64>>) -> Result<Self> {
        if dirs.is_empty() {
            return Err(Error::Precondition("direction set must be non-empty".into()));
        }
        for (i, d) in dirs.iter().enumerate() {
            if (d.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::Precondition(format!(
                    "direction {} has length {}",
                    i,
                    d.norm()
                )));
            }
        }
        let pts: Vec<Point3<f64>> = dirs.iter().map(|d| Point3::from(*d)).collect();
        let tree = KdTree::build(&pts);
        let max_nn_angle = if dirs.len() == 1 {
            std::f64::consts::PI
        } else {
            let mut max_angle = 0.0f64;
            for (i, p) in pts.iter().enumerate() {
                let nn = tree.knn(p, 2); // self + true neighbor
                let (j, d2) = nn[1];
                if j == i || d2 == 0.0 {
                    return Err(Error::Precondition(format!(
                        "duplicate direction at index {}",
                        i
                    )));
                }
                max_angle = max_angle.max(chord2_to_angle(d2));
            }
            max_angle
        };
        let cells = CellTable::build(&dirs, &tree);
        Ok(DirectionSet {
            dirs,
            tree,
            max_nn_angle,
            cells,
        })
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    pub fn dirs(&self) -> &[Vector3<f64>] {
        &self.dirs
    }

    /// Largest nearest-neighbor angle over the lattice (radians). For a
    /// single direction this is pi (the sphere is covered by one cell).
    pub fn max_angular_spacing(&self) -> f64 {
        self.max_nn_angle
    }

    /// The `k` directions angularly closest to `dir` (need not be unit),
    /// as (index, angle in radians) sorted ascending.
    pub fn nearest_k(&self, dir: &Vector3<f64>, k: usize) -> Vec<(usize, f64)> {
        let u = dir.normalize();
        self.tree
            .knn(&Point3::from(u), k)
            .into_iter()
            .map(|(i, d2)| (i, chord2_to_angle(d2)))
            .collect()
    }

    pub fn nearest(&self, dir: &Vector3<f64>) -> (usize, f64) {
        self.nearest_k(dir, 1)[0]
    }

    /// The (up to) three directions angularly closest to `dir`, without
    /// allocating: returns `(pairs, count)` where `pairs[..count]` matches
    /// `nearest_k(dir, 3.min(len))`. Backed by the precomputed cell table,
    /// which makes this the preferred call on hot paths.
    pub fn nearest3(&self, dir: &Vector3<f64>) -> ([(usize, f64); 3], usize) {
        let u = dir.normalize();
        let n = self.dirs.len().min(3);
        let mut best = [(f64::INFINITY, usize::MAX); 3];
        let consider = |best: &mut [(f64, usize); 3], j: usize, d2: f64| {
            let cand = (d2, j);
            if cand < best[2] {
                best[2] = cand;
                if best[2] < best[1] {
                    best.swap(1, 2);
                    if best[1] < best[0] {
                        best.swap(0, 1);
                    }
                }
            }
        };
        if self.dirs.len() <= 8 {
            for (j, d) in self.dirs.iter().enumerate() {
                consider(&mut best, j, (u - d).norm_squared());
            }
        } else {
            let cell = self.cells.cell_of(&u);
            for &j in self.cells.candidates(cell) {
                let j = j as usize;
                consider(&mut best, j, (u - self.dirs[j]).norm_squared());
            }
        }
        let mut out = [(0usize, 0.0f64); 3];
        for (slot, &(d2, j)) in out.iter_mut().zip(&best) {
            *slot = (j, chord2_to_angle(d2));
        }
        (out, n)
    }
}

/// Angle subtended by a chord of squared length `d2` between unit vectors:
/// d^2 = 2 - 2 cos(theta).
fn chord2_to_angle(d2: f64) -> f64 {
    (1.0 - d2 / 2.0).clamp(-1.0, 1.0).acos()
}

/// Spherical Fibonacci lattice of `d` near-uniform unit directions.
pub fn fibonacci_directions(d: usize) -> Result<DirectionSet> {
    if d == 0 {
        return Err(Error::Precondition("direction count must be >= 1".into()));
    }
    let golden_angle = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    let dirs = (0..d)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / d as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden_angle * i as f64;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect();
    DirectionSet::new(dirs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_direction() {
        let set = fibonacci_directions(1).unwrap();
        assert_eq!(set.len(), 1);
        assert!((set.dirs()[0].norm() - 1.0).abs() < 1e-12);
        assert_eq!(set.max_angular_spacing(), std::f64::consts::PI);
    }

    #[test]
    fn two_directions_differ() {
        let set = fibonacci_directions(2).unwrap();
        assert!((set.dirs()[0] - set.dirs()[1]).norm() > 1e-6);
    }

    #[test]
    fn lattice_is_balanced_for_large_d() {
        for d in [100, 500, 1000] {
            let set = fibonacci_directions(d).unwrap();
            let mean: Vector3<f64> = set.dirs().iter().sum::<Vector3<f64>>() / d as f64;
            assert!(mean.norm() < 0.01, "D={}: mean norm {}", d, mean.norm());
        }
    }

    #[test]
    fn nn_spacing_is_tight_at_1000() {
        let set = fibonacci_directions(1000).unwrap();
        let mut min_angle = f64::INFINITY;
        for d in set.dirs() {
            let nn = set.nearest_k(d, 2);
            min_angle = min_angle.min(nn[1].1);
        }
        let max_angle = set.max_angular_spacing();
        assert!(
            max_angle < 2.0 * min_angle,
            "max {} vs min {}",
            max_angle,
            min_angle
        );
    }

    #[test]
    fn nearest3_matches_tree_search() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        for d in [1usize, 2, 3, 7, 50, 300, 1000] {
            let set = fibonacci_directions(d).unwrap();
            for _ in 0..500 {
                let v = Vector3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                if v.norm() < 1e-3 {
                    continue;
                }
                let (fast, n) = set.nearest3(&v);
                let slow = set.nearest_k(&v, 3.min(d));
                assert_eq!(n, slow.len());
                for (f, s) in fast[..n].iter().zip(&slow) {
                    assert_eq!(f.0, s.0, "D={} query {:?}", d, v);
                    assert!((f.1 - s.1).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn nearest_recovers_member_direction() {
        let set = fibonacci_directions(200).unwrap();
        for (i, d) in set.dirs().iter().enumerate().step_by(17) {
            let (j, angle) = set.nearest(d);
            assert_eq!(i, j);
            assert!(angle < 1e-9);
        }
    }

    #[test]
    fn nearest_accepts_unnormalized_query() {
        let set = fibonacci_directions(50).unwrap();
        let q = set.dirs()[7] * 3.5;
        let (j, angle) = set.nearest(&q);
        assert_eq!(j, 7);
        assert!(angle < 1e-9);
    }
}
