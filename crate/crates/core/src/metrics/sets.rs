//! Set-level generative measures over collections of point sets.

use nalgebra::Point3;
use rayon::prelude::*;

use crate::{Error, Result};

use super::pairwise::{chamfer_distance, earth_movers_distance, EmdMethod, EMD_EXACT_MAX};

/// Base distance for set-level measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeDistance {
    Chamfer,
    Emd,
}

impl ShapeDistance {
    fn eval(&self, a: &[Point3<f64>], b: &[Point3<f64>]) -> Result<f64> {
        match self {
            ShapeDistance::Chamfer => chamfer_distance(a, b),
            ShapeDistance::Emd => {
                let method = if a.len() <= EMD_EXACT_MAX {
                    EmdMethod::Exact
                } else {
                    EmdMethod::Approx
                };
                earth_movers_distance(a, b, method)
            }
        }
    }
}

/// Dense distance matrix, gen-major: entry `[i * refs.len() + j]` is
/// d(gen[i], ref[j]). Pairs evaluate in parallel.
pub fn shape_distance_matrix(
    gen: &[Vec<Point3<f64>>],
    refs: &[Vec<Point3<f64>>],
    base: ShapeDistance,
) -> Result<Vec<f64>> {
    if gen.is_empty() || refs.is_empty() {
        return Err(Error::Precondition("set metrics need non-empty collections".into()));
    }
    (0..gen.len() * refs.len())
        .into_par_iter()
        .map(|idx| base.eval(&gen[idx / refs.len()], &refs[idx % refs.len()]))
        .collect()
}

/// Reference-anchored MMD and coverage from one shared distance matrix:
/// MMD is the mean over references of the distance to their closest
/// generated shape; COV is the fraction of references that are the
/// nearest reference of at least one generated shape (lowest index on
/// ties).
pub fn mmd_coverage(
    gen: &[Vec<Point3<f64>>],
    refs: &[Vec<Point3<f64>>],
    base: ShapeDistance,
) -> Result<(f64, f64)> {
    let matrix = shape_distance_matrix(gen, refs, base)?;
    Ok(mmd_coverage_from_matrix(&matrix, gen.len(), refs.len()))
}

pub(crate) fn mmd_coverage_from_matrix(matrix: &[f64], n_gen: usize, n_ref: usize) -> (f64, f64) {
    let mut mmd_total = 0.0;
    for j in 0..n_ref {
        let best = (0..n_gen)
            .map(|i| matrix[i * n_ref + j])
            .fold(f64::INFINITY, f64::min);
        mmd_total += best;
    }
    let mut covered = vec![false; n_ref];
    for i in 0..n_gen {
        let row = &matrix[i * n_ref..(i + 1) * n_ref];
        let mut arg = 0;
        for (j, &d) in row.iter().enumerate() {
            if d < row[arg] {
                arg = j;
            }
        }
        covered[arg] = true;
    }
    let cov = covered.iter().filter(|&&c| c).count() as f64 / n_ref as f64;
    (mmd_total / n_ref as f64, cov)
}

pub fn mmd(
    gen: &[Vec<Point3<f64>>],
    refs: &[Vec<Point3<f64>>],
    base: ShapeDistance,
) -> Result<f64> {
    Ok(mmd_coverage(gen, refs, base)?.0)
}

pub fn coverage(
    gen: &[Vec<Point3<f64>>],
    refs: &[Vec<Point3<f64>>],
    base: ShapeDistance,
) -> Result<f64> {
    Ok(mmd_coverage(gen, refs, base)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_shapes(count: usize, points: usize, seed: u64) -> Vec<Vec<Point3<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let center = Point3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                (0..points)
                    .map(|_| {
                        center
                            + nalgebra::Vector3::new(
                                rng.gen_range(-0.1..0.1),
                                rng.gen_range(-0.1..0.1),
                                rng.gen_range(-0.1..0.1),
                            )
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn identical_collections_give_zero_mmd_full_coverage() {
        let shapes = random_shapes(6, 32, 1);
        let (m, c) = mmd_coverage(&shapes, &shapes, ShapeDistance::Chamfer).unwrap();
        assert_eq!(m, 0.0);
        assert_eq!(c, 1.0);
        let (m_emd, c_emd) = mmd_coverage(&shapes, &shapes, ShapeDistance::Emd).unwrap();
        assert_eq!(m_emd, 0.0);
        assert_eq!(c_emd, 1.0);
    }

    #[test]
    fn single_generated_shape_covers_one_reference() {
        let refs = random_shapes(5, 16, 2);
        let gen = vec![refs[3].clone()];
        let cov = coverage(&gen, &refs, ShapeDistance::Chamfer).unwrap();
        assert_eq!(cov, 1.0 / 5.0);
    }

    #[test]
    fn matrix_results_match_naive_recomputation() {
        let gen = random_shapes(10, 24, 3);
        let refs = random_shapes(10, 24, 4);
        let matrix = shape_distance_matrix(&gen, &refs, ShapeDistance::Chamfer).unwrap();
        // Naive recomputation without the shared matrix.
        let mut naive_mmd = 0.0;
        for r in &refs {
            let best = gen
                .iter()
                .map(|g| chamfer_distance(g, r).unwrap())
                .fold(f64::INFINITY, f64::min);
            naive_mmd += best;
        }
        naive_mmd /= refs.len() as f64;
        let mut covered = std::collections::HashSet::new();
        for g in &gen {
            let mut best = (0usize, f64::INFINITY);
            for (j, r) in refs.iter().enumerate() {
                let d = chamfer_distance(g, r).unwrap();
                if d < best.1 {
                    best = (j, d);
                }
            }
            covered.insert(best.0);
        }
        let naive_cov = covered.len() as f64 / refs.len() as f64;
        let (m, c) = mmd_coverage_from_matrix(&matrix, gen.len(), refs.len());
        assert_eq!(m, naive_mmd);
        assert_eq!(c, naive_cov);
    }

    #[test]
    fn empty_collections_rejected() {
        let shapes = random_shapes(2, 8, 5);
        assert!(mmd(&[], &shapes, ShapeDistance::Chamfer).is_err());
        assert!(coverage(&shapes, &[], ShapeDistance::Chamfer).is_err());
    }
}
