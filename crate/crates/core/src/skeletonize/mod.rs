//! Medial-skeleton extraction: gradient descent of surface samples on a
//! kernel-regression signed distance estimate.
//!
//! Each surface sample `p_i` starts at `q_i = p_i - beta_i/2 * n_i` (its
//! estimated medial partner) and then follows `-lambda * grad f(q_i)`, where
//! `f` is the Gaussian-weighted mean of tangent-plane signed distances to the
//! `k` nearest surface samples. A proposed step is accepted only while
//! `||q_i - p_i|| <= tau_max * beta_i`, which tethers every medial point to
//! its source sample.

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{KdTree, OrientedPointCloud};
use crate::{Error, Result};

/// Parameters of the shrinkage iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkeletonizeParams {
    /// Gradient-descent step size.
    pub lambda: f64,
    /// Tether radius as a fraction of the local shape diameter.
    pub tau_max: f64,
    /// Neighbor count for the kernel SDF estimate.
    pub k_neighbors: usize,
    /// Gaussian kernel bandwidth (squared model units).
    pub sigma_sq: f64,
    /// Iteration cap.
    pub max_iters: usize,
    /// Early exit when no accepted move exceeds this length.
    pub move_tol: f64,
}

impl Default for SkeletonizeParams {
    fn default() -> Self {
        SkeletonizeParams {
            lambda: 0.1,
            tau_max: 0.6,
            k_neighbors: 20,
            sigma_sq: 0.002,
            max_iters: 50,
            move_tol: 1e-4,
        }
    }
}

impl SkeletonizeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::Precondition("lambda must be > 0".into()));
        }
        if !(self.tau_max > 0.0 && self.tau_max <= 1.0) {
            return Err(Error::Precondition("tau_max must be in (0, 1]".into()));
        }
        if self.k_neighbors == 0 {
            return Err(Error::Precondition("k_neighbors must be >= 1".into()));
        }
        if !(self.sigma_sq > 0.0) {
            return Err(Error::Precondition("sigma_sq must be > 0".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::Precondition("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Point-based medial axis approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub points: Vec<Point3<f64>>,
    /// Index of the surface sample each medial point descended from.
    pub source_index: Vec<usize>,
    /// Local shape diameter inherited from the source sample; absent when
    /// loaded from a file that did not store it.
    pub beta: Option<Vec<f64>>,
}

impl Skeleton {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Kernel SDF estimator over a fixed oriented point cloud.
///
/// `f(q) = sum_j alpha_j f_j / sum_j alpha_j` over the `k` nearest samples,
/// with `alpha_j = exp(-||q - p_j||^2 / sigma_sq)` and `f_j = (q - p_j). n_j`
/// (signed distance to the tangent plane at `p_j`).
pub struct KernelSdfEstimator<'a> {
    cloud: &'a OrientedPointCloud,
    tree: KdTree,
    k: usize,
    sigma_sq: f64,
}

impl<'a> KernelSdfEstimator<'a> {
    pub fn new(cloud: &'a OrientedPointCloud, k: usize, sigma_sq: f64) -> Result<Self> {
        if k == 0 || k > cloud.len() {
            return Err(Error::Precondition(format!(
                "k = {} out of range for a cloud of {} points",
                k,
                cloud.len()
            )));
        }
        if !(sigma_sq > 0.0) {
            return Err(Error::Precondition("sigma_sq must be > 0".into()));
        }
        Ok(KernelSdfEstimator {
            cloud,
            tree: KdTree::build(&cloud.points),
            k,
            sigma_sq,
        })
    }

    /// Value and full analytic gradient at `q`.
    ///
    /// With normalized weights `w_j` and mean `f`, the quotient rule gives
    /// `grad f = sum_j w_j (n_j + (f_j - f) g_j)`, `g_j = -2 (q - p_j) / sigma_sq`.
    /// Weights are computed with the minimum squared distance subtracted from
    /// every exponent; the shift cancels in the quotient but keeps the
    /// largest weight at 1, so far queries cannot underflow to 0/0.
    pub fn eval(&self, q: &Point3<f64>) -> (f64, Vector3<f64>) {
        let nn = self.tree.knn(q, self.k);
        let shift = nn[0].1;
        let mut w = Vec::with_capacity(nn.len());
        let mut fj = Vec::with_capacity(nn.len());
        let mut sum_w = 0.0;
        let mut sum_wf = 0.0;
        for &(j, d2) in &nn {
            let wj = (-(d2 - shift) / self.sigma_sq).exp();
            let f = (q - self.cloud.points[j]).dot(&self.cloud.normals[j]);
            w.push(wj);
            fj.push(f);
            sum_w += wj;
            sum_wf += wj * f;
        }
        let value = sum_wf / sum_w;
        let mut grad = Vector3::zeros();
        for (idx, &(j, _)) in nn.iter().enumerate() {
            let g = -2.0 / self.sigma_sq * (q - self.cloud.points[j]);
            grad += w[idx] / sum_w * (self.cloud.normals[j] + (fj[idx] - value) * g);
        }
        (value, grad)
    }
}

/// One-off kernel SDF evaluation (builds the spatial index each call; use
/// [`KernelSdfEstimator`] for repeated queries).
pub fn kernel_sdf(
    query: &Point3<f64>,
    cloud: &OrientedPointCloud,
    k: usize,
    sigma_sq: f64,
) -> Result<(f64, Vector3<f64>)> {
    Ok(KernelSdfEstimator::new(cloud, k, sigma_sq)?.eval(query))
}

/// Iteration counters reported alongside the skeleton.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct SkeletonizeStats {
    /// Iterations actually executed (early exit stops before `max_iters`).
    pub iterations: usize,
    /// Proposals rejected by the tether across all iterations.
    pub tether_rejections: usize,
    /// Whether the move tolerance was reached before the iteration cap.
    pub converged: bool,
}

/// Runs the shrinkage iteration on a cloud that carries normals and local
/// shape diameters.
pub fn skeletonize(cloud: &OrientedPointCloud, params: &SkeletonizeParams) -> Result<Skeleton> {
    skeletonize_with_stats(cloud, params).map(|(skeleton, _)| skeleton)
}

/// [`skeletonize`] plus iteration counters.
pub fn skeletonize_with_stats(
    cloud: &OrientedPointCloud,
    params: &SkeletonizeParams,
) -> Result<(Skeleton, SkeletonizeStats)> {
    params.validate()?;
    cloud.validate()?;
    let beta = cloud
        .beta
        .as_ref()
        .ok_or_else(|| Error::Precondition("skeletonize requires per-point beta".into()))?;
    if cloud.is_empty() {
        return Err(Error::Precondition("cannot skeletonize an empty cloud".into()));
    }
    let estimator = KernelSdfEstimator::new(cloud, params.k_neighbors.min(cloud.len()), params.sigma_sq)?;

    // Initialize at the estimated medial partner of each sample.
    let mut q: Vec<Point3<f64>> = cloud
        .points
        .iter()
        .zip(&cloud.normals)
        .zip(beta)
        .map(|((p, n), b)| p - 0.5 * b * n)
        .collect();

    let mut stats = SkeletonizeStats::default();
    for _ in 0..params.max_iters {
        // The SDF depends only on the fixed surface cloud, so per-point
        // updates are independent and run in parallel (deterministic: pure
        // map, order preserved by collect).
        let updates: Vec<(Point3<f64>, f64, bool)> = q
            .par_iter()
            .enumerate()
            .map(|(i, qi)| {
                let (_, grad) = estimator.eval(qi);
                let proposal = qi - params.lambda * grad;
                if (proposal - cloud.points[i]).norm() <= params.tau_max * beta[i] {
                    (proposal, (proposal - qi).norm(), false)
                } else {
                    (*qi, 0.0, true) // tether violated: keep the last accepted position
                }
            })
            .collect();
        stats.iterations += 1;
        let mut max_move = 0.0f64;
        for (i, (pos, moved, rejected)) in updates.into_iter().enumerate() {
            q[i] = pos;
            max_move = max_move.max(moved);
            stats.tether_rejections += rejected as usize;
        }
        if max_move < params.move_tol {
            stats.converged = true;
            break;
        }
    }

    Ok((
        Skeleton {
            points: q,
            source_index: (0..cloud.len()).collect(),
            beta: Some(beta.clone()),
        },
        stats,
    ))
}
