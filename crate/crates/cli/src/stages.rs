//! Pipeline stages shared by `skeletonize`, `fit`, and `reconstruct`.
//!
//! All geometry work happens in a working frame: by default the input is
//! rescaled into the 0.9 half-extent cube, which is the scale the kernel
//! bandwidth default and the [-1,1]^3 reconstruction grid assume. Artifacts
//! on disk always live in the input mesh's own coordinates; the uniform
//! scale + translation is applied on load and inverted before every save,
//! and is re-derived deterministically from the mesh by each command.

use nalgebra::Point3;

use medial_core::envelope::{fit_envelopes, EnvelopeModel, FitStats};
use medial_core::geometry::{
    estimate_beta, farthest_point_sample, fibonacci_directions, sample_surface, Aabb,
    DiameterStats, OrientedPointCloud, RayAccelerator,
};
use medial_core::mesh_io::{normalize_to_unit_cube, NormalizationTransform, TriangleMesh};
use medial_core::skeletonize::{skeletonize_with_stats, Skeleton, SkeletonizeStats};

use crate::config::PipelineConfig;
use crate::util::CliResult;

/// The working mesh plus the map from input coordinates into the frame all
/// later stages run in (identity when normalization is off).
pub struct WorkingFrame {
    pub mesh: TriangleMesh,
    pub transform: NormalizationTransform,
}

pub fn prepare(mesh: &TriangleMesh, cfg: &PipelineConfig) -> CliResult<WorkingFrame> {
    if cfg.normalize {
        let (mesh, transform) = normalize_to_unit_cube(mesh)?;
        Ok(WorkingFrame { mesh, transform })
    } else {
        Ok(WorkingFrame {
            mesh: mesh.clone(),
            transform: NormalizationTransform::identity(),
        })
    }
}

/// Maps a skeleton stored in input coordinates into the working frame.
pub fn skeleton_to_work(skeleton: &Skeleton, t: &NormalizationTransform) -> Skeleton {
    Skeleton {
        points: skeleton.points.iter().map(|p| t.apply(p)).collect(),
        source_index: skeleton.source_index.clone(),
        beta: skeleton
            .beta
            .as_ref()
            .map(|b| b.iter().map(|v| v * t.scale).collect()),
    }
}

/// Maps a working-frame skeleton back into input coordinates.
pub fn skeleton_to_input(skeleton: &Skeleton, t: &NormalizationTransform) -> Skeleton {
    Skeleton {
        points: skeleton.points.iter().map(|p| t.invert(p)).collect(),
        source_index: skeleton.source_index.clone(),
        beta: skeleton
            .beta
            .as_ref()
            .map(|b| b.iter().map(|v| v / t.scale).collect()),
    }
}

/// Maps a working-frame envelope model back into input coordinates. Radii
/// are distances, so the uniform scale divides them exactly.
pub fn model_to_input(model: &EnvelopeModel, t: &NormalizationTransform) -> EnvelopeModel {
    let mut out = model.clone();
    for e in &mut out.envelopes {
        e.center = t.invert(&e.center);
        for r in &mut e.radii {
            *r /= t.scale;
        }
        e.bound_radius /= t.scale;
    }
    out
}

/// Maps a working-frame mesh back into input coordinates.
pub fn mesh_to_input(mesh: &TriangleMesh, t: &NormalizationTransform) -> TriangleMesh {
    TriangleMesh {
        vertices: mesh.vertices.iter().map(|v| t.invert(v)).collect(),
        faces: mesh.faces.clone(),
    }
}

/// Everything the skeleton stage reports besides the skeleton itself.
pub struct SkeletonOutcome {
    pub skeleton: Skeleton,
    pub stats: SkeletonizeStats,
    pub beta_stats: DiameterStats,
}

/// Dense sampling, farthest-point subsampling to the medial budget, local
/// diameter estimation, then the shrinkage iteration — all in the working
/// frame.
pub fn skeleton_stage(
    frame: &WorkingFrame,
    accel: &RayAccelerator,
    cfg: &PipelineConfig,
) -> CliResult<SkeletonOutcome> {
    let dense = sample_surface(&frame.mesh, cfg.dense_samples, cfg.seed)?;
    let picked = farthest_point_sample(&dense.points, cfg.medial_points, cfg.seed)?;
    let points: Vec<_> = picked.iter().map(|&i| dense.points[i]).collect();
    let normals: Vec<_> = picked.iter().map(|&i| dense.normals[i]).collect();
    let (beta, beta_stats) = estimate_beta(accel, &points, &normals);
    let mut cloud = OrientedPointCloud::new(points, normals)?;
    cloud.beta = Some(beta);
    let (skeleton, stats) = skeletonize_with_stats(&cloud, &cfg.skeletonize)?;
    Ok(SkeletonOutcome {
        skeleton,
        stats,
        beta_stats,
    })
}

/// Radius-table fitting against the working-frame mesh.
pub fn fit_stage(
    accel: &RayAccelerator,
    skeleton: &Skeleton,
    cfg: &PipelineConfig,
) -> CliResult<(EnvelopeModel, FitStats)> {
    let dirs = fibonacci_directions(cfg.directions)?;
    Ok(fit_envelopes(accel, skeleton, dirs, cfg.mode)?)
}

/// Grid bounds for reconstruction: the fixed [-1,1]^3 cube in the normalized
/// frame, otherwise the mesh's box padded by 10% of its diagonal per side.
pub fn grid_bounds(frame: &WorkingFrame, cfg: &PipelineConfig) -> Aabb {
    if cfg.normalize {
        medial_core::mesher::default_bounds()
    } else {
        let bb = frame.mesh.aabb();
        let pad = 0.1 * bb.diagonal();
        Aabb {
            min: bb.min - nalgebra_pad(pad),
            max: bb.max + nalgebra_pad(pad),
        }
    }
}

fn nalgebra_pad(pad: f64) -> nalgebra::Vector3<f64> {
    nalgebra::Vector3::new(pad, pad, pad)
}

/// Seed points for the narrow-band extraction: a deterministic stride over
/// each envelope's valid fitted surface samples (roughly 128 per envelope).
/// Every connected component of the fitted surface contains whole envelope
/// stars, so this is far denser than the one-seed-per-component minimum.
pub fn surface_seeds(model: &EnvelopeModel) -> Vec<Point3<f64>> {
    let stride = (model.dirs.len() / 128).max(1);
    let mut seeds = Vec::new();
    for e in &model.envelopes {
        for (j, r) in e.radii.iter().enumerate().step_by(stride) {
            if r.is_finite() {
                seeds.push(e.center + *r * model.dirs.dirs()[j]);
            }
        }
    }
    seeds
}
