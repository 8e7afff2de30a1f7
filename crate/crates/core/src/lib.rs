//! Skeleton-driven implicit surface toolkit.
//!
//! The library covers the classical pipeline from a triangle mesh to a
//! reconstructed surface that follows its medial structure:
//!
//! 1. [`geometry`] — surface sampling, farthest-point subsampling, BVH ray
//!    casting, and local shape-diameter estimation.
//! 2. [`skeletonize`] — kernel-SDF gradient descent that shrinks surface
//!    samples onto the medial axis.
//! 3. [`envelope`] — per-medial-point directional radius tables and the
//!    enveloping implicit they define, with bounding-sphere acceleration.
//! 4. [`mesher`] — scalar grids, marching cubes, and topology statistics.
//! 5. [`diffusion`] — Karras-style probability-flow ODE sampling against a
//!    pluggable denoiser contract, plus denoising-loss evaluation.
//! 6. [`metrics`] — Chamfer/EMD/F-score/IoU between shapes and MMD, coverage,
//!    precision/recall, FID, KID between shape sets.
//!
//! [`mesh_io`] handles all interchange formats (OBJ, OFF, PLY, the envelope
//! container, raw grids) and [`shapes`] provides analytic test fixtures.
//!
//! All geometry is `f64` and all randomized operations take explicit seeds;
//! identical inputs produce bit-identical outputs.

pub mod diffusion;
pub mod envelope;
pub mod error;
pub mod geometry;
pub mod mesh_io;
pub mod mesher;
pub mod metrics;
pub mod shapes;
pub mod skeletonize;

pub use error::{Error, Result};
pub use mesh_io::{NormalizationTransform, TriangleMesh};
