//! Shape and distribution metrics: pairwise point-set distances,
//! volumetric IoU, set-level generative measures, and embedding-space
//! scores over externally supplied embeddings.

mod embedding;
mod occupancy;
mod pairwise;
mod report;
mod sets;

pub use embedding::{
    fid, kid, load_embeddings_csv, load_embeddings_raw, precision_recall, save_embeddings_csv,
    save_embeddings_raw, EmbeddingSet,
};
pub use occupancy::{occupancy_from_implicit, occupancy_from_mesh, volumetric_iou, OccupancyGrid};
pub use pairwise::{
    chamfer_distance, earth_movers_distance, f_score, hausdorff_point_sets, wasserstein1_1d,
    EmdMethod, FScore, DEFAULT_F_SCORE_TAU, EMD_EXACT_MAX,
};
pub use report::MetricReport;
pub use sets::{coverage, mmd, mmd_coverage, shape_distance_matrix, ShapeDistance};
