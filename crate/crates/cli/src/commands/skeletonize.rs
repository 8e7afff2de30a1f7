//! `medial skeletonize` — extract a medial point skeleton from a mesh.

use std::path::PathBuf;

use serde::Serialize;

use medial_core::geometry::RayAccelerator;
use medial_core::mesh_io::{self, NormalizationTransform};
use medial_core::skeletonize::SkeletonizeStats;

use crate::config::{ConfigArgs, PipelineConfig};
use crate::stages;
use crate::util::{default_report_path, require_input, timed, write_json_atomic, CliResult, OutputGuard};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Input mesh (OBJ, OFF, or PLY).
    pub mesh_in: PathBuf,
    /// Output skeleton (PLY point cloud with per-point beta).
    pub skel_out: PathBuf,
    /// Summary report path (default: `<skel_out stem>.report.json`).
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

/// Report schema; wall-clock times live under `runtime_s` and are the one
/// part of the output not reproduced bit-for-bit across runs.
#[derive(Serialize)]
struct Report<'a> {
    command: &'static str,
    input: String,
    output: String,
    config: &'a PipelineConfig,
    normalization: &'a NormalizationTransform,
    points: usize,
    iterations: usize,
    tether_rejections: usize,
    converged: bool,
    beta_sources: BetaSources,
    runtime_s: f64,
}

#[derive(Serialize)]
struct BetaSources {
    direct: usize,
    cone_median: usize,
    bbox_fallback: usize,
}

pub fn run(args: &Args) -> CliResult<()> {
    let cfg = args.config.resolve()?;
    require_input(&args.mesh_in)?;
    let mesh = mesh_io::load_mesh(&args.mesh_in)?;
    let frame = stages::prepare(&mesh, &cfg)?;

    let (outcome, elapsed) = timed(|| {
        let accel = RayAccelerator::build(&frame.mesh);
        stages::skeleton_stage(&frame, &accel, &cfg)
    });
    let outcome = outcome?;
    let skeleton = stages::skeleton_to_input(&outcome.skeleton, &frame.transform);

    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| default_report_path(&args.skel_out));
    let mut guard = OutputGuard::new();
    guard.track(&args.skel_out);
    guard.track(&report_path);

    mesh_io::save_skeleton(&args.skel_out, &skeleton)?;
    let SkeletonizeStats {
        iterations,
        tether_rejections,
        converged,
    } = outcome.stats;
    let report = Report {
        command: "skeletonize",
        input: args.mesh_in.display().to_string(),
        output: args.skel_out.display().to_string(),
        config: &cfg,
        normalization: &frame.transform,
        points: skeleton.len(),
        iterations,
        tether_rejections,
        converged,
        beta_sources: BetaSources {
            direct: outcome.beta_stats.n_direct,
            cone_median: outcome.beta_stats.n_cone,
            bbox_fallback: outcome.beta_stats.n_fallback,
        },
        runtime_s: elapsed,
    };
    write_json_atomic(&report_path, &report)?;
    guard.disarm();

    println!(
        "skeletonized {} medial points in {:.1} s ({} iterations, {} tether rejections)",
        skeleton.len(),
        elapsed,
        iterations,
        tether_rejections,
    );
    println!("wrote {}", args.skel_out.display());
    println!("wrote {}", report_path.display());
    Ok(())
}
