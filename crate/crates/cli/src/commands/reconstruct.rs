//! `medial reconstruct` — full pipeline: skeleton, radius tables, implicit
//! grid, marching cubes, and a quality report against the input.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use serde::Serialize;

use medial_core::geometry::{sample_surface, RayAccelerator};
use medial_core::mesh_io::{self, NormalizationTransform};
use medial_core::mesher::{
    eval_on_grid, euler_characteristic, marching_cubes_sparse, TopologyReport,
};
use medial_core::metrics::{chamfer_distance, f_score, DEFAULT_F_SCORE_TAU};

use crate::config::{ConfigArgs, PipelineConfig};
use crate::stages;
use crate::util::{
    default_report_path, require_input, timed, write_json_atomic, CliError, CliResult, OutputGuard,
};

/// Point count for the report's Chamfer / F-score comparison.
const EVAL_SAMPLES: usize = 10_000;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Input mesh (OBJ, OFF, or PLY).
    pub mesh_in: PathBuf,
    /// Reconstructed output mesh (format from extension).
    pub mesh_out: PathBuf,
    /// Reuse this skeleton (PLY, input coordinates) instead of stage 1.
    #[arg(long, value_name = "FILE")]
    pub skeleton: Option<PathBuf>,
    /// Also write the fitted envelope model here.
    #[arg(long, value_name = "FILE")]
    pub model_out: Option<PathBuf>,
    /// Also write the implicit sampled on the full corner lattice (raw f32 +
    /// JSON sidecar, working-frame coordinates). This evaluates every grid
    /// corner and can dominate the runtime at high resolutions; the
    /// reconstruction itself only evaluates near the surface.
    #[arg(long, value_name = "FILE")]
    pub grid_out: Option<PathBuf>,
    /// Summary report path (default: `<mesh_out stem>.report.json`).
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'static str,
    input: String,
    output: String,
    config: &'a PipelineConfig,
    normalization: &'a NormalizationTransform,
    skeleton: SkeletonSection,
    fit: FitSection,
    grid: GridSection,
    topology: &'a TopologyReport,
    metrics: MetricsSection,
    runtime_s: RuntimeSection,
}

#[derive(Serialize)]
struct SkeletonSection {
    source: &'static str,
    points: usize,
    iterations: Option<usize>,
    tether_rejections: Option<usize>,
}

#[derive(Serialize)]
struct FitSection {
    envelopes: usize,
    directions: usize,
    dropped: usize,
    invalid_rays: usize,
}

/// `min_value` is the minimum over evaluated corners (the narrow band, plus
/// the full lattice when `--grid-out` forces a dense pass).
#[derive(Serialize)]
struct GridSection {
    cells_per_axis: usize,
    bounds_min: [f64; 3],
    bounds_max: [f64; 3],
    corners_evaluated: usize,
    min_value: f64,
}

/// Distances are in working-frame units (normalized unless `--no-normalize`).
#[derive(Serialize)]
struct MetricsSection {
    chamfer: f64,
    f1: f64,
    precision: f64,
    recall: f64,
    f_tau: f64,
    samples: usize,
}

#[derive(Serialize)]
struct RuntimeSection {
    skeleton: f64,
    fit: f64,
    grid: f64,
    mesh: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_dump: Option<f64>,
    total: f64,
}

pub fn run(args: &Args) -> CliResult<()> {
    let cfg = args.config.resolve()?;
    require_input(&args.mesh_in)?;
    if let Some(skel) = &args.skeleton {
        require_input(skel)?;
    }
    let mesh = mesh_io::load_mesh(&args.mesh_in)?;
    let frame = stages::prepare(&mesh, &cfg)?;
    let accel = RayAccelerator::build(&frame.mesh);

    // Stage 1: skeleton (computed, or loaded and mapped into the frame).
    let (stage1, t_skel) = timed(|| match &args.skeleton {
        Some(path) => {
            let loaded = mesh_io::load_skeleton(path)?;
            Ok((stages::skeleton_to_work(&loaded, &frame.transform), None))
        }
        None => stages::skeleton_stage(&frame, &accel, &cfg)
            .map(|o| (o.skeleton, Some(o.stats))),
    });
    let (skeleton_work, skel_stats) = stage1?;
    println!(
        "stage skeleton: {} points in {:.1} s{}",
        skeleton_work.len(),
        t_skel,
        if args.skeleton.is_some() { " (from file)" } else { "" },
    );

    // Stage 2: directional radius tables.
    let (fitted, t_fit) = timed(|| stages::fit_stage(&accel, &skeleton_work, &cfg));
    let (model_work, fit_stats) = fitted?;
    println!(
        "stage fit: {} envelopes over {} directions in {:.1} s",
        model_work.envelopes.len(),
        cfg.directions,
        t_fit,
    );

    // Stage 3: narrow-band extraction, seeded at the fitted surface samples.
    let bounds = stages::grid_bounds(&frame, &cfg);
    let n = cfg.grid_resolution + 1; // corners per axis for this many cells
    let seeds = stages::surface_seeds(&model_work);
    let (extraction, t_grid) = timed(|| {
        marching_cubes_sparse(|p| model_work.eval_implicit(p), (n, n, n), bounds, 0.0, &seeds)
    });
    let extraction = extraction?;
    let corners_evaluated = extraction.corners_evaluated;
    let mut grid_min = extraction.min_value;
    println!(
        "stage grid: {}^3 cells, {} corners evaluated in {:.1} s",
        cfg.grid_resolution, corners_evaluated, t_grid,
    );

    // Stage 4: topology + comparison metrics.
    let (measured, t_mesh) = timed(move || -> CliResult<_> {
        let recon_work = extraction.mesh;
        if recon_work.num_faces() == 0 {
            return Err(CliError::Runtime(
                "reconstruction is empty: the implicit is positive near every seed".into(),
            ));
        }
        let topology = euler_characteristic(&recon_work);
        let ref_cloud = sample_surface(&frame.mesh, EVAL_SAMPLES, cfg.seed + 1)?;
        let recon_cloud = sample_surface(&recon_work, EVAL_SAMPLES, cfg.seed + 2)?;
        let cd = chamfer_distance(&recon_cloud.points, &ref_cloud.points)?;
        let fs = f_score(&recon_cloud.points, &ref_cloud.points, DEFAULT_F_SCORE_TAU)?;
        Ok((recon_work, topology, cd, fs))
    });
    let (recon_work, topology, cd, fs) = measured?;
    let recon = stages::mesh_to_input(&recon_work, &frame.transform);
    println!(
        "stage mesh: {} faces, genus {} in {:.1} s",
        recon.num_faces(),
        topology
            .genus
            .map(|g| g.to_string())
            .unwrap_or_else(|| "n/a".into()),
        t_mesh,
    );
    println!(
        "chamfer (x10^2) vs input sampling: {:.4}   f1@{}: {:.4}",
        100.0 * cd,
        DEFAULT_F_SCORE_TAU,
        fs.f1,
    );

    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| default_report_path(&args.mesh_out));
    let mut guard = OutputGuard::new();
    guard.track(&args.mesh_out);
    guard.track(&report_path);

    mesh_io::save_mesh(&args.mesh_out, &recon)?;
    if let Some(path) = &args.model_out {
        guard.track(path);
        let model = stages::model_to_input(&model_work, &frame.transform);
        mesh_io::save_envelope_model(path, &model)?;
    }
    let mut t_dump = None;
    if let Some(path) = &args.grid_out {
        guard.track(path);
        guard.track(sidecar_path(path));
        let (grid, t) = timed(|| eval_on_grid(|p| model_work.eval_implicit(p), (n, n, n), bounds));
        let grid = grid?;
        grid_min = grid_min.min(grid.min_value());
        medial_core::mesher::save_grid_raw(path, &grid)?;
        println!("dense grid dump: {:.1} s", t);
        t_dump = Some(t);
    }

    let report = Report {
        command: "reconstruct",
        input: args.mesh_in.display().to_string(),
        output: args.mesh_out.display().to_string(),
        config: &cfg,
        normalization: &frame.transform,
        skeleton: SkeletonSection {
            source: if args.skeleton.is_some() { "file" } else { "computed" },
            points: skeleton_work.len(),
            iterations: skel_stats.map(|s| s.iterations),
            tether_rejections: skel_stats.map(|s| s.tether_rejections),
        },
        fit: FitSection {
            envelopes: model_work.envelopes.len(),
            directions: cfg.directions,
            dropped: fit_stats.dropped,
            invalid_rays: fit_stats.invalid_rays,
        },
        grid: GridSection {
            cells_per_axis: cfg.grid_resolution,
            bounds_min: [bounds.min.x, bounds.min.y, bounds.min.z],
            bounds_max: [bounds.max.x, bounds.max.y, bounds.max.z],
            corners_evaluated,
            min_value: grid_min,
        },
        topology: &topology,
        metrics: MetricsSection {
            chamfer: cd,
            f1: fs.f1,
            precision: fs.precision,
            recall: fs.recall,
            f_tau: DEFAULT_F_SCORE_TAU,
            samples: EVAL_SAMPLES,
        },
        runtime_s: RuntimeSection {
            skeleton: t_skel,
            fit: t_fit,
            grid: t_grid,
            mesh: t_mesh,
            grid_dump: t_dump,
            total: t_skel + t_fit + t_grid + t_mesh + t_dump.unwrap_or(0.0),
        },
    };
    write_json_atomic(&report_path, &report)?;
    guard.disarm();

    println!("wrote {}", args.mesh_out.display());
    println!("wrote {}", report_path.display());
    Ok(())
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s: OsString = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}
