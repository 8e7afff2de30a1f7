//! `medial fit` — fit directional radius tables to an existing skeleton.

use std::path::PathBuf;

use serde::Serialize;

use medial_core::envelope::FitStats;
use medial_core::geometry::RayAccelerator;
use medial_core::mesh_io::{self, NormalizationTransform};

use crate::config::{ConfigArgs, PipelineConfig};
use crate::stages;
use crate::util::{default_report_path, require_input, timed, write_json_atomic, CliResult, OutputGuard};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Mesh the radius tables are fitted against.
    pub mesh_in: PathBuf,
    /// Skeleton to thicken (PLY, same coordinates as the mesh).
    pub skel_in: PathBuf,
    /// Output envelope model (JSON container).
    pub model_out: PathBuf,
    /// Summary report path (default: `<model_out stem>.report.json`).
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'static str,
    input: String,
    skeleton: String,
    output: String,
    config: &'a PipelineConfig,
    normalization: &'a NormalizationTransform,
    envelopes: usize,
    directions: usize,
    dropped: usize,
    invalid_rays: usize,
    runtime_s: f64,
}

pub fn run(args: &Args) -> CliResult<()> {
    let cfg = args.config.resolve()?;
    require_input(&args.mesh_in)?;
    require_input(&args.skel_in)?;
    let mesh = mesh_io::load_mesh(&args.mesh_in)?;
    let skeleton = mesh_io::load_skeleton(&args.skel_in)?;
    let frame = stages::prepare(&mesh, &cfg)?;
    let skeleton_work = stages::skeleton_to_work(&skeleton, &frame.transform);

    let (fitted, elapsed) = timed(|| {
        let accel = RayAccelerator::build(&frame.mesh);
        stages::fit_stage(&accel, &skeleton_work, &cfg)
    });
    let (model_work, stats) = fitted?;
    let model = stages::model_to_input(&model_work, &frame.transform);

    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| default_report_path(&args.model_out));
    let mut guard = OutputGuard::new();
    guard.track(&args.model_out);
    guard.track(&report_path);

    mesh_io::save_envelope_model(&args.model_out, &model)?;
    let FitStats {
        dropped,
        invalid_rays,
    } = stats;
    let report = Report {
        command: "fit",
        input: args.mesh_in.display().to_string(),
        skeleton: args.skel_in.display().to_string(),
        output: args.model_out.display().to_string(),
        config: &cfg,
        normalization: &frame.transform,
        envelopes: model.envelopes.len(),
        directions: cfg.directions,
        dropped,
        invalid_rays,
        runtime_s: elapsed,
    };
    write_json_atomic(&report_path, &report)?;
    guard.disarm();

    println!(
        "fitted {} envelopes over {} directions in {:.1} s ({} dropped, {} invalid rays)",
        model.envelopes.len(),
        cfg.directions,
        elapsed,
        dropped,
        invalid_rays,
    );
    println!("wrote {}", args.model_out.display());
    println!("wrote {}", report_path.display());
    Ok(())
}
