//! `medial eval` — set-level shape metrics between two mesh directories.

use std::path::{Path, PathBuf};

use nalgebra::Point3;
use serde::Serialize;

use medial_core::geometry::{farthest_point_sample_from, sample_surface};
use medial_core::mesh_io;
use medial_core::metrics::{mmd_coverage, MetricReport, ShapeDistance};

use crate::util::{require_input, timed, CliError, CliResult, OutputGuard};

/// Per-set seed offset: generated clouds use `seed + i`, references
/// `seed + REF_SEED_OFFSET + i`, in sorted-filename order.
const REF_SEED_OFFSET: u64 = 1 << 32;

/// EMD cost is cubic in the point count, so the `emd` base first
/// farthest-point subsamples every cloud to this size and then runs the
/// exact assignment solver.
const EMD_POINTS: usize = 256;

/// Distance matrices bigger than this stay out of the report.
const MATRIX_LIMIT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[clap(rename_all = "snake_case")]
#[serde(rename_all = "snake_case")]
pub enum BaseArg {
    Cd,
    Emd,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Directory of generated meshes.
    pub gen_dir: PathBuf,
    /// Directory of reference meshes.
    pub ref_dir: PathBuf,
    /// Underlying shape distance.
    #[arg(long, value_enum, default_value = "cd")]
    pub base: BaseArg,
    /// Surface samples per mesh.
    #[arg(long, default_value_t = 2048)]
    pub samples: usize,
    /// Sampling seed.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Write the report JSON here as well as printing the table.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvalConfig<'a> {
    command: &'static str,
    gen_dir: String,
    ref_dir: String,
    base: BaseArg,
    samples: usize,
    emd_points: Option<usize>,
    seed: u64,
    gen_files: &'a [String],
    ref_files: &'a [String],
}

/// Meshes in `dir` with a supported extension, sorted by file name so seeds
/// and report rows are stable across platforms.
fn list_meshes(dir: &Path) -> CliResult<Vec<PathBuf>> {
    require_input(dir)?;
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("not a directory: {}", dir.display())));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {}", dir.display(), e)))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("obj" | "off" | "ply" | "OBJ" | "OFF" | "PLY")
            )
        })
        .collect();
    files.sort_by_key(|p| p.file_name().map(|n| n.to_owned()));
    if files.is_empty() {
        return Err(CliError::Usage(format!(
            "no meshes (.obj/.off/.ply) in {}",
            dir.display()
        )));
    }
    Ok(files)
}

fn sample_set(
    files: &[PathBuf],
    samples: usize,
    seed_base: u64,
    subsample: Option<usize>,
) -> CliResult<Vec<Vec<Point3<f64>>>> {
    files
        .iter()
        .enumerate()
        .map(|(i, path)| {
            let mesh = mesh_io::load_mesh(path)?;
            let cloud = sample_surface(&mesh, samples, seed_base + i as u64)?;
            let points = match subsample {
                Some(k) if k < cloud.points.len() => {
                    farthest_point_sample_from(&cloud.points, k, 0)
                        .into_iter()
                        .map(|j| cloud.points[j])
                        .collect()
                }
                _ => cloud.points,
            };
            Ok(points)
        })
        .collect()
}

pub fn run(args: &Args) -> CliResult<()> {
    let gen_files = list_meshes(&args.gen_dir)?;
    let ref_files = list_meshes(&args.ref_dir)?;
    if gen_files.len() != ref_files.len() {
        eprintln!(
            "warning: {} generated vs {} reference meshes; metrics remain defined for unequal sets",
            gen_files.len(),
            ref_files.len()
        );
    }
    if args.samples == 0 {
        return Err(CliError::Usage("samples must be >= 1".into()));
    }

    let (base, subsample) = match args.base {
        BaseArg::Cd => (ShapeDistance::Chamfer, None),
        BaseArg::Emd => (ShapeDistance::Emd, Some(EMD_POINTS.min(args.samples))),
    };
    let gen_sets = sample_set(&gen_files, args.samples, args.seed, subsample)?;
    let ref_sets = sample_set(&ref_files, args.samples, args.seed + REF_SEED_OFFSET, subsample)?;

    let (result, elapsed) = timed(|| mmd_coverage(&gen_sets, &ref_sets, base));
    let (mmd, cov) = result?;

    let names = |files: &[PathBuf]| -> Vec<String> {
        files
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect()
    };
    let gen_names = names(&gen_files);
    let ref_names = names(&ref_files);

    let mut report = MetricReport::new();
    report.set("mmd", mmd);
    report.set("coverage", cov);
    report.set("num_gen", gen_files.len() as f64);
    report.set("num_ref", ref_files.len() as f64);
    if gen_files.len() <= MATRIX_LIMIT && ref_files.len() <= MATRIX_LIMIT {
        let matrix = medial_core::metrics::shape_distance_matrix(&gen_sets, &ref_sets, base)?;
        let rows: Vec<Vec<f64>> = matrix
            .chunks(ref_sets.len())
            .map(|row| row.to_vec())
            .collect();
        report.matrices.insert("distance".into(), rows);
    }
    report.config = serde_json::to_value(EvalConfig {
        command: "eval",
        gen_dir: args.gen_dir.display().to_string(),
        ref_dir: args.ref_dir.display().to_string(),
        base: args.base,
        samples: args.samples,
        emd_points: subsample,
        seed: args.seed,
        gen_files: &gen_names,
        ref_files: &ref_names,
    })
    .map_err(|e| CliError::Runtime(format!("config echo failed: {}", e)))?;

    print!("{}", report.to_table());
    if args.base == BaseArg::Cd {
        // Convention: Chamfer-based numbers are displayed x100 in tables.
        println!("mmd (x10^2): {:.4}", 100.0 * mmd);
    }
    println!("evaluated {} x {} shapes in {:.1} s", gen_files.len(), ref_files.len(), elapsed);

    if let Some(out) = &args.out {
        let mut guard = OutputGuard::new();
        guard.track(out);
        report
            .write_json(out)
            .map_err(CliError::from)?;
        guard.disarm();
        println!("wrote {}", out.display());
    }
    Ok(())
}
