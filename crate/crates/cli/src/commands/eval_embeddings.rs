//! `medial eval-embeddings` — distribution metrics between two embedding
//! files (CSV, or raw f32 with a JSON sidecar).

use std::path::{Path, PathBuf};

use serde::Serialize;

use medial_core::metrics::{fid, kid, precision_recall, EmbeddingSet, MetricReport};

use crate::util::{require_input, CliError, CliResult, OutputGuard};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Generated embeddings (.csv, or raw f32 with `<file>.json` sidecar).
    pub gen_file: PathBuf,
    /// Reference embeddings (same formats).
    pub ref_file: PathBuf,
    /// Neighborhood size for precision/recall manifolds.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Write the report JSON here as well as printing the table.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvalConfig {
    command: &'static str,
    gen_file: String,
    ref_file: String,
    k: usize,
}

fn load(path: &Path) -> CliResult<EmbeddingSet> {
    require_input(path)?;
    let set = if path.extension().and_then(|e| e.to_str()) == Some("csv") {
        medial_core::metrics::load_embeddings_csv(path)?
    } else {
        medial_core::metrics::load_embeddings_raw(path)?
    };
    Ok(set)
}

pub fn run(args: &Args) -> CliResult<()> {
    let gen = load(&args.gen_file)?;
    let refs = load(&args.ref_file)?;
    if gen.dim() != refs.dim() {
        return Err(CliError::Usage(format!(
            "embedding dimension mismatch: {} vs {}",
            gen.dim(),
            refs.dim()
        )));
    }
    let underdetermined = gen.is_underdetermined() || refs.is_underdetermined();
    if underdetermined {
        eprintln!(
            "warning: fewer samples than dimensions ({}x{} vs {}x{}); FID relies on the 1e-6 covariance shrinkage",
            gen.len(),
            gen.dim(),
            refs.len(),
            refs.dim()
        );
    }

    let mut report = MetricReport::new();
    report.set("fid", fid(&gen, &refs)?);
    report.set("kid", kid(&gen, &refs)?);
    let (precision, recall) = precision_recall(&gen, &refs, args.k)?;
    report.set("precision", precision);
    report.set("recall", recall);
    report.set("num_gen", gen.len() as f64);
    report.set("num_ref", refs.len() as f64);
    report.set("dim", gen.dim() as f64);
    report.set("fid_underdetermined", underdetermined as u8 as f64);
    report.config = serde_json::to_value(EvalConfig {
        command: "eval-embeddings",
        gen_file: args.gen_file.display().to_string(),
        ref_file: args.ref_file.display().to_string(),
        k: args.k,
    })
    .map_err(|e| CliError::Runtime(format!("config echo failed: {}", e)))?;

    print!("{}", report.to_table());
    if let Some(out) = &args.out {
        let mut guard = OutputGuard::new();
        guard.track(out);
        report.write_json(out).map_err(CliError::from)?;
        guard.disarm();
        println!("wrote {}", out.display());
    }
    Ok(())
}
