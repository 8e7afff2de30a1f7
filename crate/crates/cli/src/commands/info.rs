//! `medial info` — show the resolved configuration and build constants.

use crate::config::ConfigArgs;
use crate::util::{CliError, CliResult};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[command(flatten)]
    pub config: ConfigArgs,
}

pub fn run(args: &Args) -> CliResult<()> {
    let cfg = args.config.resolve()?;
    println!("medial {}", env!("CARGO_PKG_VERSION"));
    println!("threads: {}", rayon::current_num_threads());
    println!("mesh formats: obj, off, ply (ascii + binary_little_endian)");
    println!(
        "constants: f_tau {} | emd exact cap {} | normalized half-extent {}",
        medial_core::metrics::DEFAULT_F_SCORE_TAU,
        medial_core::metrics::EMD_EXACT_MAX,
        medial_core::mesh_io::NORMALIZED_HALF_EXTENT,
    );
    println!("resolved config:");
    let json = serde_json::to_string_pretty(&cfg)
        .map_err(|e| CliError::Runtime(format!("config serialization failed: {}", e)))?;
    println!("{}", json);
    Ok(())
}
