//! The pipeline configuration: one JSON file (see `docs/config.schema.json`)
//! whose keys individual flags can override. Every report echoes the fully
//! resolved value so a run can be reproduced from its report alone.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use medial_core::envelope::EnvelopeMode;
use medial_core::skeletonize::SkeletonizeParams;

use crate::util::{CliError, CliResult};

/// Everything a pipeline command needs besides its IO paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Shrinkage iteration parameters.
    pub skeletonize: SkeletonizeParams,
    /// Medial point budget N retained after farthest-point subsampling.
    pub medial_points: usize,
    /// Dense surface samples drawn before subsampling.
    pub dense_samples: usize,
    /// Direction count D of each radius table.
    pub directions: usize,
    /// Reconstruction grid resolution (cells per axis).
    pub grid_resolution: usize,
    /// Implicit query dispatch.
    pub mode: EnvelopeMode,
    /// Master seed; each randomized stage derives its own stream from it.
    pub seed: u64,
    /// Rescale the input into the 0.9 half-extent cube before any work.
    pub normalize: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            skeletonize: SkeletonizeParams::default(),
            medial_points: 2048,
            dense_samples: 200_000,
            directions: 1000,
            grid_resolution: 256,
            mode: EnvelopeMode::ClosestEnvelope,
            seed: 7,
            normalize: true,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &PathBuf) -> CliResult<Self> {
        crate::util::require_input(path)?;
        let file = File::open(path)
            .map_err(|e| CliError::Usage(format!("cannot open config {}: {}", path.display(), e)))?;
        serde_json::from_reader(BufReader::new(file))
            .map_err(|e| CliError::Usage(format!("invalid config {}: {}", path.display(), e)))
    }

    pub fn validate(&self) -> CliResult<()> {
        self.skeletonize.validate()?;
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(CliError::Usage(msg.into()))
            }
        };
        check(
            self.medial_points >= self.skeletonize.k_neighbors,
            "medial_points must be at least the kernel neighbor count",
        )?;
        check(
            self.dense_samples >= self.medial_points,
            "dense_samples must be >= medial_points",
        )?;
        check(self.directions >= 4, "directions must be >= 4")?;
        check(
            (8..=1024).contains(&self.grid_resolution),
            "grid_resolution must be in [8, 1024]",
        )
    }
}

/// clap-side copy of [`EnvelopeMode`] so `--mode` accepts the same snake_case
/// names the config file uses.
#[derive(Debug, Clone, Copy, clap::ValueEnum)]
#[clap(rename_all = "snake_case")]
pub enum ModeArg {
    ClosestEnvelope,
    ClosestPoint,
}

impl From<ModeArg> for EnvelopeMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::ClosestEnvelope => EnvelopeMode::ClosestEnvelope,
            ModeArg::ClosestPoint => EnvelopeMode::ClosestPoint,
        }
    }
}

/// Config file plus per-key overrides, shared by the pipeline commands.
#[derive(Debug, Clone, clap::Args)]
pub struct ConfigArgs {
    /// JSON pipeline config; the flags below override individual keys.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Medial point budget N.
    #[arg(long, value_name = "N")]
    pub medial_points: Option<usize>,
    /// Dense surface samples drawn before farthest-point subsampling.
    #[arg(long, value_name = "COUNT")]
    pub dense_samples: Option<usize>,
    /// Direction count D of each radius table.
    #[arg(long, value_name = "D")]
    pub directions: Option<usize>,
    /// Reconstruction grid resolution (cells per axis).
    #[arg(long, value_name = "RES")]
    pub grid_resolution: Option<usize>,
    /// Implicit query dispatch.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Master seed for every randomized stage.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Work in the input's own coordinates instead of the normalized cube.
    #[arg(long)]
    pub no_normalize: bool,
    /// Gradient-descent step size (skeletonize).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Tether radius as a fraction of the local shape diameter (skeletonize).
    #[arg(long)]
    pub tau_max: Option<f64>,
    /// Neighbor count for the kernel SDF estimate (skeletonize).
    #[arg(long)]
    pub k_neighbors: Option<usize>,
    /// Gaussian kernel bandwidth sigma^2 (skeletonize).
    #[arg(long)]
    pub sigma_sq: Option<f64>,
    /// Iteration cap (skeletonize).
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Early-exit move tolerance (skeletonize).
    #[arg(long)]
    pub move_tol: Option<f64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> CliResult<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field { $target = v.into(); })*
            };
        }
        set!(
            medial_points => cfg.medial_points,
            dense_samples => cfg.dense_samples,
            directions => cfg.directions,
            grid_resolution => cfg.grid_resolution,
            mode => cfg.mode,
            seed => cfg.seed,
            lambda => cfg.skeletonize.lambda,
            tau_max => cfg.skeletonize.tau_max,
            k_neighbors => cfg.skeletonize.k_neighbors,
            sigma_sq => cfg.skeletonize.sigma_sq,
            max_iters => cfg.skeletonize.max_iters,
            move_tol => cfg.skeletonize.move_tol,
        );
        if self.no_normalize {
            cfg.normalize = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: PipelineConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"medial_points": 64}"#).unwrap();
        assert_eq!(cfg.medial_points, 64);
        assert_eq!(cfg.directions, 1000);
        assert_eq!(cfg.grid_resolution, 256);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"medial_pts": 64}"#).is_err());
    }

    #[test]
    fn invalid_combinations_are_rejected() {
        let mut cfg = PipelineConfig::default();
        cfg.dense_samples = 100;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.grid_resolution = 4;
        assert!(cfg.validate().is_err());
    }
}
