//! One module per subcommand; each exposes `run(args) -> CliResult<()>`.

pub mod eval;
pub mod eval_embeddings;
pub mod fit;
pub mod info;
pub mod reconstruct;
pub mod sample_demo;
pub mod skeletonize;
