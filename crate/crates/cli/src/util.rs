//! Error classification, output hygiene, and small shared helpers.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use medial_core::Error;

/// Command failure split by exit code: usage and precondition problems exit
/// with 2, failures during execution with 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            // The caller handed us something unusable: bad arguments, bad
            // inputs, or a config that violates a module precondition.
            Error::Precondition(_)
            | Error::Parse { .. }
            | Error::UnsupportedFormat(_)
            | Error::InvalidMesh(_) => CliError::Usage(e.to_string()),
            // IO and numeric failures surface mid-run.
            Error::Io { .. } | Error::Numeric(_) => CliError::Runtime(e.to_string()),
        }
    }
}

/// Fails fast (exit 2) when an input path does not exist, so a typo never
/// reaches the runtime-error class.
pub fn require_input(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("input not found: {}", path.display())))
    }
}

/// Removes every tracked path on drop unless the command disarmed it, so a
/// failed command never leaves partial outputs behind.
#[derive(Default)]
pub struct OutputGuard {
    paths: Vec<PathBuf>,
    disarmed: bool,
}

impl OutputGuard {
    pub fn new() -> Self {
        OutputGuard::default()
    }

    pub fn track(&mut self, path: impl Into<PathBuf>) {
        self.paths.push(path.into());
    }

    pub fn disarm(mut self) {
        self.disarmed = true;
        self.paths.clear();
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if !self.disarmed {
            for p in &self.paths {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}

/// Serializes `value` as pretty JSON and writes it atomically.
pub fn write_json_atomic<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::Runtime(format!("report serialization failed: {}", e)))?;
    bytes.push(b'\n');
    medial_core::mesh_io::write_atomic(path, &bytes)?;
    Ok(())
}

/// Runs `f` and returns its result with the elapsed wall time in seconds.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Default report path next to an artifact: `out.ply` -> `out.report.json`.
pub fn default_report_path(artifact: &Path) -> PathBuf {
    let stem = artifact
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".into());
    artifact.with_file_name(format!("{}.report.json", stem))
}
