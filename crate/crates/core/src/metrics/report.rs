//! Report plumbing: named scalar results plus the resolved configuration
//! that produced them, serializable as JSON or a human-readable table.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::{Error, Result};

/// Named metric results with optional per-pair matrices and a config
/// echo. Keys are ordered (BTreeMap) so serialized output is stable.
#[derive(Debug, Clone, Default, Serialize)]
pub struct MetricReport {
    pub scalars: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub matrices: BTreeMap<String, Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub config: serde_json::Value,
}

impl MetricReport {
    pub fn new() -> Self {
        MetricReport {
            scalars: BTreeMap::new(),
            matrices: BTreeMap::new(),
            config: serde_json::Value::Null,
        }
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.scalars.insert(name.to_string(), value);
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in &self.scalars {
            if !v.is_finite() {
                return Err(Error::Numeric(format!("metric `{}` is not finite: {}", k, v)));
            }
        }
        for (k, m) in &self.matrices {
            if m.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("matrix `{}` has non-finite entries", k)));
            }
        }
        Ok(())
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        self.validate()?;
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Numeric(format!("report serialization failed: {}", e)))
    }

    /// Fixed-width two-column table of the scalar results.
    pub fn to_table(&self) -> String {
        let width = self
            .scalars
            .keys()
            .map(String::len)
            .max()
            .unwrap_or(6)
            .max(6);
        let mut out = String::new();
        out.push_str(&format!("{:width$}  value\n", "metric", width = width));
        for (k, v) in &self.scalars {
            out.push_str(&format!("{:width$}  {:.6}\n", k, v, width = width));
        }
        out
    }

    pub fn write_json(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let text = self.to_json_pretty()?;
        crate::mesh_io::ply::write_atomic(path.as_ref(), text.as_bytes())
    }
}
