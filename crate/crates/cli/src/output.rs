//! Artifact writers and the one-line stdout summary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use redq_core::{ModelParams, QueueDist};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::Format;

/// Appended to CSV artifacts of runs that stopped before converging.
pub const UNCONVERGED_MARKER: &str = "# converged:false";

#[derive(Debug, Serialize)]
pub struct Summary {
    pub command: &'static str,
    pub mean: Option<f64>,
    pub converged: bool,
    pub wall_time: f64,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Summary {
    pub fn new(command: &'static str, mean: Option<f64>, converged: bool) -> Self {
        Summary {
            command,
            mean,
            converged,
            wall_time: 0.0,
            extra: Map::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.extra.insert(key.to_string(), value.into());
        self
    }
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn finish_csv(mut w: impl Write, converged: bool) -> Result<()> {
    if !converged {
        writeln!(w, "{UNCONVERGED_MARKER}")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a fixed-point distribution as `x,q` CSV or the JSON export.
pub fn write_dist(
    path: &Path,
    format: Format,
    dist: &QueueDist,
    params: &ModelParams,
    converged: bool,
) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = create(path)?;
            dist.write_csv(&mut w)?;
            finish_csv(w, converged)
        }
        Format::Json => write_json(path, &dist.to_json(params, converged)),
    }
}
