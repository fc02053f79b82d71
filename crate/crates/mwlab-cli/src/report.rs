//! Report files: a CSV table and a JSON sidecar per run.
//!
//! CSV output is byte-deterministic: UTF-8, `.` decimals, `\n` record ends,
//! shortest round-trip float formatting, and no timestamps anywhere. The
//! sidecar echoes the parsed config with sorted keys so a re-run from the
//! same config reproduces it exactly.

use std::path::Path;

use anyhow::{Context, Result};

/// Column-checked CSV table.
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .with_context(|| format!("creating {}", path.display()))?;
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush().with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

/// Finite floats print with their shortest round-trip form; non-finite
/// values come out as flag words so a reader never sees a silent gap.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Flattens an error chain onto one CSV-safe line.
pub fn flag(e: impl std::fmt::Display) -> String {
    format!("{e}").split('\n').map(str::trim).collect::<Vec<_>>().join("; ")
}

/// Sidecar: command, package version, seed, and the config echo. Key order
/// is sorted by the JSON map, so the bytes depend only on the config.
pub fn write_sidecar(path: &Path, command: &str, seed: u64, config: &toml::Value) -> Result<()> {
    let config_json = serde_json::to_value(config).context("config echo")?;
    let doc = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "config": config_json,
    });
    let text = serde_json::to_string_pretty(&doc).context("sidecar encode")?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
