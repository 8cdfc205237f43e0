//! Run manifests: one JSON document per CLI invocation recording the
//! command, resolved configuration, seed, inputs, and outputs, so any
//! deterministic run can be reproduced bit-exactly.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datamodel::atomic_write;
use crate::error::Result;

/// Manifest schema version; bump on breaking layout changes.
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    /// Fully resolved configuration values for the run.
    pub config: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub wall_time_ms: f64,
}

/// Collects manifest fields over the lifetime of one command.
pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            config,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.seed = Some(seed);
        self
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    /// Finalizes the manifest and writes it next to the primary output as
    /// `<primary>.manifest.json`.
    pub fn write(self, primary_output: &Path) -> Result<PathBuf> {
        let manifest = RunManifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            tool: "calgate".to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command,
            config: self.config,
            seed: self.seed,
            inputs: self
                .inputs
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            outputs: self
                .outputs
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            wall_time_ms: self.started.elapsed().as_secs_f64() * 1000.0,
        };
        let path = manifest_path(primary_output);
        atomic_write(&path, |out| {
            serde_json::to_writer_pretty(&mut *out, &manifest).map_err(std::io::Error::other)?;
            out.write_all(b"\n")?;
            Ok(())
        })?;
        Ok(path)
    }
}

/// The manifest path for a primary output file.
pub fn manifest_path(primary_output: &Path) -> PathBuf {
    let mut name = primary_output
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    name.push_str(".manifest.json");
    primary_output.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_writes_next_to_output() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("report.json");
        let mut b = ManifestBuilder::new("eval", serde_json::json!({"bins": 15}));
        b.seed(7).input(Path::new("d.ndjson")).output(&out);
        let path = b.write(&out).unwrap();
        assert_eq!(path, dir.path().join("report.json.manifest.json"));

        let text = std::fs::read_to_string(&path).unwrap();
        let m: RunManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(m.schema_version, MANIFEST_SCHEMA_VERSION);
        assert_eq!(m.command, "eval");
        assert_eq!(m.seed, Some(7));
        assert_eq!(m.inputs, vec!["d.ndjson"]);
    }
}
