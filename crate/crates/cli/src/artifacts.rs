//! Run manifests and CSV/JSON writers.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub versions: Versions,
    pub command: String,
    /// SHA-256 of the resolved config with `output_dir` cleared.
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub config: ExperimentConfig,
    pub artifacts: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub rarl_cli: String,
    pub manifest_format: u32,
}

impl Default for Versions {
    fn default() -> Self {
        Versions {
            rarl_cli: env!("CARGO_PKG_VERSION").to_string(),
            manifest_format: 1,
        }
    }
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut canonical = cfg.clone();
    canonical.output_dir = PathBuf::new();
    let text = serde_json::to_string(&canonical).expect("config serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Files written by one run, relative to the output directory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GeneratedArtifacts {
    pub output_dir: PathBuf,
    pub manifest: PathBuf,
    pub files: Vec<String>,
}

pub struct ArtifactWriter {
    dir: PathBuf,
    files: Vec<String>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
        text.push('\n');
        self.text(name, &text)
    }

    pub fn text(&mut self, name: &str, body: &str) -> CliResult<()> {
        let path = self.path(name);
        std::fs::write(&path, body).map_err(|e| CliError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Writes a CSV with the given header; each row is already formatted.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn finish(mut self, command: &str, cfg: &ExperimentConfig) -> CliResult<GeneratedArtifacts> {
        let manifest = Manifest {
            tool: "rarl".into(),
            versions: Versions::default(),
            command: command.into(),
            config_hash: config_hash(cfg),
            seeds: cfg.seeds.clone(),
            config: cfg.clone(),
            artifacts: self.files.clone(),
        };
        self.json("manifest.json", &manifest)?;
        Ok(GeneratedArtifacts {
            output_dir: self.dir.clone(),
            manifest: self.path("manifest.json"),
            files: self.files,
        })
    }
}

/// Shortest round-trip formatting, so reruns produce identical bytes.
pub fn fmt(x: f64) -> String {
    format!("{x}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}
