//! Result tables, the run directory and its manifest.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

/// Bumped whenever a CSV header or the manifest layout changes.
pub const SCHEMA_VERSION: u32 = 1;

pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";
pub const MANIFEST_FILE: &str = "manifest.json";

/// An in-memory CSV file.
#[derive(Debug)]
pub struct Table {
    pub name: &'static str,
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(name: &'static str, header: &[S]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(header.iter().map(AsRef::as_ref))
            .expect("in-memory write");
        Self { name, writer }
    }

    /// Floats go through `Display`, which prints the shortest string that
    /// parses back to the same value.
    pub fn row(&mut self, fields: &[&dyn Display]) {
        self.writer
            .write_record(fields.iter().map(|f| f.to_string()))
            .expect("in-memory write");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.writer.into_inner().expect("in-memory flush")
    }
}

/// `<command>-<first 12 hex digits of sha256(resolved config)>-s<seed>`.
pub fn run_dir_name(cfg: &ExperimentConfig) -> String {
    let digest = Sha256::digest(cfg.to_toml().as_bytes());
    format!(
        "{}-{}-s{}",
        cfg.command.name(),
        &hex::encode(digest)[..12],
        cfg.seed
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub environment: String,
    pub seed: u64,
    pub config_sha256: String,
    pub pgpe_version: String,
    pub started_unix_secs: u64,
    pub wall_time_secs: f64,
    pub threads: usize,
    pub status: String,
    pub partial: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: cfg.command.name().to_string(),
            environment: cfg.env_name().to_string(),
            seed: cfg.seed,
            config_sha256: hex::encode(Sha256::digest(cfg.to_toml().as_bytes())),
            pgpe_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_secs: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            wall_time_secs: 0.0,
            threads: rayon::current_num_threads(),
            status: "running".into(),
            partial: false,
            error: None,
            files: Vec::new(),
        }
    }
}

pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create(cfg: &ExperimentConfig) -> std::io::Result<Self> {
        let path = cfg.output_dir.join(run_dir_name(cfg));
        fs::create_dir_all(&path)?;
        fs::write(path.join(RESOLVED_CONFIG_FILE), cfg.to_toml())?;
        Ok(Self { path })
    }

    pub fn write_table(&self, table: Table, manifest: &mut Manifest) -> std::io::Result<()> {
        let name = table.name;
        fs::write(self.path.join(name), table.into_bytes())?;
        manifest.files.push(name.to_string());
        Ok(())
    }

    pub fn write_manifest(&self, manifest: &Manifest) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
        fs::write(self.path.join(MANIFEST_FILE), json + "\n")
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }
}

pub fn read_manifest(dir: &Path) -> std::io::Result<serde_json::Value> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    serde_json::from_str(&text).map_err(std::io::Error::other)
}
