//! Output files, the run manifest and its verification.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    /// File name to SHA-256 of its contents.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
    }

    /// Differences between `self` (expected) and `fresh`.
    pub fn mismatches(&self, fresh: &Manifest) -> Vec<String> {
        let mut out = Vec::new();
        if self.config_hash != fresh.config_hash {
            out.push(format!("config_hash {} != {}", self.config_hash, fresh.config_hash));
        }
        if self.version != fresh.version {
            out.push(format!("version {} != {}", self.version, fresh.version));
        }
        for (name, h) in &self.files {
            match fresh.files.get(name) {
                Some(g) if g == h => {}
                Some(_) => out.push(format!("{name}: content differs")),
                None => out.push(format!("{name}: not produced")),
            }
        }
        for name in fresh.files.keys().filter(|n| !self.files.contains_key(*n)) {
            out.push(format!("{name}: not in manifest"));
        }
        out
    }
}

/// Collects the files of one run.
pub struct Output {
    dir: PathBuf,
    config_hash: String,
    files: BTreeMap<String, String>,
}

impl Output {
    pub fn new(dir: &Path, config_hash: String) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), config_hash, files: BTreeMap::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.files.insert(name.to_string(), hex::encode(Sha256::digest(bytes)));
        Ok(())
    }

    fn stamp(&self) -> String {
        format!("# dcspde {VERSION} config_hash={}\n", self.config_hash)
    }

    /// CSV with a leading `#` line carrying the version and config hash.
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(self.stamp().into_bytes());
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(r).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))?;
        self.write_bytes(name, &bytes)
    }

    /// Prepends the stamp to CSV produced elsewhere.
    pub fn write_csv_body(&mut self, name: &str, body: &[u8]) -> Result<(), CliError> {
        let mut bytes = self.stamp().into_bytes();
        bytes.extend_from_slice(body);
        self.write_bytes(name, &bytes)
    }

    /// Pretty JSON object with `version` and `config_hash` set.
    pub fn write_json(&mut self, name: &str, mut value: serde_json::Value) -> Result<(), CliError> {
        if let Some(obj) = value.as_object_mut() {
            obj.insert("version".into(), VERSION.into());
            obj.insert("config_hash".into(), self.config_hash.clone().into());
        }
        let mut text = serde_json::to_string_pretty(&value).expect("json serializes");
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn finish(self, config: &RunConfig) -> Result<Manifest, CliError> {
        let m = Manifest {
            version: VERSION.into(),
            command: config.command.clone(),
            config_hash: self.config_hash,
            config: serde_json::to_value(config).expect("config serializes"),
            files: self.files,
        };
        let mut text = serde_json::to_string_pretty(&m).expect("json serializes");
        text.push('\n');
        std::fs::write(self.dir.join(MANIFEST), text)?;
        Ok(m)
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e))
}

/// Fixed-format float for CSV cells.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}
