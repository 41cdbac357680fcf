//! Artifact writing. Every file carries the command, the fully resolved
//! configuration and a SHA-256 content hash of both.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub command: String,
    pub version: &'static str,
    pub content_hash: String,
    pub config: Value,
}

impl Provenance {
    pub fn new<T: Serialize>(command: &str, config: &T) -> Result<Self, CliError> {
        let config = serde_json::to_value(config)
            .map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))?;
        // serde_json maps are key-sorted, so this text is canonical.
        let canonical = json!({ "command": command, "config": config }).to_string();
        let digest = Sha256::digest(canonical.as_bytes());
        let content_hash = digest.iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            content_hash,
            config,
        })
    }
}

pub struct OutputDir {
    root: PathBuf,
    pub written: Vec<PathBuf>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("cannot write {}: {e}", path.display()))
}

impl OutputDir {
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Writes `body` (which must serialize to an object) with a `provenance` key added.
    pub fn json<T: Serialize>(&mut self, name: &str, body: &T, prov: &Provenance) -> Result<Value, CliError> {
        let path = self.root.join(name);
        let mut value = serde_json::to_value(body).map_err(|e| io_err(&path, e))?;
        match value.as_object_mut() {
            Some(obj) => {
                obj.insert("provenance".into(), serde_json::to_value(prov).map_err(|e| io_err(&path, e))?);
            }
            None => value = json!({ "result": value, "provenance": prov }),
        }
        let text = serde_json::to_string_pretty(&value).map_err(|e| io_err(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
        self.written.push(path);
        Ok(value)
    }

    /// CSV with `#`-prefixed provenance lines ahead of the header.
    pub fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<f64>], prov: &Provenance) -> Result<(), CliError> {
        let path = self.root.join(name);
        let mut file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        writeln!(file, "# command: {}", prov.command).map_err(|e| io_err(&path, e))?;
        writeln!(file, "# content_hash: {}", prov.content_hash).map_err(|e| io_err(&path, e))?;
        writeln!(file, "# config: {}", prov.config).map_err(|e| io_err(&path, e))?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(header).map_err(|e| io_err(&path, e))?;
        for row in rows {
            w.write_record(row.iter().map(|x| format!("{x:e}")))
                .map_err(|e| io_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        self.written.push(path);
        Ok(())
    }
}
