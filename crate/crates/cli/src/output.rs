//! Artifact files: manifest, CSV tables, JSON records and a text summary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::CliError;

pub struct Output {
    dir: PathBuf,
    command: &'static str,
    seed: Option<u64>,
    summary: Vec<String>,
}

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Shortest decimal that round-trips to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x}")
}

impl Output {
    pub fn new(dir: &Path, command: &'static str, seed: Option<u64>) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), command, seed, summary: Vec::new() })
    }

    pub fn manifest<T: Serialize>(&self, config: &T) -> Result<(), CliError> {
        let manifest = json!({
            "tool": "metastate",
            "version": env!("CARGO_PKG_VERSION"),
            "core_version": metastate_core::VERSION,
            "command": self.command,
            "config": config,
        });
        self.json("manifest.json", &manifest)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| io(&path, e))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| io(&path, e))
    }

    /// RFC 4180 table preceded by a `#` comment line carrying the seed.
    pub fn csv(&self, name: &str, headers: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut buf = match self.seed {
            Some(seed) => format!("# metastate {} seed={seed}\n", self.command),
            None => format!("# metastate {} seed=none\n", self.command),
        }
        .into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(headers).map_err(|e| io(&path, e))?;
            for r in rows {
                w.write_record(r).map_err(|e| io(&path, e))?;
            }
            w.flush().map_err(|e| io(&path, e))?;
        }
        fs::write(&path, buf).map_err(|e| io(&path, e))
    }

    pub fn say(&mut self, line: impl Into<String>) {
        let line = line.into();
        println!("{line}");
        self.summary.push(line);
    }

    pub fn finish(self) -> Result<(), CliError> {
        let path = self.dir.join("summary.txt");
        let mut text = self.summary.join("\n");
        text.push('\n');
        fs::write(&path, text).map_err(|e| io(&path, e))
    }
}
