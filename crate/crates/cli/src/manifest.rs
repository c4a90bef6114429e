//! Provenance record written into every artifact directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub toolkit: &'static str,
    pub version: &'static str,
    pub command: String,
    /// Arguments after the program name.
    pub args: Vec<String>,
    /// Effective configuration after applying flags.
    pub config: Config,
    /// SHA-256 of every input file, keyed by path.
    pub inputs: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str, args: Vec<String>, config: &Config) -> Self {
        Self {
            toolkit: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_owned(),
            args,
            config: config.clone(),
            inputs: BTreeMap::new(),
        }
    }

    /// Hashes `path`, or every file below it when it is a directory.
    /// Manifests of upstream steps are included like any other file.
    pub fn add_input(&mut self, path: &Path) -> Result<(), CliError> {
        for file in files_below(path)? {
            let digest = Sha256::digest(fs::read(&file)?);
            let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
            self.inputs.insert(file.display().to_string(), hex);
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Regular files at or below `path`, sorted.
pub fn files_below(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    if path.is_file() {
        out.push(path.to_path_buf());
        return Ok(out);
    }
    let mut stack = vec![path.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}
