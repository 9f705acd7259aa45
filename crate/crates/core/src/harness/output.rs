use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// One line of the long-format results table.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub cell: usize,
    pub n: Option<usize>,
    pub p: Option<usize>,
    /// κ or d.
    pub index: Option<usize>,
    /// Free-form cell parameter, e.g. `alpha=0.95`.
    pub param: String,
    pub metric: String,
    pub estimate: f64,
    pub mc_se: Option<f64>,
    /// Bound, target level or noise floor the estimate is read against.
    pub reference: Option<f64>,
    pub regime_lhs: Option<f64>,
    pub regime_flag: Option<bool>,
    pub pass: Option<bool>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestCell {
    pub cell: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub config_sha256: String,
    pub master_seed: u64,
    pub threads: usize,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub cells: Vec<ManifestCell>,
    pub files: Vec<ManifestFile>,
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn write_rows(path: &Path, rows: &[Row]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub(crate) fn describe(dir: &Path, names: &[&str]) -> Result<Vec<ManifestFile>> {
    names
        .iter()
        .map(|name| {
            let bytes = fs::read(dir.join(name))?;
            Ok(ManifestFile {
                path: PathBuf::from(name).display().to_string(),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            })
        })
        .collect()
}
