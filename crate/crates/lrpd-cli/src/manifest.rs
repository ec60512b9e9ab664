//! Run manifests: everything needed to replay a command bit for bit.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{input_err, CliError};
use lrpd::SymMatrix;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    /// Subcommand that produced the run.
    pub command: String,
    /// Every parameter after defaulting, keyed by flag name. The output
    /// directory is deliberately absent so replays can land anywhere.
    pub params: BTreeMap<String, String>,
    /// Root seed; all randomized stages derive from it.
    pub seed: u64,
    /// Hex sha-256 of the input matrix: raw file bytes for file inputs,
    /// dimensions plus row-major little-endian entries for generated ones.
    /// Absent when a check has no single input matrix.
    pub input_digest: Option<String>,
    pub library_version: String,
}

impl RunManifest {
    pub fn new(
        command: &str,
        params: BTreeMap<String, String>,
        seed: u64,
        input_digest: Option<String>,
    ) -> Self {
        Self {
            command: command.to_string(),
            params,
            seed,
            input_digest,
            library_version: lrpd::version().to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("malformed manifest {}: {e}", path.display())))
    }

    /// Required parameter, parsed.
    pub fn param<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self
            .params
            .get(key)
            .ok_or_else(|| CliError::Input(format!("manifest is missing parameter '{key}'")))?;
        raw.parse()
            .map_err(|e| CliError::Input(format!("manifest parameter '{key}' = '{raw}': {e}")))
    }

    /// Optional parameter, parsed when present.
    pub fn param_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.params.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| CliError::Input(format!("manifest parameter '{key}' = '{raw}': {e}"))),
        }
    }
}

pub fn digest_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(input_err)?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Digest of one or more generated matrices, order-sensitive.
pub fn digest_matrices(mats: &[&SymMatrix]) -> String {
    let mut h = Sha256::new();
    for a in mats {
        let n = a.dim();
        h.update((n as u64).to_le_bytes());
        let m = a.as_matrix();
        for i in 0..n {
            for j in 0..n {
                h.update(m[(i, j)].to_le_bytes());
            }
        }
    }
    format!("{:x}", h.finalize())
}
