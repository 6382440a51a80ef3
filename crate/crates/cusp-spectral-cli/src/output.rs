//! Artifacts, tolerance bookkeeping and the run manifest.

use crate::config::{hex, Achieved, ExperimentConfig, Manifest};
use crate::CliError;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Default)]
pub struct Report {
    /// File suffix (e.g. `roots.csv`) and contents.
    pub artifacts: Vec<(String, Vec<u8>)>,
    pub tolerances: BTreeMap<String, Achieved>,
}

impl Report {
    pub fn artifact(&mut self, suffix: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.artifacts.push((suffix.into(), bytes.into()));
    }

    /// Records `value <= threshold`.
    pub fn at_most(&mut self, name: &str, value: f64, threshold: f64) {
        let passed = value <= threshold;
        self.tolerances.insert(name.into(), Achieved { value, threshold, passed });
    }

    /// Records `value >= threshold`.
    pub fn at_least(&mut self, name: &str, value: f64, threshold: f64) {
        let passed = value >= threshold;
        self.tolerances.insert(name.into(), Achieved { value, threshold, passed });
    }

    pub fn passed(&self) -> bool {
        self.tolerances.values().all(|a| a.passed)
    }

    pub fn failures(&self) -> Vec<String> {
        self.tolerances
            .iter()
            .filter(|(_, a)| !a.passed)
            .map(|(k, a)| format!("{k} = {} (threshold {})", a.value, a.threshold))
            .collect()
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Internal(format!("persisting {}: {e}", path.display())))?;
    Ok(())
}

/// Writes the artifacts and the manifest; returns the written paths,
/// manifest last.
pub fn write_run(config: &ExperimentConfig, report: &Report) -> Result<Vec<PathBuf>, CliError> {
    let command = config.command()?;
    let hash = config.hash()?;
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut artifacts = BTreeMap::new();
    for (suffix, bytes) in &report.artifacts {
        let name = format!("{hash}-{command}-{suffix}");
        let path = dir.join(&name);
        write_atomic(&path, bytes)?;
        artifacts.insert(name, hex(&Sha256::digest(bytes)));
        written.push(path);
    }
    let mut versions = BTreeMap::new();
    versions.insert("cusp-spectral".to_string(), cusp_spectral::VERSION.to_string());
    versions.insert("cusp-spectral-cli".to_string(), env!("CARGO_PKG_VERSION").to_string());
    let manifest = Manifest {
        config_hash: hash.clone(),
        seed: config.seed,
        status: if report.passed() { "ok" } else { "tolerance_failure" }.into(),
        versions,
        tolerances: report.tolerances.clone(),
        artifacts,
    };
    let mut full = config.clone();
    full.manifest = Some(manifest);
    let path = dir.join(format!("{hash}-{command}-manifest.toml"));
    write_atomic(&path, full.to_toml()?.as_bytes())?;
    written.push(path);
    Ok(written)
}
