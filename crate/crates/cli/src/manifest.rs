use std::collections::BTreeMap;
use std::hash::{BuildHasher, Hasher};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{CliError, Command};

/// Record of one finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// Working directory the command ran in; relative paths refer to it.
    pub cwd: PathBuf,
    /// The command with its seed and output paths filled in.
    pub invocation: Command,
    pub seed: u64,
    /// Resolved run configuration (train only), in config-file format.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<String>,
    /// Where each config value came from: `cli`, `config` or `default`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub config_sources: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    pub outputs: Vec<PathBuf>,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(invocation: Command, seed: u64) -> Result<Self, CliError> {
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            cwd: std::env::current_dir()?,
            invocation,
            seed,
            config: None,
            config_sources: BTreeMap::new(),
            checkpoint: None,
            outputs: Vec::new(),
            metrics: BTreeMap::new(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("malformed manifest {}: {e}", path.display())))
    }

    /// Writes the manifest beside `main_output`.
    pub fn write(&self, main_output: &Path) -> Result<PathBuf, CliError> {
        let path = sidecar(main_output, "manifest.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

/// `dir/name.ext` becomes `dir/name.<suffix>`.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// A seed from the OS-seeded hasher keys, mixed with the clock.
pub fn entropy_seed() -> u64 {
    let mut h = std::collections::hash_map::RandomState::new().build_hasher();
    if let Ok(d) = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH) {
        h.write_u128(d.as_nanos());
    }
    h.write_u32(std::process::id());
    h.finish()
}

/// Applies the output-directory override to a relative path.
pub fn resolve_output(path: &Path) -> PathBuf {
    match std::env::var_os(crate::OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() && path.is_relative() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}
