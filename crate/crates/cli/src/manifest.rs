//! Run manifests: one JSON document per invocation recording what was run,
//! on which bytes, and what came out.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const FORMAT: &str = "cubetree-manifest";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

impl FileRecord {
    pub fn of_bytes(path: &Path, data: &[u8]) -> Self {
        FileRecord {
            path: path.to_path_buf(),
            bytes: data.len() as u64,
            sha256: hex::encode(Sha256::digest(data)),
        }
    }

    pub fn of_file(path: &Path) -> CliResult<Self> {
        let data = fs::read(path).map_err(|e| CliError::at(path, e))?;
        Ok(Self::of_bytes(path, &data))
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub format: &'static str,
    pub version: u32,
    pub tool_version: &'static str,
    pub command: &'static str,
    /// Resolved options; feeding this object back through `--config` repeats the run.
    pub config: Value,
    pub threads: usize,
    pub seeds: BTreeMap<&'static str, Value>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub metrics: BTreeMap<&'static str, Value>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<&'static str, f64>,
}

impl Manifest {
    pub fn new(command: &'static str, config: &impl Serialize) -> Self {
        Manifest {
            format: FORMAT,
            version: VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            config: serde_json::to_value(config).expect("options serialize"),
            threads: rayon::current_num_threads(),
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            metrics: BTreeMap::new(),
            timings: BTreeMap::new(),
        }
    }

    pub fn seed(&mut self, key: &'static str, value: impl Serialize) {
        self.seeds
            .insert(key, serde_json::to_value(value).expect("seed serializes"));
    }

    pub fn metric(&mut self, key: &'static str, value: impl Serialize) {
        self.metrics
            .insert(key, serde_json::to_value(value).expect("metric serializes"));
    }

    /// Runs `f`, recording its wall-clock time under `stage`.
    pub fn timed<T>(&mut self, stage: &'static str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.insert(stage, start.elapsed().as_secs_f64());
        out
    }

    pub fn output(&mut self, path: &Path) -> CliResult<()> {
        self.outputs.push(FileRecord::of_file(path)?);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        fs::write(path, self.to_json() + "\n").map_err(|e| CliError::at(path, e))
    }
}

/// `<path>.manifest.json`
pub fn default_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}
