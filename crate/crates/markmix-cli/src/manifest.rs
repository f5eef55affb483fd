//! Run manifests: every output directory gets exactly one, recording the
//! command, the resolved flag set, the seed, paths, tool version, and
//! wall-clock duration. All fields except `duration_seconds` are
//! deterministic for a given invocation.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub rng_seed: Option<u64>,
    pub flags: BTreeMap<String, String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub duration_seconds: f64,
}

pub struct ManifestBuilder {
    command: String,
    rng_seed: Option<u64>,
    flags: BTreeMap<String, String>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            rng_seed: None,
            flags: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn seed(&mut self, seed: u64) -> &mut Self {
        self.rng_seed = Some(seed);
        self
    }

    pub fn flag(&mut self, name: &str, value: impl ToString) -> &mut Self {
        self.flags.insert(name.to_string(), value.to_string());
        self
    }

    pub fn input(&mut self, path: &str) -> &mut Self {
        self.inputs.push(path.to_string());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.display().to_string());
        self
    }

    /// Writes `manifest.json` into the output directory.
    pub fn write(mut self, out_dir: &Path) -> Result<(), CliError> {
        self.outputs.sort();
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").to_string(),
            rng_seed: self.rng_seed,
            flags: self.flags,
            inputs: self.inputs,
            outputs: self.outputs,
            duration_seconds: self.started.elapsed().as_secs_f64(),
        };
        markmix::io::write_json(&out_dir.join("manifest.json"), &manifest)?;
        Ok(())
    }
}
