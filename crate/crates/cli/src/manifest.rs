//! Run manifests: enough to regenerate every artifact of a run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mtlk::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::commands::{execute, Artifacts};
use crate::config::ExperimentConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub toolkit: String,
    pub version: String,
    /// Version of the CSV and JSON artifact schemas.
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    /// Input file path to content hash.
    pub inputs: BTreeMap<String, String>,
    /// Artifact file name to content hash.
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let mut c = cfg.clone();
    // where artifacts land does not change them
    c.output_dir = None;
    let bytes = serde_json::to_vec(&c).map_err(|e| Error::Parse(e.to_string()))?;
    Ok(sha256_hex(&bytes))
}

fn hash_inputs(cfg: &ExperimentConfig) -> Result<BTreeMap<String, String>> {
    cfg.input_paths()
        .into_iter()
        .map(|p| {
            let bytes = std::fs::read(&p)
                .map_err(|e| Error::Input(format!("cannot read input {}: {e}", p.display())))?;
            Ok((p.display().to_string(), sha256_hex(&bytes)))
        })
        .collect()
}

pub fn build(cfg: &ExperimentConfig, artifacts: &Artifacts) -> Result<Manifest> {
    Ok(Manifest {
        toolkit: "mtlk".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        schema_version: SCHEMA_VERSION,
        command: cfg.command_name()?.into(),
        seed: cfg.seed,
        config_sha256: config_hash(cfg)?,
        config: cfg.clone(),
        inputs: hash_inputs(cfg)?,
        artifacts: artifacts
            .files
            .iter()
            .map(|(name, bytes)| (name.clone(), sha256_hex(bytes)))
            .collect(),
    })
}

/// Writes the artifacts and the manifest into `dir`.
pub fn write(dir: &Path, artifacts: &Artifacts, manifest: &Manifest) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, bytes) in &artifacts.files {
        std::fs::write(dir.join(name), bytes)?;
    }
    let mut text = serde_json::to_vec_pretty(manifest).map_err(|e| Error::Parse(e.to_string()))?;
    text.push(b'\n');
    std::fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(())
}

/// Runs `cfg` and, when it names an output directory, stores artifacts and
/// manifest there.
pub fn run_and_record(cfg: &ExperimentConfig) -> Result<(Artifacts, Manifest)> {
    cfg.check_files()?;
    let artifacts = execute(cfg)?;
    let manifest = build(cfg, &artifacts)?;
    if let Some(dir) = &cfg.output_dir {
        write(dir, &artifacts, &manifest)?;
    }
    Ok((artifacts, manifest))
}

#[derive(Debug)]
pub struct ReplayOutcome {
    pub output_dir: PathBuf,
    /// Artifacts whose hash differs from the recorded one.
    pub mismatched: Vec<String>,
}

pub fn load(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read manifest {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("manifest: {e}")))
}

/// Re-runs the recorded configuration into `out` and compares hashes.
pub fn replay(manifest: &Manifest, out: &Path) -> Result<ReplayOutcome> {
    if config_hash(&manifest.config)? != manifest.config_sha256 {
        return Err(Error::Input("manifest config does not match its recorded hash".into()));
    }
    let now = hash_inputs(&manifest.config)?;
    if now != manifest.inputs {
        let changed: Vec<&String> = now
            .iter()
            .filter(|(k, v)| manifest.inputs.get(*k) != Some(v))
            .map(|(k, _)| k)
            .collect();
        return Err(Error::Input(format!("input files changed since the run: {changed:?}")));
    }
    let mut cfg = manifest.config.clone();
    cfg.output_dir = Some(out.to_path_buf());
    let (_, fresh) = run_and_record(&cfg)?;
    let mut mismatched: Vec<String> = manifest
        .artifacts
        .iter()
        .filter(|(k, v)| fresh.artifacts.get(*k) != Some(v))
        .map(|(k, _)| k.clone())
        .collect();
    mismatched.extend(
        fresh
            .artifacts
            .keys()
            .filter(|k| !manifest.artifacts.contains_key(*k))
            .cloned(),
    );
    Ok(ReplayOutcome {
        output_dir: out.to_path_buf(),
        mismatched,
    })
}
