//! Run manifests: everything needed to repeat a command exactly.

use std::path::{Path, PathBuf};

use cnc_forge::score::ScoreOptions;
use cnc_forge::synth::FitConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// A command with every setting resolved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Job {
    Fit {
        target: PathBuf,
        config: FitConfig,
        score: ScoreOptions,
    },
    Eval {
        target: PathBuf,
        program: PathBuf,
        score: ScoreOptions,
    },
    Replay {
        program: PathBuf,
        resolution: usize,
        mesh_cells: usize,
    },
    ExportGcode {
        program: PathBuf,
        scale: f64,
    },
    Fixtures {
        cells: usize,
    },
}

impl Job {
    /// Files the job reads.
    pub fn inputs(&self) -> Vec<&Path> {
        match self {
            Job::Fit { target, .. } => vec![target],
            Job::Eval { target, program, .. } => vec![target, program],
            Job::Replay { program, .. } | Job::ExportGcode { program, .. } => vec![program],
            Job::Fixtures { .. } => Vec::new(),
        }
    }

    /// Seed of any randomness in the job.
    pub fn seed(&self) -> Option<u64> {
        match self {
            Job::Fit { config, .. } => Some(config.seed),
            Job::Eval { score, .. } => Some(score.seed),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub job: Job,
    pub seed: Option<u64>,
    pub inputs: Vec<InputHash>,
    pub out_dir: PathBuf,
    pub outputs: Vec<PathBuf>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(job: Job, out_dir: &Path, outputs: &[&str]) -> Result<Self, CliError> {
        let inputs = job
            .inputs()
            .into_iter()
            .map(|p| {
                Ok(InputHash {
                    path: p.to_path_buf(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<_, CliError>>()?;
        Ok(Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: job.seed(),
            job,
            inputs,
            out_dir: out_dir.to_path_buf(),
            outputs: outputs.iter().map(|o| out_dir.join(o)).collect(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    pub fn write(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out_dir).map_err(|e| CliError::io(&self.out_dir, e))?;
        let path = self.out_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    /// Fails if any input differs from the recorded hash.
    pub fn verify_inputs(&self) -> Result<(), CliError> {
        for input in &self.inputs {
            if sha256_file(&input.path)? != input.sha256 {
                return Err(CliError::Input(format!(
                    "{} changed since the manifest was written",
                    input.path.display()
                )));
            }
        }
        Ok(())
    }
}
