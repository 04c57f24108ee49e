use std::fs;
use std::path::{Path, PathBuf};

use collabnet::data::SyntheticSpec;
use collabnet::experiment::ClassifyConfig;
use collabnet::regression::RegressionConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    File(PathBuf),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub sensors: usize,
    pub particles: usize,
    pub instances: usize,
    pub discrete_instances: usize,
    pub gibbs_instances: usize,
    pub gibbs_steps: usize,
    pub seed: u64,
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum RunConfig {
    Regress(RegressionConfig),
    Classify {
        data: DataSource,
        config: ClassifyConfig,
    },
    Oracle(OracleConfig),
}

impl RunConfig {
    pub fn seed(&self) -> u64 {
        match self {
            Self::Regress(c) => c.seed,
            Self::Classify { config, .. } => config.seed,
            Self::Oracle(c) => c.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub run: RunConfig,
    /// File names written next to the manifest.
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new(run: RunConfig, artifacts: Vec<String>) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: run.seed(),
            run,
            artifacts,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("malformed manifest {}: {e}", path.display())))
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Failure(e.to_string()))?;
        write_file(dir, MANIFEST_FILE, &(text + "\n"))
    }
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .and_then(|()| fs::write(dir.join(name), contents))
        .map_err(|e| CliError::Io(format!("{}: {e}", dir.join(name).display())))
}
