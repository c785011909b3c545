use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::fit::FitConfig;
use crate::lab::LabConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum RunConfig {
    Fit(FitConfig),
    Lab(LabConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataFingerprint {
    pub path: PathBuf,
    pub len: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WallClock {
    pub started_unix: u64,
    pub elapsed_seconds: f64,
}

/// Written next to every output; enough to reproduce the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub run: RunConfig,
    pub data: Option<DataFingerprint>,
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub wall_clock: WallClock,
}

impl RunManifest {
    pub fn new(run: RunConfig, data: Option<DataFingerprint>, seeds: Vec<u64>, started: SystemTime) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            run,
            data,
            seeds,
            workers: rayon::current_num_threads(),
            wall_clock: WallClock {
                started_unix: started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
                elapsed_seconds: started.elapsed().map(|d| d.as_secs_f64()).unwrap_or(0.0),
            },
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}
