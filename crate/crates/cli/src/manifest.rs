use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;

/// Record of one invocation. Written before the heavy work starts and
/// rewritten with the finish time once every output exists.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub toolkit_version: &'static str,
    pub started_unix_ms: u128,
    pub finished_unix_ms: Option<u128>,
    pub outputs: Vec<PathBuf>,
    #[serde(skip)]
    path: PathBuf,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

impl RunManifest {
    pub fn begin(
        path: impl AsRef<Path>,
        command: &str,
        config: &impl Serialize,
        seed: Option<u64>,
        outputs: Vec<PathBuf>,
    ) -> Result<Self> {
        let m = RunManifest {
            command: command.to_owned(),
            config: serde_json::to_value(config)?,
            seed,
            toolkit_version: env!("CARGO_PKG_VERSION"),
            started_unix_ms: now_ms(),
            finished_unix_ms: None,
            outputs,
            path: path.as_ref().to_path_buf(),
        };
        m.write()?;
        Ok(m)
    }

    fn write(&self) -> Result<()> {
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&self.path, text).with_context(|| format!("writing manifest {}", self.path.display()))
    }

    pub fn finish(mut self) -> Result<()> {
        self.finished_unix_ms = Some(now_ms());
        self.write()
    }
}
