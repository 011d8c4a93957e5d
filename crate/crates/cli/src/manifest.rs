//! Run manifests: `<out>/<command>.manifest.json` records the fully resolved
//! configuration of a run so `pathprof replay` can repeat it exactly.

use std::path::Path;

use pathprof::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const TOOL: &str = "pathprof";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        RunManifest {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: config.clone(),
        }
    }

    pub fn file_name(command: &str) -> String {
        format!("{command}.manifest.json")
    }

    pub fn save(&self) -> Result<()> {
        let dir = &self.config.out;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(Self::file_name(&self.command));
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        if m.tool != TOOL {
            return Err(Error::domain(format!("{}: not a {TOOL} manifest", path.display())));
        }
        if m.command == "replay" {
            return Err(Error::domain(format!("{}: a replay manifest cannot be replayed", path.display())));
        }
        Ok(m)
    }
}
