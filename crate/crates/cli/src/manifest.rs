use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use migrate_sim_core::output::prepare_output_dir;
use migrate_sim_core::Result;
use serde::Serialize;

use crate::Global;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Run record written before any result file and completed afterwards.
/// Timestamps live only here so that result tables stay reproducible.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub command_line: Vec<String>,
    pub config: serde_json::Value,
    pub seed_lo: u64,
    pub seed_hi: u64,
    pub jobs: Option<usize>,
    pub outputs: Vec<String>,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub status: Option<String>,
    #[serde(skip)]
    dir: PathBuf,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl RunManifest {
    /// Prepares the output directory (refusing to overwrite without
    /// `--force`) and writes the initial manifest.
    pub(crate) fn start<C: Serialize>(
        subcommand: &str,
        global: &Global,
        config: &C,
        seeds: (u64, u64),
    ) -> Result<Self> {
        prepare_output_dir(&global.out, global.force)?;
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            command_line: global.argv.clone(),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            seed_lo: seeds.0,
            seed_hi: seeds.1,
            jobs: global.jobs,
            outputs: Vec::new(),
            started_at: now(),
            finished_at: None,
            status: None,
            dir: global.out.clone(),
        };
        manifest.save()?;
        Ok(manifest)
    }

    /// Path of a result file inside the run directory, recorded as an output.
    pub(crate) fn output(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.dir.join(name)
    }

    pub(crate) fn finish(mut self, status: &str) -> Result<()> {
        self.finished_at = Some(now());
        self.status = Some(status.to_string());
        self.save()
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn save(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| std::io::Error::other(e.to_string()))?;
        fs::write(self.dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }
}
