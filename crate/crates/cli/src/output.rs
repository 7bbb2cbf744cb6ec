use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const SUMMARY: &str = "summary.json";
pub const TABLE: &str = "results.csv";
pub const CONFIG: &str = "config.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub kind: String,
    pub config_hash: String,
    pub version: String,
    pub partial: bool,
    pub rows: usize,
    pub wall_time_s: f64,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub highlights: serde_json::Value,
}

impl Summary {
    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(dir.join(SUMMARY))
            .map_err(|e| CliError::Usage(format!("{} is not a result directory: {e}", dir.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Sole writer of a result directory. Rows are flushed as they arrive and the summary says
/// `partial: true` until `finish` runs, so an interrupted run leaves readable, marked output.
pub struct ResultWriter {
    dir: PathBuf,
    table: csv::Writer<File>,
    summary: Summary,
    started: Instant,
}

impl ResultWriter {
    pub fn create(cfg: &ExperimentConfig, header: &[&str]) -> Result<Self, CliError> {
        let dir = cfg.output.clone();
        let hash = cfg.hash();
        if dir.exists() {
            match Summary::read(&dir) {
                Ok(s) if s.config_hash == hash => {}
                Ok(s) => {
                    return Err(CliError::Mismatch { dir: dir.display().to_string(), found: s.config_hash, expected: hash })
                }
                Err(_) if std::fs::read_dir(&dir)?.next().is_some() => {
                    return Err(CliError::Usage(format!(
                        "{} exists, is not empty and holds no {SUMMARY}; refusing to write into it",
                        dir.display()
                    )))
                }
                Err(_) => {}
            }
        }
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join(CONFIG), serde_json::to_string_pretty(cfg)?)?;
        let summary = Summary {
            kind: cfg.kind.label().into(),
            config_hash: hash,
            version: env!("CARGO_PKG_VERSION").into(),
            partial: true,
            rows: 0,
            wall_time_s: 0.0,
            seeds: cfg.seeds.clone(),
            highlights: serde_json::Value::Null,
        };
        let mut table = csv::Writer::from_path(dir.join(TABLE))?;
        table.write_record(header)?;
        table.flush()?;
        let w = Self { dir, table, summary, started: Instant::now() };
        w.write_summary()?;
        Ok(w)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.table.write_record(fields)?;
        self.table.flush()?;
        self.summary.rows += 1;
        Ok(())
    }

    fn write_summary(&self) -> Result<(), CliError> {
        let tmp = self.dir.join(format!("{SUMMARY}.tmp"));
        std::fs::write(&tmp, serde_json::to_string_pretty(&self.summary)?)?;
        std::fs::rename(tmp, self.dir.join(SUMMARY))?;
        Ok(())
    }

    pub fn finish(mut self, highlights: serde_json::Value) -> Result<Summary, CliError> {
        self.table.flush()?;
        self.summary.partial = false;
        self.summary.wall_time_s = self.started.elapsed().as_secs_f64();
        self.summary.highlights = highlights;
        self.write_summary()?;
        Ok(self.summary)
    }
}
