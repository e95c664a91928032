use crate::inputs::write_atomic;
use anyhow::Result;
use serde::Serialize;
use serde_json::{json, Value};
use std::path::Path;

/// Schema version of every JSON report.
pub const STATS_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct FileError {
    pub file: String,
    pub error: String,
}

/// `stats.json`: `{version, command, config, clips, errors, aggregate}`.
#[derive(Debug, Serialize)]
pub struct Report {
    pub version: u32,
    pub command: &'static str,
    pub config: Value,
    pub clips: Vec<Value>,
    pub errors: Vec<FileError>,
    pub aggregate: Value,
}

impl Report {
    pub fn new(command: &'static str, config: Value) -> Self {
        Self {
            version: STATS_VERSION,
            command,
            config,
            clips: Vec::new(),
            errors: Vec::new(),
            aggregate: json!({}),
        }
    }

    pub fn ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        write_atomic(out_dir, "stats.json", self.to_json().as_bytes())?;
        for e in &self.errors {
            eprintln!("{}: {}", e.file, e.error);
        }
        Ok(())
    }
}
