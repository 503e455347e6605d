use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::diagnostics::CollapseReport;
use crate::error::{Error, Result};
use crate::eval::{ScoreRecord, TTestResult};
use crate::training::{PhaseReport, RoundReport};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum LogPayload {
    PhaseReport { system: String, report: PhaseReport },
    RoundReport { arm: String, report: RoundReport },
    Score(ScoreRecord),
    CollapseReport { system: String, report: CollapseReport },
    Ttest { label: String, result: TTestResult },
}

/// One line of `metrics.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsLogRecord {
    pub schema_version: u32,
    /// Milliseconds since the Unix epoch when the record was written.
    pub timestamp_ms: u64,
    pub run_id: String,
    #[serde(flatten)]
    pub payload: LogPayload,
}

/// Single appender for `metrics.jsonl`. Each record is flushed as soon as it
/// is written so an aborted run leaves every completed line in place.
pub struct MetricsLog {
    path: PathBuf,
    file: File,
    run_id: String,
}

impl MetricsLog {
    pub fn open(path: impl AsRef<Path>, run_id: impl Into<String>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| Error::io(&path, e))?;
        Ok(MetricsLog { path, file, run_id: run_id.into() })
    }

    pub fn append(&mut self, payload: LogPayload) -> Result<()> {
        let timestamp_ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0);
        let rec = MetricsLogRecord { schema_version: SCHEMA_VERSION, timestamp_ms, run_id: self.run_id.clone(), payload };
        let mut line = serde_json::to_string(&rec)?;
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(|e| Error::io(&self.path, e))?;
        self.file.flush().map_err(|e| Error::io(&self.path, e))
    }

    pub fn score(&mut self, r: &ScoreRecord) -> Result<()> {
        self.append(LogPayload::Score(r.clone()))
    }
}

/// Reads every record; a line that does not parse is an error naming it.
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<MetricsLogRecord>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: MetricsLogRecord = serde_json::from_str(&line).map_err(|e| {
            Error::InvalidArgument(format!("{} line {}: {e}", path.display(), i + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Score records of a log, in log order.
pub fn scores(records: &[MetricsLogRecord]) -> Vec<ScoreRecord> {
    records
        .iter()
        .filter_map(|r| match &r.payload {
            LogPayload::Score(s) => Some(s.clone()),
            _ => None,
        })
        .collect()
}
