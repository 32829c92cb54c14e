//! Append-only JSON-lines session logs: a header line, then one line per
//! event.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use followup_core::config::Config;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::session::{Event, PatientSpec, Session};

pub const LOG_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: u32,
    pub id: String,
    pub patient: PatientSpec,
    pub config: Config,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredSession {
    pub header: LogHeader,
    pub events: Vec<Event>,
}

/// Session logs under `dir`; without a directory nothing is persisted.
#[derive(Debug, Clone, Default)]
pub struct Store {
    dir: Option<PathBuf>,
}

impl Store {
    pub fn new(dir: Option<PathBuf>) -> Result<Self, ServiceError> {
        if let Some(d) = &dir {
            fs::create_dir_all(d)?;
        }
        Ok(Self { dir })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn path(dir: &Path, id: &str) -> PathBuf {
        dir.join(format!("{id}.jsonl"))
    }

    /// Writes the header and the whole current log, replacing any file.
    pub fn write(&self, session: &Session) -> Result<(), ServiceError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let header = LogHeader {
            format: LOG_FORMAT,
            id: session.id().to_string(),
            patient: session.patient(),
            config: session.config().clone(),
        };
        let mut text = serde_json::to_string(&header)?;
        text.push('\n');
        for e in session.log() {
            text.push_str(&serde_json::to_string(e)?);
            text.push('\n');
        }
        let tmp = dir.join(format!(".{}.tmp", session.id()));
        fs::write(&tmp, text)?;
        fs::rename(tmp, Self::path(dir, session.id()))?;
        Ok(())
    }

    pub fn append(&self, id: &str, event: &Event) -> Result<(), ServiceError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let mut file = OpenOptions::new().append(true).open(Self::path(dir, id))?;
        let mut line = serde_json::to_string(event)?;
        line.push('\n');
        file.write_all(line.as_bytes())?;
        file.sync_data()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<StoredSession, ServiceError> {
        let mut lines = BufReader::new(File::open(path)?).lines();
        let header: LogHeader = match lines.next() {
            Some(line) => serde_json::from_str(&line?)?,
            None => {
                return Err(ServiceError::CorruptLog(format!(
                    "{} is empty",
                    path.display()
                )))
            }
        };
        if header.format != LOG_FORMAT {
            return Err(ServiceError::CorruptLog(format!(
                "unsupported log format {}",
                header.format
            )));
        }
        let mut events = Vec::new();
        for line in lines {
            let line = line?;
            if !line.trim().is_empty() {
                events.push(serde_json::from_str(&line)?);
            }
        }
        Ok(StoredSession { header, events })
    }

    /// Every stored session, in file-name order.
    pub fn load_all(&self) -> Result<Vec<StoredSession>, ServiceError> {
        let Some(dir) = &self.dir else {
            return Ok(Vec::new());
        };
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        paths.iter().map(|p| Self::read(p)).collect()
    }
}
