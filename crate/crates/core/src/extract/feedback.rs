//! Append-only JSON-lines log of user verdicts on annotations.
//!
//! Entries are collected for later review only; they never alter the pipeline.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Incorrect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub timestamp: String,
    pub annotation_id: String,
    pub verdict: Verdict,
    pub doc_ref: String,
    #[serde(default)]
    pub pipeline_version: u64,
}

impl FeedbackEntry {
    pub fn new(annotation_id: &str, verdict: Verdict, doc_ref: &str, pipeline_version: u64, at: DateTime<Utc>) -> Self {
        FeedbackEntry {
            timestamp: at.to_rfc3339_opts(SecondsFormat::Millis, true),
            annotation_id: annotation_id.to_string(),
            verdict,
            doc_ref: doc_ref.to_string(),
            pipeline_version,
        }
    }
}

#[derive(Debug)]
pub struct FeedbackLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl FeedbackLog {
    pub fn open(path: impl Into<PathBuf>) -> std::io::Result<Self> {
        let path = path.into();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(FeedbackLog {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Appends one entry stamped with the current time.
    pub fn record(
        &self,
        annotation_id: &str,
        verdict: Verdict,
        doc_ref: &str,
        pipeline_version: u64,
    ) -> std::io::Result<FeedbackEntry> {
        let entry = FeedbackEntry::new(annotation_id, verdict, doc_ref, pipeline_version, Utc::now());
        self.append(&entry)?;
        Ok(entry)
    }

    pub fn append(&self, entry: &FeedbackEntry) -> std::io::Result<()> {
        let mut line = serde_json::to_string(entry).map_err(std::io::Error::other)?;
        line.push('\n');
        let mut file = self.file.lock().expect("feedback log poisoned");
        file.write_all(line.as_bytes())?;
        file.flush()
    }

    pub fn entries(&self) -> std::io::Result<Vec<FeedbackEntry>> {
        read_feedback_log(&self.path)
    }
}

pub fn read_feedback_log(path: &Path) -> std::io::Result<Vec<FeedbackEntry>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    BufReader::new(file)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| serde_json::from_str(&l?).map_err(std::io::Error::other))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn append_only_no_dedup() {
        let dir = tempfile::tempdir().unwrap();
        let log = FeedbackLog::open(dir.path().join("feedback.jsonl")).unwrap();
        log.record("diagnosis:0-4", Verdict::Incorrect, "doc1", 1).unwrap();
        assert_eq!(log.entries().unwrap().len(), 1);
        log.record("diagnosis:0-4", Verdict::Incorrect, "doc1", 1).unwrap();
        assert_eq!(log.entries().unwrap().len(), 2);
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let log = FeedbackLog::open(dir.path().join("f.jsonl")).unwrap();
        let at = DateTime::parse_from_rfc3339("2026-01-02T03:04:05Z").unwrap().with_timezone(&Utc);
        let a = FeedbackEntry::new("birads:0-9", Verdict::Incorrect, "f-17", 3, at);
        let b = FeedbackEntry::new("drug:4-9", Verdict::Incorrect, "f-18", 4, at);
        log.append(&a).unwrap();
        log.append(&b).unwrap();
        assert_eq!(log.entries().unwrap(), vec![a, b]);
    }
}
