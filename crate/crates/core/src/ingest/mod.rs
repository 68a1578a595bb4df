//! Source parsing and the two-tier document store.
//!
//! Patients arrive as JSON lines, examinations as a delimited export with a
//! configurable column map, letters as plain-text files. Findings live in a
//! [`FindingStore`] keyed by doc id and are merged into their patients by
//! [`FindingStore::assemble_patients`]. Bad rows are skipped and reported.

mod csv_import;
mod letters;
mod store;

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csv_import::{parse_examinations_csv, CsvConfig, CsvImport, ExamRow, PatientMeta};
pub use letters::{read_letters, LetterImport};
pub use store::{Assembled, FindingStore, StoredFinding};

use crate::datamodel::PatientRecord;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration: {0}")]
    Config(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("store {path}: {reason}")]
    Store { path: PathBuf, reason: String },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One skipped input row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub source: String,
    /// 1-based line number in the source file.
    pub line: u64,
    pub reason: String,
}

pub fn write_error_report(path: &Path, errors: &[ErrorRecord]) -> Result<(), IngestError> {
    let mut out = Vec::new();
    for e in errors {
        serde_json::to_writer(&mut out, e).expect("error record serializes");
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&out).map_err(io_err(path))
}

/// Accepts `YYYY-MM-DD` and `DD.MM.YYYY`.
pub fn parse_date(raw: &str) -> Option<NaiveDate> {
    let raw = raw.trim();
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(raw, "%d.%m.%Y"))
        .ok()
}

/// Parses and validates one patient per line; blank lines are ignored.
pub fn read_patients_jsonl(path: &Path) -> Result<(Vec<PatientRecord>, Vec<ErrorRecord>), IngestError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let source = path.display().to_string();
    let mut patients = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<PatientRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(|p| p.validate().map(|_| p).map_err(|e| e.to_string()));
        match parsed {
            Ok(p) => patients.push(p),
            Err(reason) => errors.push(ErrorRecord {
                source: source.clone(),
                line: i as u64 + 1,
                reason,
            }),
        }
    }
    Ok((patients, errors))
}

pub fn write_patients_jsonl(path: &Path, patients: &[PatientRecord]) -> Result<(), IngestError> {
    let mut out = Vec::new();
    for p in patients {
        serde_json::to_writer(&mut out, p).expect("patient record serializes");
        out.push(b'\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestMode {
    #[default]
    Rebuild,
    Update,
}

/// What to ingest. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IngestManifest {
    #[serde(default)]
    pub patients_path: Option<PathBuf>,
    #[serde(default)]
    pub examinations_csv: Option<PathBuf>,
    /// Column map for `examinations_csv`; defaults apply when absent.
    #[serde(default)]
    pub csv_config: Option<PathBuf>,
    #[serde(default)]
    pub letters_dir: Option<PathBuf>,
    #[serde(default)]
    pub mode: IngestMode,
    /// Finding store to load (update) and save.
    #[serde(default)]
    pub store_path: Option<PathBuf>,
}

impl IngestManifest {
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut m: IngestManifest = toml::from_str(&text).map_err(|e| IngestError::Manifest(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut m.patients_path,
            &mut m.examinations_csv,
            &mut m.csv_config,
            &mut m.letters_dir,
            &mut m.store_path,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.patients_path.is_none() && self.examinations_csv.is_none() && self.letters_dir.is_none() {
            return Err(IngestError::Manifest("no source path given".into()));
        }
        if self.mode == IngestMode::Update {
            match &self.store_path {
                Some(p) if p.exists() => {}
                Some(p) => return Err(IngestError::Manifest(format!("update mode: store {} does not exist", p.display()))),
                None => return Err(IngestError::Manifest("update mode requires store_path".into())),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOutcome {
    pub patients: Vec<PatientRecord>,
    pub errors: Vec<ErrorRecord>,
    /// Doc ids of findings whose patient is unknown.
    pub pending: Vec<String>,
    pub store: FindingStore,
}

/// Applies every source in `manifest` to a fresh (rebuild) or loaded
/// (update) store, saves the store when `store_path` is set and assembles
/// the patients.
pub fn run_ingest(manifest: &IngestManifest) -> Result<IngestOutcome, IngestError> {
    manifest.validate()?;
    let mut store = match (manifest.mode, &manifest.store_path) {
        (IngestMode::Update, Some(p)) => FindingStore::load(p)?,
        _ => FindingStore::new(),
    };
    let mut errors = Vec::new();
    if let Some(p) = &manifest.patients_path {
        let (patients, errs) = read_patients_jsonl(p)?;
        errors.extend(errs);
        for rec in patients {
            store.upsert_patient(rec);
        }
    }
    if let Some(p) = &manifest.examinations_csv {
        let cfg = match &manifest.csv_config {
            Some(c) => CsvConfig::load(c)?,
            None => CsvConfig::default(),
        };
        let import = parse_examinations_csv(p, &cfg)?;
        errors.extend(import.errors.iter().cloned());
        store.apply_csv(import);
    }
    if let Some(dir) = &manifest.letters_dir {
        let import = read_letters(dir)?;
        errors.extend(import.errors.iter().cloned());
        for (pid, doc) in import.letters {
            store.upsert_finding(doc, &pid);
        }
    }
    if let Some(p) = &manifest.store_path {
        store.save(p)?;
    }
    let Assembled { patients, pending } = store.assemble_patients();
    Ok(IngestOutcome {
        patients,
        errors,
        pending,
        store,
    })
}
