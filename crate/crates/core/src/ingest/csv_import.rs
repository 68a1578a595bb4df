//! Examination exports: one row per examination, patient metadata plus
//! finding and evaluation texts.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{io_err, parse_date, ErrorRecord, IngestError};
use crate::datamodel::{days_since_epoch, BiradsClass, DocType, ExamMethod, ExaminationEvent, Sex, TextDocument};

fn col(name: &str) -> String {
    name.to_string()
}

/// Column map of an examination export. Omitted keys take the defaults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvConfig {
    pub delimiter: char,
    pub patient_id_col: String,
    pub date_col: String,
    pub finding_col: String,
    pub evaluation_col: String,
    pub method_col: String,
    pub sex_col: Option<String>,
    pub birth_date_col: Option<String>,
    pub physician_col: Option<String>,
    pub birads_col: Option<String>,
    /// Source-system examination id; used for doc ids when present.
    pub doc_id_col: Option<String>,
}

impl Default for CsvConfig {
    fn default() -> Self {
        CsvConfig {
            delimiter: ';',
            patient_id_col: col("patient_id"),
            date_col: col("date"),
            finding_col: col("finding"),
            evaluation_col: col("evaluation"),
            method_col: col("method"),
            sex_col: None,
            birth_date_col: None,
            physician_col: None,
            birads_col: None,
            doc_id_col: None,
        }
    }
}

impl CsvConfig {
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, IngestError> {
        let cfg: CsvConfig = toml::from_str(text).map_err(|e| IngestError::Config(e.to_string()))?;
        if !cfg.delimiter.is_ascii() {
            return Err(IngestError::Config(format!("delimiter {:?} is not ASCII", cfg.delimiter)));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientMeta {
    pub patient_id: String,
    pub sex: Option<Sex>,
    pub birth_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamRow {
    pub line: u64,
    pub patient_id: String,
    pub examination: ExaminationEvent,
    pub documents: Vec<TextDocument>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvImport {
    /// One entry per patient id, in order of first appearance.
    pub patients: Vec<PatientMeta>,
    /// Accepted rows in file order.
    pub rows: Vec<ExamRow>,
    pub errors: Vec<ErrorRecord>,
}

fn parse_sex(raw: &str) -> Option<Sex> {
    match raw.trim().to_lowercase().as_str() {
        "f" | "w" | "weiblich" | "female" => Some(Sex::F),
        "m" | "männlich" | "maennlich" | "male" => Some(Sex::M),
        _ => None,
    }
}

fn short_hash(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    h.finalize()[..4].iter().map(|b| format!("{b:02x}")).collect()
}

struct Columns {
    pid: usize,
    date: usize,
    finding: usize,
    evaluation: usize,
    method: usize,
    sex: Option<usize>,
    birth: Option<usize>,
    physician: Option<usize>,
    birads: Option<usize>,
    doc_id: Option<usize>,
}

impl Columns {
    fn resolve(cfg: &CsvConfig, header: &csv::StringRecord) -> Result<Self, IngestError> {
        let pos: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
        let need = |name: &str| {
            pos.get(name)
                .copied()
                .ok_or_else(|| IngestError::Config(format!("column {name:?} not in header")))
        };
        let opt = |name: &Option<String>| name.as_deref().map(need).transpose();
        Ok(Columns {
            pid: need(&cfg.patient_id_col)?,
            date: need(&cfg.date_col)?,
            finding: need(&cfg.finding_col)?,
            evaluation: need(&cfg.evaluation_col)?,
            method: need(&cfg.method_col)?,
            sex: opt(&cfg.sex_col)?,
            birth: opt(&cfg.birth_date_col)?,
            physician: opt(&cfg.physician_col)?,
            birads: opt(&cfg.birads_col)?,
            doc_id: opt(&cfg.doc_id_col)?,
        })
    }
}

fn parse_row(c: &Columns, rec: &csv::StringRecord, line: u64) -> Result<(PatientMeta, ExamRow), String> {
    let get = |i: usize| rec.get(i).ok_or_else(|| format!("missing field {}", i + 1));
    let opt = |i: Option<usize>| i.and_then(|i| rec.get(i)).map(str::trim).filter(|s| !s.is_empty());
    let pid = get(c.pid)?.trim();
    if pid.is_empty() {
        return Err("empty patient id".into());
    }
    let date_raw = get(c.date)?;
    let date = parse_date(date_raw).ok_or_else(|| format!("unparseable date {date_raw:?}"))?;
    let day = days_since_epoch(date).map_err(|e| e.to_string())?;
    let method = ExamMethod::parse_lenient(get(c.method)?);
    let finding = get(c.finding)?.trim();
    let evaluation = get(c.evaluation)?.trim();
    if finding.is_empty() && evaluation.is_empty() {
        return Err("neither finding nor evaluation text".into());
    }
    let birads = match opt(c.birads) {
        Some(raw) => Some(raw.parse::<BiradsClass>().map_err(|e| e.to_string())?),
        None => None,
    };
    let birth_date = match opt(c.birth) {
        Some(raw) => Some(parse_date(raw).ok_or_else(|| format!("unparseable birth date {raw:?}"))?),
        None => None,
    };
    let stem = match opt(c.doc_id) {
        Some(id) => id.to_string(),
        None => format!("{pid}:{date}:{}:{}", method.as_str(), short_hash(&[finding, evaluation])),
    };
    let mut documents = Vec::new();
    let mut doc = |suffix: &str, doc_type: DocType, body: &str| -> Option<String> {
        if body.is_empty() {
            return None;
        }
        let doc_id = format!("{stem}:{suffix}");
        documents.push(TextDocument {
            doc_id: doc_id.clone(),
            doc_type,
            day: Some(day),
            body: body.to_string(),
            annotations: Vec::new(),
        });
        Some(doc_id)
    };
    let finding_text_ref = doc("finding", DocType::Finding, finding);
    let evaluation_text_ref = doc("evaluation", DocType::Evaluation, evaluation);
    let meta = PatientMeta {
        patient_id: pid.to_string(),
        sex: opt(c.sex).and_then(parse_sex),
        birth_date,
    };
    let row = ExamRow {
        line,
        patient_id: pid.to_string(),
        examination: ExaminationEvent {
            method,
            day,
            physician: opt(c.physician).map(str::to_string),
            finding_text_ref,
            evaluation_text_ref,
            birads,
        },
        documents,
    };
    Ok((meta, row))
}

/// Parses an examination export with `cfg`. Rows that fail to parse are
/// reported in [`CsvImport::errors`] with their line number and skipped.
pub fn parse_examinations_csv(path: &Path, cfg: &CsvConfig) -> Result<CsvImport, IngestError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(cfg.delimiter as u8)
        .flexible(true)
        .from_reader(file);
    let source = path.display().to_string();
    let header = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(IngestError::Config(format!("{source}: unreadable header: {e}"))),
    };
    if header.is_empty() {
        return Ok(CsvImport::default());
    }
    let cols = Columns::resolve(cfg, &header)?;
    let mut out = CsvImport::default();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut record = csv::StringRecord::new();
    loop {
        let line = reader.position().line() + 1;
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map_or(line, |p| p.line());
                if record.iter().all(|f| f.trim().is_empty()) {
                    continue;
                }
                match parse_row(&cols, &record, line) {
                    Ok((meta, row)) => {
                        match seen.get(&meta.patient_id) {
                            Some(&i) => {
                                let known = &mut out.patients[i];
                                known.sex = known.sex.or(meta.sex);
                                known.birth_date = known.birth_date.or(meta.birth_date);
                            }
                            None => {
                                seen.insert(meta.patient_id.clone(), out.patients.len());
                                out.patients.push(meta);
                            }
                        }
                        out.rows.push(row);
                    }
                    Err(reason) => out.errors.push(ErrorRecord {
                        source: source.clone(),
                        line,
                        reason,
                    }),
                }
            }
            Err(e) => out.errors.push(ErrorRecord {
                source: source.clone(),
                line: e.position().map_or(line, |p| p.line()),
                reason: e.to_string(),
            }),
        }
    }
    Ok(out)
}
