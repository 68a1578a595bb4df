//! Plain-text letters: `<doc_id>.txt` files listed in `index.tsv`.
//!
//! Each index line is `doc_id<TAB>patient_id<TAB>doc_type[<TAB>date]`; lines
//! starting with `#` are comments.

use std::fs;
use std::path::Path;

use super::{io_err, parse_date, ErrorRecord, IngestError};
use crate::datamodel::{days_since_epoch, DocType, TextDocument};

pub const LETTER_INDEX: &str = "index.tsv";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LetterImport {
    /// `(patient_id, document)` in index order.
    pub letters: Vec<(String, TextDocument)>,
    pub errors: Vec<ErrorRecord>,
}

fn parse_doc_type(raw: &str) -> Option<DocType> {
    serde_json::from_value(serde_json::Value::String(raw.trim().to_string())).ok()
}

pub fn read_letters(dir: &Path) -> Result<LetterImport, IngestError> {
    let index_path = dir.join(LETTER_INDEX);
    let index = fs::read_to_string(&index_path).map_err(io_err(&index_path))?;
    let source = index_path.display().to_string();
    let mut out = LetterImport::default();
    for (i, line) in index.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fail = |reason: String| ErrorRecord {
            source: source.clone(),
            line: i as u64 + 1,
            reason,
        };
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() < 3 || cols[0].is_empty() || cols[1].is_empty() {
            out.errors.push(fail("expected doc_id, patient_id, doc_type".into()));
            continue;
        }
        let (doc_id, pid) = (cols[0], cols[1]);
        if doc_id.contains(['/', '\\']) || doc_id.starts_with('.') {
            out.errors.push(fail(format!("doc id {doc_id:?} is not a plain file name")));
            continue;
        }
        let Some(doc_type) = parse_doc_type(cols[2]) else {
            out.errors.push(fail(format!("unknown doc type {:?}", cols[2])));
            continue;
        };
        let day = match cols.get(3).filter(|s| !s.is_empty()) {
            None => None,
            Some(raw) => match parse_date(raw).map(days_since_epoch) {
                Some(Ok(d)) => Some(d),
                _ => {
                    out.errors.push(fail(format!("unparseable date {raw:?}")));
                    continue;
                }
            },
        };
        let body = match fs::read_to_string(dir.join(format!("{doc_id}.txt"))) {
            Ok(b) if !b.trim().is_empty() => b,
            Ok(_) => {
                out.errors.push(fail(format!("{doc_id}.txt is empty")));
                continue;
            }
            Err(e) => {
                out.errors.push(fail(format!("{doc_id}.txt: {e}")));
                continue;
            }
        };
        out.letters.push((
            pid.to_string(),
            TextDocument {
                doc_id: doc_id.to_string(),
                doc_type,
                day,
                body,
                annotations: Vec::new(),
            },
        ));
    }
    Ok(out)
}
